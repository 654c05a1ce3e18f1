#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dycausal/graphs.hpp"
#include "dycausal/rng.hpp"
#include "dycausal/tape.hpp"

namespace dycausal {

/// Readout applied to the decoded weight matrix when reconstructing a
/// window. Linear multiplies the causes through W directly; Nonlinear feeds
/// sigmoid(W x) through one small per-variable net; Ode does the same but
/// predicts an increment on top of the previous observed step (teacher
/// forcing), so it needs max_lag >= 1.
enum class Head { Linear, Nonlinear, Ode };

const char* head_name(Head h);
Head head_from_name(const std::string& s);

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& s);

struct ModelConfig {
    std::size_t d = 0;
    std::size_t max_lag = 0;  // tau; causes run over lags 0..tau
    std::size_t window = 10;  // K, steps reconstructed per window
    std::size_t stride = 5;   // S, anchor spacing
    Head head = Head::Linear;
    std::size_t hidden = 1;       // m, per-variable rows of W (1 for Linear)
    std::size_t channels = 16;    // encoder conv channels
    std::size_t mlp_hidden = 10;  // width of the per-variable head net
    Activation enc_act = Activation::Relu;   // after the temporal conv
    Activation dec_act = Activation::Relu;   // before each decoder affine bank
    Activation head_act = Activation::Relu;  // sigma(W x) and the head hidden layer

    std::size_t lag_blocks() const { return max_lag + 1; }
    std::size_t cause_dim() const { return d * lag_blocks(); }   // dL
    std::size_t effect_rows() const { return d * hidden; }       // dm
    std::size_t conv_width() const { return window < 3 ? window : 3; }

    void validate() const;
};

/// Anchor times (1-based) for a record of length T: floor((T-K)/S) + 1 grid
/// points t_j = tau + 1 + j S, capped at the last admissible window start
/// T - K + 1, deduplicated, and completed with that terminal start so the
/// interpolation span always covers the whole constrained range.
std::vector<int> anchor_times(const ModelConfig& cfg, std::size_t T);

struct ParamSpec {
    std::string name;
    std::vector<std::size_t> shape;
};

/// Weight-trajectory hypernetwork: a temporal-conv encoder summarizes each
/// anchor window into an embedding, and a two-stage decoder of per-chunk
/// affine banks maps the embedding to that anchor's weight matrix
/// [d*hidden, d*(max_lag+1)]. Weights between anchors are linear
/// interpolants, so every step's matrix stays differentiable through the
/// two bracketing anchors.
class Model {
public:
    explicit Model(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }

    static std::vector<ParamSpec> param_specs(const ModelConfig& cfg);
    const std::vector<ParamSpec>& specs() const { return specs_; }

    /// Draw every parameter i.i.d. N(0, init_scale^2).
    void init_params(Rng& rng, double init_scale);

    std::vector<TensorF>& params() { return values_; }
    const std::vector<TensorF>& params() const { return values_; }
    const TensorF& param(const std::string& name) const;

    /// Register all parameters on a tape, in spec order.
    std::vector<Tape::Var> push_params(Tape& tape) const;

    /// Encode one anchor window (data [N, K, d], a constant) and decode its
    /// weight matrix [d*hidden, d*(max_lag+1)]. Bumps the decoder-call
    /// counter; anchor-count checks read it back.
    Tape::Var decode_window(Tape& tape, const std::vector<Tape::Var>& pv,
                            const TensorF& window_data) const;

    /// Head readout for one window: causes [dL, NK] -> predictions [d, NK].
    /// x_prev (previous observed step, [d, NK]) is consumed only by Ode.
    Tape::Var predict(Tape& tape, const std::vector<Tape::Var>& pv, Tape::Var w_t,
                      Tape::Var causes, Tape::Var x_prev) const;

    /// Collapse the hidden rows of a decoded matrix to one row per effect
    /// variable: root-sum-of-squares over each variable's hidden block
    /// (plain absolute value when hidden == 1).
    CausalMatrix effective_adjacency(const TensorF& w) const;

    std::uint64_t decoder_calls() const { return decoder_calls_; }
    void reset_decoder_calls() { decoder_calls_ = 0; }

private:
    ModelConfig cfg_;
    std::vector<ParamSpec> specs_;
    std::vector<TensorF> values_;
    mutable std::uint64_t decoder_calls_ = 0;
};

/// Checkpoint round-trip: {"config": {...}, "params": {name: {"shape", "data"}}}.
std::string model_to_json(const Model& m);
Model model_from_json(const std::string& text);

std::string model_config_to_json(const ModelConfig& cfg);
/// Tolerant parser: missing fields keep defaults; unknown fields error.
ModelConfig model_config_from_json(const std::string& text);

}  // namespace dycausal
