#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dycausal/graphs.hpp"
#include "dycausal/rng.hpp"
#include "dycausal/tensor.hpp"

namespace dycausal {

/// Thrown when a simulated system leaves its sane range (entries past 1e6).
class DivergenceError : public ContractError {
public:
    explicit DivergenceError(const std::string& msg) : ContractError(msg) {}
};

/// N independent series of length T over d variables plus the generating
/// structure. Time is 1-based to match trajectory semantics; a single-step
/// truth trajectory stands for a time-invariant structure. The first
/// max_lag steps of every series are noise-only burn-in.
///
/// Randomness splits off the dataset seed as documented sub-streams:
/// series n draws its noise from Rng::split(seed, n); structural extras
/// (MLP parameters, schedule selectors) use the kStream* constants below.
struct Dataset {
    std::size_t N = 0;
    std::size_t T = 0;
    std::size_t d = 0;
    std::size_t max_lag = 0;
    std::string generator;
    std::uint64_t seed = 0;
    double noise = 1.0;  // noise standard deviation used by the generator
    TensorF data;        // [N, T, d]
    DynGraphTrajectory truth;

    double x(std::size_t n, int t, std::size_t j) const {
        return data(n, static_cast<std::size_t>(t - 1), j);
    }
    double& x(std::size_t n, int t, std::size_t j) {
        return data(n, static_cast<std::size_t>(t - 1), j);
    }
};

constexpr std::uint64_t kStreamStructure = 0xFFFF0001ULL;  // graph + weights
constexpr std::uint64_t kStreamMlpParams = 0xFFFF0002ULL;  // nonlinear SEM nets
constexpr std::uint64_t kStreamSchedule = 0xFFFF0003ULL;   // phase selectors

/// Time-varying weight schedule. Entry (i, c) of the base matrix evolves as
///   base * cos(phase(t))  when selector(i, c) <  0.5
///   base * sin(phase(t))  when selector(i, c) >= 0.5
/// with phase(t) = (t / period) * (pi / intensity). period = 0 means "use
/// T", which with intensity = 1 gives the smooth half-cosine sweep; smaller
/// periods or larger intensities give the faster, non-smooth variants.
struct DynWeightSchedule {
    double period = 0.0;     // > 0, or 0 to substitute T at evaluation
    double intensity = 1.0;  // >= 1
    TensorF selector;        // same shape as the base weights, values in [0,1)
};

DynWeightSchedule make_schedule(const CausalMatrix& base, Rng& rng,
                                double period = 0.0, double intensity = 1.0);

/// Base weights modulated by the schedule at integer time t (schedule_at at
/// t = 0 with a cos branch returns the base weights exactly).
CausalMatrix schedule_at(const CausalMatrix& base, const DynWeightSchedule& s, int t,
                         std::size_t T);

/// Linear SEM with structure w (single matrix: time-invariant). Instantaneous
/// effects are evaluated in topological order; noise is N(0, noise^2).
Dataset gen_linear_sem(const CausalMatrix& w, std::size_t N, std::size_t T,
                       double noise, std::uint64_t seed);

/// Linear SEM whose weights follow a trajectory (x at time t is generated by
/// the trajectory's matrix at t alone).
Dataset gen_linear_sem_dyn(const CausalMatrix& base, const DynWeightSchedule& sched,
                           std::size_t N, std::size_t T, double noise,
                           std::uint64_t seed);

/// Nonlinear SEM: each variable is a one-hidden-layer MLP (100 units,
/// logistic sigmoid, affine output) over its parents' values, plus noise.
/// Parameters are drawn once per dataset, uniformly from +-[0.5, 2].
Dataset gen_nonlinear_sem(const BinaryGraph& g, std::size_t N, std::size_t T,
                          double noise, std::uint64_t seed);

/// Nonlinear SEM under a weight schedule. Our construction: each parent's
/// input to the MLP is scaled by its scheduled weight at t, so influence
/// strength follows the trajectory while the support stays fixed.
Dataset gen_nonlinear_sem_dyn(const CausalMatrix& base, const DynWeightSchedule& sched,
                              std::size_t N, std::size_t T, double noise,
                              std::uint64_t seed);

/// Lorenz-96: dx_i = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + forcing, integrated
/// by Euler steps x_{t+1} = x_t + dt * (drift + dw) with dw ~ N(0, 0.05)
/// (variance; std sqrt(0.05)) and x_1 ~ N(0, 0.01). Ground truth is the
/// lag-1 ring: every variable is caused by i-2, i-1, i, i+1 (in-degree 4).
/// Throws DivergenceError naming dt when any entry passes 1e6. d >= 4.
Dataset gen_lorenz96(std::size_t d, std::size_t N, std::size_t T, double forcing,
                     double dt, std::uint64_t seed);

/// CSV with header series,t,x0,...,x{d-1}; one row per (series, t), doubles
/// printed with round-trip precision.
std::string dataset_csv(const Dataset& ds);

/// Sidecar {"N","T","d","tau","generator","seed","noise"}.
std::string dataset_meta_json(const Dataset& ds);

/// Rebuild a dataset from CSV plus sidecar (truth arrives separately).
Dataset dataset_from_csv(const std::string& csv_text, const std::string& meta_json);

/// Declarative generator recipe shared by the command-line driver and the
/// python bindings: a spec plus its seed fully determines the dataset.
///   kind: linear | dynamic_linear | nonlinear | dynamic_nonlinear | lorenz96
struct GeneratorSpec {
    std::string kind = "linear";
    std::size_t d = 10;
    std::size_t tau = 2;  // max structural lag (lorenz96 is fixed at 1)
    std::size_t N = 20;
    std::size_t T = 50;
    double noise = 1.0;
    std::uint64_t seed = 1;
    double edges_per_var = 2.0;
    double lag_decay = 1.5;
    double period = 0.0;     // drifting kinds: schedule period P (0 -> T)
    double intensity = 1.0;  // drifting kinds: schedule intensity E
    double forcing = 5.0;    // lorenz96
    double dt = 0.05;        // lorenz96

    void validate() const;
};

/// Tolerant parser for the generator section of a config: missing fields
/// keep their defaults, unknown fields error, values are validated.
GeneratorSpec generator_spec_from_json(const std::string& text);

/// Build the dataset a spec describes: structure and weights from the
/// documented sub-streams of the seed, then the simulated system the kind
/// names.
Dataset run_generator(const GeneratorSpec& spec);

}  // namespace dycausal
