#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dycausal/rng.hpp"
#include "dycausal/tensor.hpp"

namespace dycausal {

/// Weighted causal structure over d variables with lags 0..max_lag, stored
/// effect-major: weights is d x (d * (max_lag + 1)) and entry (i, j + p*d)
/// is the influence of x_{t-p, j} on x_{t, i}. Lag block p = 0 holds the
/// instantaneous graph and keeps a zero diagonal for every generator in this
/// library; fitted matrices approach that but are stored as learned.
struct CausalMatrix {
    std::size_t d = 0;
    std::size_t max_lag = 0;
    TensorF weights;  // [d, d * (max_lag + 1)]

    CausalMatrix() = default;
    CausalMatrix(std::size_t d_, std::size_t max_lag_)
        : d(d_), max_lag(max_lag_), weights({d_, d_ * (max_lag_ + 1)}) {}

    std::size_t blocks() const { return max_lag + 1; }

    double at(std::size_t effect, std::size_t cause, std::size_t lag) const {
        return weights(effect, cause + lag * d);
    }
    void set(std::size_t effect, std::size_t cause, std::size_t lag, double v) {
        weights(effect, cause + lag * d) = v;
    }

    /// Copy of the p = 0 block, d x d.
    TensorF instantaneous() const;
};

/// 0/1 structure with the same layout as CausalMatrix.
struct BinaryGraph {
    std::size_t d = 0;
    std::size_t max_lag = 0;
    TensorF edges;  // [d, d * (max_lag + 1)], entries 0 or 1

    BinaryGraph() = default;
    BinaryGraph(std::size_t d_, std::size_t max_lag_)
        : d(d_), max_lag(max_lag_), edges({d_, d_ * (max_lag_ + 1)}) {}

    std::size_t blocks() const { return max_lag + 1; }

    bool has(std::size_t effect, std::size_t cause, std::size_t lag) const {
        return edges(effect, cause + lag * d) != 0.0;
    }
    void set(std::size_t effect, std::size_t cause, std::size_t lag, bool on) {
        edges(effect, cause + lag * d) = on ? 1.0 : 0.0;
    }

    std::size_t count_edges() const;
    TensorF instantaneous() const;
};

/// One causal matrix per time step t = start_t, start_t + 1, ... (1-based
/// time). A single-step trajectory stands for a time-invariant structure.
struct DynGraphTrajectory {
    int start_t = 1;
    std::vector<CausalMatrix> steps;

    int end_t() const { return start_t + static_cast<int>(steps.size()) - 1; }
    /// Step at time t, held constant outside [start_t, end_t].
    const CausalMatrix& at_time(int t) const;
};

/// Erdos-Renyi ground truth. The instantaneous block draws a uniformly
/// random topological order and then exactly round(edges_per_var * d)
/// distinct order-respecting pairs, so it is a DAG by construction. Every
/// lagged entry (any cause, any effect, lag >= 1, self-lags included) is
/// drawn independently with probability edges_per_var / d.
/// Requires round(edges_per_var * d) <= d*(d-1)/2.
BinaryGraph gen_er_ground_truth(std::size_t d, std::size_t max_lag,
                                double edges_per_var, Rng& rng);

/// Weights for the edges of g: magnitude uniform on [0.3, 0.5], sign a fair
/// coin, and lag-p entries damped by (1 / lag_decay)^p.
CausalMatrix assign_weights(const BinaryGraph& g, double lag_decay, Rng& rng);

/// Kahn's algorithm on the nonzero pattern of a d x d adjacency
/// (entry (i, j) != 0 reads as edge j -> i; orientation is irrelevant to
/// acyclicity). Tests cross-check this against an independent DFS oracle.
bool is_dag(const TensorF& instantaneous);
bool is_dag(const CausalMatrix& m);
bool is_dag(const BinaryGraph& g);

/// Threshold |weight| > delta into a binary graph; the instantaneous
/// diagonal is forced to zero.
BinaryGraph prune(const CausalMatrix& m, double delta);

/// Cause-major view (d * (max_lag + 1)) x d with entry (j + p*d, i) equal to
/// weights(i, j + p*d); from_cause_major inverts it exactly.
TensorF to_cause_major(const CausalMatrix& m);
CausalMatrix from_cause_major(std::size_t d, std::size_t max_lag, const TensorF& cm);

/// Graph JSON: {"d": int, "tau": int, "layout": "effect_major",
/// "time_steps": [{"t": int, "weights": [[...]]}, ...]} with consecutive t.
/// Round-trips bit-exactly; doubles use shortest round-trip formatting.
std::string trajectory_to_json(const DynGraphTrajectory& tr);
DynGraphTrajectory trajectory_from_json(const std::string& text);

/// A binary trajectory serializes through the same shape with 0/1 weights.
DynGraphTrajectory to_weighted(const std::vector<BinaryGraph>& steps, int start_t);

}  // namespace dycausal
