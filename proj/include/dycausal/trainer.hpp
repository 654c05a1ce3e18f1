#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dycausal/acyclic.hpp"
#include "dycausal/model.hpp"
#include "dycausal/synthgen.hpp"

namespace dycausal {

/// Which decoded matrices the acyclicity penalty (and the l1 term) average
/// over. Interpolants of two acyclic matrices need not be acyclic, so the
/// faithful default constrains every interpolated step; AnchorsOnly is the
/// cheaper variant that constrains the decoded anchors alone.
enum class AcyclicScope { AllSteps, AnchorsOnly };

const char* scope_name(AcyclicScope s);
AcyclicScope scope_from_name(const std::string& s);

struct TrainConfig {
    double beta = 0.05;            // l1 coefficient
    double mu0 = 1.0;              // initial data-fit weight on the central path
    double gamma = 0.1;            // per-round decay of mu
    std::size_t rounds = 4;        // central-path rounds r
    std::size_t inner_steps = 1000;  // gradient steps per round
    double lr = 0.005;
    double delta = 0.3;            // prune threshold
    double alpha = 1.001;          // log-det shift
    double eps_zero = 1e-12;       // zero-matrix cutoff inside h_norm
    bool norm_grad_term = false;   // propagate through the 1-norm factor
    PenaltyKind penalty = PenaltyKind::NormScaledLog;  // or Log (ablation)
    AcyclicScope scope = AcyclicScope::AllSteps;
    std::uint64_t seed = 0;
    double init_scale = 0.05;      // stddev of the parameter init

    void validate() const;
};

struct TraceRow {
    std::size_t step = 0;  // global step index, 1-based
    double mu = 0.0;
    double recon = 0.0;    // windowed SSE / (N*T*K)
    double l1 = 0.0;       // mean elementwise 1-norm of the constrained W_t
    double hnorm = 0.0;    // mean acyclicity penalty (absent for the ode head)
};

/// Fit artifacts. wall_seconds is informational only and never serialized,
/// so serialized reports stay byte-identical across reruns.
struct FitReport {
    std::size_t anchors = 0;
    std::size_t steps = 0;
    std::size_t feasibility_violations = 0;
    bool has_hnorm = true;
    double final_recon = 0.0;
    double final_l1 = 0.0;
    double final_hnorm = 0.0;
    double final_loss = 0.0;
    double wall_seconds = 0.0;
    std::vector<TraceRow> trace;
    DynGraphTrajectory trajectory;  // effective adjacency, t = tau+1 .. T
    DynGraphTrajectory pruned;      // entries |w| > delta, 0/1 weights
};

struct FitOutcome {
    Model model;
    FitReport report;
};

/// Central-path fit: for each round, minimize
///   mu * (recon / (N*T*K) + beta * mean_t |W_t|_1) + mean_t h(W_t^ins)
/// with adaptive-moment gradient steps, then mu <- gamma * mu (warm start
/// across rounds). Windows cover every admissible start (the terminal
/// clamped window included); the penalty set follows train.scope. The ode
/// head forces rounds = 1 and drops the penalty. FeasibilityError from the
/// unscaled log-det penalty is caught: parameters rewind to the last
/// feasible point (or shrink toward zero before one exists), the learning
/// rate halves, and the violation counter increments.
FitOutcome fit(const Dataset& ds, const ModelConfig& model_cfg,
               const TrainConfig& train_cfg);

std::string train_config_to_json(const TrainConfig& cfg);
/// Tolerant parser: missing fields keep defaults; unknown fields error.
TrainConfig train_config_from_json(const std::string& text);

/// Report JSON: config echo, counters, final loss components, the per-step
/// trace, and a pointer to the trajectory file.
std::string fit_report_json(const FitReport& report, const ModelConfig& model_cfg,
                            const TrainConfig& train_cfg,
                            const std::string& trajectory_ref);

/// Flat trace: `step,mu,recon,l1,hnorm` (hnorm column dropped for the ode head).
std::string fit_trace_csv(const FitReport& report);

}  // namespace dycausal
