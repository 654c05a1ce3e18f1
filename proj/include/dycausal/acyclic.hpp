#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dycausal/linalg.hpp"
#include "dycausal/tensor.hpp"

namespace dycausal {

/// Differentiable acyclicity penalties on a weighted adjacency matrix W
/// (entry (i, j) = edge j -> i in effect-major orientation; the penalties
/// only see W elementwise-squared, so orientation does not matter here).
///
///   NormScaledLog  h = -logdet(alpha I - S/|S|_1) + d log alpha, S = W.W
///   Log            h = -logdet(alpha I - S) + d log alpha
///   Exp            h = Tr(exp(S)) - d
///   Poly           h = Tr((I - S/d)^d) - d
///   SpectralRadius h = rho(S) via power iteration
///
/// |S|_1 is the induced 1-norm (maximum column absolute sum). All evaluate
/// to zero on DAGs (the log-det variants are zero iff the graph is a DAG);
/// NormScaledLog is additionally invariant under rescaling W -> kW and keeps
/// a usable gradient at any scale, which is why the trainer uses it. The
/// others exist for the stability bench.
enum class PenaltyKind { NormScaledLog, Log, Exp, Poly, SpectralRadius };

struct PenaltyOptions {
    double alpha = 1.001;      // log-det shift; must be > 1 for NormScaledLog
    double eps_zero = 1e-12;   // |S|_1 at or below this reads as the zero matrix
    bool norm_grad_term = false;  // include the 1-norm subgradient path
    int power_iters = 100;     // SpectralRadius iteration budget
    double power_tol = 1e-8;   // SpectralRadius residual tolerance
};

/// One penalty evaluation: value, gradient w.r.t. W, and stability flags.
/// overflow: value or gradient non-finite or beyond 1e12 in magnitude.
/// vanished: |value| and gradient Frobenius norm both at or below 1e-12.
/// feasible: false only for Log when rho(S) >= alpha (value reported +inf).
/// degenerate: SpectralRadius power iteration failed to settle (repeated
/// dominant eigenvalues, e.g. on cycles); value/gradient are best-effort.
struct PenaltyEval {
    double value = 0.0;
    TensorF grad;
    bool overflow = false;
    bool vanished = false;
    bool feasible = true;
    bool degenerate = false;
};

PenaltyEval eval_penalty(PenaltyKind kind, const TensorF& w,
                         const PenaltyOptions& opt = {});

/// Value-only conveniences. h_log_value throws FeasibilityError when the
/// shifted matrix leaves the M-matrix cone (rho(W.W) >= alpha).
double h_norm_value(const TensorF& w, const PenaltyOptions& opt = {});
double h_log_value(const TensorF& w, const PenaltyOptions& opt = {});

/// Stability bench matrix families.
///   UniformRandom(k): d x d entries i.i.d. uniform on [0, k]; a fixed seed
///     fixes the pattern, so sweeping k rescales one matrix.
///   SignedCycle(d): single directed d-cycle with weights alternating +-0.5.
enum class BenchFamily { UniformRandom, SignedCycle };

struct BenchPoint {
    BenchFamily family = BenchFamily::UniformRandom;
    double param = 1.0;      // k for UniformRandom, d for SignedCycle
    std::size_t d = 20;      // matrix size for UniformRandom
    std::uint64_t seed = 0;  // pattern seed for UniformRandom
};

TensorF make_bench_matrix(const BenchPoint& p);

/// One row per (penalty, point): value, gradient Frobenius norm, wall time
/// of the combined value+gradient evaluation, and the stability flags.
/// Infeasible Log points report value and grad_norm as +inf with the
/// overflow flag set; that unusability is what the sweep demonstrates.
struct BenchRow {
    PenaltyKind penalty;
    BenchFamily family;
    double param;
    double value;
    double grad_norm;
    std::uint64_t runtime_ns;
    bool overflow;
    bool vanished;
};

std::vector<BenchRow> run_stability_bench(const std::vector<PenaltyKind>& penalties,
                                          const std::vector<BenchPoint>& points,
                                          const PenaltyOptions& opt = {});

/// CSV with header penalty,family,param,value,grad_norm,runtime_ns,overflow,vanished.
/// runtime_ns is measured wall time and is the one column that is not
/// reproducible across runs; everything else is.
std::string bench_csv(const std::vector<BenchRow>& rows);

const char* penalty_name(PenaltyKind k);
const char* bench_family_name(BenchFamily f);

}  // namespace dycausal
