#pragma once

#include <cstddef>
#include <vector>

#include "dycausal/tensor.hpp"

namespace dycausal {

/// Thrown when a log-determinant is requested for a matrix whose determinant
/// is zero or negative. pivot_index identifies the offending pivot.
class SingularityError : public ContractError {
public:
    SingularityError(const std::string& msg, std::size_t pivot_index)
        : ContractError(msg), pivot_index(pivot_index) {}
    std::size_t pivot_index;
};

/// Thrown when a feasibility-checked log-determinant leaves its domain
/// (the shifted matrix stops being an M-matrix). Recoverable by design:
/// the trainer catches it and counts a feasibility violation.
class FeasibilityError : public ContractError {
public:
    FeasibilityError(const std::string& msg, std::size_t pivot_index)
        : ContractError(msg), pivot_index(pivot_index) {}
    std::size_t pivot_index;
};

TensorF matmul(const TensorF& a, const TensorF& b);
TensorF transpose(const TensorF& a);
TensorF hadamard(const TensorF& a, const TensorF& b);
TensorF add(const TensorF& a, const TensorF& b);
TensorF sub(const TensorF& a, const TensorF& b);
TensorF scale(const TensorF& a, double k);

double frobenius_norm(const TensorF& a);
/// Induced 1-norm: the maximum over columns of the column's absolute sum.
double one_norm_induced(const TensorF& a);
/// Index of the column attaining the induced 1-norm (first one on ties).
std::size_t one_norm_argmax_col(const TensorF& a);

/// LU factorization with partial pivoting, A = P L U. `lu` packs L (unit
/// diagonal, below) and U (on and above); perm[i] is the source row of row i;
/// sign is the permutation parity.
struct LuFactors {
    TensorF lu;
    std::vector<std::size_t> perm;
    int sign = 1;
};

LuFactors lu_decompose(const TensorF& a);

/// log det of a matrix with positive determinant, via pivoted LU with sign
/// tracking. Throws SingularityError when the determinant is zero or
/// negative.
double logdet_pd(const TensorF& a);

/// Solve A x = b using precomputed pivoted LU factors.
std::vector<double> lu_solve(const LuFactors& f, const std::vector<double>& b);

TensorF inverse(const TensorF& a);

/// Unpivoted LU pivots of a Z-matrix. All pivots positive iff the matrix is
/// a nonsingular M-matrix (all leading principal minors positive), which for
/// alpha*I - S with S >= 0 is exactly the feasibility condition
/// rho(S) < alpha. Throws FeasibilityError at the first non-positive pivot.
/// Returns {logdet, packed LU} so callers can reuse the factors.
struct MMatrixLogDet {
    double logdet;
    TensorF lu;
};

MMatrixLogDet logdet_mmatrix(const TensorF& a);

/// Inverse from unpivoted LU factors (as produced by logdet_mmatrix).
TensorF inverse_from_unpivoted_lu(const TensorF& lu);

/// Power iteration on a (square, non-negative in our use) matrix.
/// Runs at most `iters` rounds from a deterministic positive start vector
/// and stops when |A v - rho v|_2 <= tol * max(|rho|, tol). When the
/// dominant eigenvalue is not isolated (ties on a cycle, say) the iteration
/// does not settle; `converged` stays false and the caller surfaces a
/// degeneracy warning rather than an error.
struct PowerIterResult {
    double value = 0.0;
    bool converged = false;
    std::vector<double> right;
    std::vector<double> left;
};

PowerIterResult spectral_radius_power(const TensorF& a, int iters, double tol);

}  // namespace dycausal
