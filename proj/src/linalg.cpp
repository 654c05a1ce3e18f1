#include "dycausal/linalg.hpp"

#include <cmath>
#include <cstring>

namespace dycausal {

namespace {

void check_square(const TensorF& a, const char* who) {
    if (a.ndim() != 2 || a.rows() != a.cols())
        throw ContractError(std::string(who) + ": square matrix required");
}

}  // namespace

TensorF matmul(const TensorF& a, const TensorF& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows())
        throw ContractError("matmul: shape mismatch");
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    TensorF out({n, m});
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    // i-k-j order keeps both B and the output row-contiguous.
    for (std::size_t i = 0; i < n; ++i) {
        double* orow = po + i * m;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = pa[i * k + kk];
            if (aik == 0.0) continue;
            const double* brow = pb + kk * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

TensorF transpose(const TensorF& a) {
    if (a.ndim() != 2) throw ContractError("transpose: rank-2 tensor required");
    TensorF out({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

TensorF hadamard(const TensorF& a, const TensorF& b) {
    if (!a.same_shape(b)) throw ContractError("hadamard: shape mismatch");
    TensorF out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

TensorF add(const TensorF& a, const TensorF& b) {
    if (!a.same_shape(b)) throw ContractError("add: shape mismatch");
    TensorF out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

TensorF sub(const TensorF& a, const TensorF& b) {
    if (!a.same_shape(b)) throw ContractError("sub: shape mismatch");
    TensorF out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

TensorF scale(const TensorF& a, double k) {
    TensorF out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= k;
    return out;
}

double frobenius_norm(const TensorF& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * a[i];
    return std::sqrt(s);
}

double one_norm_induced(const TensorF& a) {
    check_square(a, "one_norm_induced");
    const std::size_t d = a.rows();
    double best = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += std::abs(a(i, j));
        if (s > best) best = s;
    }
    return best;
}

std::size_t one_norm_argmax_col(const TensorF& a) {
    check_square(a, "one_norm_argmax_col");
    const std::size_t d = a.rows();
    double best = -1.0;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += std::abs(a(i, j));
        if (s > best) {
            best = s;
            arg = j;
        }
    }
    return arg;
}

LuFactors lu_decompose(const TensorF& a) {
    check_square(a, "lu_decompose");
    const std::size_t d = a.rows();
    LuFactors f{a, std::vector<std::size_t>(d), 1};
    for (std::size_t i = 0; i < d; ++i) f.perm[i] = i;
    double* m = f.lu.data();
    for (std::size_t k = 0; k < d; ++k) {
        std::size_t piv = k;
        double best = std::abs(m[k * d + k]);
        for (std::size_t i = k + 1; i < d; ++i) {
            double v = std::abs(m[i * d + k]);
            if (v > best) {
                best = v;
                piv = i;
            }
        }
        if (piv != k) {
            for (std::size_t j = 0; j < d; ++j) std::swap(m[k * d + j], m[piv * d + j]);
            std::swap(f.perm[k], f.perm[piv]);
            f.sign = -f.sign;
        }
        const double pivot = m[k * d + k];
        if (pivot == 0.0) continue;  // singular; caller inspects pivots
        for (std::size_t i = k + 1; i < d; ++i) {
            const double l = m[i * d + k] / pivot;
            m[i * d + k] = l;
            if (l == 0.0) continue;
            for (std::size_t j = k + 1; j < d; ++j) m[i * d + j] -= l * m[k * d + j];
        }
    }
    return f;
}

double logdet_pd(const TensorF& a) {
    LuFactors f = lu_decompose(a);
    const std::size_t d = a.rows();
    int sign = f.sign;
    double sum = 0.0;
    std::size_t first_nonpos = 0;
    bool saw_nonpos = false;
    for (std::size_t k = 0; k < d; ++k) {
        const double p = f.lu(k, k);
        if (p == 0.0)
            throw SingularityError("logdet_pd: zero pivot, determinant is zero", k);
        if (p < 0.0) {
            sign = -sign;
            if (!saw_nonpos) {
                saw_nonpos = true;
                first_nonpos = k;
            }
        }
        sum += std::log(std::abs(p));
    }
    if (sign < 0)
        throw SingularityError("logdet_pd: negative determinant", first_nonpos);
    return sum;
}

std::vector<double> lu_solve(const LuFactors& f, const std::vector<double>& b) {
    const std::size_t d = f.lu.rows();
    if (b.size() != d) throw ContractError("lu_solve: size mismatch");
    std::vector<double> x(d);
    for (std::size_t i = 0; i < d; ++i) x[i] = b[f.perm[i]];
    for (std::size_t i = 1; i < d; ++i) {
        double s = x[i];
        for (std::size_t j = 0; j < i; ++j) s -= f.lu(i, j) * x[j];
        x[i] = s;
    }
    for (std::size_t i = d; i-- > 0;) {
        double s = x[i];
        for (std::size_t j = i + 1; j < d; ++j) s -= f.lu(i, j) * x[j];
        const double p = f.lu(i, i);
        if (p == 0.0) throw SingularityError("lu_solve: singular matrix", i);
        x[i] = s / p;
    }
    return x;
}

TensorF inverse(const TensorF& a) {
    check_square(a, "inverse");
    const std::size_t d = a.rows();
    LuFactors f = lu_decompose(a);
    TensorF out({d, d});
    std::vector<double> e(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        e[j] = 1.0;
        std::vector<double> col = lu_solve(f, e);
        e[j] = 0.0;
        for (std::size_t i = 0; i < d; ++i) out(i, j) = col[i];
    }
    return out;
}

MMatrixLogDet logdet_mmatrix(const TensorF& a) {
    check_square(a, "logdet_mmatrix");
    const std::size_t d = a.rows();
    MMatrixLogDet r{0.0, a};
    double* m = r.lu.data();
    for (std::size_t k = 0; k < d; ++k) {
        const double pivot = m[k * d + k];
        if (!(pivot > 0.0) || !std::isfinite(pivot))
            throw FeasibilityError("logdet_mmatrix: non-positive pivot, matrix left the M-matrix cone", k);
        r.logdet += std::log(pivot);
        for (std::size_t i = k + 1; i < d; ++i) {
            const double l = m[i * d + k] / pivot;
            m[i * d + k] = l;
            if (l == 0.0) continue;
            for (std::size_t j = k + 1; j < d; ++j) m[i * d + j] -= l * m[k * d + j];
        }
    }
    return r;
}

TensorF inverse_from_unpivoted_lu(const TensorF& lu) {
    const std::size_t d = lu.rows();
    TensorF out({d, d});
    std::vector<double> x(d);
    for (std::size_t col = 0; col < d; ++col) {
        for (std::size_t i = 0; i < d; ++i) x[i] = (i == col) ? 1.0 : 0.0;
        for (std::size_t i = 1; i < d; ++i) {
            double s = x[i];
            for (std::size_t j = 0; j < i; ++j) s -= lu(i, j) * x[j];
            x[i] = s;
        }
        for (std::size_t i = d; i-- > 0;) {
            double s = x[i];
            for (std::size_t j = i + 1; j < d; ++j) s -= lu(i, j) * x[j];
            x[i] = s / lu(i, i);
        }
        for (std::size_t i = 0; i < d; ++i) out(i, col) = x[i];
    }
    return out;
}

namespace {

// One matrix-vector product plus normalization; returns the new 2-norm.
double apply_normalized(const TensorF& a, bool transposed, std::vector<double>& v,
                        std::vector<double>& tmp) {
    const std::size_t d = a.rows();
    for (std::size_t i = 0; i < d; ++i) tmp[i] = 0.0;
    if (!transposed) {
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += a(i, j) * v[j];
            tmp[i] = s;
        }
    } else {
        for (std::size_t i = 0; i < d; ++i) {
            const double vi = v[i];
            if (vi == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) tmp[j] += a(i, j) * vi;
        }
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) norm += tmp[i] * tmp[i];
    norm = std::sqrt(norm);
    if (norm > 0.0)
        for (std::size_t i = 0; i < d; ++i) v[i] = tmp[i] / norm;
    else
        for (std::size_t i = 0; i < d; ++i) v[i] = 0.0;
    return norm;
}

}  // namespace

PowerIterResult spectral_radius_power(const TensorF& a, int iters, double tol) {
    check_square(a, "spectral_radius_power");
    const std::size_t d = a.rows();
    PowerIterResult r;
    r.right.assign(d, 1.0 / std::sqrt(static_cast<double>(d)));
    r.left = r.right;
    std::vector<double> tmp(d);

    auto run = [&](bool transposed, std::vector<double>& v) {
        double lambda = 0.0;
        bool ok = false;
        for (int it = 0; it < iters; ++it) {
            double norm = apply_normalized(a, transposed, v, tmp);
            if (norm == 0.0) {  // v fell in the kernel: radius estimate 0
                lambda = 0.0;
                ok = true;
                break;
            }
            // Residual |A v_new - norm_next v_new| checked via one more product.
            double num = 0.0, res = 0.0;
            for (std::size_t i = 0; i < d; ++i) tmp[i] = 0.0;
            if (!transposed) {
                for (std::size_t i = 0; i < d; ++i) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < d; ++j) s += a(i, j) * v[j];
                    tmp[i] = s;
                }
            } else {
                for (std::size_t i = 0; i < d; ++i) {
                    const double vi = v[i];
                    if (vi == 0.0) continue;
                    for (std::size_t j = 0; j < d; ++j) tmp[j] += a(i, j) * vi;
                }
            }
            for (std::size_t i = 0; i < d; ++i) num += v[i] * tmp[i];
            lambda = num;  // Rayleigh quotient with |v| = 1
            for (std::size_t i = 0; i < d; ++i) {
                const double e = tmp[i] - lambda * v[i];
                res += e * e;
            }
            if (std::sqrt(res) <= tol * std::max(std::abs(lambda), tol)) {
                ok = true;
                break;
            }
        }
        return std::pair<double, bool>(std::abs(lambda), ok);
    };

    auto [rho_r, ok_r] = run(false, r.right);
    auto [rho_l, ok_l] = run(true, r.left);
    r.value = rho_r;
    r.converged = ok_r && ok_l;
    return r;
}

}  // namespace dycausal
