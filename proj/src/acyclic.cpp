#include "dycausal/acyclic.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "dycausal/rng.hpp"

namespace dycausal {

namespace {

constexpr double kOverflowAt = 1e12;
constexpr double kVanishAt = 1e-12;

TensorF squared(const TensorF& w) {
    TensorF s = w;
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= s[i];
    return s;
}

// Chain rule through S = W.W: dh/dW_ij = dh/dS_ij * 2 W_ij.
TensorF chain_through_square(const TensorF& grad_s, const TensorF& w) {
    TensorF g = grad_s;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 2.0 * w[i];
    return g;
}

void finish_flags(PenaltyEval& e) {
    bool finite = std::isfinite(e.value);
    double gn = 0.0;
    for (std::size_t i = 0; i < e.grad.size(); ++i) {
        const double v = e.grad[i];
        if (!std::isfinite(v)) finite = false;
        gn += v * v;
    }
    gn = std::sqrt(gn);
    e.overflow = !finite || std::abs(e.value) > kOverflowAt || gn > kOverflowAt;
    e.vanished = std::abs(e.value) <= kVanishAt && gn <= kVanishAt;
}

// exp(M) by scaling and squaring: scale M down to unit norm, run the Taylor
// series to machine precision, square back up. Overflow is allowed to
// propagate as inf; the caller reads it off the flags.
TensorF matrix_exp(const TensorF& m) {
    const std::size_t d = m.rows();
    double norm = one_norm_induced(m);
    int s = 0;
    while (norm > 0.5 && s < 64) {
        norm *= 0.5;
        ++s;
    }
    TensorF b = scale(m, std::pow(2.0, -s));
    TensorF result = TensorF::identity(d);
    TensorF term = TensorF::identity(d);
    for (int k = 1; k <= 24; ++k) {
        term = scale(matmul(term, b), 1.0 / static_cast<double>(k));
        result = add(result, term);
    }
    for (int i = 0; i < s; ++i) result = matmul(result, result);
    return result;
}

// M^p by repeated multiplication (binary exponentiation).
TensorF matrix_pow(const TensorF& m, std::size_t p) {
    TensorF result = TensorF::identity(m.rows());
    TensorF base = m;
    while (p > 0) {
        if (p & 1) result = matmul(result, base);
        p >>= 1;
        if (p > 0) base = matmul(base, base);
    }
    return result;
}

}  // namespace

PenaltyEval eval_penalty(PenaltyKind kind, const TensorF& w, const PenaltyOptions& opt) {
    if (w.ndim() != 2 || w.rows() != w.cols())
        throw ContractError("eval_penalty: square matrix required");
    const std::size_t d = w.rows();
    TensorF s = squared(w);
    PenaltyEval e;
    e.grad = TensorF::zeros({d, d});

    switch (kind) {
        case PenaltyKind::NormScaledLog: {
            if (opt.alpha <= 1.0)
                throw ContractError("NormScaledLog: alpha must exceed 1");
            const double c = one_norm_induced(s);
            if (c <= opt.eps_zero) break;  // exact zero, zero gradient
            TensorF m({d, d});
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    m(i, j) = (i == j ? opt.alpha : 0.0) - s(i, j) / c;
            MMatrixLogDet ld = logdet_mmatrix(m);
            e.value = -ld.logdet + static_cast<double>(d) * std::log(opt.alpha);
            TensorF inv = inverse_from_unpivoted_lu(ld.lu);
            TensorF gs({d, d});
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) gs(i, j) = inv(j, i) / c;
            if (opt.norm_grad_term) {
                double tr = 0.0;
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t k = 0; k < d; ++k) tr += inv(i, k) * s(k, i);
                const double dc = -tr / (c * c);
                const std::size_t jstar = one_norm_argmax_col(s);
                for (std::size_t i = 0; i < d; ++i) gs(i, jstar) += dc;
            }
            e.grad = chain_through_square(gs, w);
            break;
        }
        case PenaltyKind::Log: {
            TensorF m({d, d});
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    m(i, j) = (i == j ? opt.alpha : 0.0) - s(i, j);
            try {
                MMatrixLogDet ld = logdet_mmatrix(m);
                e.value = -ld.logdet + static_cast<double>(d) * std::log(opt.alpha);
                TensorF inv = inverse_from_unpivoted_lu(ld.lu);
                TensorF gs({d, d});
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < d; ++j) gs(i, j) = inv(j, i);
                e.grad = chain_through_square(gs, w);
            } catch (const FeasibilityError&) {
                e.feasible = false;
                e.value = std::numeric_limits<double>::infinity();
                e.grad = TensorF::full({d, d}, std::numeric_limits<double>::infinity());
            }
            break;
        }
        case PenaltyKind::Exp: {
            TensorF ex = matrix_exp(s);
            double tr = 0.0;
            for (std::size_t i = 0; i < d; ++i) tr += ex(i, i);
            e.value = tr - static_cast<double>(d);
            TensorF gs({d, d});
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) gs(i, j) = ex(j, i);
            e.grad = chain_through_square(gs, w);
            break;
        }
        case PenaltyKind::Poly: {
            // P = I - S/d; h = Tr(P^d) - d; dh/dS = -(P^{d-1})^T.
            TensorF p({d, d});
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    p(i, j) = (i == j ? 1.0 : 0.0) - s(i, j) / static_cast<double>(d);
            TensorF pm1 = matrix_pow(p, d - 1);
            TensorF pd = matmul(pm1, p);
            double tr = 0.0;
            for (std::size_t i = 0; i < d; ++i) tr += pd(i, i);
            e.value = tr - static_cast<double>(d);
            TensorF gs({d, d});
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) gs(i, j) = -pm1(j, i);
            e.grad = chain_through_square(gs, w);
            break;
        }
        case PenaltyKind::SpectralRadius: {
            PowerIterResult pr = spectral_radius_power(s, opt.power_iters, opt.power_tol);
            e.value = pr.value;
            e.degenerate = !pr.converged;
            double uv = 0.0;
            for (std::size_t i = 0; i < d; ++i) uv += pr.left[i] * pr.right[i];
            if (std::abs(uv) > 1e-12) {
                TensorF gs({d, d});
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < d; ++j)
                        gs(i, j) = pr.left[i] * pr.right[j] / uv;
                e.grad = chain_through_square(gs, w);
            } else {
                e.degenerate = true;  // left/right eigenvectors orthogonal
            }
            break;
        }
    }
    finish_flags(e);
    return e;
}

double h_norm_value(const TensorF& w, const PenaltyOptions& opt) {
    if (opt.alpha <= 1.0) throw ContractError("h_norm_value: alpha must exceed 1");
    TensorF s = squared(w);
    const std::size_t d = w.rows();
    const double c = one_norm_induced(s);
    if (c <= opt.eps_zero) return 0.0;
    TensorF m({d, d});
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            m(i, j) = (i == j ? opt.alpha : 0.0) - s(i, j) / c;
    return -logdet_mmatrix(m).logdet + static_cast<double>(d) * std::log(opt.alpha);
}

double h_log_value(const TensorF& w, const PenaltyOptions& opt) {
    TensorF s = squared(w);
    const std::size_t d = w.rows();
    TensorF m({d, d});
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = (i == j ? opt.alpha : 0.0) - s(i, j);
    return -logdet_mmatrix(m).logdet + static_cast<double>(d) * std::log(opt.alpha);
}

TensorF make_bench_matrix(const BenchPoint& p) {
    if (p.family == BenchFamily::UniformRandom) {
        Rng rng(p.seed);
        TensorF w({p.d, p.d});
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform() * p.param;
        return w;
    }
    const std::size_t d = static_cast<std::size_t>(p.param);
    if (d < 2) throw ContractError("make_bench_matrix: SignedCycle needs d >= 2");
    TensorF w({d, d});
    for (std::size_t i = 0; i < d; ++i) {
        const std::size_t j = (i + 1) % d;
        w(j, i) = (i % 2 == 0) ? 0.5 : -0.5;  // edge i -> i+1, effect-major rows
    }
    return w;
}

std::vector<BenchRow> run_stability_bench(const std::vector<PenaltyKind>& penalties,
                                          const std::vector<BenchPoint>& points,
                                          const PenaltyOptions& opt) {
    std::vector<BenchRow> rows;
    rows.reserve(penalties.size() * points.size());
    for (PenaltyKind k : penalties) {
        for (const BenchPoint& p : points) {
            TensorF w = make_bench_matrix(p);
            const auto t0 = std::chrono::steady_clock::now();
            PenaltyEval e = eval_penalty(k, w, opt);
            const auto t1 = std::chrono::steady_clock::now();
            double gn = 0.0;
            bool finite = true;
            for (std::size_t i = 0; i < e.grad.size(); ++i) {
                if (!std::isfinite(e.grad[i])) finite = false;
                gn += e.grad[i] * e.grad[i];
            }
            gn = finite ? std::sqrt(gn) : std::numeric_limits<double>::infinity();
            rows.push_back(BenchRow{
                k, p.family, p.param, e.value, gn,
                static_cast<std::uint64_t>(
                    std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()),
                e.overflow, e.vanished});
        }
    }
    return rows;
}

const char* penalty_name(PenaltyKind k) {
    switch (k) {
        case PenaltyKind::NormScaledLog: return "h_norm";
        case PenaltyKind::Log: return "h_log";
        case PenaltyKind::Exp: return "h_exp";
        case PenaltyKind::Poly: return "h_poly";
        case PenaltyKind::SpectralRadius: return "h_rho";
    }
    return "?";
}

const char* bench_family_name(BenchFamily f) {
    return f == BenchFamily::UniformRandom ? "uniform_random" : "signed_cycle";
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::string out = "penalty,family,param,value,grad_norm,runtime_ns,overflow,vanished\n";
    char buf[256];
    for (const BenchRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%.17g,%.17g,%llu,%d,%d\n",
                      penalty_name(r.penalty), bench_family_name(r.family), r.param,
                      r.value, r.grad_norm,
                      static_cast<unsigned long long>(r.runtime_ns), r.overflow ? 1 : 0,
                      r.vanished ? 1 : 0);
        out += buf;
    }
    return out;
}

}  // namespace dycausal
