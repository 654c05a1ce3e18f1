// Numeric core tests: dense tensors, the deterministic RNG, the linear
// algebra kernels, and the reverse-mode tape. Every differentiable tape op
// is checked against central finite differences on random smooth inputs;
// kinked ops (relu, l1) are additionally pinned at their subgradient
// conventions.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "dycausal/linalg.hpp"
#include "dycausal/rng.hpp"
#include "dycausal/synthgen.hpp"
#include "dycausal/tape.hpp"

using namespace dycausal;

namespace {

TensorF random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                      double hi = 1.0) {
    TensorF t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

using BuildFn =
    std::function<Tape::Var(Tape&, const std::vector<Tape::Var>&)>;

// Analytic gradients vs central differences for a scalar-valued graph over
// every element of every differentiable input.
void check_grads(const std::vector<TensorF>& inputs, const BuildFn& build,
                 double tol = 2e-5) {
    Tape tape;
    std::vector<Tape::Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.param(t));
    Tape::Var root = build(tape, vars);
    REQUIRE(tape.val(root).size() == 1);
    tape.backward(root);

    auto eval_shifted = [&](std::size_t vi, std::size_t elem, double delta) {
        std::vector<TensorF> shifted = inputs;
        shifted[vi][elem] += delta;
        Tape t2;
        std::vector<Tape::Var> vs;
        for (const auto& t : shifted) vs.push_back(t2.param(t));
        return t2.scalar(build(t2, vs));
    };

    for (std::size_t vi = 0; vi < inputs.size(); ++vi) {
        const TensorF g = tape.grad(vars[vi]);
        REQUIRE(g.size() == inputs[vi].size());
        for (std::size_t e = 0; e < inputs[vi].size(); ++e) {
            const double h = 1e-6 * std::max(1.0, std::abs(inputs[vi][e]));
            const double fd =
                (eval_shifted(vi, e, h) - eval_shifted(vi, e, -h)) / (2.0 * h);
            CHECK(std::abs(g[e] - fd) <= tol * std::max(1.0, std::abs(fd)));
        }
    }
}

}  // namespace

TEST_CASE("tensor shape, indexing, and constructors") {
    TensorF t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    t(1, 2) = 5.0;
    CHECK(t[5] == 5.0);

    TensorF id = TensorF::identity(3);
    CHECK(id(0, 0) == 1.0);
    CHECK(id(0, 1) == 0.0);
    CHECK(id.size() == 9);

    TensorF f = TensorF::full({2, 2}, 3.5);
    for (std::size_t i = 0; i < 4; ++i) CHECK(f[i] == 3.5);

    TensorF s = TensorF::scalar(2.25);
    CHECK(s.size() == 1);
    CHECK(s[0] == 2.25);

    TensorF cube({2, 3, 4});
    cube(1, 2, 3) = 7.0;
    CHECK(cube[1 * 12 + 2 * 4 + 3] == 7.0);

    CHECK_THROWS_AS(TensorF({2, 2}, std::vector<double>{1.0}), ContractError);
}

TEST_CASE("rng: frozen draws and stream splitting") {
    // Golden values pin the generator so serialized artifacts stay
    // reproducible across refactors.
    Rng r(42);
    CHECK(r.next_u64() == 1546998764402558742ULL);
    CHECK(r.next_u64() == 6990951692964543102ULL);
    CHECK(r.next_u64() == 12544586762248559009ULL);

    Rng u(42);
    CHECK(u.uniform() == doctest::Approx(0.083862971059882163).epsilon(1e-15));
    CHECK(u.uniform() == doctest::Approx(0.37898025066266861).epsilon(1e-15));

    Rng n(42);
    CHECK(n.normal() == doctest::Approx(-0.72621913824478568).epsilon(1e-15));
    CHECK(n.normal() == doctest::Approx(-0.21119691823195985).epsilon(1e-15));
    CHECK(n.normal() == doctest::Approx(0.22162270150359331).epsilon(1e-15));

    Rng s = Rng::split(7, kStreamStructure);
    CHECK(s.next_u64() == 7761145273985072860ULL);

    // distinct streams from one seed are distinct generators
    Rng a = Rng::split(9, 1), b = Rng::split(9, 2), a2 = Rng::split(9, 1);
    const std::uint64_t va = a.next_u64();
    CHECK(va != b.next_u64());
    CHECK(va == a2.next_u64());
}

TEST_CASE("rng: uniform range and permutation validity") {
    Rng r(5);
    for (int i = 0; i < 1000; ++i) {
        const double x = r.uniform();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
    const auto p = r.permutation(20);
    std::vector<bool> seen(20, false);
    for (std::size_t v : p) {
        REQUIRE(v < 20);
        CHECK(!seen[v]);
        seen[v] = true;
    }
    // normals: loose moment sanity on a big sample
    Rng g(11);
    double mean = 0.0, var = 0.0;
    const int n = 20000;
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) xs[i] = g.normal();
    for (double x : xs) mean += x;
    mean /= n;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= n;
    CHECK(std::abs(mean) < 0.03);
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("linalg: matmul against naive triple loop") {
    Rng rng(1);
    const TensorF a = random_tensor({4, 5}, rng), b = random_tensor({5, 3}, rng);
    const TensorF c = matmul(a, b);
    REQUIRE(c.rows() == 4);
    REQUIRE(c.cols() == 3);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
            CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-12));
        }
    CHECK_THROWS_AS(matmul(a, a), ContractError);
}

TEST_CASE("linalg: transpose, one-norm, frobenius") {
    Rng rng(2);
    const TensorF a = random_tensor({3, 4}, rng);
    const TensorF at = transpose(a);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(at(j, i) == a(i, j));

    double fr = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) fr += a[i] * a[i];
    CHECK(frobenius_norm(a) == doctest::Approx(std::sqrt(fr)).epsilon(1e-14));

    // induced one norm = max column abs sum, brute force (square contract)
    const TensorF q = random_tensor({4, 4}, rng);
    double best = 0.0;
    std::size_t best_col = 0;
    for (std::size_t j = 0; j < 4; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < 4; ++i) s += std::abs(q(i, j));
        if (s > best) {
            best = s;
            best_col = j;
        }
    }
    CHECK(one_norm_induced(q) == doctest::Approx(best).epsilon(1e-14));
    CHECK(one_norm_argmax_col(q) == best_col);
}

TEST_CASE("linalg: LU solve, inverse, logdet") {
    Rng rng(3);
    TensorF a = random_tensor({5, 5}, rng);
    for (std::size_t i = 0; i < 5; ++i) a(i, i) += 4.0;  // well conditioned

    const LuFactors f = lu_decompose(a);
    std::vector<double> b = {1, -2, 3, 0.5, -1};
    const auto x = lu_solve(f, b);
    for (std::size_t i = 0; i < 5; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 5; ++j) s += a(i, j) * x[j];
        CHECK(s == doctest::Approx(b[i]).epsilon(1e-10));
    }

    const TensorF inv = inverse(a);
    const TensorF prod = matmul(a, inv);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            CHECK(prod(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));

    // logdet oracle: block-diagonal with known 2x2 determinants
    TensorF d = TensorF::zeros({4, 4});
    d(0, 0) = 2;  d(0, 1) = 1;  d(1, 0) = 1;  d(1, 1) = 3;   // det 5
    d(2, 2) = 4;  d(2, 3) = -1; d(3, 2) = 1;  d(3, 3) = 1;   // det 5
    CHECK(logdet_pd(d) == doctest::Approx(std::log(25.0)).epsilon(1e-12));

    TensorF sing = TensorF::zeros({2, 2});
    sing(0, 0) = 1.0;  // rank 1
    CHECK_THROWS_AS(logdet_pd(sing), SingularityError);
}

TEST_CASE("linalg: M-matrix logdet agrees with pivoted LU and flags infeasibility") {
    // alpha I - S with rho(S) < alpha: both paths agree
    const double alpha = 1.001;
    TensorF s = TensorF::zeros({3, 3});
    s(0, 1) = 0.2;
    s(1, 2) = 0.3;
    s(2, 0) = 0.1;  // 3-cycle, rho = (0.006)^(1/3) ~ 0.18
    TensorF m = TensorF::zeros({3, 3});
    for (std::size_t i = 0; i < 3; ++i) m(i, i) = alpha;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) m(i, j) -= s(i, j);
    const MMatrixLogDet r = logdet_mmatrix(m);
    CHECK(r.logdet == doctest::Approx(logdet_pd(m)).epsilon(1e-12));

    const TensorF inv_lu = inverse_from_unpivoted_lu(r.lu);
    const TensorF inv_ref = inverse(m);
    for (std::size_t i = 0; i < 9; ++i)
        CHECK(inv_lu[i] == doctest::Approx(inv_ref[i]).epsilon(1e-10));

    // infeasible: 2-cycle with product 4 -> rho 2 > alpha
    TensorF bad = TensorF::zeros({2, 2});
    bad(0, 0) = alpha;
    bad(1, 1) = alpha;
    bad(0, 1) = -2.0;
    bad(1, 0) = -2.0;
    CHECK_THROWS_AS(logdet_mmatrix(bad), FeasibilityError);
}

TEST_CASE("linalg: power iteration spectral radius") {
    // nilpotent upper-triangular: rho = 0
    TensorF n = TensorF::zeros({3, 3});
    n(0, 1) = 5.0;
    n(1, 2) = -2.0;
    const PowerIterResult r0 = spectral_radius_power(n, 200, 1e-10);
    CHECK(r0.value <= 1e-8);

    // rank-one positive matrix: rho = sum of outer-product diagonal = v.u
    TensorF p = TensorF::zeros({3, 3});
    const double u[3] = {1, 2, 3}, v[3] = {0.5, 0.25, 0.125};
    double expect = 0.0;
    for (int i = 0; i < 3; ++i) expect += u[i] * v[i];
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) p(i, j) = u[i] * v[j];
    const PowerIterResult r1 = spectral_radius_power(p, 200, 1e-10);
    CHECK(r1.converged);
    CHECK(r1.value == doctest::Approx(expect).epsilon(1e-8));
}

TEST_CASE("tape: elementwise and linear ops match finite differences") {
    Rng rng(7);
    const TensorF a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);

    check_grads({a, b}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.sum(t.add(v[0], v[1]));
    });
    check_grads({a, b}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.sum(t.square(t.sub(v[0], v[1])));
    });
    check_grads({a, b}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.sum(t.hadamard(v[0], v[1]));
    });
    check_grads({a}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.sum(t.scale(v[0], -2.5));
    });
    check_grads({a, b}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.sum(t.square(t.lerp(v[0], v[1], 0.3, 0.7)));
    });
    check_grads({a}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.mean(t.square(v[0]));
    });

    const TensorF m1 = random_tensor({3, 4}, rng), m2 = random_tensor({4, 2}, rng);
    check_grads({m1, m2}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.sum(t.square(t.matmul(v[0], v[1])));
    });

    const TensorF w = random_tensor({3, 4}, rng), x = random_tensor({4, 5}, rng);
    const TensorF bias = random_tensor({3}, rng);
    check_grads({w, x, bias}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.sum(t.square(t.affine_cols(v[0], v[1], v[2])));
    });

    const TensorF xv = random_tensor({4}, rng);
    check_grads({w, xv, bias}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.sum(t.square(t.affine_vec(v[0], v[1], v[2])));
    });
}

TEST_CASE("tape: activations match finite differences away from kinks") {
    Rng rng(13);
    TensorF a = random_tensor({3, 3}, rng);
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a[i]) < 0.05) a[i] = 0.25;  // keep relu clear of its kink

    for (Activation k :
         {Activation::Relu, Activation::Sigmoid, Activation::Tanh,
          Activation::Identity}) {
        check_grads({a}, [k](Tape& t, const std::vector<Tape::Var>& v) {
            return t.sum(t.square(t.act(v[0], k)));
        });
    }
}

TEST_CASE("tape: relu and l1 subgradients at zero are zero") {
    TensorF z = TensorF::zeros({2, 2});
    {
        Tape t;
        auto v = t.param(z);
        auto r = t.sum(t.act(v, Activation::Relu));
        t.backward(r);
        const TensorF g = t.grad(v);
        for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
    }
    {
        Tape t;
        auto v = t.param(z);
        auto r = t.l1(v);
        t.backward(r);
        const TensorF g = t.grad(v);
        for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
    }
}

TEST_CASE("tape: reductions, reshapes, and losses match finite differences") {
    Rng rng(17);
    const TensorF a = random_tensor({4, 3}, rng);

    check_grads({a}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.sum(t.square(t.transpose(v[0])));
    });
    check_grads({a}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.sum(t.square(t.slice_rows(v[0], 1, 3)));
    });
    check_grads({a}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.sum(t.square(t.slice_cols(v[0], 0, 2)));
    });

    const TensorF b = random_tensor({2, 3}, rng);
    check_grads({a, b}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.sum(t.square(t.concat_rows(v[0], v[1])));
    });

    TensorF pos = random_tensor({3, 3}, rng);
    for (std::size_t i = 0; i < pos.size(); ++i)
        if (std::abs(pos[i]) < 0.05) pos[i] = -0.3;  // keep |.| differentiable
    check_grads({pos}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.l1(v[0]);
    });

    const TensorF pred = random_tensor({3, 4}, rng), tgt = random_tensor({3, 4}, rng);
    check_grads({pred}, [&](Tape& t, const std::vector<Tape::Var>& v) {
        return t.sse(v[0], t.constant(tgt));
    });

    // logdet on a safely positive definite input
    TensorF pd = random_tensor({3, 3}, rng, -0.2, 0.2);
    for (std::size_t i = 0; i < 3; ++i) pd(i, i) += 2.0;
    check_grads({pd}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.logdet(v[0]);
    });
}

TEST_CASE("tape: structured model ops match finite differences") {
    Rng rng(23);

    // conv_temporal + mean_nt: x is a constant leaf; kernel and bias learn
    const TensorF x = random_tensor({2, 6, 3}, rng);       // [N, K, d]
    const TensorF kern = random_tensor({4, 3, 3}, rng);    // [c, d, w]
    const TensorF kbias = random_tensor({4}, rng);
    check_grads({kern, kbias}, [&](Tape& t, const std::vector<Tape::Var>& v) {
        auto conv = t.conv_temporal(t.constant(x), v[0], v[1]);
        return t.sum(t.square(t.mean_nt(t.act(conv, Activation::Tanh))));
    });

    // chunked affine banks as used by the decoder (m=2, d=3, L=2 -> dL=6, dm=6)
    const TensorF z = random_tensor({6}, rng);              // flat m*d
    const TensorF w1 = random_tensor({2, 6, 3}, rng);       // [m, dL, d]
    const TensorF b1 = random_tensor({2, 6}, rng);
    check_grads({z, w1, b1}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.sum(t.square(t.chunk_affine_rows(v[0], v[1], v[2])));
    });

    const TensorF u = random_tensor({6, 2}, rng);           // [dL, m]
    const TensorF w2 = random_tensor({6, 6, 2}, rng);       // [dL, dm, m]
    const TensorF b2 = random_tensor({6, 6}, rng);
    check_grads({u, w2, b2}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.sum(t.square(t.chunk_affine_cols(v[0], v[1], v[2])));
    });

    const TensorF big = random_tensor({6, 4}, rng);
    check_grads({big}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.sum(t.square(t.sumsq_rows_grouped(v[0], 2)));
    });

    const TensorF s1 = random_tensor({1}, rng), s2 = random_tensor({1}, rng);
    check_grads({s1, s2}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.weighted_sum({v[0], v[1]}, {0.25, -1.5});
    });
}

TEST_CASE("tape: chunk_affine_rows equals per-chunk dense affine") {
    Rng rng(29);
    const std::size_t m = 3, d = 2, dL = 4;
    const TensorF z = random_tensor({m * d}, rng);
    const TensorF wb = random_tensor({m, dL, d}, rng);
    const TensorF bb = random_tensor({m, dL}, rng);
    Tape t;
    const TensorF out = t.val(
        t.chunk_affine_rows(t.param(z), t.param(wb), t.param(bb)));
    REQUIRE(out.rows() == m);
    REQUIRE(out.cols() == dL);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t r = 0; r < dL; ++r) {
            double s = bb(i, r);
            for (std::size_t c = 0; c < d; ++c) s += wb(i, r, c) * z[i * d + c];
            CHECK(out(i, r) == doctest::Approx(s).epsilon(1e-12));
        }
}

TEST_CASE("tape: acyclicity nodes match finite differences on feasible input") {
    Rng rng(31);
    TensorF s = random_tensor({4, 4}, rng, 0.01, 0.2);  // S >= 0, small: feasible

    // with the norm subgradient enabled the full gradient is exact
    check_grads({s}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.hnorm_sq(v[0], 1.001, 1e-12, true);
    }, 5e-5);
    check_grads({s}, [](Tape& t, const std::vector<Tape::Var>& v) {
        return t.hlog_sq(v[0], 1.001);
    }, 5e-5);

    // default mode holds the scaling norm constant: it agrees with finite
    // differences away from the argmax column and differs from the exact
    // gradient by the same norm-term offset on every argmax-column entry
    {
        Tape t;
        auto v = t.param(s);
        t.backward(t.hnorm_sq(v, 1.001, 1e-12, false));
        const TensorF g_plain = t.grad(v);
        Tape t2;
        auto v2 = t2.param(s);
        t2.backward(t2.hnorm_sq(v2, 1.001, 1e-12, true));
        const TensorF g_full = t2.grad(v2);
        const std::size_t jstar = one_norm_argmax_col(s);
        double offset = g_full(0, jstar) - g_plain(0, jstar);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                const double diff = g_full(i, j) - g_plain(i, j);
                if (j == jstar)
                    CHECK(diff == doctest::Approx(offset).epsilon(1e-10));
                else
                    CHECK(diff == 0.0);
            }
    }

    // infeasible input surfaces at forward time
    TensorF bad = TensorF::zeros({2, 2});
    bad(0, 1) = 4.0;
    bad(1, 0) = 4.0;  // rho 4 > alpha
    Tape t;
    CHECK_THROWS_AS(t.hlog_sq(t.param(bad), 1.001), FeasibilityError);
}

TEST_CASE("tape: backward may run once and constants get no gradient") {
    Tape t;
    auto c = t.constant(TensorF::full({2}, 3.0));
    auto p = t.param(TensorF::full({2}, 2.0));
    auto r = t.sum(t.hadamard(c, p));
    t.backward(r);
    const TensorF gc = t.grad(c);
    for (std::size_t i = 0; i < gc.size(); ++i) CHECK(gc[i] == 0.0);
    const TensorF gp = t.grad(p);
    for (std::size_t i = 0; i < gp.size(); ++i) CHECK(gp[i] == 3.0);
    CHECK_THROWS_AS(t.backward(r), ContractError);
}
