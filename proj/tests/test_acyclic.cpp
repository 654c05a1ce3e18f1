// Acyclicity-penalty tests. The zero-on-DAG / positive-on-cycle theorem is
// checked against an independent depth-first-search cycle detector on random
// graphs; scale invariance and the frozen two-node spot values pin the
// numerics; the stability bench's overflow/vanish flag semantics are
// exercised on matrices constructed to trip them.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dycausal/acyclic.hpp"
#include "dycausal/rng.hpp"

using namespace dycausal;

namespace {

// Independent oracle: does the support of W contain a directed cycle?
bool has_cycle_dfs(const TensorF& w) {
    const std::size_t d = w.rows();
    // color: 0 white, 1 on stack, 2 done
    std::vector<int> color(d, 0);
    std::vector<std::size_t> stack, next_child(d, 0);
    for (std::size_t s = 0; s < d; ++s) {
        if (color[s] != 0) continue;
        stack = {s};
        color[s] = 1;
        next_child.assign(d, 0);
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            bool descended = false;
            for (std::size_t& v = next_child[u]; v < d; ++v) {
                if (w(u, v) == 0.0) continue;  // edge v -> u is w(u, v); walk
                // any orientation consistently: cycles are orientation-free
                if (color[v] == 1) return true;
                if (color[v] == 0) {
                    color[v] = 1;
                    stack.push_back(v);
                    ++v;
                    descended = true;
                    break;
                }
            }
            if (!descended) {
                color[u] = 2;
                stack.pop_back();
            }
        }
    }
    return false;
}

// Random DAG weights: strictly lower-triangular under a random permutation.
TensorF random_dag(std::size_t d, double density, Rng& rng) {
    TensorF w = TensorF::zeros({d, d});
    const auto order = rng.permutation(d);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < a; ++b)
            if (rng.uniform() < density)
                w(order[a], order[b]) = rng.uniform(-2.0, 2.0);
    return w;
}

// Random matrix guaranteed to contain at least one directed cycle.
TensorF random_cyclic(std::size_t d, Rng& rng) {
    TensorF w = random_dag(d, 0.3, rng);
    // plant a cycle of random length >= 2
    const std::size_t len = 2 + rng.next_below(d - 1);
    const auto nodes = rng.permutation(d);
    for (std::size_t i = 0; i < len; ++i) {
        const std::size_t from = nodes[i], to = nodes[(i + 1) % len];
        double v = rng.uniform(0.1, 2.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        w(to, from) = v;
    }
    return w;
}

}  // namespace

TEST_CASE("frozen spot values on the two-node cycle with weight 0.5") {
    TensorF w = TensorF::zeros({2, 2});
    w(0, 1) = 0.5;
    w(1, 0) = 0.5;
    PenaltyOptions opt;  // alpha 1.001

    CHECK(std::abs(eval_penalty(PenaltyKind::NormScaledLog, w, opt).value -
                   6.21611) <= 1e-4);
    CHECK(std::abs(eval_penalty(PenaltyKind::Exp, w, opt).value - 0.0628261) <=
          1e-6);
    CHECK(std::abs(eval_penalty(PenaltyKind::Poly, w, opt).value - 0.03125) <=
          1e-9);
    CHECK(std::abs(eval_penalty(PenaltyKind::Log, w, opt).value - 0.064407) <=
          1e-5);
    // rho(S) with S = 0.25 on the 2-cycle is 0.25
    CHECK(std::abs(eval_penalty(PenaltyKind::SpectralRadius, w, opt).value -
                   0.25) <= 1e-6);
}

TEST_CASE("zero on DAGs with exactly zero gradient, positive on cycles") {
    Rng rng(101);
    PenaltyOptions opt;
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t d = 2 + rng.next_below(9);
        const TensorF dag = random_dag(d, rng.uniform(0.1, 0.6), rng);
        REQUIRE(!has_cycle_dfs(dag));
        const PenaltyEval e = eval_penalty(PenaltyKind::NormScaledLog, dag, opt);
        CHECK(std::abs(e.value) <= 1e-10);
        for (std::size_t i = 0; i < e.grad.size(); ++i) CHECK(e.grad[i] == 0.0);

        const TensorF cyc = random_cyclic(d, rng);
        REQUIRE(has_cycle_dfs(cyc));
        const PenaltyEval c = eval_penalty(PenaltyKind::NormScaledLog, cyc, opt);
        CHECK(c.value >= 1e-6);
        double gn = 0.0;
        for (std::size_t i = 0; i < c.grad.size(); ++i) gn += c.grad[i] * c.grad[i];
        CHECK(std::sqrt(gn) > 0.0);
    }
}

TEST_CASE("norm-scaled penalty is invariant under rescaling W -> kW") {
    Rng rng(202);
    PenaltyOptions opt;
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t d = 2 + rng.next_below(7);
        TensorF w = random_cyclic(d, rng);
        // keep |W.W|_1 far from the eps_zero floor so the k = 1e-6 rescale
        // (which shrinks the 1-norm by 1e-12) stays in the nonzero branch
        const double n1 = one_norm_induced(hadamard(w, w));
        for (std::size_t i = 0; i < w.size(); ++i) w[i] *= 10.0 / std::sqrt(n1);
        const double base = eval_penalty(PenaltyKind::NormScaledLog, w, opt).value;
        for (double k : {1e-6, 1e-3, 1e3, 1e6}) {
            TensorF kw = w;
            for (std::size_t i = 0; i < kw.size(); ++i) kw[i] *= k;
            const double scaled =
                eval_penalty(PenaltyKind::NormScaledLog, kw, opt).value;
            CHECK(std::abs(scaled - base) <=
                  1e-9 * std::max(1.0, std::abs(base)));
        }
    }
}

TEST_CASE("value-only helpers agree with eval_penalty") {
    Rng rng(303);
    const TensorF w = random_cyclic(5, rng);
    PenaltyOptions opt;
    CHECK(h_norm_value(w, opt) ==
          doctest::Approx(eval_penalty(PenaltyKind::NormScaledLog, w, opt).value)
              .epsilon(1e-14));
    TensorF small = w;
    for (std::size_t i = 0; i < small.size(); ++i) small[i] *= 0.05;
    CHECK(h_log_value(small, opt) ==
          doctest::Approx(eval_penalty(PenaltyKind::Log, small, opt).value)
              .epsilon(1e-12));
    // infeasible input: helper throws, eval_penalty flags instead
    TensorF big = TensorF::zeros({2, 2});
    big(0, 1) = 2.0;
    big(1, 0) = 2.0;
    CHECK_THROWS_AS(h_log_value(big, opt), FeasibilityError);
    const PenaltyEval e = eval_penalty(PenaltyKind::Log, big, opt);
    CHECK(!e.feasible);
    CHECK(e.overflow);
    CHECK(std::isinf(e.value));
}

TEST_CASE("exact-zero matrix short circuit") {
    PenaltyOptions opt;
    const TensorF z = TensorF::zeros({4, 4});
    const PenaltyEval e = eval_penalty(PenaltyKind::NormScaledLog, z, opt);
    CHECK(e.value == 0.0);
    for (std::size_t i = 0; i < e.grad.size(); ++i) CHECK(e.grad[i] == 0.0);
    // entries below eps_zero in 1-norm read as zero too
    TensorF tiny = TensorF::zeros({4, 4});
    tiny(1, 0) = 1e-14;
    const PenaltyEval t = eval_penalty(PenaltyKind::NormScaledLog, tiny, opt);
    CHECK(t.value == 0.0);
    CHECK(t.vanished);
}

TEST_CASE("stability flags: overflow and vanish semantics") {
    PenaltyOptions opt;

    // big uniform matrix overflows Exp
    Rng rng(404);
    TensorF big({20, 20});
    for (std::size_t i = 0; i < big.size(); ++i) big[i] = rng.uniform() * 100.0;
    const PenaltyEval e = eval_penalty(PenaltyKind::Exp, big, opt);
    CHECK(e.overflow);

    // h_norm on the same matrix stays finite and flag-free
    const PenaltyEval n = eval_penalty(PenaltyKind::NormScaledLog, big, opt);
    CHECK(!n.overflow);
    CHECK(!n.vanished);
    CHECK(std::isfinite(n.value));

    // vanished: Exp of a microscopic cycle is ~0 with ~0 gradient; weights
    // 1e-5 put |S|_1 at 1e-10, still above the h_norm eps_zero floor
    TensorF micro = TensorF::zeros({20, 20});
    micro(0, 1) = 1e-5;
    micro(1, 0) = 1e-5;
    const PenaltyEval v = eval_penalty(PenaltyKind::Exp, micro, opt);
    CHECK(v.vanished);
    // while h_norm still reports a big value on the same input
    const PenaltyEval nv = eval_penalty(PenaltyKind::NormScaledLog, micro, opt);
    CHECK(nv.value > 1e-6);
    CHECK(!nv.vanished);

    // at or below the eps_zero floor the matrix reads as exactly acyclic
    TensorF sub = TensorF::zeros({4, 4});
    sub(0, 1) = 1e-8;
    sub(1, 0) = 1e-8;  // S entries 1e-16
    const PenaltyEval z = eval_penalty(PenaltyKind::NormScaledLog, sub, opt);
    CHECK(z.value == 0.0);
    CHECK(z.vanished);
}

TEST_CASE("bench: pinned CSV header, row order, and flag columns") {
    const std::vector<PenaltyKind> ps = {PenaltyKind::NormScaledLog,
                                         PenaltyKind::Exp};
    std::vector<BenchPoint> pts;
    pts.push_back({BenchFamily::UniformRandom, 10.0, 6, 42});
    pts.push_back({BenchFamily::SignedCycle, 6.0, 6, 42});
    const auto rows = run_stability_bench(ps, pts);
    REQUIRE(rows.size() == 4);
    CHECK(std::string(penalty_name(rows[0].penalty)) == "h_norm");
    CHECK(std::string(bench_family_name(rows[0].family)) == "uniform_random");
    CHECK(std::string(bench_family_name(rows[1].family)) == "signed_cycle");
    CHECK(std::string(penalty_name(rows[2].penalty)) == "h_exp");

    const std::string csv = bench_csv(rows);
    CHECK(csv.rfind("penalty,family,param,value,grad_norm,runtime_ns,overflow,"
                    "vanished\n", 0) == 0);
    // one header + one line per row
    std::size_t lines = 0;
    for (char c : csv)
        if (c == '\n') ++lines;
    CHECK(lines == 5);
}

TEST_CASE("bench: signed-cycle family keeps h_norm alive as d grows") {
    std::vector<BenchPoint> pts;
    for (std::size_t d = 5; d <= 50; d += 5)
        pts.push_back({BenchFamily::SignedCycle, static_cast<double>(d), d, 0});
    const auto rows = run_stability_bench({PenaltyKind::NormScaledLog}, pts);
    for (const auto& r : rows) {
        CHECK(r.value > 0.0);
        CHECK(r.grad_norm > 1e-12);
        CHECK(!r.overflow);
        CHECK(!r.vanished);
    }
}

TEST_CASE("penalty and family names are pinned") {
    CHECK(std::string(penalty_name(PenaltyKind::NormScaledLog)) == "h_norm");
    CHECK(std::string(penalty_name(PenaltyKind::Log)) == "h_log");
    CHECK(std::string(penalty_name(PenaltyKind::Exp)) == "h_exp");
    CHECK(std::string(penalty_name(PenaltyKind::Poly)) == "h_poly");
    CHECK(std::string(penalty_name(PenaltyKind::SpectralRadius)) == "h_rho");
    CHECK(std::string(bench_family_name(BenchFamily::UniformRandom)) ==
          "uniform_random");
    CHECK(std::string(bench_family_name(BenchFamily::SignedCycle)) ==
          "signed_cycle");
}
