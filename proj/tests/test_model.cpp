// Tests for the weight-trajectory hypernetwork: anchor grid formula against
// an independent reconstruction, parameter shapes and counts, end-to-end
// finite-difference gradients through encode/decode/predict, head algebra,
// the hidden-row collapse, and the checkpoint round trip.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "dycausal/model.hpp"
#include "dycausal/rng.hpp"
#include "dycausal/tape.hpp"
#include "dycausal/tensor.hpp"

using namespace dycausal;

namespace {

TensorF random_tensor(const std::vector<std::size_t>& shape, Rng& rng, double lo = -1.0,
                      double hi = 1.0) {
    TensorF t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Independent reconstruction of the documented anchor rule: grid points
// tau + 1 + j*S for j = 0 .. floor((T-K)/S) - 1, each capped at the last
// admissible window start T - K + 1, deduplicated in order, and completed
// with that terminal start.
std::vector<int> anchor_oracle(std::size_t T, std::size_t K, std::size_t S,
                               std::size_t tau) {
    const int last = static_cast<int>(T - K + 1);
    const int first = static_cast<int>(tau) + 1;
    const std::size_t n_base = (T - K) / S;
    std::vector<int> ts;
    for (std::size_t j = 0; j < n_base; ++j) {
        int t = first + static_cast<int>(j * S);
        if (t > last) t = last;
        if (ts.empty() || ts.back() != t) ts.push_back(t);
    }
    if (ts.empty() || ts.back() != last) ts.push_back(last);
    return ts;
}

std::size_t spec_size(const ParamSpec& s) {
    std::size_t n = 1;
    for (std::size_t v : s.shape) n *= v;
    return n;
}

}  // namespace

TEST_CASE("anchor grid matches the documented rule on 20 random shapes") {
    Rng rng(18);
    for (int trial = 0; trial < 20; ++trial) {
        ModelConfig cfg;
        cfg.d = 2 + rng.next_below(5);
        cfg.max_lag = rng.next_below(3);
        cfg.window = 2 + rng.next_below(8);
        cfg.stride = 1 + rng.next_below(6);
        const std::size_t T =
            cfg.window + cfg.max_lag + 1 + rng.next_below(60);  // keeps first <= last
        const std::vector<int> got = anchor_times(cfg, T);
        const std::vector<int> want = anchor_oracle(T, cfg.window, cfg.stride, cfg.max_lag);
        REQUIRE(got == want);
        // Structural properties: strictly increasing, starts after burn-in,
        // ends exactly at the last admissible window start, and the count is
        // floor((T-K)/S) + 1 up to clamp-induced deduplication.
        CHECK(got.front() == static_cast<int>(cfg.max_lag) + 1);
        CHECK(got.back() == static_cast<int>(T - cfg.window + 1));
        CHECK(std::is_sorted(got.begin(), got.end()));
        CHECK(std::adjacent_find(got.begin(), got.end()) == got.end());
        const std::size_t n_base = (T - cfg.window) / cfg.stride;
        CHECK(got.size() <= n_base + 1);
    }
    // The clamp-free case hits the formula count exactly: T=50, K=2, S=4,
    // tau=1 -> floor(48/4) = 12 grid points 2,6,...,46 plus the terminal 49.
    ModelConfig cfg;
    cfg.d = 3;
    cfg.max_lag = 1;
    cfg.window = 2;
    cfg.stride = 4;
    const std::vector<int> ts = anchor_times(cfg, 50);
    CHECK(ts.size() == 13);
    CHECK(ts.front() == 2);
    CHECK(ts[1] == 6);
    CHECK(ts.back() == 49);

    CHECK_THROWS_AS(anchor_times(cfg, 1), ContractError);  // record shorter than window
    ModelConfig tight = cfg;
    tight.max_lag = 2;
    tight.window = 5;
    // T = 5: last admissible start is 1, but burn-in needs t >= 3.
    CHECK_THROWS_AS(anchor_times(tight, 5), ContractError);
}

TEST_CASE("parameter specs: shapes, counts, and the decoder bank sizes") {
    ModelConfig cfg;
    cfg.d = 4;
    cfg.max_lag = 2;  // L = 3
    cfg.window = 5;
    cfg.channels = 6;
    cfg.head = Head::Nonlinear;
    cfg.hidden = 2;  // m
    cfg.mlp_hidden = 3;
    const auto specs = Model::param_specs(cfg);
    std::set<std::string> names;
    for (const auto& s : specs) {
        CHECK(names.insert(s.name).second);  // unique
        for (std::size_t v : s.shape) CHECK(v > 0);
    }
    const std::size_t d = 4, L = 3, m = 2, c = 6, H = 3;
    auto size_of = [&](const std::string& n) {
        for (const auto& s : specs)
            if (s.name == n) return spec_size(s);
        FAIL("missing spec ", n);
        return std::size_t{0};
    };
    // Decoder banks: stage 1 maps the embedding into one m-vector per cause
    // column (d*d*m*L weights), stage 2 maps it to the d*m x d*L matrix
    // (d*d*m*m*L weights).
    CHECK(size_of("dec.stage1.W") == d * d * m * L);
    CHECK(size_of("dec.stage2.W") == d * d * m * m * L);
    CHECK(size_of("enc.conv.kernel") == c * d * 3);  // width min(K, 3)
    CHECK(size_of("enc.affine.W") == d * m * c);
    CHECK(size_of("head.h1.W") == d * H * m);
    CHECK(size_of("head.h2.W") == d * H);
    // The linear head drops the four head banks.
    ModelConfig lin = cfg;
    lin.head = Head::Linear;
    lin.hidden = 1;
    CHECK(Model::param_specs(lin).size() == specs.size() - 4);

    // Values allocated per spec, deterministic init.
    Model a(cfg), b(cfg);
    Rng r1(5), r2(5);
    a.init_params(r1, 0.1);
    b.init_params(r2, 0.1);
    REQUIRE(a.params().size() == specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        REQUIRE(a.params()[i].size() == spec_size(specs[i]));
        for (std::size_t k = 0; k < a.params()[i].size(); ++k)
            CHECK(a.params()[i][k] == b.params()[i][k]);
    }
    CHECK_THROWS_AS(a.param("nope"), ContractError);
}

TEST_CASE("config validation rejects inconsistent shapes") {
    ModelConfig cfg;
    cfg.d = 3;
    cfg.window = 4;
    ModelConfig bad = cfg;
    bad.d = 0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = cfg;
    bad.stride = 0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = cfg;
    bad.head = Head::Linear;
    bad.hidden = 2;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = cfg;
    bad.head = Head::Ode;
    bad.max_lag = 0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    CHECK(cfg.conv_width() == 3);
    cfg.window = 2;
    CHECK(cfg.conv_width() == 2);
}

TEST_CASE("decoder output shape and the invocation counter") {
    ModelConfig cfg;
    cfg.d = 3;
    cfg.max_lag = 1;
    cfg.window = 4;
    cfg.channels = 5;
    Model m(cfg);
    Rng rng(77);
    m.init_params(rng, 0.1);
    TensorF window = random_tensor({2, 4, 3}, rng);
    CHECK(m.decoder_calls() == 0);
    Tape tape;
    auto pv = m.push_params(tape);
    m.decode_window(tape, pv, window);
    m.decode_window(tape, pv, window);
    Tape::Var w = m.decode_window(tape, pv, window);
    CHECK(m.decoder_calls() == 3);
    m.reset_decoder_calls();
    CHECK(m.decoder_calls() == 0);
    const TensorF& wv = tape.val(w);
    REQUIRE(wv.ndim() == 2);
    CHECK(wv.rows() == cfg.effect_rows());
    CHECK(wv.cols() == cfg.cause_dim());
    TensorF bad_window = random_tensor({2, 5, 3}, rng);
    CHECK_THROWS_AS(m.decode_window(tape, pv, bad_window), ContractError);
}

TEST_CASE("full pipeline gradients match central differences (all heads)") {
    Rng rng(404);
    for (Head head : {Head::Linear, Head::Nonlinear, Head::Ode}) {
        ModelConfig cfg;
        cfg.d = 3;
        cfg.max_lag = 1;
        cfg.window = 3;
        cfg.stride = 2;
        cfg.channels = 4;
        cfg.head = head;
        cfg.hidden = head == Head::Linear ? 1 : 2;
        cfg.mlp_hidden = 3;
        // Smooth activations so finite differences are valid everywhere.
        cfg.enc_act = Activation::Tanh;
        cfg.dec_act = Activation::Tanh;
        cfg.head_act = Activation::Sigmoid;
        Model m(cfg);
        m.init_params(rng, 0.3);
        const std::size_t NK = 4;
        TensorF window = random_tensor({2, cfg.window, cfg.d}, rng);
        TensorF causes = random_tensor({cfg.cause_dim(), NK}, rng);
        TensorF x_prev = random_tensor({cfg.d, NK}, rng);
        TensorF target = random_tensor({cfg.d, NK}, rng);

        auto loss_value = [&]() {
            Tape tape;
            auto pv = m.push_params(tape);
            Tape::Var w = m.decode_window(tape, pv, window);
            Tape::Var pred = m.predict(tape, pv, w, tape.constant(causes),
                                       tape.constant(x_prev));
            Tape::Var loss = tape.add(tape.sse(pred, tape.constant(target)),
                                      tape.scale(tape.l1(w), 0.37));
            return tape.scalar(loss);
        };

        Tape tape;
        auto pv = m.push_params(tape);
        Tape::Var w = m.decode_window(tape, pv, window);
        Tape::Var pred =
            m.predict(tape, pv, w, tape.constant(causes), tape.constant(x_prev));
        Tape::Var loss = tape.add(tape.sse(pred, tape.constant(target)),
                                  tape.scale(tape.l1(w), 0.37));
        tape.backward(loss);

        for (std::size_t pi = 0; pi < m.params().size(); ++pi) {
            const TensorF& g = tape.grad(pv[pi]);
            TensorF& v = m.params()[pi];
            // Probe a bounded number of coordinates per tensor to keep the
            // test quick while touching every parameter bank.
            const std::size_t step = std::max<std::size_t>(1, v.size() / 7);
            for (std::size_t k = 0; k < v.size(); k += step) {
                const double orig = v[k];
                const double h = 1e-5 * std::max(1.0, std::abs(orig));
                v[k] = orig + h;
                const double up = loss_value();
                v[k] = orig - h;
                const double dn = loss_value();
                v[k] = orig;
                const double fd = (up - dn) / (2.0 * h);
                CHECK(std::abs(g[k] - fd) <= 2e-4 * std::max(1.0, std::abs(fd)));
            }
        }
    }
}

TEST_CASE("ode head output equals the nonlinear head plus the previous step") {
    ModelConfig nl;
    nl.d = 3;
    nl.max_lag = 1;
    nl.window = 3;
    nl.channels = 4;
    nl.head = Head::Nonlinear;
    nl.hidden = 2;
    nl.mlp_hidden = 3;
    ModelConfig ode = nl;
    ode.head = Head::Ode;
    Model a(nl), b(ode);
    Rng r1(66), r2(66);
    a.init_params(r1, 0.2);
    b.init_params(r2, 0.2);
    Rng rng(9);
    TensorF window = random_tensor({2, 3, 3}, rng);
    TensorF causes = random_tensor({nl.cause_dim(), 5}, rng);
    TensorF x_prev = random_tensor({3, 5}, rng);

    Tape ta;
    auto pa = a.push_params(ta);
    Tape::Var wa = a.decode_window(ta, pa, window);
    Tape::Var ya = a.predict(ta, pa, wa, ta.constant(causes), ta.constant(x_prev));
    Tape tb;
    auto pb = b.push_params(tb);
    Tape::Var wb = b.decode_window(tb, pb, window);
    Tape::Var yb = b.predict(tb, pb, wb, tb.constant(causes), tb.constant(x_prev));

    const TensorF& va = ta.val(ya);
    const TensorF& vb = tb.val(yb);
    REQUIRE(va.size() == vb.size());
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 5; ++k)
            CHECK(vb(i, k) == doctest::Approx(va(i, k) + x_prev(i, k)).epsilon(1e-12));
}

TEST_CASE("effective adjacency collapses hidden rows by root sum of squares") {
    ModelConfig cfg;
    cfg.d = 2;
    cfg.max_lag = 1;
    cfg.window = 3;
    cfg.head = Head::Nonlinear;
    cfg.hidden = 2;
    Model m(cfg);
    Rng rng(3);
    TensorF w = random_tensor({4, 4}, rng, -2.0, 2.0);  // [d*m, d*L]
    CausalMatrix adj = m.effective_adjacency(w);
    REQUIRE(adj.d == 2);
    REQUIRE(adj.max_lag == 1);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t c = 0; c < 4; ++c) {
            const double want = std::sqrt(w(2 * i, c) * w(2 * i, c) +
                                          w(2 * i + 1, c) * w(2 * i + 1, c));
            CHECK(adj.weights(i, c) == doctest::Approx(want).epsilon(1e-12));
        }
    // hidden == 1 reduces to plain absolute value.
    ModelConfig lin;
    lin.d = 2;
    lin.max_lag = 1;
    lin.window = 3;
    Model ml(lin);
    TensorF w1 = random_tensor({2, 4}, rng, -2.0, 2.0);
    CausalMatrix a1 = ml.effective_adjacency(w1);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t c = 0; c < 4; ++c)
            CHECK(a1.weights(i, c) == doctest::Approx(std::abs(w1(i, c))).epsilon(1e-12));
    TensorF bad({3, 4});
    CHECK_THROWS_AS(m.effective_adjacency(bad), ContractError);
}

TEST_CASE("checkpoint json round trip is bit exact") {
    ModelConfig cfg;
    cfg.d = 3;
    cfg.max_lag = 2;
    cfg.window = 4;
    cfg.stride = 3;
    cfg.channels = 5;
    cfg.head = Head::Nonlinear;
    cfg.hidden = 2;
    cfg.mlp_hidden = 4;
    cfg.enc_act = Activation::Tanh;
    cfg.dec_act = Activation::Sigmoid;
    cfg.head_act = Activation::Identity;
    Model m(cfg);
    Rng rng(2718);
    m.init_params(rng, 0.7);
    const std::string text = model_to_json(m);
    Model back = model_from_json(text);
    CHECK(back.config().d == cfg.d);
    CHECK(back.config().max_lag == cfg.max_lag);
    CHECK(back.config().window == cfg.window);
    CHECK(back.config().stride == cfg.stride);
    CHECK(back.config().channels == cfg.channels);
    CHECK(back.config().head == cfg.head);
    CHECK(back.config().hidden == cfg.hidden);
    CHECK(back.config().mlp_hidden == cfg.mlp_hidden);
    CHECK(back.config().enc_act == cfg.enc_act);
    CHECK(back.config().dec_act == cfg.dec_act);
    CHECK(back.config().head_act == cfg.head_act);
    REQUIRE(back.params().size() == m.params().size());
    for (std::size_t i = 0; i < m.params().size(); ++i)
        for (std::size_t k = 0; k < m.params()[i].size(); ++k)
            CHECK(back.params()[i][k] == m.params()[i][k]);
    CHECK(model_to_json(back) == text);
}

TEST_CASE("model config json: defaults for missing fields, unknown fields error") {
    ModelConfig c = model_config_from_json(R"({"d": 4, "tau": 1})");
    CHECK(c.d == 4);
    CHECK(c.max_lag == 1);
    CHECK(c.window == 10);
    CHECK(c.stride == 5);
    CHECK(c.head == Head::Linear);
    CHECK(c.hidden == 1);
    CHECK(c.channels == 16);
    CHECK(c.enc_act == Activation::Relu);
    // Nonlinear default for hidden kicks in when the head says so.
    ModelConfig n = model_config_from_json(R"({"d": 4, "tau": 1, "head": "nonlinear"})");
    CHECK(n.hidden == 10);
    CHECK_THROWS_AS(model_config_from_json(R"({"d": 4, "taus": 1})"), ContractError);
    CHECK_THROWS_AS(model_config_from_json(R"({"d": 4, "head": "cubic"})"), ContractError);
    CHECK_THROWS_AS(model_config_from_json(R"({"d": 4, "dec_act": "step"})"), ContractError);
    // Round trip through the serializer preserves every field.
    ModelConfig cfg;
    cfg.d = 5;
    cfg.max_lag = 2;
    cfg.head = Head::Ode;
    cfg.hidden = 3;
    cfg.dec_act = Activation::Tanh;
    ModelConfig back = model_config_from_json(model_config_to_json(cfg));
    CHECK(back.d == cfg.d);
    CHECK(back.head == Head::Ode);
    CHECK(back.hidden == 3);
    CHECK(back.dec_act == Activation::Tanh);
}
