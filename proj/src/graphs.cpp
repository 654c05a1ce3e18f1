#include "dycausal/graphs.hpp"

#include <cmath>
#include <json.hpp>

namespace dycausal {

using nlohmann::ordered_json;

TensorF CausalMatrix::instantaneous() const {
    TensorF out({d, d});
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) out(i, j) = weights(i, j);
    return out;
}

std::size_t BinaryGraph::count_edges() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < edges.size(); ++i)
        if (edges[i] != 0.0) ++n;
    return n;
}

TensorF BinaryGraph::instantaneous() const {
    TensorF out({d, d});
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) out(i, j) = edges(i, j);
    return out;
}

const CausalMatrix& DynGraphTrajectory::at_time(int t) const {
    if (steps.empty()) throw ContractError("DynGraphTrajectory: empty trajectory");
    int idx = t - start_t;
    if (idx < 0) idx = 0;
    if (idx >= static_cast<int>(steps.size())) idx = static_cast<int>(steps.size()) - 1;
    return steps[static_cast<std::size_t>(idx)];
}

BinaryGraph gen_er_ground_truth(std::size_t d, std::size_t max_lag,
                                double edges_per_var, Rng& rng) {
    if (d < 2) throw ContractError("gen_er_ground_truth: d must be at least 2");
    const std::size_t want = static_cast<std::size_t>(std::llround(edges_per_var * d));
    const std::size_t possible = d * (d - 1) / 2;
    if (want > possible)
        throw ContractError("gen_er_ground_truth: requested instantaneous edge count "
                            "exceeds d*(d-1)/2");
    BinaryGraph g(d, max_lag);

    // Uniform topological order; then `want` distinct pairs sampled uniformly
    // among the order-respecting ones via a partial shuffle of pair indices.
    std::vector<std::size_t> order = rng.permutation(d);
    std::vector<std::uint32_t> pairs(possible);
    std::size_t next = 0;
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a + 1; b < d; ++b)
            pairs[next++] = static_cast<std::uint32_t>(a * d + b);
    for (std::size_t i = 0; i < want; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_below(possible - i));
        std::swap(pairs[i], pairs[j]);
        const std::size_t a = pairs[i] / d;  // earlier in topological order
        const std::size_t b = pairs[i] % d;
        g.set(order[b], order[a], 0, true);  // cause order[a] -> effect order[b]
    }

    const double p_lag = edges_per_var / static_cast<double>(d);
    for (std::size_t lag = 1; lag <= max_lag; ++lag)
        for (std::size_t effect = 0; effect < d; ++effect)
            for (std::size_t cause = 0; cause < d; ++cause)
                if (rng.uniform() < p_lag) g.set(effect, cause, lag, true);
    return g;
}

CausalMatrix assign_weights(const BinaryGraph& g, double lag_decay, Rng& rng) {
    if (lag_decay <= 0.0) throw ContractError("assign_weights: lag_decay must be positive");
    CausalMatrix m(g.d, g.max_lag);
    for (std::size_t lag = 0; lag < g.blocks(); ++lag) {
        const double damp = std::pow(1.0 / lag_decay, static_cast<double>(lag));
        for (std::size_t effect = 0; effect < g.d; ++effect)
            for (std::size_t cause = 0; cause < g.d; ++cause) {
                if (!g.has(effect, cause, lag)) continue;
                const double mag = rng.uniform(0.3, 0.5);
                const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
                m.set(effect, cause, lag, sign * mag * damp);
            }
    }
    return m;
}

bool is_dag(const TensorF& instantaneous) {
    if (instantaneous.ndim() != 2 || instantaneous.rows() != instantaneous.cols())
        throw ContractError("is_dag: square matrix required");
    const std::size_t d = instantaneous.rows();
    // Kahn: peel nodes whose causes have all been removed.
    std::vector<std::size_t> n_causes(d, 0);
    std::vector<std::vector<std::size_t>> effects_of(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            if (instantaneous(i, j) != 0.0) {
                ++n_causes[i];
                effects_of[j].push_back(i);
            }
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < d; ++i)
        if (n_causes[i] == 0) ready.push_back(i);
    std::size_t seen = 0;
    while (!ready.empty()) {
        const std::size_t v = ready.back();
        ready.pop_back();
        ++seen;
        for (std::size_t e : effects_of[v])
            if (--n_causes[e] == 0) ready.push_back(e);
    }
    return seen == d;
}

bool is_dag(const CausalMatrix& m) { return is_dag(m.instantaneous()); }
bool is_dag(const BinaryGraph& g) { return is_dag(g.instantaneous()); }

BinaryGraph prune(const CausalMatrix& m, double delta) {
    BinaryGraph g(m.d, m.max_lag);
    for (std::size_t lag = 0; lag < m.blocks(); ++lag)
        for (std::size_t effect = 0; effect < m.d; ++effect)
            for (std::size_t cause = 0; cause < m.d; ++cause) {
                if (lag == 0 && effect == cause) continue;
                if (std::abs(m.at(effect, cause, lag)) > delta)
                    g.set(effect, cause, lag, true);
            }
    return g;
}

TensorF to_cause_major(const CausalMatrix& m) {
    TensorF out({m.d * m.blocks(), m.d});
    for (std::size_t i = 0; i < m.d; ++i)
        for (std::size_t c = 0; c < m.d * m.blocks(); ++c) out(c, i) = m.weights(i, c);
    return out;
}

CausalMatrix from_cause_major(std::size_t d, std::size_t max_lag, const TensorF& cm) {
    if (cm.ndim() != 2 || cm.rows() != d * (max_lag + 1) || cm.cols() != d)
        throw ContractError("from_cause_major: shape mismatch");
    CausalMatrix m(d, max_lag);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t c = 0; c < cm.rows(); ++c) m.weights(i, c) = cm(c, i);
    return m;
}

std::string trajectory_to_json(const DynGraphTrajectory& tr) {
    if (tr.steps.empty()) throw ContractError("trajectory_to_json: empty trajectory");
    const std::size_t d = tr.steps.front().d;
    const std::size_t tau = tr.steps.front().max_lag;
    ordered_json j;
    j["d"] = d;
    j["tau"] = tau;
    j["layout"] = "effect_major";
    j["time_steps"] = ordered_json::array();
    int t = tr.start_t;
    for (const CausalMatrix& m : tr.steps) {
        if (m.d != d || m.max_lag != tau)
            throw ContractError("trajectory_to_json: inconsistent step shapes");
        ordered_json step;
        step["t"] = t++;
        ordered_json rows = ordered_json::array();
        for (std::size_t i = 0; i < d; ++i) {
            ordered_json row = ordered_json::array();
            for (std::size_t c = 0; c < m.weights.cols(); ++c) row.push_back(m.weights(i, c));
            rows.push_back(std::move(row));
        }
        step["weights"] = std::move(rows);
        j["time_steps"].push_back(std::move(step));
    }
    return j.dump();
}

DynGraphTrajectory trajectory_from_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    const std::size_t d = j.at("d").get<std::size_t>();
    const std::size_t tau = j.at("tau").get<std::size_t>();
    if (j.at("layout").get<std::string>() != "effect_major")
        throw ContractError("trajectory_from_json: unknown layout");
    DynGraphTrajectory tr;
    const auto& steps = j.at("time_steps");
    if (steps.empty()) throw ContractError("trajectory_from_json: no time steps");
    bool first = true;
    int expect_t = 0;
    for (const auto& step : steps) {
        const int t = step.at("t").get<int>();
        if (first) {
            tr.start_t = t;
            expect_t = t;
            first = false;
        }
        if (t != expect_t++)
            throw ContractError("trajectory_from_json: time steps must be consecutive");
        CausalMatrix m(d, tau);
        const auto& rows = step.at("weights");
        if (rows.size() != d) throw ContractError("trajectory_from_json: row count mismatch");
        for (std::size_t i = 0; i < d; ++i) {
            const auto& row = rows[i];
            if (row.size() != d * (tau + 1))
                throw ContractError("trajectory_from_json: column count mismatch");
            for (std::size_t c = 0; c < row.size(); ++c)
                m.weights(i, c) = row[c].get<double>();
        }
        tr.steps.push_back(std::move(m));
    }
    return tr;
}

DynGraphTrajectory to_weighted(const std::vector<BinaryGraph>& steps, int start_t) {
    DynGraphTrajectory tr;
    tr.start_t = start_t;
    for (const BinaryGraph& g : steps) {
        CausalMatrix m(g.d, g.max_lag);
        m.weights = g.edges;
        tr.steps.push_back(std::move(m));
    }
    return tr;
}

}  // namespace dycausal
