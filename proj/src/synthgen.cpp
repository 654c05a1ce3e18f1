#include "dycausal/synthgen.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <json.hpp>
#include <numbers>
#include <sstream>

namespace dycausal {

using nlohmann::ordered_json;

namespace {

// Topological order of the instantaneous block (indices into 0..d-1, causes
// before effects). The generators require a DAG here.
std::vector<std::size_t> topo_order(const CausalMatrix& m) {
    const std::size_t d = m.d;
    std::vector<std::size_t> n_causes(d, 0);
    std::vector<std::vector<std::size_t>> effects_of(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            if (m.at(i, j, 0) != 0.0) {
                ++n_causes[i];
                effects_of[j].push_back(i);
            }
    std::vector<std::size_t> order;
    order.reserve(d);
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < d; ++i)
        if (n_causes[i] == 0) ready.push_back(i);
    while (!ready.empty()) {
        const std::size_t v = ready.back();
        ready.pop_back();
        order.push_back(v);
        for (std::size_t e : effects_of[v])
            if (--n_causes[e] == 0) ready.push_back(e);
    }
    if (order.size() != d)
        throw ContractError("synthgen: instantaneous structure must be a DAG");
    return order;
}

Dataset make_dataset(std::size_t N, std::size_t T, std::size_t d, std::size_t max_lag,
                     const char* generator, std::uint64_t seed, double noise) {
    if (N == 0 || T == 0 || d == 0)
        throw ContractError("synthgen: N, T, d must be positive");
    if (T <= max_lag) throw ContractError("synthgen: T must exceed max_lag");
    Dataset ds;
    ds.N = N;
    ds.T = T;
    ds.d = d;
    ds.max_lag = max_lag;
    ds.generator = generator;
    ds.seed = seed;
    ds.noise = noise;
    ds.data = TensorF({N, T, d});
    return ds;
}

// Shared linear-SEM core; truth_at(t) supplies the matrix generating step t.
template <typename TruthAt>
void run_linear(Dataset& ds, TruthAt truth_at) {
    const std::size_t d = ds.d, T = ds.T;
    const std::size_t tau = ds.max_lag;
    std::vector<double> eps(d);
    for (std::size_t n = 0; n < ds.N; ++n) {
        Rng rng = Rng::split(ds.seed, n);
        for (int t = 1; t <= static_cast<int>(T); ++t) {
            for (std::size_t j = 0; j < d; ++j) eps[j] = rng.normal(0.0, ds.noise);
            if (t <= static_cast<int>(tau)) {  // burn-in: noise only
                for (std::size_t j = 0; j < d; ++j) ds.x(n, t, j) = eps[j];
                continue;
            }
            const CausalMatrix& w = truth_at(t);
            const std::vector<std::size_t> order = topo_order(w);
            for (std::size_t oi = 0; oi < d; ++oi) {
                const std::size_t i = order[oi];
                double v = eps[i];
                for (std::size_t j = 0; j < d; ++j) {
                    const double wij = w.at(i, j, 0);
                    if (wij != 0.0) v += wij * ds.x(n, t, j);
                }
                for (std::size_t p = 1; p <= tau; ++p)
                    for (std::size_t j = 0; j < d; ++j) {
                        const double wij = w.at(i, j, p);
                        if (wij != 0.0) v += wij * ds.x(n, t - static_cast<int>(p), j);
                    }
                ds.x(n, t, i) = v;
            }
        }
    }
}

// Per-variable one-hidden-layer net for the nonlinear SEM.
struct VarMlp {
    std::size_t n_in = 0;
    std::vector<double> u;  // [100 x n_in]
    std::vector<double> b;  // [100]
    std::vector<double> v;  // [100]
    double c = 0.0;

    double eval(const std::vector<double>& z) const {
        double out = c;
        for (std::size_t h = 0; h < b.size(); ++h) {
            double a = b[h];
            for (std::size_t k = 0; k < n_in; ++k) a += u[h * n_in + k] * z[k];
            out += v[h] * (1.0 / (1.0 + std::exp(-a)));
        }
        return out;
    }
};

constexpr std::size_t kMlpHidden = 100;

double draw_pm(Rng& rng) {  // uniform magnitude [0.5, 2], fair sign
    const double mag = rng.uniform(0.5, 2.0);
    return rng.uniform() < 0.5 ? -mag : mag;
}

// Parent slots of variable i: lag-major, cause-minor; deterministic.
std::vector<std::pair<std::size_t, std::size_t>> parent_slots(const BinaryGraph& g,
                                                              std::size_t i) {
    std::vector<std::pair<std::size_t, std::size_t>> slots;  // (lag, cause)
    for (std::size_t p = 0; p < g.blocks(); ++p)
        for (std::size_t j = 0; j < g.d; ++j)
            if (g.has(i, j, p)) slots.emplace_back(p, j);
    return slots;
}

std::vector<VarMlp> draw_mlps(const BinaryGraph& g, std::uint64_t seed) {
    Rng rng = Rng::split(seed, kStreamMlpParams);
    std::vector<VarMlp> nets(g.d);
    for (std::size_t i = 0; i < g.d; ++i) {
        const std::size_t n_in = parent_slots(g, i).size();
        VarMlp& net = nets[i];
        net.n_in = n_in;
        if (n_in == 0) continue;
        net.u.resize(kMlpHidden * n_in);
        net.b.resize(kMlpHidden);
        net.v.resize(kMlpHidden);
        for (auto& x : net.u) x = draw_pm(rng);
        for (auto& x : net.b) x = draw_pm(rng);
        for (auto& x : net.v) x = draw_pm(rng);
        net.c = draw_pm(rng);
    }
    return nets;
}

BinaryGraph support_of(const CausalMatrix& m) {
    BinaryGraph g(m.d, m.max_lag);
    for (std::size_t i = 0; i < m.weights.size(); ++i)
        g.edges[i] = m.weights[i] != 0.0 ? 1.0 : 0.0;
    return g;
}

// Shared nonlinear-SEM core; weight_at(t,i,j,p) scales parent inputs (1.0
// for the static variant).
template <typename WeightAt>
void run_nonlinear(Dataset& ds, const BinaryGraph& g, const std::vector<VarMlp>& nets,
                   WeightAt weight_at) {
    const std::size_t d = ds.d, T = ds.T, tau = ds.max_lag;
    CausalMatrix support(g.d, g.max_lag);
    support.weights = g.edges;
    const std::vector<std::size_t> order = topo_order(support);
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> slots(d);
    for (std::size_t i = 0; i < d; ++i) slots[i] = parent_slots(g, i);

    std::vector<double> eps(d);
    std::vector<double> z;
    for (std::size_t n = 0; n < ds.N; ++n) {
        Rng rng = Rng::split(ds.seed, n);
        for (int t = 1; t <= static_cast<int>(T); ++t) {
            for (std::size_t j = 0; j < d; ++j) eps[j] = rng.normal(0.0, ds.noise);
            if (t <= static_cast<int>(tau)) {
                for (std::size_t j = 0; j < d; ++j) ds.x(n, t, j) = eps[j];
                continue;
            }
            for (std::size_t oi = 0; oi < d; ++oi) {
                const std::size_t i = order[oi];
                if (slots[i].empty()) {
                    ds.x(n, t, i) = eps[i];
                    continue;
                }
                z.resize(slots[i].size());
                for (std::size_t k = 0; k < slots[i].size(); ++k) {
                    const auto [p, j] = slots[i][k];
                    z[k] = weight_at(t, i, j, p) * ds.x(n, t - static_cast<int>(p), j);
                }
                ds.x(n, t, i) = nets[i].eval(z) + eps[i];
            }
        }
    }
}

}  // namespace

DynWeightSchedule make_schedule(const CausalMatrix& base, Rng& rng, double period,
                                double intensity) {
    if (period < 0.0 || (period > 0.0 && period < 1.0))
        throw ContractError("make_schedule: period must be 0 (auto) or >= 1");
    if (intensity < 1.0) throw ContractError("make_schedule: intensity must be >= 1");
    DynWeightSchedule s;
    s.period = period;
    s.intensity = intensity;
    s.selector = TensorF(base.weights.shape());
    for (std::size_t i = 0; i < s.selector.size(); ++i) s.selector[i] = rng.uniform();
    return s;
}

CausalMatrix schedule_at(const CausalMatrix& base, const DynWeightSchedule& s, int t,
                         std::size_t T) {
    if (!s.selector.same_shape(base.weights))
        throw ContractError("schedule_at: selector shape mismatch");
    const double period = s.period > 0.0 ? s.period : static_cast<double>(T);
    const double phase =
        (static_cast<double>(t) / period) * (std::numbers::pi / s.intensity);
    const double c = std::cos(phase), sn = std::sin(phase);
    CausalMatrix out(base.d, base.max_lag);
    for (std::size_t i = 0; i < base.weights.size(); ++i)
        out.weights[i] = base.weights[i] * (s.selector[i] < 0.5 ? c : sn);
    return out;
}

Dataset gen_linear_sem(const CausalMatrix& w, std::size_t N, std::size_t T, double noise,
                       std::uint64_t seed) {
    Dataset ds = make_dataset(N, T, w.d, w.max_lag, "linear", seed, noise);
    ds.truth.start_t = 1;
    ds.truth.steps = {w};
    run_linear(ds, [&](int) -> const CausalMatrix& { return w; });
    return ds;
}

Dataset gen_linear_sem_dyn(const CausalMatrix& base, const DynWeightSchedule& sched,
                           std::size_t N, std::size_t T, double noise,
                           std::uint64_t seed) {
    Dataset ds = make_dataset(N, T, base.d, base.max_lag, "dynamic_linear", seed, noise);
    ds.truth.start_t = 1;
    ds.truth.steps.reserve(T);
    for (int t = 1; t <= static_cast<int>(T); ++t)
        ds.truth.steps.push_back(schedule_at(base, sched, t, T));
    run_linear(ds, [&](int t) -> const CausalMatrix& {
        return ds.truth.steps[static_cast<std::size_t>(t - 1)];
    });
    return ds;
}

Dataset gen_nonlinear_sem(const BinaryGraph& g, std::size_t N, std::size_t T,
                          double noise, std::uint64_t seed) {
    Dataset ds = make_dataset(N, T, g.d, g.max_lag, "nonlinear", seed, noise);
    ds.truth.start_t = 1;
    CausalMatrix m(g.d, g.max_lag);
    m.weights = g.edges;
    ds.truth.steps = {m};
    const std::vector<VarMlp> nets = draw_mlps(g, seed);
    run_nonlinear(ds, g, nets,
                  [](int, std::size_t, std::size_t, std::size_t) { return 1.0; });
    return ds;
}

Dataset gen_nonlinear_sem_dyn(const CausalMatrix& base, const DynWeightSchedule& sched,
                              std::size_t N, std::size_t T, double noise,
                              std::uint64_t seed) {
    Dataset ds =
        make_dataset(N, T, base.d, base.max_lag, "dynamic_nonlinear", seed, noise);
    ds.truth.start_t = 1;
    ds.truth.steps.reserve(T);
    for (int t = 1; t <= static_cast<int>(T); ++t)
        ds.truth.steps.push_back(schedule_at(base, sched, t, T));
    const BinaryGraph g = support_of(base);
    const std::vector<VarMlp> nets = draw_mlps(g, seed);
    run_nonlinear(ds, g, nets, [&](int t, std::size_t i, std::size_t j, std::size_t p) {
        return ds.truth.steps[static_cast<std::size_t>(t - 1)].at(i, j, p);
    });
    return ds;
}

Dataset gen_lorenz96(std::size_t d, std::size_t N, std::size_t T, double forcing,
                     double dt, std::uint64_t seed) {
    if (d < 4) throw ContractError("gen_lorenz96: d must be at least 4");
    if (dt <= 0.0) throw ContractError("gen_lorenz96: dt must be positive");
    const double dw_std = std::sqrt(0.05);
    Dataset ds = make_dataset(N, T, d, 1, "lorenz96", seed, dw_std);

    BinaryGraph g(d, 1);
    for (std::size_t i = 0; i < d; ++i) {
        g.set(i, (i + d - 2) % d, 1, true);
        g.set(i, (i + d - 1) % d, 1, true);
        g.set(i, i, 1, true);
        g.set(i, (i + 1) % d, 1, true);
    }
    CausalMatrix m(d, 1);
    m.weights = g.edges;
    ds.truth.start_t = 1;
    ds.truth.steps = {m};

    for (std::size_t n = 0; n < N; ++n) {
        Rng rng = Rng::split(seed, n);
        for (std::size_t j = 0; j < d; ++j) ds.x(n, 1, j) = rng.normal(0.0, 0.1);
        for (int t = 2; t <= static_cast<int>(T); ++t) {
            for (std::size_t j = 0; j < d; ++j) {
                const double xm2 = ds.x(n, t - 1, (j + d - 2) % d);
                const double xm1 = ds.x(n, t - 1, (j + d - 1) % d);
                const double xp1 = ds.x(n, t - 1, (j + 1) % d);
                const double xj = ds.x(n, t - 1, j);
                const double drift = (xp1 - xm2) * xm1 - xj + forcing;
                const double dw = rng.normal(0.0, dw_std);
                const double nx = xj + dt * (drift + dw);
                if (!(std::abs(nx) <= 1e6)) {
                    char buf[128];
                    std::snprintf(buf, sizeof(buf),
                                  "gen_lorenz96: trajectory diverged (entry beyond 1e6); "
                                  "reduce dt (currently %g)",
                                  dt);
                    throw DivergenceError(buf);
                }
                ds.x(n, t, j) = nx;
            }
        }
    }
    return ds;
}

std::string dataset_csv(const Dataset& ds) {
    std::string out = "series,t";
    char buf[64];
    for (std::size_t j = 0; j < ds.d; ++j) {
        std::snprintf(buf, sizeof(buf), ",x%zu", j);
        out += buf;
    }
    out += "\n";
    for (std::size_t n = 0; n < ds.N; ++n)
        for (int t = 1; t <= static_cast<int>(ds.T); ++t) {
            std::snprintf(buf, sizeof(buf), "%zu,%d", n, t);
            out += buf;
            for (std::size_t j = 0; j < ds.d; ++j) {
                std::snprintf(buf, sizeof(buf), ",%.17g", ds.x(n, t, j));
                out += buf;
            }
            out += "\n";
        }
    return out;
}

std::string dataset_meta_json(const Dataset& ds) {
    ordered_json j;
    j["N"] = ds.N;
    j["T"] = ds.T;
    j["d"] = ds.d;
    j["tau"] = ds.max_lag;
    j["generator"] = ds.generator;
    j["seed"] = ds.seed;
    j["noise"] = ds.noise;
    return j.dump();
}

Dataset dataset_from_csv(const std::string& csv_text, const std::string& meta_json) {
    ordered_json meta = ordered_json::parse(meta_json);
    Dataset ds;
    ds.N = meta.at("N").get<std::size_t>();
    ds.T = meta.at("T").get<std::size_t>();
    ds.d = meta.at("d").get<std::size_t>();
    ds.max_lag = meta.at("tau").get<std::size_t>();
    ds.generator = meta.at("generator").get<std::string>();
    ds.seed = meta.at("seed").get<std::uint64_t>();
    ds.noise = meta.at("noise").get<double>();
    ds.data = TensorF({ds.N, ds.T, ds.d});

    std::istringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line)) throw ContractError("dataset_from_csv: empty file");
    std::string expect_header = "series,t";
    for (std::size_t j = 0; j < ds.d; ++j) expect_header += ",x" + std::to_string(j);
    if (line != expect_header)
        throw ContractError("dataset_from_csv: header does not match sidecar shape");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const char* p = line.c_str();
        char* end = nullptr;
        const std::size_t n = std::strtoull(p, &end, 10);
        if (*end != ',') throw ContractError("dataset_from_csv: malformed row");
        p = end + 1;
        const long t = std::strtol(p, &end, 10);
        for (std::size_t j = 0; j < ds.d; ++j) {
            if (*end != ',') throw ContractError("dataset_from_csv: short row");
            p = end + 1;
            const double v = std::strtod(p, &end);
            if (n >= ds.N || t < 1 || t > static_cast<long>(ds.T))
                throw ContractError("dataset_from_csv: row outside sidecar bounds");
            ds.x(n, static_cast<int>(t), j) = v;
        }
        if (*end != '\0') throw ContractError("dataset_from_csv: trailing fields");
        ++rows;
    }
    if (rows != ds.N * ds.T)
        throw ContractError("dataset_from_csv: row count does not match sidecar");
    return ds;
}

void GeneratorSpec::validate() const {
    if (d == 0) throw ContractError("generator.d must be positive");
    if (N == 0) throw ContractError("generator.N must be positive");
    if (T == 0) throw ContractError("generator.T must be positive");
    if (noise < 0) throw ContractError("generator.noise must be >= 0");
    if (lag_decay <= 0) throw ContractError("generator.lag_decay must be positive");
    if (dt <= 0) throw ContractError("generator.dt must be positive");
}

GeneratorSpec generator_spec_from_json(const std::string& text) {
    const ordered_json j = ordered_json::parse(text);
    static const char* known[] = {"kind",   "d",         "tau",       "N",
                                  "T",      "noise",     "seed",      "edges_per_var",
                                  "lag_decay", "period", "intensity", "forcing",
                                  "dt"};
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || item.key() == k;
        if (!ok) throw ContractError("generator: unknown field " + item.key());
    }
    GeneratorSpec g;
    g.kind = j.value("kind", g.kind);
    g.d = j.value("d", g.d);
    g.tau = j.value("tau", g.tau);
    g.N = j.value("N", g.N);
    g.T = j.value("T", g.T);
    g.noise = j.value("noise", g.noise);
    g.seed = j.value("seed", g.seed);
    g.edges_per_var = j.value("edges_per_var", g.edges_per_var);
    g.lag_decay = j.value("lag_decay", g.lag_decay);
    g.period = j.value("period", g.period);
    g.intensity = j.value("intensity", g.intensity);
    g.forcing = j.value("forcing", g.forcing);
    g.dt = j.value("dt", g.dt);
    g.validate();
    return g;
}

Dataset run_generator(const GeneratorSpec& g) {
    g.validate();
    if (g.kind == "linear" || g.kind == "dynamic_linear") {
        Rng rs = Rng::split(g.seed, kStreamStructure);
        BinaryGraph bg = gen_er_ground_truth(g.d, g.tau, g.edges_per_var, rs);
        CausalMatrix base = assign_weights(bg, g.lag_decay, rs);
        if (g.kind == "linear") return gen_linear_sem(base, g.N, g.T, g.noise, g.seed);
        Rng rsch = Rng::split(g.seed, kStreamSchedule);
        DynWeightSchedule sched = make_schedule(base, rsch, g.period, g.intensity);
        return gen_linear_sem_dyn(base, sched, g.N, g.T, g.noise, g.seed);
    }
    if (g.kind == "nonlinear" || g.kind == "dynamic_nonlinear") {
        Rng rs = Rng::split(g.seed, kStreamStructure);
        BinaryGraph bg = gen_er_ground_truth(g.d, g.tau, g.edges_per_var, rs);
        if (g.kind == "nonlinear")
            return gen_nonlinear_sem(bg, g.N, g.T, g.noise, g.seed);
        CausalMatrix base = assign_weights(bg, g.lag_decay, rs);
        Rng rsch = Rng::split(g.seed, kStreamSchedule);
        DynWeightSchedule sched = make_schedule(base, rsch, g.period, g.intensity);
        return gen_nonlinear_sem_dyn(base, sched, g.N, g.T, g.noise, g.seed);
    }
    if (g.kind == "lorenz96")
        return gen_lorenz96(g.d, g.N, g.T, g.forcing, g.dt, g.seed);
    throw ContractError("generator.kind: unknown kind " + g.kind);
}

}  // namespace dycausal
