#include "dycausal/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <limits>

namespace dycausal {

using nlohmann::ordered_json;

const char* scope_name(AcyclicScope s) {
    switch (s) {
        case AcyclicScope::AllSteps: return "all_steps";
        case AcyclicScope::AnchorsOnly: return "anchors_only";
    }
    throw ContractError("scope_name: unknown scope");
}

AcyclicScope scope_from_name(const std::string& s) {
    if (s == "all_steps") return AcyclicScope::AllSteps;
    if (s == "anchors_only") return AcyclicScope::AnchorsOnly;
    throw ContractError("unknown acyclic scope: " + s);
}

void TrainConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw ContractError("TrainConfig: gamma must lie in (0, 1)");
    if (rounds == 0) throw ContractError("TrainConfig: rounds must be >= 1");
    if (inner_steps == 0) throw ContractError("TrainConfig: inner_steps must be >= 1");
    if (lr <= 0.0) throw ContractError("TrainConfig: lr must be positive");
    if (delta < 0.0) throw ContractError("TrainConfig: delta must be >= 0");
    if (alpha <= 1.0) throw ContractError("TrainConfig: alpha must exceed 1");
    if (mu0 <= 0.0) throw ContractError("TrainConfig: mu0 must be positive");
    if (init_scale <= 0.0) throw ContractError("TrainConfig: init_scale must be positive");
    if (penalty != PenaltyKind::NormScaledLog && penalty != PenaltyKind::Log)
        throw ContractError("TrainConfig: training supports the log-det penalties only");
}

namespace {

struct Interp {
    int ia = 0, ib = 0;
    double wa = 1.0, wb = 0.0;
};

// Bracketing anchors and weights for every step, boundary anchors held
// constant outside the anchor span.
std::vector<Interp> interp_plan(const std::vector<int>& a_times, int first_t,
                                int last_t) {
    std::vector<Interp> plan(static_cast<std::size_t>(last_t) + 1);
    const int n = static_cast<int>(a_times.size());
    for (int t = first_t; t <= last_t; ++t) {
        Interp ip;
        if (t <= a_times.front()) {
            ip = {0, 0, 1.0, 0.0};
        } else if (t >= a_times.back()) {
            ip = {n - 1, n - 1, 1.0, 0.0};
        } else {
            int j = 0;
            while (a_times[static_cast<std::size_t>(j) + 1] <= t) ++j;
            if (a_times[static_cast<std::size_t>(j)] == t) {
                ip = {j, j, 1.0, 0.0};
            } else {
                const double lam =
                    static_cast<double>(t - a_times[static_cast<std::size_t>(j)]) /
                    static_cast<double>(a_times[static_cast<std::size_t>(j) + 1] -
                                        a_times[static_cast<std::size_t>(j)]);
                ip = {j, j + 1, 1.0 - lam, lam};
            }
        }
        plan[static_cast<std::size_t>(t)] = ip;
    }
    return plan;
}

struct StepTerms {
    std::vector<Tape::Var> wt;  // indexed by t
    double recon = 0.0, l1 = 0.0, h = 0.0;
    Tape::Var loss;
};

}  // namespace

FitOutcome fit(const Dataset& ds, const ModelConfig& model_cfg,
               const TrainConfig& train_cfg) {
    model_cfg.validate();
    train_cfg.validate();
    if (ds.d != model_cfg.d) throw ContractError("fit: dataset and model disagree on d");
    if (ds.T <= model_cfg.window + model_cfg.max_lag)
        throw ContractError("fit: need T > K + tau");
    for (std::size_t i = 0; i < ds.data.size(); ++i)
        if (!std::isfinite(ds.data[i]))
            throw ContractError("fit: non-finite dataset entry");

    const std::size_t d = ds.d, N = ds.N, T = ds.T;
    const std::size_t K = model_cfg.window, m = model_cfg.hidden;
    const std::size_t tau = model_cfg.max_lag, dL = model_cfg.cause_dim();
    const bool ode = model_cfg.head == Head::Ode;
    const bool use_h = !ode;  // the ode head trains unconstrained
    const std::size_t rounds = ode ? 1 : train_cfg.rounds;

    const auto clock_start = std::chrono::steady_clock::now();

    FitOutcome out{Model(model_cfg), FitReport{}};
    Model& model = out.model;
    FitReport& rep = out.report;

    Rng rng(train_cfg.seed);
    model.init_params(rng, train_cfg.init_scale);
    model.reset_decoder_calls();

    const std::vector<int> a_times = anchor_times(model_cfg, T);
    const int first_t = static_cast<int>(tau) + 1;
    const int last_start = static_cast<int>(T - K) + 1;  // clamped tail window
    const int last_t = static_cast<int>(T);
    rep.anchors = a_times.size();
    rep.has_hnorm = use_h;

    std::vector<TensorF> a_windows;
    a_windows.reserve(a_times.size());
    for (int a : a_times) {
        TensorF w({N, K, d});
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t j = 0; j < d; ++j)
                    w(n, k, j) = ds.x(n, a + static_cast<int>(k), j);
        a_windows.push_back(std::move(w));
    }

    // Reconstruction windows at every admissible start (stride 1).
    const std::size_t NK = N * K;
    std::vector<int> starts;
    std::vector<TensorF> ys, xcs, xprevs;
    for (int t = first_t; t <= last_start; ++t) {
        TensorF y({d, NK}), xc({dL, NK});
        TensorF xp = ode ? TensorF({d, NK}) : TensorF();
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t k = 0; k < K; ++k) {
                const std::size_t col = n * K + k;
                const int tk = t + static_cast<int>(k);
                for (std::size_t i = 0; i < d; ++i) y(i, col) = ds.x(n, tk, i);
                for (std::size_t p = 0; p <= tau; ++p)
                    for (std::size_t j = 0; j < d; ++j)
                        xc(j + p * d, col) = ds.x(n, tk - static_cast<int>(p), j);
                if (ode)
                    for (std::size_t i = 0; i < d; ++i) xp(i, col) = ds.x(n, tk - 1, i);
            }
        starts.push_back(t);
        ys.push_back(std::move(y));
        xcs.push_back(std::move(xc));
        if (ode) xprevs.push_back(std::move(xp));
    }

    std::vector<int> reg_ts;  // steps the l1 + acyclicity means run over
    if (train_cfg.scope == AcyclicScope::AllSteps)
        for (int t = first_t; t <= last_t; ++t) reg_ts.push_back(t);
    else
        reg_ts = a_times;

    const std::vector<Interp> plan = interp_plan(a_times, first_t, last_t);
    const double recon_norm = 1.0 / static_cast<double>(N * T * K);
    const double reg_norm = 1.0 / static_cast<double>(reg_ts.size());

    // One full forward pass; throws FeasibilityError out of the h terms.
    const auto build = [&](Tape& tape, double mu, StepTerms& st) {
        std::vector<Tape::Var> pv = model.push_params(tape);
        std::vector<Tape::Var> aw;
        aw.reserve(a_times.size());
        for (std::size_t j = 0; j < a_times.size(); ++j)
            aw.push_back(model.decode_window(tape, pv, a_windows[j]));
        st.wt.assign(static_cast<std::size_t>(last_t) + 1, Tape::Var{});
        for (int t = first_t; t <= last_t; ++t) {
            const Interp& ip = plan[static_cast<std::size_t>(t)];
            st.wt[static_cast<std::size_t>(t)] =
                ip.ia == ip.ib
                    ? aw[static_cast<std::size_t>(ip.ia)]
                    : tape.lerp(aw[static_cast<std::size_t>(ip.ia)],
                                aw[static_cast<std::size_t>(ip.ib)], ip.wa, ip.wb);
        }
        std::vector<Tape::Var> terms;
        std::vector<double> coeffs;
        terms.reserve(starts.size() + 2 * reg_ts.size());
        coeffs.reserve(starts.size() + 2 * reg_ts.size());
        for (std::size_t wi = 0; wi < starts.size(); ++wi) {
            Tape::Var xc = tape.constant(xcs[wi]);
            Tape::Var xp;
            if (ode) xp = tape.constant(xprevs[wi]);
            Tape::Var pred = model.predict(
                tape, pv, st.wt[static_cast<std::size_t>(starts[wi])], xc, xp);
            Tape::Var e = tape.sse(pred, tape.constant(ys[wi]));
            st.recon += tape.scalar(e);
            terms.push_back(e);
            coeffs.push_back(mu * recon_norm);
        }
        for (int t : reg_ts) {
            Tape::Var l = tape.l1(st.wt[static_cast<std::size_t>(t)]);
            st.l1 += tape.scalar(l);
            terms.push_back(l);
            coeffs.push_back(mu * train_cfg.beta * reg_norm);
        }
        if (use_h)
            for (int t : reg_ts) {
                Tape::Var s_ins = tape.sumsq_rows_grouped(
                    tape.slice_cols(st.wt[static_cast<std::size_t>(t)], 0, d), m);
                Tape::Var h =
                    train_cfg.penalty == PenaltyKind::NormScaledLog
                        ? tape.hnorm_sq(s_ins, train_cfg.alpha, train_cfg.eps_zero,
                                        train_cfg.norm_grad_term)
                        : tape.hlog_sq(s_ins, train_cfg.alpha);
                st.h += tape.scalar(h);
                terms.push_back(h);
                coeffs.push_back(reg_norm);
            }
        st.loss = tape.weighted_sum(terms, coeffs);
        st.recon *= recon_norm;
        st.l1 *= reg_norm;
        st.h *= reg_norm;
        return pv;
    };

    // Adam state.
    std::vector<TensorF> am, av;
    for (const TensorF& p : model.params()) {
        am.emplace_back(TensorF(p.shape()));
        av.emplace_back(TensorF(p.shape()));
    }
    const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
    std::size_t adam_t = 0;
    double lr_cur = train_cfg.lr;

    std::vector<TensorF> last_feasible;
    bool have_feasible = false;
    double mu_final = train_cfg.mu0;
    std::size_t gstep = 0;

    for (std::size_t r = 0; r < rounds; ++r) {
        const double mu = train_cfg.mu0 * std::pow(train_cfg.gamma, static_cast<double>(r));
        mu_final = mu;
        for (std::size_t s = 0; s < train_cfg.inner_steps; ++s) {
            ++gstep;
            try {
                Tape tape;
                StepTerms st;
                std::vector<Tape::Var> pv = build(tape, mu, st);
                const double loss_v = tape.scalar(st.loss);
                if (!std::isfinite(loss_v))
                    throw ContractError("fit: non-finite loss at step " +
                                        std::to_string(gstep));
                rep.trace.push_back({gstep, mu, st.recon, st.l1, st.h});
                last_feasible = model.params();
                have_feasible = true;
                tape.backward(st.loss);
                ++adam_t;
                const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t));
                const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t));
                for (std::size_t pi = 0; pi < pv.size(); ++pi) {
                    const TensorF g = tape.grad(pv[pi]);
                    TensorF& p = model.params()[pi];
                    TensorF& mi = am[pi];
                    TensorF& vi = av[pi];
                    for (std::size_t i = 0; i < p.size(); ++i) {
                        mi[i] = b1 * mi[i] + (1.0 - b1) * g[i];
                        vi[i] = b2 * vi[i] + (1.0 - b2) * g[i] * g[i];
                        p[i] -= lr_cur * (mi[i] / c1) / (std::sqrt(vi[i] / c2) + adam_eps);
                    }
                }
            } catch (const FeasibilityError&) {
                // Left the log-det domain: rewind to the last feasible point
                // (or shrink the decoder output before one exists), slow down,
                // and count the restart.
                ++rep.feasibility_violations;
                if (have_feasible) {
                    model.params() = last_feasible;
                } else {
                    for (std::size_t pi = 0; pi < model.specs().size(); ++pi)
                        if (model.specs()[pi].name == "dec.stage2.W" ||
                            model.specs()[pi].name == "dec.stage2.b") {
                            TensorF& p = model.params()[pi];
                            for (std::size_t i = 0; i < p.size(); ++i) p[i] *= 0.5;
                        }
                }
                lr_cur *= 0.5;
            }
        }
    }
    rep.steps = gstep;

    // Final forward at the trained parameters: loss components and the
    // decoded trajectory. The penalty is re-tried separately so an
    // infeasible end state (possible only for the unscaled ablation) still
    // yields a trajectory.
    {
        Tape tape;
        std::vector<Tape::Var> pv = model.push_params(tape);
        std::vector<Tape::Var> aw;
        for (std::size_t j = 0; j < a_times.size(); ++j)
            aw.push_back(model.decode_window(tape, pv, a_windows[j]));
        std::vector<Tape::Var> wt(static_cast<std::size_t>(last_t) + 1);
        for (int t = first_t; t <= last_t; ++t) {
            const Interp& ip = plan[static_cast<std::size_t>(t)];
            wt[static_cast<std::size_t>(t)] =
                ip.ia == ip.ib
                    ? aw[static_cast<std::size_t>(ip.ia)]
                    : tape.lerp(aw[static_cast<std::size_t>(ip.ia)],
                                aw[static_cast<std::size_t>(ip.ib)], ip.wa, ip.wb);
        }
        for (std::size_t wi = 0; wi < starts.size(); ++wi) {
            Tape::Var xc = tape.constant(xcs[wi]);
            Tape::Var xp;
            if (ode) xp = tape.constant(xprevs[wi]);
            Tape::Var pred = model.predict(
                tape, pv, wt[static_cast<std::size_t>(starts[wi])], xc, xp);
            rep.final_recon += tape.scalar(tape.sse(pred, tape.constant(ys[wi])));
        }
        rep.final_recon *= recon_norm;
        for (int t : reg_ts)
            rep.final_l1 += tape.scalar(tape.l1(wt[static_cast<std::size_t>(t)]));
        rep.final_l1 *= reg_norm;
        if (use_h) {
            try {
                double h = 0.0;
                for (int t : reg_ts) {
                    Tape::Var s_ins = tape.sumsq_rows_grouped(
                        tape.slice_cols(wt[static_cast<std::size_t>(t)], 0, d), m);
                    Tape::Var hv =
                        train_cfg.penalty == PenaltyKind::NormScaledLog
                            ? tape.hnorm_sq(s_ins, train_cfg.alpha, train_cfg.eps_zero,
                                            train_cfg.norm_grad_term)
                            : tape.hlog_sq(s_ins, train_cfg.alpha);
                    h += tape.scalar(hv);
                }
                rep.final_hnorm = h * reg_norm;
            } catch (const FeasibilityError&) {
                ++rep.feasibility_violations;
                rep.final_hnorm = std::numeric_limits<double>::infinity();
            }
        }
        rep.final_loss =
            mu_final * (rep.final_recon + train_cfg.beta * rep.final_l1) +
            (use_h ? rep.final_hnorm : 0.0);

        rep.trajectory.start_t = first_t;
        rep.trajectory.steps.reserve(static_cast<std::size_t>(last_t - first_t) + 1);
        for (int t = first_t; t <= last_t; ++t)
            rep.trajectory.steps.push_back(
                model.effective_adjacency(tape.val(wt[static_cast<std::size_t>(t)])));
    }

    std::vector<BinaryGraph> pruned_steps;
    pruned_steps.reserve(rep.trajectory.steps.size());
    for (const CausalMatrix& w : rep.trajectory.steps)
        pruned_steps.push_back(prune(w, train_cfg.delta));
    rep.pruned = to_weighted(pruned_steps, rep.trajectory.start_t);

    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start)
            .count();
    return out;
}

std::string train_config_to_json(const TrainConfig& c) {
    ordered_json j;
    j["beta"] = c.beta;
    j["mu0"] = c.mu0;
    j["gamma"] = c.gamma;
    j["rounds"] = c.rounds;
    j["inner_steps"] = c.inner_steps;
    j["lr"] = c.lr;
    j["delta"] = c.delta;
    j["alpha"] = c.alpha;
    j["eps_zero"] = c.eps_zero;
    j["norm_grad_term"] = c.norm_grad_term;
    j["penalty"] = penalty_name(c.penalty);
    j["scope"] = scope_name(c.scope);
    j["seed"] = c.seed;
    j["init_scale"] = c.init_scale;
    return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    static const char* known[] = {"beta",     "mu0",         "gamma",
                                  "rounds",   "inner_steps", "lr",
                                  "delta",    "alpha",       "eps_zero",
                                  "norm_grad_term", "penalty", "scope",
                                  "seed",     "init_scale"};
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || item.key() == k;
        if (!ok) throw ContractError("train config: unknown field " + item.key());
    }
    TrainConfig c;
    c.beta = j.value("beta", c.beta);
    c.mu0 = j.value("mu0", c.mu0);
    c.gamma = j.value("gamma", c.gamma);
    c.rounds = j.value("rounds", c.rounds);
    c.inner_steps = j.value("inner_steps", c.inner_steps);
    c.lr = j.value("lr", c.lr);
    c.delta = j.value("delta", c.delta);
    c.alpha = j.value("alpha", c.alpha);
    c.eps_zero = j.value("eps_zero", c.eps_zero);
    c.norm_grad_term = j.value("norm_grad_term", c.norm_grad_term);
    if (j.contains("penalty")) {
        const std::string p = j.at("penalty").get<std::string>();
        if (p == "h_norm")
            c.penalty = PenaltyKind::NormScaledLog;
        else if (p == "h_log")
            c.penalty = PenaltyKind::Log;
        else
            throw ContractError("train config: unsupported penalty " + p);
    }
    if (j.contains("scope"))
        c.scope = scope_from_name(j.at("scope").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.init_scale = j.value("init_scale", c.init_scale);
    return c;
}

std::string fit_report_json(const FitReport& rep, const ModelConfig& model_cfg,
                            const TrainConfig& train_cfg,
                            const std::string& trajectory_ref) {
    ordered_json j;
    j["spec_version"] = "1";
    ordered_json cfg;
    cfg["model"] = ordered_json::parse(model_config_to_json(model_cfg));
    cfg["train"] = ordered_json::parse(train_config_to_json(train_cfg));
    j["config"] = std::move(cfg);
    j["anchors"] = rep.anchors;
    j["steps"] = rep.steps;
    j["feasibility_violations"] = rep.feasibility_violations;
    ordered_json fin;
    fin["recon"] = rep.final_recon;
    fin["l1"] = rep.final_l1;
    if (rep.has_hnorm) fin["hnorm"] = rep.final_hnorm;
    fin["loss"] = rep.final_loss;
    j["final"] = std::move(fin);
    j["trajectory_file"] = trajectory_ref;
    ordered_json tr = ordered_json::array();
    for (const TraceRow& row : rep.trace) {
        ordered_json rj;
        rj["step"] = row.step;
        rj["mu"] = row.mu;
        rj["recon"] = row.recon;
        rj["l1"] = row.l1;
        if (rep.has_hnorm) rj["hnorm"] = row.hnorm;
        tr.push_back(std::move(rj));
    }
    j["trace"] = std::move(tr);
    return j.dump();
}

std::string fit_trace_csv(const FitReport& rep) {
    std::string out =
        rep.has_hnorm ? "step,mu,recon,l1,hnorm\n" : "step,mu,recon,l1\n";
    char buf[256];
    for (const TraceRow& row : rep.trace) {
        if (rep.has_hnorm)
            std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", row.step,
                          row.mu, row.recon, row.l1, row.hnorm);
        else
            std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", row.step, row.mu,
                          row.recon, row.l1);
        out += buf;
    }
    return out;
}

}  // namespace dycausal
