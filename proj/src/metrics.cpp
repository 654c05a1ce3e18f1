#include "dycausal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <limits>

namespace dycausal {

using nlohmann::ordered_json;

namespace {

const double kNan = std::numeric_limits<double>::quiet_NaN();

void check_shapes(std::size_t da, std::size_t la, std::size_t db, std::size_t lb,
                  const char* what) {
    if (da != db || la != lb) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "%s: shape mismatch (d=%zu, max_lag=%zu) vs (d=%zu, max_lag=%zu)",
                      what, da, la, db, lb);
        throw ContractError(buf);
    }
}

}  // namespace

Confusion confusion(const BinaryGraph& est, const BinaryGraph& gt) {
    check_shapes(est.d, est.max_lag, gt.d, gt.max_lag, "confusion");
    Confusion c;
    for (std::size_t i = 0; i < est.edges.size(); ++i) {
        const bool e = est.edges[i] != 0.0, g = gt.edges[i] != 0.0;
        if (e && g)
            ++c.tp;
        else if (e)
            ++c.fp;
        else if (g)
            ++c.fn;
    }
    c.tpr = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn)
                        : kNan;
    c.precision =
        c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)
                    : kNan;
    c.f1 = 2 * c.tp + c.fp + c.fn
               ? 2.0 * static_cast<double>(c.tp) /
                     static_cast<double>(2 * c.tp + c.fp + c.fn)
               : kNan;
    return c;
}

std::size_t shd(const BinaryGraph& est, const BinaryGraph& gt) {
    check_shapes(est.d, est.max_lag, gt.d, gt.max_lag, "shd");
    const std::size_t d = est.d;
    std::size_t cost = 0;
    // instantaneous block, per unordered pair
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) {
            const std::size_t est_only =
                (est.has(i, j, 0) && !gt.has(i, j, 0) ? 1u : 0u) +
                (est.has(j, i, 0) && !gt.has(j, i, 0) ? 1u : 0u);
            const std::size_t gt_only =
                (gt.has(i, j, 0) && !est.has(i, j, 0) ? 1u : 0u) +
                (gt.has(j, i, 0) && !est.has(j, i, 0) ? 1u : 0u);
            cost += est_only > gt_only ? est_only : gt_only;
        }
    // instantaneous diagonal (zero by convention, counted plainly if not)
    for (std::size_t i = 0; i < d; ++i)
        if (est.has(i, i, 0) != gt.has(i, i, 0)) ++cost;
    // lagged blocks: orientation fixed by time
    for (std::size_t p = 1; p <= est.max_lag; ++p)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                if (est.has(i, j, p) != gt.has(i, j, p)) ++cost;
    return cost;
}

namespace {

double auroc_scores(const std::vector<double>& scores, const std::vector<bool>& labels) {
    std::size_t pos = 0;
    for (bool b : labels) pos += b ? 1 : 0;
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0)
        throw MetricUndefinedError(
            "auroc: ground truth has a single class; the curve is undefined");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });
    double area = 0.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    double prev_tpr = 0.0, prev_fpr = 0.0;
    while (i < order.size()) {
        std::size_t j = i;  // group ties under one threshold
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]])
                ++tp;
            else
                ++fp;
            ++j;
        }
        const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
        const double fpr = static_cast<double>(fp) / static_cast<double>(neg);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
        prev_tpr = tpr;
        prev_fpr = fpr;
        i = j;
    }
    return area;
}

void collect_scores(const CausalMatrix& weights, const BinaryGraph& gt,
                    std::vector<double>& scores, std::vector<bool>& labels) {
    const std::size_t d = weights.d, cols = weights.weights.cols();
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t c = 0; c < cols; ++c) {
            if (c == i) continue;  // instantaneous diagonal
            scores.push_back(std::abs(weights.weights(i, c)));
            labels.push_back(gt.edges(i, c) != 0.0);
        }
}

}  // namespace

double auroc(const CausalMatrix& weights, const BinaryGraph& gt) {
    check_shapes(weights.d, weights.max_lag, gt.d, gt.max_lag, "auroc");
    std::vector<double> scores;
    std::vector<bool> labels;
    collect_scores(weights, gt, scores, labels);
    return auroc_scores(scores, labels);
}

namespace {

Aggregate aggregate_of(const std::vector<double>& xs) {
    Aggregate a;
    if (xs.empty()) return a;
    double s = 0.0;
    for (double x : xs) s += x;
    a.mean = s / static_cast<double>(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - a.mean) * (x - a.mean);
    a.stddev = std::sqrt(v / static_cast<double>(xs.size()));
    return a;
}

struct Rows {
    std::vector<double> tpr, precision, f1, shd;

    void add(const Confusion& c, std::size_t s) {
        tpr.push_back(c.tpr);
        precision.push_back(c.precision);
        f1.push_back(c.f1);
        shd.push_back(static_cast<double>(s));
    }

    BlockAggregates aggregates() const {
        return {aggregate_of(tpr), aggregate_of(precision), aggregate_of(f1),
                aggregate_of(shd)};
    }
};

BinaryGraph block_only(const BinaryGraph& g, bool instantaneous) {
    BinaryGraph out(g.d, g.max_lag);
    const std::size_t d = g.d;
    for (std::size_t p = 0; p <= g.max_lag; ++p) {
        if (instantaneous != (p == 0)) continue;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                if (g.has(i, j, p)) out.set(i, j, p, true);
    }
    return out;
}

}  // namespace

EvalResult eval_trajectory(const DynGraphTrajectory& est,
                           const DynGraphTrajectory& truth, double delta,
                           bool block_breakdown) {
    if (est.steps.empty() || truth.steps.empty())
        throw ContractError("eval_trajectory: empty trajectory");
    check_shapes(est.steps.front().d, est.steps.front().max_lag,
                 truth.steps.front().d, truth.steps.front().max_lag,
                 "eval_trajectory");

    EvalResult r;
    r.has_blocks = block_breakdown;
    Rows joint, inst, lag;
    std::vector<double> scores;
    std::vector<bool> labels;
    for (int t = truth.start_t; t <= truth.end_t(); ++t) {
        const CausalMatrix& em = est.at_time(t);
        const CausalMatrix& gm = truth.at_time(t);
        const BinaryGraph eb = prune(em, delta);
        const BinaryGraph gb = prune(gm, delta);
        const Confusion c = confusion(eb, gb);
        const std::size_t s = shd(eb, gb);
        r.per_step.push_back({t, c.tpr, c.precision, c.f1, s});
        joint.add(c, s);
        collect_scores(em, gb, scores, labels);
        if (block_breakdown) {
            const BinaryGraph ei = block_only(eb, true), gi = block_only(gb, true);
            inst.add(confusion(ei, gi), shd(ei, gi));
            const BinaryGraph el = block_only(eb, false), gl = block_only(gb, false);
            lag.add(confusion(el, gl), shd(el, gl));
        }
    }
    r.aggregate = joint.aggregates();
    if (block_breakdown) {
        r.instantaneous = inst.aggregates();
        r.lagged = lag.aggregates();
    }
    r.auroc = auroc_scores(scores, labels);
    return r;
}

std::string eval_csv(const EvalResult& r) {
    std::string out = "t,tpr,precision,f1,shd\n";
    char buf[192];
    for (const StepMetrics& s : r.per_step) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%zu\n", s.t, s.tpr,
                      s.precision, s.f1, s.shd);
        out += buf;
    }
    return out;
}

namespace {

ordered_json aggregates_json(const BlockAggregates& b) {
    const auto one = [](const Aggregate& a) {
        ordered_json j;
        j["mean"] = a.mean;
        j["std"] = a.stddev;
        return j;
    };
    ordered_json j;
    j["tpr"] = one(b.tpr);
    j["precision"] = one(b.precision);
    j["f1"] = one(b.f1);
    j["shd"] = one(b.shd);
    return j;
}

}  // namespace

std::string eval_json(const EvalResult& r) {
    ordered_json j;
    ordered_json steps = ordered_json::array();
    for (const StepMetrics& s : r.per_step) {
        ordered_json row;
        row["t"] = s.t;
        row["tpr"] = s.tpr;
        row["precision"] = s.precision;
        row["f1"] = s.f1;
        row["shd"] = s.shd;
        steps.push_back(std::move(row));
    }
    j["per_step"] = std::move(steps);
    j["aggregate"] = aggregates_json(r.aggregate);
    j["auroc"] = r.auroc;
    if (r.has_blocks) {
        ordered_json blocks;
        blocks["instantaneous"] = aggregates_json(r.instantaneous);
        blocks["lagged"] = aggregates_json(r.lagged);
        j["blocks"] = std::move(blocks);
    }
    return j.dump();
}

}  // namespace dycausal
