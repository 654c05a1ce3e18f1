#pragma once

#include <string>
#include <vector>

#include "dycausal/graphs.hpp"

namespace dycausal {

/// AUROC needs at least one positive and one negative label.
struct MetricUndefinedError : ContractError {
    using ContractError::ContractError;
};

/// Edgewise counts over all d x d(max_lag+1) positions. Rates are NaN when
/// their denominator is empty (e.g. tpr against an edgeless ground truth);
/// NaN serializes to null downstream.
struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0;
    double tpr = 0.0, precision = 0.0, f1 = 0.0;
};

Confusion confusion(const BinaryGraph& est, const BinaryGraph& gt);

/// Structural Hamming distance. Lagged blocks: orientation is fixed by
/// time, every disagreement costs 1. Instantaneous block, per unordered
/// pair: cost = max(|est-only|, |gt-only|) over the two directed slots —
/// which makes a pure reversal cost 1 and a both-direction estimate
/// against a single true edge cost 1 (one correct + one extra), and keeps
/// SHD symmetric in its arguments.
std::size_t shd(const BinaryGraph& est, const BinaryGraph& gt);

/// Area under the ROC curve of |weights| against gt edges, every position
/// except the instantaneous diagonal, ties sharing one threshold point
/// (trapezoid rule; equals the Mann-Whitney pairwise statistic).
double auroc(const CausalMatrix& weights, const BinaryGraph& gt);

struct StepMetrics {
    int t = 0;
    double tpr = 0.0, precision = 0.0, f1 = 0.0;
    std::size_t shd = 0;
};

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;  // population
};

struct BlockAggregates {
    Aggregate tpr, precision, f1, shd;
};

struct EvalResult {
    std::vector<StepMetrics> per_step;
    BlockAggregates aggregate;
    double auroc = 0.0;
    bool has_blocks = false;  // per-block breakdown requested
    BlockAggregates instantaneous;
    BlockAggregates lagged;
};

/// Score an estimated weighted trajectory against ground truth, one row per
/// truth time step (the estimate is clamped onto the truth's range, so a
/// fit that starts at tau+1 is scored against t = 1 as well). Both sides
/// binarize at the same delta — lag-decayed true weights below delta are
/// unrecoverable at that threshold by construction, so they leave the
/// positive class too. AUROC pools the pre-threshold |weights| across all
/// scored steps.
EvalResult eval_trajectory(const DynGraphTrajectory& est,
                           const DynGraphTrajectory& truth, double delta,
                           bool block_breakdown = false);

/// Flat per-step table `t,tpr,precision,f1,shd`.
std::string eval_csv(const EvalResult& r);
std::string eval_json(const EvalResult& r);

}  // namespace dycausal
