// Python bindings for the dycausal core: thin shims over the same library
// entry points the command-line driver uses, so a config that works on the
// CLI produces the identical artifacts through python (and vice versa).
//
// Conventions:
//   - matrices cross the boundary as float64 numpy arrays (C-contiguous
//     copies are forced on the way in, fresh arrays are returned);
//   - structured artifacts (configs, trajectories, reports, eval results)
//     cross as the same JSON strings the CLI writes to disk, so callers can
//     mix files produced by either front end;
//   - dycausal::ContractError maps to dycausal.ContractError (a ValueError),
//     covering the argument-validation subclasses as well.

#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>

#include "json.hpp"

#include "dycausal/acyclic.hpp"
#include "dycausal/graphs.hpp"
#include "dycausal/metrics.hpp"
#include "dycausal/model.hpp"
#include "dycausal/synthgen.hpp"
#include "dycausal/tensor.hpp"
#include "dycausal/trainer.hpp"

namespace py = pybind11;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

dycausal::TensorF tensor_from_array(const DArray& a) {
    std::vector<std::size_t> shape(static_cast<std::size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i)
        shape[static_cast<std::size_t>(i)] = static_cast<std::size_t>(a.shape(i));
    std::vector<double> data(a.data(), a.data() + a.size());
    return dycausal::TensorF(std::move(shape), std::move(data));
}

DArray array_from_tensor(const dycausal::TensorF& t) {
    std::vector<py::ssize_t> shape(t.shape().size());
    for (std::size_t i = 0; i < t.shape().size(); ++i)
        shape[i] = static_cast<py::ssize_t>(t.shape()[i]);
    DArray out(shape);
    std::memcpy(out.mutable_data(), t.data(), sizeof(double) * t.size());
    return out;
}

dycausal::PenaltyKind penalty_kind_from_name(const std::string& name) {
    using K = dycausal::PenaltyKind;
    for (K k : {K::NormScaledLog, K::Log, K::Exp, K::Poly, K::SpectralRadius})
        if (name == dycausal::penalty_name(k)) return k;
    throw dycausal::ContractError("penalty: unknown kind " + name);
}

py::dict penalty(const DArray& w, const std::string& kind, double alpha,
                 bool norm_grad_term) {
    if (w.ndim() != 2 || w.shape(0) != w.shape(1))
        throw dycausal::ContractError("penalty: w must be a square 2-d array");
    dycausal::PenaltyOptions opt;
    opt.alpha = alpha;
    opt.norm_grad_term = norm_grad_term;
    dycausal::PenaltyEval ev =
        dycausal::eval_penalty(penalty_kind_from_name(kind), tensor_from_array(w), opt);
    py::dict out;
    out["value"] = ev.value;
    out["grad"] = array_from_tensor(ev.grad);
    out["overflow"] = ev.overflow;
    out["vanished"] = ev.vanished;
    out["feasible"] = ev.feasible;
    out["degenerate"] = ev.degenerate;
    return out;
}

bool is_dag(const DArray& w) {
    if (w.ndim() != 2 || w.shape(0) != w.shape(1))
        throw dycausal::ContractError("is_dag: w must be a square 2-d array");
    return dycausal::is_dag(tensor_from_array(w));
}

DArray prune(const DArray& weights, std::size_t max_lag, double delta) {
    std::size_t d = weights.ndim() >= 1 ? static_cast<std::size_t>(weights.shape(0)) : 0;
    if (weights.ndim() != 2 ||
        static_cast<std::size_t>(weights.shape(1)) != d * (max_lag + 1))
        throw dycausal::ContractError(
            "prune: weights must have shape [d, d*(max_lag+1)]");
    dycausal::CausalMatrix m(d, max_lag);
    m.weights = tensor_from_array(weights);
    dycausal::BinaryGraph g = dycausal::prune(m, delta);
    return array_from_tensor(g.edges);
}

py::dict generate(const std::string& config) {
    dycausal::GeneratorSpec spec = dycausal::generator_spec_from_json(config);
    dycausal::Dataset ds = dycausal::run_generator(spec);
    py::dict out;
    out["data"] = array_from_tensor(ds.data);
    out["meta"] = dycausal::dataset_meta_json(ds);
    out["truth"] = dycausal::trajectory_to_json(ds.truth);
    return out;
}

py::dict fit(const DArray& data, std::size_t tau, const std::string& model_config,
             const std::string& train_config) {
    if (data.ndim() != 3)
        throw dycausal::ContractError("fit: data must have shape [N, T, d]");
    dycausal::Dataset ds;
    ds.N = static_cast<std::size_t>(data.shape(0));
    ds.T = static_cast<std::size_t>(data.shape(1));
    ds.d = static_cast<std::size_t>(data.shape(2));
    ds.max_lag = tau;
    ds.generator = "arrays";
    ds.data = tensor_from_array(data);

    // Mirror the CLI: d and tau default from the data when the model config
    // leaves them out. The configs are JSON strings so the same tolerant
    // parsers (defaults for missing fields, errors on unknown ones) apply.
    nlohmann::ordered_json mj = nlohmann::ordered_json::parse(model_config);
    if (!mj.contains("d")) mj["d"] = ds.d;
    if (!mj.contains("tau")) mj["tau"] = ds.max_lag;
    dycausal::ModelConfig mc = dycausal::model_config_from_json(mj.dump());
    dycausal::TrainConfig tc = dycausal::train_config_from_json(train_config);
    dycausal::FitOutcome outcome = dycausal::fit(ds, mc, tc);

    py::dict out;
    out["report"] = dycausal::fit_report_json(outcome.report, mc, tc, "trajectory");
    out["model"] = dycausal::model_to_json(outcome.model);
    out["trajectory"] = dycausal::trajectory_to_json(outcome.report.trajectory);
    out["pruned"] = dycausal::trajectory_to_json(outcome.report.pruned);
    out["trace_csv"] = dycausal::fit_trace_csv(outcome.report);
    return out;
}

std::string evaluate(const std::string& trajectory, const std::string& truth,
                     double delta, bool blocks) {
    dycausal::EvalResult er =
        dycausal::eval_trajectory(dycausal::trajectory_from_json(trajectory),
                                  dycausal::trajectory_from_json(truth), delta, blocks);
    return dycausal::eval_json(er);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Dynamic temporal causal discovery: penalties, generators, "
              "fitting, and evaluation over JSON/ndarray interfaces.";

    py::register_exception<dycausal::ContractError>(m, "ContractError",
                                                    PyExc_ValueError);

    m.def("penalty", &penalty, py::arg("w"), py::arg("kind") = "h_norm",
          py::arg("alpha") = 1.001, py::arg("norm_grad_term") = false,
          "Evaluate an acyclicity penalty on a square weight matrix.\n"
          "kind: h_norm | h_log | h_exp | h_poly | h_rho. Returns a dict with\n"
          "value, grad (same shape as w), and the stability flags overflow,\n"
          "vanished, feasible, degenerate.");

    m.def("is_dag", &is_dag, py::arg("w"),
          "True when the nonzero pattern of a square matrix is acyclic.");

    m.def("prune", &prune, py::arg("weights"), py::arg("max_lag"), py::arg("delta"),
          "Threshold an effect-major weight matrix [d, d*(max_lag+1)] at\n"
          "|w| > delta into a 0/1 matrix; instantaneous self-loops are\n"
          "always dropped.");

    m.def("generate", &generate, py::arg("config"),
          "Run a synthetic generator from a JSON spec (same schema as the\n"
          "CLI's \"generator\" block). Returns a dict with data [N, T, d],\n"
          "meta (JSON string), and truth (trajectory JSON string).");

    m.def("fit", &fit, py::arg("data"), py::arg("tau"),
          py::arg("model_config") = "{}", py::arg("train_config") = "{}",
          "Fit the rolling-window model to data [N, T, d] with max lag tau.\n"
          "model_config / train_config are JSON strings (CLI schema; d and\n"
          "tau default from the data). Returns a dict of JSON artifacts:\n"
          "report, model, trajectory, pruned, plus trace_csv.");

    m.def("evaluate", &evaluate, py::arg("trajectory"), py::arg("truth"),
          py::arg("delta") = 0.1, py::arg("blocks") = false,
          "Score an estimated trajectory (JSON) against a ground-truth\n"
          "trajectory (JSON) at threshold delta. Returns eval JSON with\n"
          "per-step rows, aggregates, and AUROC.");
}
