#include "dycausal/model.hpp"

#include <cmath>
#include <json.hpp>

namespace dycausal {

using nlohmann::ordered_json;

const char* head_name(Head h) {
    switch (h) {
        case Head::Linear: return "linear";
        case Head::Nonlinear: return "nonlinear";
        case Head::Ode: return "ode";
    }
    throw ContractError("head_name: unknown head");
}

Head head_from_name(const std::string& s) {
    if (s == "linear") return Head::Linear;
    if (s == "nonlinear") return Head::Nonlinear;
    if (s == "ode") return Head::Ode;
    throw ContractError("unknown head: " + s);
}

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    throw ContractError("activation_name: unknown activation");
}

Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "tanh") return Activation::Tanh;
    if (s == "identity") return Activation::Identity;
    throw ContractError("unknown activation: " + s);
}

void ModelConfig::validate() const {
    if (d == 0) throw ContractError("ModelConfig: d must be positive");
    if (window == 0) throw ContractError("ModelConfig: window must be positive");
    if (stride == 0) throw ContractError("ModelConfig: stride must be positive");
    if (channels == 0) throw ContractError("ModelConfig: channels must be positive");
    if (hidden == 0) throw ContractError("ModelConfig: hidden must be positive");
    if (head == Head::Linear && hidden != 1)
        throw ContractError("ModelConfig: the linear head requires hidden == 1");
    if (head != Head::Linear && mlp_hidden == 0)
        throw ContractError("ModelConfig: mlp_hidden must be positive");
    if (head == Head::Ode && max_lag == 0)
        throw ContractError("ModelConfig: the ode head requires max_lag >= 1");
}

std::vector<int> anchor_times(const ModelConfig& cfg, std::size_t T) {
    cfg.validate();
    if (T < cfg.window) throw ContractError("anchor_times: record shorter than window");
    const int last = static_cast<int>(T - cfg.window + 1);
    const int first = static_cast<int>(cfg.max_lag) + 1;
    if (first > last)
        throw ContractError("anchor_times: no admissible window start after burn-in");
    const std::size_t n_base = (T - cfg.window) / cfg.stride;
    std::vector<int> ts;
    ts.reserve(n_base + 1);
    for (std::size_t j = 0; j < n_base; ++j) {
        int t = first + static_cast<int>(j * cfg.stride);
        if (t > last) t = last;
        if (ts.empty() || ts.back() != t) ts.push_back(t);
    }
    if (ts.empty() || ts.back() != last) ts.push_back(last);
    return ts;
}

std::vector<ParamSpec> Model::param_specs(const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t d = cfg.d, m = cfg.hidden, c = cfg.channels;
    const std::size_t dL = cfg.cause_dim(), dm = cfg.effect_rows();
    const std::size_t wk = cfg.conv_width(), H = cfg.mlp_hidden;
    std::vector<ParamSpec> specs = {
        {"enc.conv.kernel", {c, d, wk}},
        {"enc.conv.bias", {c}},
        {"enc.affine.W", {dm, c}},
        {"enc.affine.b", {dm}},
        {"dec.stage1.W", {m, dL, d}},
        {"dec.stage1.b", {m, dL}},
        {"dec.stage2.W", {dL, dm, m}},
        {"dec.stage2.b", {dL, dm}},
    };
    if (cfg.head != Head::Linear) {
        specs.push_back({"head.h1.W", {d * H, m}});
        specs.push_back({"head.h1.b", {d * H, 1}});
        specs.push_back({"head.h2.W", {d, H}});
        specs.push_back({"head.h2.b", {d, 1}});
    }
    return specs;
}

namespace {
enum ParamIx : std::size_t {
    kConvK = 0, kConvB, kEncW, kEncB, kDec1W, kDec1B, kDec2W, kDec2B,
    kH1W, kH1B, kH2W, kH2B,
};
}  // namespace

Model::Model(ModelConfig cfg) : cfg_(cfg), specs_(param_specs(cfg)) {
    values_.reserve(specs_.size());
    for (const ParamSpec& s : specs_) values_.emplace_back(TensorF(s.shape));
}

void Model::init_params(Rng& rng, double init_scale) {
    for (TensorF& v : values_)
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.normal(0.0, init_scale);
}

const TensorF& Model::param(const std::string& name) const {
    for (std::size_t i = 0; i < specs_.size(); ++i)
        if (specs_[i].name == name) return values_[i];
    throw ContractError("Model: unknown parameter " + name);
}

std::vector<Tape::Var> Model::push_params(Tape& tape) const {
    std::vector<Tape::Var> pv;
    pv.reserve(values_.size());
    for (const TensorF& v : values_) pv.push_back(tape.param(v));
    return pv;
}

Tape::Var Model::decode_window(Tape& tape, const std::vector<Tape::Var>& pv,
                               const TensorF& window_data) const {
    if (window_data.ndim() != 3 || window_data.shape()[1] != cfg_.window ||
        window_data.shape()[2] != cfg_.d)
        throw ContractError("decode_window: window shape mismatch");
    Tape::Var x = tape.constant(window_data);
    Tape::Var conv = tape.conv_temporal(x, pv[kConvK], pv[kConvB]);
    Tape::Var pooled = tape.mean_nt(tape.act(conv, cfg_.enc_act));
    Tape::Var z = tape.affine_vec(pv[kEncW], pooled, pv[kEncB]);
    Tape::Var u1 = tape.chunk_affine_rows(tape.act(z, cfg_.dec_act),
                                          pv[kDec1W], pv[kDec1B]);
    Tape::Var u2 = tape.act(tape.transpose(u1), cfg_.dec_act);
    Tape::Var w = tape.chunk_affine_cols(u2, pv[kDec2W], pv[kDec2B]);
    ++decoder_calls_;
    return w;
}

Tape::Var Model::predict(Tape& tape, const std::vector<Tape::Var>& pv, Tape::Var w_t,
                         Tape::Var causes, Tape::Var x_prev) const {
    if (cfg_.head == Head::Linear) return tape.matmul(w_t, causes);

    Tape::Var a = tape.act(tape.matmul(w_t, causes), cfg_.head_act);
    const std::size_t m = cfg_.hidden, H = cfg_.mlp_hidden;
    Tape::Var out;
    for (std::size_t i = 0; i < cfg_.d; ++i) {
        Tape::Var ai = tape.slice_rows(a, i * m, (i + 1) * m);
        Tape::Var u = tape.slice_rows(pv[kH1W], i * H, (i + 1) * H);
        Tape::Var b1 = tape.slice_rows(pv[kH1B], i * H, (i + 1) * H);
        Tape::Var h = tape.act(tape.affine_cols(u, ai, b1), cfg_.head_act);
        Tape::Var v = tape.slice_rows(pv[kH2W], i, i + 1);
        Tape::Var b2 = tape.slice_rows(pv[kH2B], i, i + 1);
        Tape::Var oi = tape.affine_cols(v, h, b2);
        out = i == 0 ? oi : tape.concat_rows(out, oi);
    }
    if (cfg_.head == Head::Ode) out = tape.add(out, x_prev);
    return out;
}

CausalMatrix Model::effective_adjacency(const TensorF& w) const {
    const std::size_t m = cfg_.hidden, dL = cfg_.cause_dim();
    if (w.ndim() != 2 || w.rows() != cfg_.effect_rows() || w.cols() != dL)
        throw ContractError("effective_adjacency: shape mismatch");
    CausalMatrix out(cfg_.d, cfg_.max_lag);
    for (std::size_t i = 0; i < cfg_.d; ++i)
        for (std::size_t c = 0; c < dL; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                const double x = w(i * m + j, c);
                s += x * x;
            }
            out.weights(i, c) = std::sqrt(s);
        }
    return out;
}

std::string model_config_to_json(const ModelConfig& c) {
    ordered_json cfg;
    cfg["d"] = c.d;
    cfg["tau"] = c.max_lag;
    cfg["K"] = c.window;
    cfg["S"] = c.stride;
    cfg["head"] = head_name(c.head);
    cfg["hidden"] = c.hidden;
    cfg["channels"] = c.channels;
    cfg["mlp_hidden"] = c.mlp_hidden;
    cfg["enc_act"] = activation_name(c.enc_act);
    cfg["dec_act"] = activation_name(c.dec_act);
    cfg["head_act"] = activation_name(c.head_act);
    return cfg.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    static const char* known[] = {"d",        "tau",      "K",          "S",
                                  "head",     "hidden",   "channels",   "mlp_hidden",
                                  "enc_act",  "dec_act",  "head_act"};
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || item.key() == k;
        if (!ok) throw ContractError("model config: unknown field " + item.key());
    }
    ModelConfig c;
    c.d = j.value("d", c.d);
    c.max_lag = j.value("tau", c.max_lag);
    c.window = j.value("K", c.window);
    c.stride = j.value("S", c.stride);
    if (j.contains("head")) c.head = head_from_name(j.at("head").get<std::string>());
    // per-variable multiplicity defaults to 10 for the nonlinear heads
    c.hidden = j.value("hidden", c.head == Head::Linear ? std::size_t{1} : std::size_t{10});
    c.channels = j.value("channels", c.channels);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    if (j.contains("enc_act"))
        c.enc_act = activation_from_name(j.at("enc_act").get<std::string>());
    if (j.contains("dec_act"))
        c.dec_act = activation_from_name(j.at("dec_act").get<std::string>());
    if (j.contains("head_act"))
        c.head_act = activation_from_name(j.at("head_act").get<std::string>());
    return c;
}

std::string model_to_json(const Model& m) {
    ordered_json cfg = ordered_json::parse(model_config_to_json(m.config()));

    ordered_json params = ordered_json::object();
    for (std::size_t i = 0; i < m.specs().size(); ++i) {
        const ParamSpec& s = m.specs()[i];
        ordered_json p;
        p["shape"] = s.shape;
        p["data"] = m.params()[i].vec();
        params[s.name] = std::move(p);
    }
    ordered_json j;
    j["config"] = std::move(cfg);
    j["params"] = std::move(params);
    return j.dump();
}

Model model_from_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    ModelConfig cfg = model_config_from_json(j.at("config").dump());

    Model m(cfg);
    const ordered_json& params = j.at("params");
    for (std::size_t i = 0; i < m.specs().size(); ++i) {
        const ParamSpec& s = m.specs()[i];
        const ordered_json& p = params.at(s.name);
        const auto shape = p.at("shape").get<std::vector<std::size_t>>();
        if (shape != s.shape)
            throw ContractError("model_from_json: shape mismatch for " + s.name);
        const auto data = p.at("data").get<std::vector<double>>();
        TensorF& v = m.params()[i];
        if (data.size() != v.size())
            throw ContractError("model_from_json: data size mismatch for " + s.name);
        for (std::size_t k = 0; k < data.size(); ++k) v[k] = data[k];
    }
    return m;
}

}  // namespace dycausal
