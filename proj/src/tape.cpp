#include "dycausal/tape.hpp"

#include <cmath>

namespace dycausal {

namespace {

double act_fwd(double x, Activation k) {
    switch (k) {
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::Tanh: return std::tanh(x);
        case Activation::Identity: return x;
    }
    return x;
}

// Derivative expressed through input x and output y, whichever is cheaper.
double act_bwd(double x, double y, Activation k) {
    switch (k) {
        case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::Sigmoid: return y * (1.0 - y);
        case Activation::Tanh: return 1.0 - y * y;
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

}  // namespace

Tape::Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::constant(TensorF v) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(v);
    n.needs_grad = false;
    return push(std::move(n));
}

Tape::Var Tape::param(TensorF v) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(v);
    n.needs_grad = true;
    return push(std::move(n));
}

double Tape::scalar(Var v) const {
    const Node& n = nodes_[check(v)];
    if (n.value.size() != 1) throw ContractError("Tape::scalar: not a scalar node");
    return n.value[0];
}

Tape::Var Tape::add(Var a, Var b) {
    Node n;
    n.op = Op::Add;
    n.a = check(a);
    n.b = check(b);
    n.value = dycausal::add(nodes_[n.a].value, nodes_[n.b].value);
    n.needs_grad = nodes_[n.a].needs_grad || nodes_[n.b].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::sub(Var a, Var b) {
    Node n;
    n.op = Op::Sub;
    n.a = check(a);
    n.b = check(b);
    n.value = dycausal::sub(nodes_[n.a].value, nodes_[n.b].value);
    n.needs_grad = nodes_[n.a].needs_grad || nodes_[n.b].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::hadamard(Var a, Var b) {
    Node n;
    n.op = Op::Hadamard;
    n.a = check(a);
    n.b = check(b);
    n.value = dycausal::hadamard(nodes_[n.a].value, nodes_[n.b].value);
    n.needs_grad = nodes_[n.a].needs_grad || nodes_[n.b].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::scale(Var a, double k) {
    Node n;
    n.op = Op::Scale;
    n.a = check(a);
    n.d0 = k;
    n.value = dycausal::scale(nodes_[n.a].value, k);
    n.needs_grad = nodes_[n.a].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::lerp(Var a, Var b, double wa, double wb) {
    Node n;
    n.op = Op::Lerp;
    n.a = check(a);
    n.b = check(b);
    n.d0 = wa;
    n.d1 = wb;
    const TensorF& va = nodes_[n.a].value;
    const TensorF& vb = nodes_[n.b].value;
    if (!va.same_shape(vb)) throw ContractError("lerp: shape mismatch");
    TensorF out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = wa * va[i] + wb * vb[i];
    n.value = std::move(out);
    n.needs_grad = nodes_[n.a].needs_grad || nodes_[n.b].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::matmul(Var a, Var b) {
    Node n;
    n.op = Op::MatMul;
    n.a = check(a);
    n.b = check(b);
    n.value = dycausal::matmul(nodes_[n.a].value, nodes_[n.b].value);
    n.needs_grad = nodes_[n.a].needs_grad || nodes_[n.b].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::affine_cols(Var w, Var x, Var bias) {
    Node n;
    n.op = Op::AffineCols;
    n.a = check(w);
    n.b = check(x);
    n.c = check(bias);
    const TensorF& vw = nodes_[n.a].value;
    const TensorF& vx = nodes_[n.b].value;
    const TensorF& vb = nodes_[n.c].value;
    if (vb.size() != vw.rows()) throw ContractError("affine_cols: bias size mismatch");
    TensorF out = dycausal::matmul(vw, vx);
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += vb[i];
    n.value = std::move(out);
    n.needs_grad =
        nodes_[n.a].needs_grad || nodes_[n.b].needs_grad || nodes_[n.c].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::affine_vec(Var w, Var x, Var bias) {
    Node n;
    n.op = Op::AffineVec;
    n.a = check(w);
    n.b = check(x);
    n.c = check(bias);
    const TensorF& vw = nodes_[n.a].value;
    const TensorF& vx = nodes_[n.b].value;
    const TensorF& vb = nodes_[n.c].value;
    if (vw.ndim() != 2 || vw.cols() != vx.size() || vb.size() != vw.rows())
        throw ContractError("affine_vec: shape mismatch");
    TensorF out({vw.rows()});
    for (std::size_t i = 0; i < vw.rows(); ++i) {
        double s = vb[i];
        for (std::size_t j = 0; j < vw.cols(); ++j) s += vw(i, j) * vx[j];
        out[i] = s;
    }
    n.value = std::move(out);
    n.needs_grad =
        nodes_[n.a].needs_grad || nodes_[n.b].needs_grad || nodes_[n.c].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::act(Var a, Activation kind) {
    Node n;
    n.op = Op::Act;
    n.a = check(a);
    n.d0 = static_cast<double>(static_cast<int>(kind));
    TensorF out = nodes_[n.a].value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = act_fwd(out[i], kind);
    n.value = std::move(out);
    n.needs_grad = nodes_[n.a].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::square(Var a) {
    Node n;
    n.op = Op::Square;
    n.a = check(a);
    TensorF out = nodes_[n.a].value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= out[i];
    n.value = std::move(out);
    n.needs_grad = nodes_[n.a].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::transpose(Var a) {
    Node n;
    n.op = Op::Transpose;
    n.a = check(a);
    n.value = dycausal::transpose(nodes_[n.a].value);
    n.needs_grad = nodes_[n.a].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::slice_rows(Var a, std::size_t r0, std::size_t r1) {
    Node n;
    n.op = Op::SliceRows;
    n.a = check(a);
    const TensorF& v = nodes_[n.a].value;
    if (v.ndim() != 2 || r0 >= r1 || r1 > v.rows())
        throw ContractError("slice_rows: bad range");
    TensorF out({r1 - r0, v.cols()});
    for (std::size_t i = r0; i < r1; ++i)
        for (std::size_t j = 0; j < v.cols(); ++j) out(i - r0, j) = v(i, j);
    n.extra = {static_cast<int>(r0), static_cast<int>(r1)};
    n.value = std::move(out);
    n.needs_grad = nodes_[n.a].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::slice_cols(Var a, std::size_t c0, std::size_t c1) {
    Node n;
    n.op = Op::SliceCols;
    n.a = check(a);
    const TensorF& v = nodes_[n.a].value;
    if (v.ndim() != 2 || c0 >= c1 || c1 > v.cols())
        throw ContractError("slice_cols: bad range");
    TensorF out({v.rows(), c1 - c0});
    for (std::size_t i = 0; i < v.rows(); ++i)
        for (std::size_t j = c0; j < c1; ++j) out(i, j - c0) = v(i, j);
    n.extra = {static_cast<int>(c0), static_cast<int>(c1)};
    n.value = std::move(out);
    n.needs_grad = nodes_[n.a].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::concat_rows(Var a, Var b) {
    Node n;
    n.op = Op::ConcatRows;
    n.a = check(a);
    n.b = check(b);
    const TensorF& va = nodes_[n.a].value;
    const TensorF& vb = nodes_[n.b].value;
    if (va.ndim() != 2 || vb.ndim() != 2 || va.cols() != vb.cols())
        throw ContractError("concat_rows: column mismatch");
    TensorF out({va.rows() + vb.rows(), va.cols()});
    for (std::size_t i = 0; i < va.rows(); ++i)
        for (std::size_t j = 0; j < va.cols(); ++j) out(i, j) = va(i, j);
    for (std::size_t i = 0; i < vb.rows(); ++i)
        for (std::size_t j = 0; j < vb.cols(); ++j) out(va.rows() + i, j) = vb(i, j);
    n.value = std::move(out);
    n.needs_grad = nodes_[n.a].needs_grad || nodes_[n.b].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::sum(Var a) {
    Node n;
    n.op = Op::Sum;
    n.a = check(a);
    double s = 0.0;
    for (std::size_t i = 0; i < nodes_[n.a].value.size(); ++i) s += nodes_[n.a].value[i];
    n.value = TensorF::scalar(s);
    n.needs_grad = nodes_[n.a].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::mean(Var a) {
    Node n;
    n.op = Op::Mean;
    n.a = check(a);
    const TensorF& v = nodes_[n.a].value;
    if (v.size() == 0) throw ContractError("mean: empty tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[i];
    n.value = TensorF::scalar(s / static_cast<double>(v.size()));
    n.needs_grad = nodes_[n.a].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::l1(Var a) {
    Node n;
    n.op = Op::L1;
    n.a = check(a);
    double s = 0.0;
    for (std::size_t i = 0; i < nodes_[n.a].value.size(); ++i)
        s += std::abs(nodes_[n.a].value[i]);
    n.value = TensorF::scalar(s);
    n.needs_grad = nodes_[n.a].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::sse(Var pred, Var target) {
    Node n;
    n.op = Op::Sse;
    n.a = check(pred);
    n.b = check(target);
    const TensorF& vp = nodes_[n.a].value;
    const TensorF& vt = nodes_[n.b].value;
    if (!vp.same_shape(vt)) throw ContractError("sse: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < vp.size(); ++i) {
        const double e = vp[i] - vt[i];
        s += e * e;
    }
    n.value = TensorF::scalar(s);
    n.needs_grad = nodes_[n.a].needs_grad || nodes_[n.b].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::logdet(Var a) {
    Node n;
    n.op = Op::LogDet;
    n.a = check(a);
    n.value = TensorF::scalar(logdet_pd(nodes_[n.a].value));
    n.needs_grad = nodes_[n.a].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::hnorm_sq(Var s, double alpha, double eps_zero, bool with_norm_term) {
    Node n;
    n.op = Op::HNormSq;
    n.a = check(s);
    const TensorF& vs = nodes_[n.a].value;
    if (vs.ndim() != 2 || vs.rows() != vs.cols())
        throw ContractError("hnorm_sq: square matrix required");
    const std::size_t d = vs.rows();
    const double c = one_norm_induced(vs);
    n.d0 = c;
    n.d1 = alpha;
    n.extra = {with_norm_term ? 1 : 0, static_cast<int>(one_norm_argmax_col(vs))};
    if (c <= eps_zero) {
        // Exact zero: treated as already acyclic, gradient is zero.
        n.extra[0] = -1;
        n.value = TensorF::scalar(0.0);
    } else {
        TensorF m({d, d});
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                m(i, j) = (i == j ? alpha : 0.0) - vs(i, j) / c;
        MMatrixLogDet ld = logdet_mmatrix(m);
        n.cache = std::move(ld.lu);
        n.value = TensorF::scalar(-ld.logdet + static_cast<double>(d) * std::log(alpha));
    }
    n.needs_grad = nodes_[n.a].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::hlog_sq(Var s, double alpha) {
    Node n;
    n.op = Op::HLogSq;
    n.a = check(s);
    const TensorF& vs = nodes_[n.a].value;
    if (vs.ndim() != 2 || vs.rows() != vs.cols())
        throw ContractError("hlog_sq: square matrix required");
    const std::size_t d = vs.rows();
    TensorF m({d, d});
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = (i == j ? alpha : 0.0) - vs(i, j);
    MMatrixLogDet ld = logdet_mmatrix(m);  // FeasibilityError when rho(S) >= alpha
    n.cache = std::move(ld.lu);
    n.d1 = alpha;
    n.value = TensorF::scalar(-ld.logdet + static_cast<double>(d) * std::log(alpha));
    n.needs_grad = nodes_[n.a].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::conv_temporal(Var x, Var kernel, Var bias) {
    Node n;
    n.op = Op::ConvTemporal;
    n.a = check(x);
    n.b = check(kernel);
    n.c = check(bias);
    const TensorF& vx = nodes_[n.a].value;
    const TensorF& vk = nodes_[n.b].value;
    const TensorF& vb = nodes_[n.c].value;
    if (vx.ndim() != 3 || vk.ndim() != 3) throw ContractError("conv_temporal: rank mismatch");
    const std::size_t N = vx.shape()[0], K = vx.shape()[1], d = vx.shape()[2];
    const std::size_t c = vk.shape()[0], kd = vk.shape()[1], w = vk.shape()[2];
    if (kd != d || w > K || vb.size() != c)
        throw ContractError("conv_temporal: kernel does not fit window");
    if (nodes_[n.a].needs_grad)
        throw ContractError("conv_temporal: data window must be constant");
    const std::size_t P = K - w + 1;
    TensorF out({N, P, c});
    for (std::size_t nn = 0; nn < N; ++nn)
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double s = vb[ch];
                for (std::size_t dt = 0; dt < w; ++dt)
                    for (std::size_t j = 0; j < d; ++j)
                        s += vx(nn, p + dt, j) * vk(ch, j, dt);
                out(nn, p, ch) = s;
            }
    n.value = std::move(out);
    n.needs_grad = nodes_[n.b].needs_grad || nodes_[n.c].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::mean_nt(Var a) {
    Node n;
    n.op = Op::MeanNT;
    n.a = check(a);
    const TensorF& v = nodes_[n.a].value;
    if (v.ndim() != 3) throw ContractError("mean_nt: rank-3 tensor required");
    const std::size_t N = v.shape()[0], P = v.shape()[1], c = v.shape()[2];
    TensorF out({c});
    for (std::size_t nn = 0; nn < N; ++nn)
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t ch = 0; ch < c; ++ch) out[ch] += v(nn, p, ch);
    const double inv = 1.0 / static_cast<double>(N * P);
    for (std::size_t ch = 0; ch < c; ++ch) out[ch] *= inv;
    n.value = std::move(out);
    n.needs_grad = nodes_[n.a].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::chunk_affine_rows(Var z, Var wbank, Var bbank) {
    Node n;
    n.op = Op::ChunkAffineRows;
    n.a = check(z);
    n.b = check(wbank);
    n.c = check(bbank);
    const TensorF& vz = nodes_[n.a].value;
    const TensorF& vw = nodes_[n.b].value;
    const TensorF& vb = nodes_[n.c].value;
    if (vw.ndim() != 3 || vb.ndim() != 2)
        throw ContractError("chunk_affine_rows: bank rank mismatch");
    const std::size_t m = vw.shape()[0], dL = vw.shape()[1], d = vw.shape()[2];
    if (vz.size() != m * d || vb.shape()[0] != m || vb.shape()[1] != dL)
        throw ContractError("chunk_affine_rows: shape mismatch");
    TensorF out({m, dL});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t q = 0; q < dL; ++q) {
            double s = vb(i, q);
            for (std::size_t j = 0; j < d; ++j) s += vw(i, q, j) * vz[i * d + j];
            out(i, q) = s;
        }
    n.value = std::move(out);
    n.needs_grad =
        nodes_[n.a].needs_grad || nodes_[n.b].needs_grad || nodes_[n.c].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::chunk_affine_cols(Var u, Var wbank, Var bbank) {
    Node n;
    n.op = Op::ChunkAffineCols;
    n.a = check(u);
    n.b = check(wbank);
    n.c = check(bbank);
    const TensorF& vu = nodes_[n.a].value;
    const TensorF& vw = nodes_[n.b].value;
    const TensorF& vb = nodes_[n.c].value;
    if (vu.ndim() != 2 || vw.ndim() != 3 || vb.ndim() != 2)
        throw ContractError("chunk_affine_cols: rank mismatch");
    const std::size_t dL = vw.shape()[0], dm = vw.shape()[1], m = vw.shape()[2];
    if (vu.rows() != dL || vu.cols() != m || vb.shape()[0] != dL || vb.shape()[1] != dm)
        throw ContractError("chunk_affine_cols: shape mismatch");
    TensorF out({dm, dL});
    for (std::size_t q = 0; q < dL; ++q)
        for (std::size_t r = 0; r < dm; ++r) {
            double s = vb(q, r);
            for (std::size_t j = 0; j < m; ++j) s += vw(q, r, j) * vu(q, j);
            out(r, q) = s;
        }
    n.value = std::move(out);
    n.needs_grad =
        nodes_[n.a].needs_grad || nodes_[n.b].needs_grad || nodes_[n.c].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::sumsq_rows_grouped(Var a, std::size_t m) {
    Node n;
    n.op = Op::SumSqRowsGrouped;
    n.a = check(a);
    const TensorF& v = nodes_[n.a].value;
    if (v.ndim() != 2 || m == 0 || v.rows() % m != 0)
        throw ContractError("sumsq_rows_grouped: rows not divisible by group size");
    const std::size_t d = v.rows() / m, cols = v.cols();
    TensorF out({d, cols});
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t cc = 0; cc < cols; ++cc) {
                const double x = v(i * m + j, cc);
                out(i, cc) += x * x;
            }
    n.extra = {static_cast<int>(m)};
    n.value = std::move(out);
    n.needs_grad = nodes_[n.a].needs_grad;
    return push(std::move(n));
}

Tape::Var Tape::weighted_sum(const std::vector<Var>& scalars,
                             const std::vector<double>& coeffs) {
    if (scalars.size() != coeffs.size() || scalars.empty())
        throw ContractError("weighted_sum: mismatched or empty inputs");
    Node n;
    n.op = Op::WeightedSum;
    double s = 0.0;
    bool ng = false;
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        const int id = check(scalars[i]);
        if (nodes_[id].value.size() != 1)
            throw ContractError("weighted_sum: non-scalar input");
        n.extra.push_back(id);
        s += coeffs[i] * nodes_[id].value[0];
        ng = ng || nodes_[id].needs_grad;
    }
    n.dextra = coeffs;
    n.value = TensorF::scalar(s);
    n.needs_grad = ng;
    return push(std::move(n));
}

TensorF& Tape::grad_buf(int id) {
    if (grads_[id].size() == 0) grads_[id] = TensorF::zeros(nodes_[id].value.shape());
    return grads_[id];
}

TensorF Tape::grad(Var v) const {
    const int id = check(v);
    if (!swept_) throw ContractError("Tape::grad: backward() has not run");
    if (grads_[id].size() == 0) return TensorF::zeros(nodes_[id].value.shape());
    return grads_[id];
}

void Tape::backward(Var root) {
    const int rid = check(root);
    if (nodes_[rid].value.size() != 1)
        throw ContractError("Tape::backward: root must be scalar");
    if (swept_) throw ContractError("Tape::backward: tape already swept");
    swept_ = true;
    grads_.assign(nodes_.size(), TensorF());
    if (!nodes_[rid].needs_grad) return;
    grads_[rid] = TensorF::scalar(1.0);
    for (int id = rid; id >= 0; --id) {
        if (!nodes_[id].needs_grad || grads_[id].size() == 0) continue;
        backward_node(id);
    }
}

void Tape::backward_node(int id) {
    Node& n = nodes_[id];
    const TensorF& g = grads_[id];
    auto need = [&](int pid) { return pid >= 0 && nodes_[pid].needs_grad; };

    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Add: {
            if (need(n.a)) {
                TensorF& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (need(n.b)) {
                TensorF& gb = grad_buf(n.b);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
            break;
        }
        case Op::Sub: {
            if (need(n.a)) {
                TensorF& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (need(n.b)) {
                TensorF& gb = grad_buf(n.b);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
            break;
        }
        case Op::Hadamard: {
            const TensorF& va = nodes_[n.a].value;
            const TensorF& vb = nodes_[n.b].value;
            if (need(n.a)) {
                TensorF& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
            }
            if (need(n.b)) {
                TensorF& gb = grad_buf(n.b);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
            }
            break;
        }
        case Op::Scale: {
            if (need(n.a)) {
                TensorF& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.d0;
            }
            break;
        }
        case Op::Lerp: {
            if (need(n.a)) {
                TensorF& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.d0;
            }
            if (need(n.b)) {
                TensorF& gb = grad_buf(n.b);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * n.d1;
            }
            break;
        }
        case Op::MatMul:
        case Op::AffineCols: {
            const TensorF& va = nodes_[n.a].value;
            const TensorF& vb = nodes_[n.b].value;
            const std::size_t nr = va.rows(), k = va.cols(), mc = vb.cols();
            if (need(n.a)) {  // gA[i,kk] += sum_j g[i,j] B[kk,j]
                TensorF& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < nr; ++i) {
                    const double* grow = g.data() + i * mc;
                    double* garow = ga.data() + i * k;
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double* brow = vb.data() + kk * mc;
                        double s = 0.0;
                        for (std::size_t j = 0; j < mc; ++j) s += grow[j] * brow[j];
                        garow[kk] += s;
                    }
                }
            }
            if (need(n.b)) {  // gB[kk,j] += sum_i A[i,kk] g[i,j]
                TensorF& gb = grad_buf(n.b);
                for (std::size_t i = 0; i < nr; ++i) {
                    const double* grow = g.data() + i * mc;
                    const double* arow = va.data() + i * k;
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double aik = arow[kk];
                        if (aik == 0.0) continue;
                        double* gbrow = gb.data() + kk * mc;
                        for (std::size_t j = 0; j < mc; ++j) gbrow[j] += aik * grow[j];
                    }
                }
            }
            if (n.op == Op::AffineCols && need(n.c)) {
                TensorF& gc = grad_buf(n.c);
                for (std::size_t i = 0; i < nr; ++i) {
                    const double* grow = g.data() + i * mc;
                    double s = 0.0;
                    for (std::size_t j = 0; j < mc; ++j) s += grow[j];
                    gc[i] += s;
                }
            }
            break;
        }
        case Op::AffineVec: {
            const TensorF& vw = nodes_[n.a].value;
            const TensorF& vx = nodes_[n.b].value;
            if (need(n.a)) {
                TensorF& gw = grad_buf(n.a);
                for (std::size_t i = 0; i < vw.rows(); ++i)
                    for (std::size_t j = 0; j < vw.cols(); ++j) gw(i, j) += g[i] * vx[j];
            }
            if (need(n.b)) {
                TensorF& gx = grad_buf(n.b);
                for (std::size_t i = 0; i < vw.rows(); ++i)
                    for (std::size_t j = 0; j < vw.cols(); ++j) gx[j] += g[i] * vw(i, j);
            }
            if (need(n.c)) {
                TensorF& gb = grad_buf(n.c);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
            break;
        }
        case Op::Act: {
            if (need(n.a)) {
                const Activation kind = static_cast<Activation>(static_cast<int>(n.d0));
                const TensorF& vin = nodes_[n.a].value;
                TensorF& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < g.size(); ++i)
                    ga[i] += g[i] * act_bwd(vin[i], n.value[i], kind);
            }
            break;
        }
        case Op::Square: {
            if (need(n.a)) {
                const TensorF& vin = nodes_[n.a].value;
                TensorF& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * 2.0 * vin[i];
            }
            break;
        }
        case Op::Transpose: {
            if (need(n.a)) {
                TensorF& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < n.value.rows(); ++i)
                    for (std::size_t j = 0; j < n.value.cols(); ++j) ga(j, i) += g(i, j);
            }
            break;
        }
        case Op::SliceRows: {
            if (need(n.a)) {
                TensorF& ga = grad_buf(n.a);
                const std::size_t r0 = static_cast<std::size_t>(n.extra[0]);
                for (std::size_t i = 0; i < n.value.rows(); ++i)
                    for (std::size_t j = 0; j < n.value.cols(); ++j)
                        ga(r0 + i, j) += g(i, j);
            }
            break;
        }
        case Op::SliceCols: {
            if (need(n.a)) {
                TensorF& ga = grad_buf(n.a);
                const std::size_t c0 = static_cast<std::size_t>(n.extra[0]);
                for (std::size_t i = 0; i < n.value.rows(); ++i)
                    for (std::size_t j = 0; j < n.value.cols(); ++j)
                        ga(i, c0 + j) += g(i, j);
            }
            break;
        }
        case Op::ConcatRows: {
            const std::size_t ra = nodes_[n.a].value.rows();
            if (need(n.a)) {
                TensorF& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < ra; ++i)
                    for (std::size_t j = 0; j < n.value.cols(); ++j) ga(i, j) += g(i, j);
            }
            if (need(n.b)) {
                TensorF& gb = grad_buf(n.b);
                for (std::size_t i = 0; i < nodes_[n.b].value.rows(); ++i)
                    for (std::size_t j = 0; j < n.value.cols(); ++j)
                        gb(i, j) += g(ra + i, j);
            }
            break;
        }
        case Op::Sum: {
            if (need(n.a)) {
                TensorF& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
            }
            break;
        }
        case Op::Mean: {
            if (need(n.a)) {
                TensorF& ga = grad_buf(n.a);
                const double w = g[0] / static_cast<double>(ga.size());
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += w;
            }
            break;
        }
        case Op::L1: {
            if (need(n.a)) {
                const TensorF& vin = nodes_[n.a].value;
                TensorF& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < ga.size(); ++i) {
                    if (vin[i] > 0.0)
                        ga[i] += g[0];
                    else if (vin[i] < 0.0)
                        ga[i] -= g[0];
                    // subgradient 0 at 0
                }
            }
            break;
        }
        case Op::Sse: {
            const TensorF& vp = nodes_[n.a].value;
            const TensorF& vt = nodes_[n.b].value;
            if (need(n.a)) {
                TensorF& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < ga.size(); ++i)
                    ga[i] += g[0] * 2.0 * (vp[i] - vt[i]);
            }
            if (need(n.b)) {
                TensorF& gb = grad_buf(n.b);
                for (std::size_t i = 0; i < gb.size(); ++i)
                    gb[i] -= g[0] * 2.0 * (vp[i] - vt[i]);
            }
            break;
        }
        case Op::LogDet: {
            if (need(n.a)) {
                TensorF inv = inverse(nodes_[n.a].value);
                TensorF& ga = grad_buf(n.a);
                const std::size_t d = inv.rows();
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < d; ++j) ga(i, j) += g[0] * inv(j, i);
            }
            break;
        }
        case Op::HNormSq: {
            if (!need(n.a) || n.extra[0] == -1) break;  // exact-zero case: grad 0
            const TensorF& vs = nodes_[n.a].value;
            const std::size_t d = vs.rows();
            const double c = n.d0;
            TensorF inv = inverse_from_unpivoted_lu(n.cache);
            TensorF& ga = grad_buf(n.a);
            // d h / d S = (1/c) inv(alpha I - S/c)^T, 1-norm held constant.
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) ga(i, j) += g[0] * inv(j, i) / c;
            if (n.extra[0] == 1) {
                // Optional 1-norm subgradient: dh/dc = -tr(inv S)/c^2 applied
                // to the argmax column (S >= 0, so d|S|_1/dS_ij = [j == j*]).
                double tr = 0.0;
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t k = 0; k < d; ++k) tr += inv(i, k) * vs(k, i);
                const double dc = -tr / (c * c);
                const std::size_t jstar = static_cast<std::size_t>(n.extra[1]);
                for (std::size_t i = 0; i < d; ++i) ga(i, jstar) += g[0] * dc;
            }
            break;
        }
        case Op::HLogSq: {
            if (need(n.a)) {
                TensorF inv = inverse_from_unpivoted_lu(n.cache);
                TensorF& ga = grad_buf(n.a);
                const std::size_t d = inv.rows();
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < d; ++j) ga(i, j) += g[0] * inv(j, i);
            }
            break;
        }
        case Op::ConvTemporal: {
            const TensorF& vx = nodes_[n.a].value;
            const TensorF& vk = nodes_[n.b].value;
            const std::size_t N = vx.shape()[0], d = vx.shape()[2];
            const std::size_t c = vk.shape()[0], w = vk.shape()[2];
            const std::size_t P = n.value.shape()[1];
            if (need(n.b)) {
                TensorF& gk = grad_buf(n.b);
                for (std::size_t nn = 0; nn < N; ++nn)
                    for (std::size_t p = 0; p < P; ++p)
                        for (std::size_t ch = 0; ch < c; ++ch) {
                            const double gv = g(nn, p, ch);
                            if (gv == 0.0) continue;
                            for (std::size_t dt = 0; dt < w; ++dt)
                                for (std::size_t j = 0; j < d; ++j)
                                    gk(ch, j, dt) += gv * vx(nn, p + dt, j);
                        }
            }
            if (need(n.c)) {
                TensorF& gb = grad_buf(n.c);
                for (std::size_t nn = 0; nn < N; ++nn)
                    for (std::size_t p = 0; p < P; ++p)
                        for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += g(nn, p, ch);
            }
            break;
        }
        case Op::MeanNT: {
            if (need(n.a)) {
                const TensorF& vin = nodes_[n.a].value;
                const std::size_t N = vin.shape()[0], P = vin.shape()[1],
                                  c = vin.shape()[2];
                const double inv = 1.0 / static_cast<double>(N * P);
                TensorF& ga = grad_buf(n.a);
                for (std::size_t nn = 0; nn < N; ++nn)
                    for (std::size_t p = 0; p < P; ++p)
                        for (std::size_t ch = 0; ch < c; ++ch)
                            ga(nn, p, ch) += g[ch] * inv;
            }
            break;
        }
        case Op::ChunkAffineRows: {
            const TensorF& vz = nodes_[n.a].value;
            const TensorF& vw = nodes_[n.b].value;
            const std::size_t m = vw.shape()[0], dL = vw.shape()[1], d = vw.shape()[2];
            if (need(n.b)) {
                TensorF& gw = grad_buf(n.b);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t q = 0; q < dL; ++q) {
                        const double gv = g(i, q);
                        if (gv == 0.0) continue;
                        for (std::size_t j = 0; j < d; ++j)
                            gw(i, q, j) += gv * vz[i * d + j];
                    }
            }
            if (need(n.c)) {
                TensorF& gb = grad_buf(n.c);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t q = 0; q < dL; ++q) gb(i, q) += g(i, q);
            }
            if (need(n.a)) {
                TensorF& gz = grad_buf(n.a);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t q = 0; q < dL; ++q) {
                        const double gv = g(i, q);
                        if (gv == 0.0) continue;
                        for (std::size_t j = 0; j < d; ++j)
                            gz[i * d + j] += gv * vw(i, q, j);
                    }
            }
            break;
        }
        case Op::ChunkAffineCols: {
            const TensorF& vu = nodes_[n.a].value;
            const TensorF& vw = nodes_[n.b].value;
            const std::size_t dL = vw.shape()[0], dm = vw.shape()[1], m = vw.shape()[2];
            if (need(n.b)) {
                TensorF& gw = grad_buf(n.b);
                for (std::size_t q = 0; q < dL; ++q)
                    for (std::size_t r = 0; r < dm; ++r) {
                        const double gv = g(r, q);
                        if (gv == 0.0) continue;
                        for (std::size_t j = 0; j < m; ++j) gw(q, r, j) += gv * vu(q, j);
                    }
            }
            if (need(n.c)) {
                TensorF& gb = grad_buf(n.c);
                for (std::size_t q = 0; q < dL; ++q)
                    for (std::size_t r = 0; r < dm; ++r) gb(q, r) += g(r, q);
            }
            if (need(n.a)) {
                TensorF& gu = grad_buf(n.a);
                for (std::size_t q = 0; q < dL; ++q)
                    for (std::size_t r = 0; r < dm; ++r) {
                        const double gv = g(r, q);
                        if (gv == 0.0) continue;
                        for (std::size_t j = 0; j < m; ++j) gu(q, j) += gv * vw(q, r, j);
                    }
            }
            break;
        }
        case Op::SumSqRowsGrouped: {
            if (need(n.a)) {
                const TensorF& vin = nodes_[n.a].value;
                const std::size_t m = static_cast<std::size_t>(n.extra[0]);
                const std::size_t d = n.value.rows(), cols = n.value.cols();
                TensorF& ga = grad_buf(n.a);
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < m; ++j)
                        for (std::size_t cc = 0; cc < cols; ++cc)
                            ga(i * m + j, cc) += g(i, cc) * 2.0 * vin(i * m + j, cc);
            }
            break;
        }
        case Op::WeightedSum: {
            for (std::size_t i = 0; i < n.extra.size(); ++i) {
                const int pid = n.extra[i];
                if (!nodes_[pid].needs_grad) continue;
                grad_buf(pid)[0] += g[0] * n.dextra[i];
            }
            break;
        }
    }
}

}  // namespace dycausal
