#pragma once

#include <cstdint>
#include <vector>

#include "dycausal/linalg.hpp"
#include "dycausal/tensor.hpp"

namespace dycausal {

enum class Activation { Relu, Sigmoid, Tanh, Identity };

/// Reverse-mode automatic differentiation over a fixed op vocabulary.
///
/// A Tape owns a flat list of nodes; every op appends one node, computes its
/// value eagerly, and records parent ids plus whatever the reverse sweep
/// needs (LU factors for the log-det family, reduction extents, payload
/// scalars). backward() runs one reverse sweep from a scalar root and
/// accumulates gradients only into subgraphs that can reach a parameter,
/// so constant data windows cost nothing on the way back.
///
/// Tapes are rebuilt per training step and are not thread-safe; concurrent
/// fits use one Tape per thread.
class Tape {
public:
    struct Var {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    Tape() { nodes_.reserve(1024); }

    /// Leaf holding data that never receives a gradient.
    Var constant(TensorF v);
    /// Leaf marked as differentiable (model parameter).
    Var param(TensorF v);

    const TensorF& val(Var v) const { return nodes_[check(v)].value; }
    double scalar(Var v) const;

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var scale(Var a, double k);
    /// wa * a + wb * b; the interpolation primitive.
    Var lerp(Var a, Var b, double wa, double wb);
    Var matmul(Var a, Var b);
    /// W @ X + bias broadcast over columns.
    Var affine_cols(Var w, Var x, Var bias);
    /// W @ x + bias for a vector x.
    Var affine_vec(Var w, Var x, Var bias);
    Var act(Var a, Activation kind);
    Var square(Var a);
    Var transpose(Var a);
    Var slice_rows(Var a, std::size_t r0, std::size_t r1);
    Var slice_cols(Var a, std::size_t c0, std::size_t c1);
    Var concat_rows(Var a, Var b);
    Var sum(Var a);
    Var mean(Var a);
    /// Sum of absolute values (elementwise 1-norm).
    Var l1(Var a);
    /// Sum of squared differences against a target; the target is a leaf.
    Var sse(Var pred, Var target);
    /// log det via pivoted LU; throws SingularityError when det <= 0.
    Var logdet(Var a);

    /// Scale-normalized log-det acyclicity value of a squared matrix S
    /// (S = W.W elementwise, so S >= 0):
    ///   h = -logdet(alpha I - S / |S|_1) + d log alpha,
    /// |.|_1 the induced 1-norm (max column absolute sum). When
    /// |S|_1 <= eps_zero the value is exactly 0 with zero gradient.
    /// The reverse sweep treats the 1-norm factor as a constant, which keeps
    /// the gradient exactly zero on DAG supports; with_norm_term adds the
    /// 1-norm subgradient path instead.
    Var hnorm_sq(Var s, double alpha, double eps_zero, bool with_norm_term);

    /// Unscaled variant h = -logdet(alpha I - S) + d log alpha. Leaves its
    /// domain when rho(S) >= alpha; that surfaces as FeasibilityError at
    /// forward time.
    Var hlog_sq(Var s, double alpha);

    /// Temporal convolution over the middle (time) axis of x [N, K, d] with
    /// kernel [c, d, w] and bias [c], valid positions only: output
    /// [N, K - w + 1, c]. x must be a constant leaf.
    Var conv_temporal(Var x, Var kernel, Var bias);
    /// Mean over the first two axes of [N, P, c] -> [c].
    Var mean_nt(Var a);

    /// Bank of m independent affine maps acting on the m length-d chunks of
    /// z: out[i, :] = wbank[i] @ z[i*d .. i*d+d) + bbank[i], shape [m, dL].
    Var chunk_affine_rows(Var z, Var wbank, Var bbank);
    /// Bank of dL independent affine maps acting on the rows of U [dL, m]:
    /// out[:, q] = wbank[q] @ U[q, :] + bbank[q], shape [dm, dL].
    Var chunk_affine_cols(Var u, Var wbank, Var bbank);

    /// Row-group reduction out[i, c] = sum_j in[i*m + j, c]^2; the squared
    /// effective-adjacency map for hidden multiplicity m.
    Var sumsq_rows_grouped(Var a, std::size_t m);

    /// Scalar sum_i coeffs[i] * scalars[i].
    Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& coeffs);

    /// Reverse sweep from a scalar root. May be called once per tape.
    void backward(Var root);

    /// Gradient of the last backward() root w.r.t. v (zeros if untouched).
    TensorF grad(Var v) const;

    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op : std::uint8_t {
        Leaf, Add, Sub, Hadamard, Scale, Lerp, MatMul, AffineCols, AffineVec,
        Act, Square, Transpose, SliceRows, SliceCols, ConcatRows, Sum, Mean,
        L1, Sse, LogDet, HNormSq, HLogSq, ConvTemporal, MeanNT,
        ChunkAffineRows, ChunkAffineCols, SumSqRowsGrouped, WeightedSum,
    };

    struct Node {
        Op op = Op::Leaf;
        bool needs_grad = false;
        int a = -1, b = -1, c = -1;
        TensorF value;
        TensorF cache;              // op-specific (LU factors, ...)
        double d0 = 0.0, d1 = 0.0;  // op-specific scalars
        std::vector<int> extra;     // WeightedSum parents, int payloads
        std::vector<double> dextra; // WeightedSum coefficients
    };

    int check(Var v) const {
        if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
            throw ContractError("Tape: invalid variable handle");
        return v.id;
    }

    Var push(Node n);
    TensorF& grad_buf(int id);
    void backward_node(int id);

    std::vector<Node> nodes_;
    std::vector<TensorF> grads_;
    bool swept_ = false;
};

}  // namespace dycausal
