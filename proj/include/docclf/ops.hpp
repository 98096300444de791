#ifndef DOCCLF_OPS_HPP
#define DOCCLF_OPS_HPP

// Differentiable operations over Graph/Var. Every op checks shapes up front,
// computes its forward value with Eigen, and records a closure that adds the
// input gradients given the output gradient.

#include "docclf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace docclf {

enum class Padding { valid, same };

/// Output extent and leading pad for one spatial axis.
struct ConvGeometry {
  Index out = 0;
  Index pad_before = 0;
};

/// valid: out = (in - F) / stride + 1, i.e. in - F + 1 at stride 1.
/// same:  out = ceil(in / stride); the odd padding pixel goes after.
inline ConvGeometry conv_geometry(Index in, Index kernel, Index stride, Padding padding) {
  if (in <= 0) throw DimensionError("zero-extent spatial input");
  if (kernel <= 0) throw DimensionError("kernel extent must be positive");
  if (stride <= 0) throw DimensionError("stride must be positive");
  if (padding == Padding::valid) {
    if (kernel > in) {
      throw DimensionError("kernel " + std::to_string(kernel) + " exceeds input extent " +
                           std::to_string(in) + " under valid padding");
    }
    return {(in - kernel) / stride + 1, 0};
  }
  const Index out = (in + stride - 1) / stride;
  const Index total = std::max<Index>((out - 1) * stride + kernel - in, 0);
  return {out, total / 2};
}

namespace detail {

template <typename Scalar>
Graph<Scalar> &graph_of(const Var<Scalar> &v) {
  if (!v || !v->graph) throw std::invalid_argument("variable is not attached to a graph");
  return *v->graph;
}

template <typename Scalar>
void require_rank(const Var<Scalar> &v, Index rank, const char *op, const char *what) {
  if (v->value.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must be rank " + std::to_string(rank) +
                         ", got " + to_string(v->shape()));
  }
}

template <typename Scalar>
void require_same_shape(const Var<Scalar> &a, const Var<Scalar> &b, const char *op) {
  if (a->shape() != b->shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a->shape()) + " vs " +
                         to_string(b->shape()));
  }
}

template <typename Scalar>
using CMap = Eigen::Map<const RowMatrix<Scalar>>;
template <typename Scalar>
using MMap = Eigen::Map<RowMatrix<Scalar>>;

struct ConvShape {
  Index channels, h, w, kh, kw, stride, pad_h, pad_w, out_h, out_w;
};

template <typename Scalar>
void im2col(const Scalar *x, const ConvShape &s, RowMatrix<Scalar> &cols) {
  cols.resize(s.channels * s.kh * s.kw, s.out_h * s.out_w);
  for (Index c = 0; c < s.channels; ++c) {
    const Scalar *plane = x + c * s.h * s.w;
    for (Index i = 0; i < s.kh; ++i)
      for (Index j = 0; j < s.kw; ++j) {
        Scalar *row = cols.data() + ((c * s.kh + i) * s.kw + j) * s.out_h * s.out_w;
        for (Index oy = 0; oy < s.out_h; ++oy) {
          const Index y = oy * s.stride + i - s.pad_h;
          for (Index ox = 0; ox < s.out_w; ++ox) {
            const Index xx = ox * s.stride + j - s.pad_w;
            row[oy * s.out_w + ox] =
                (y >= 0 && y < s.h && xx >= 0 && xx < s.w) ? plane[y * s.w + xx] : Scalar(0);
          }
        }
      }
  }
}

template <typename Scalar>
void col2im_add(const RowMatrix<Scalar> &cols, const ConvShape &s, Scalar *dx) {
  for (Index c = 0; c < s.channels; ++c) {
    Scalar *plane = dx + c * s.h * s.w;
    for (Index i = 0; i < s.kh; ++i)
      for (Index j = 0; j < s.kw; ++j) {
        const Scalar *row = cols.data() + ((c * s.kh + i) * s.kw + j) * s.out_h * s.out_w;
        for (Index oy = 0; oy < s.out_h; ++oy) {
          const Index y = oy * s.stride + i - s.pad_h;
          if (y < 0 || y >= s.h) continue;
          for (Index ox = 0; ox < s.out_w; ++ox) {
            const Index xx = ox * s.stride + j - s.pad_w;
            if (xx >= 0 && xx < s.w) plane[y * s.w + xx] += row[oy * s.out_w + ox];
          }
        }
      }
  }
}

/// Elementwise op; df(x, y) is the derivative given input and output.
template <typename Scalar, typename F, typename DF>
Var<Scalar> unary(const Var<Scalar> &x, const char *kind, F f, DF df) {
  Tensor<Scalar> out(x->shape(), x->value.array().unaryExpr(f).eval());
  auto *xp = x.get();
  return graph_of(x).record(kind, {x}, std::move(out), [xp, df](Node<Scalar> *yp) {
    auto &gx = xp->grad_buffer();
    for (Index i = 0; i < gx.size(); ++i) gx[i] += yp->grad[i] * df(xp->value[i], yp->value[i]);
  });
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic and reductions

template <typename Scalar>
Var<Scalar> add(const Var<Scalar> &a, const Var<Scalar> &b) {
  detail::require_same_shape(a, b, "add");
  Tensor<Scalar> out(a->shape(), (a->value.array() + b->value.array()).eval());
  auto *ap = a.get();
  auto *bp = b.get();
  return detail::graph_of(a).record("add", {a, b}, std::move(out), [ap, bp](Node<Scalar> *yp) {
    if (ap->requires_grad) ap->grad_buffer().array() += yp->grad.array();
    if (bp->requires_grad) bp->grad_buffer().array() += yp->grad.array();
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar> &a, const Var<Scalar> &b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<Scalar> out(a->shape(), (a->value.array() * b->value.array()).eval());
  auto *ap = a.get();
  auto *bp = b.get();
  return detail::graph_of(a).record("mul", {a, b}, std::move(out), [ap, bp](Node<Scalar> *yp) {
    if (ap->requires_grad) ap->grad_buffer().array() += yp->grad.array() * bp->value.array();
    if (bp->requires_grad) bp->grad_buffer().array() += yp->grad.array() * ap->value.array();
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar> &x, Scalar factor) {
  return detail::unary(
      x, "scale", [factor](Scalar v) { return v * factor; },
      [factor](Scalar, Scalar) { return factor; });
}

/// Adds `bias` (shape [x.dim(axis)]) along `axis`, broadcasting over the rest.
template <typename Scalar>
Var<Scalar> add_bias(const Var<Scalar> &x, const Var<Scalar> &bias, Index axis) {
  if (axis < 0) axis += x->value.rank();
  if (axis < 0 || axis >= x->value.rank()) throw DimensionError("add_bias: axis out of range");
  if (bias->value.rank() != 1 || bias->dim(0) != x->dim(axis)) {
    throw DimensionError("add_bias: bias shape " + to_string(bias->shape()) +
                         " does not match axis extent of " + to_string(x->shape()));
  }
  const Shape &s = x->shape();
  Index outer = 1, inner = 1;
  for (Index i = 0; i < axis; ++i) outer *= s[i];
  for (Index i = axis + 1; i < x->value.rank(); ++i) inner *= s[i];
  const Index channels = s[axis];

  Tensor<Scalar> out = x->value;
  for (Index o = 0; o < outer; ++o)
    for (Index c = 0; c < channels; ++c)
      out.array().segment((o * channels + c) * inner, inner) += bias->value[c];

  auto *xp = x.get();
  auto *bp = bias.get();
  return detail::graph_of(x).record(
      "add_bias", {x, bias}, std::move(out), [xp, bp, outer, inner, channels](Node<Scalar> *yp) {
        if (xp->requires_grad) xp->grad_buffer().array() += yp->grad.array();
        if (!bp->requires_grad) return;
        auto &gb = bp->grad_buffer();
        for (Index o = 0; o < outer; ++o)
          for (Index c = 0; c < channels; ++c)
            gb[c] += yp->grad.array().segment((o * channels + c) * inner, inner).sum();
      });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar> &x) {
  auto *xp = x.get();
  return detail::graph_of(x).record("sum", {x}, Tensor<Scalar>::constant({1}, x->value.array().sum()),
                                    [xp](Node<Scalar> *yp) { xp->grad_buffer().array() += yp->grad[0]; });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar> &x) {
  return scale(sum(x), Scalar(1) / static_cast<Scalar>(x->value.size()));
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar> &x, Shape shape) {
  auto *xp = x.get();
  return detail::graph_of(x).record("reshape", {x}, x->value.reshaped(std::move(shape)),
                                    [xp](Node<Scalar> *yp) { xp->grad_buffer().array() += yp->grad.array(); });
}

/// Axis permutation: output axis i is input axis perm[i].
template <typename Scalar>
Var<Scalar> permute(const Var<Scalar> &x, const std::vector<Index> &perm) {
  const Index rank = x->value.rank();
  if (static_cast<Index>(perm.size()) != rank) throw DimensionError("permute: rank mismatch");
  std::vector<Index> sorted(perm);
  std::sort(sorted.begin(), sorted.end());
  for (Index i = 0; i < rank; ++i)
    if (sorted[i] != i) throw DimensionError("permute: not a permutation");

  const Shape &in_shape = x->shape();
  std::vector<Index> in_stride(rank, 1);
  for (Index i = rank - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * in_shape[i + 1];
  Shape out_shape(rank);
  for (Index i = 0; i < rank; ++i) out_shape[i] = in_shape[perm[i]];

  // Source offset of every output element; backward scatters through it.
  const Index n = x->value.size();
  auto source = std::make_shared<std::vector<Index>>(n);
  std::vector<Index> idx(rank, 0);
  for (Index o = 0; o < n; ++o) {
    Index off = 0;
    for (Index i = 0; i < rank; ++i) off += idx[i] * in_stride[perm[i]];
    (*source)[o] = off;
    for (Index i = rank - 1; i >= 0; --i) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  Tensor<Scalar> out(out_shape);
  for (Index o = 0; o < n; ++o) out[o] = x->value[(*source)[o]];

  auto *xp = x.get();
  return detail::graph_of(x).record("permute", {x}, std::move(out), [xp, source](Node<Scalar> *yp) {
    auto &gx = xp->grad_buffer();
    for (Index o = 0; o < yp->grad.size(); ++o) gx[(*source)[o]] += yp->grad[o];
  });
}

/// [B, L, D] -> [B, D] at sequence position `pos`.
template <typename Scalar>
Var<Scalar> select_token(const Var<Scalar> &x, Index pos) {
  detail::require_rank(x, 3, "select_token", "input");
  const Index b = x->dim(0), l = x->dim(1), d = x->dim(2);
  if (pos < 0 || pos >= l) throw DimensionError("select_token: position out of range");
  Tensor<Scalar> out({b, d});
  for (Index i = 0; i < b; ++i)
    out.array().segment(i * d, d) = x->value.array().segment((i * l + pos) * d, d);
  auto *xp = x.get();
  return detail::graph_of(x).record("select_token", {x}, std::move(out),
                                    [xp, b, l, d, pos](Node<Scalar> *yp) {
                                      auto &gx = xp->grad_buffer();
                                      for (Index i = 0; i < b; ++i)
                                        gx.array().segment((i * l + pos) * d, d) +=
                                            yp->grad.array().segment(i * d, d);
                                    });
}

// ---------------------------------------------------------------------------
// Linear algebra

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar> &a, const Var<Scalar> &b) {
  detail::require_rank(a, 2, "matmul", "lhs");
  detail::require_rank(b, 2, "matmul", "rhs");
  const Index m = a->dim(0), k = a->dim(1), n = b->dim(1);
  if (b->dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ " + to_string(a->shape()) + " x " +
                         to_string(b->shape()));
  }
  Tensor<Scalar> out({m, n});
  out.matrix(m, n).noalias() = a->value.matrix(m, k) * b->value.matrix(k, n);
  auto *ap = a.get();
  auto *bp = b.get();
  return detail::graph_of(a).record("matmul", {a, b}, std::move(out), [ap, bp, m, k, n](Node<Scalar> *yp) {
    const auto gy = yp->grad.matrix(m, n);
    if (ap->requires_grad) ap->grad_buffer().matrix(m, k).noalias() += gy * bp->value.matrix(k, n).transpose();
    if (bp->requires_grad) bp->grad_buffer().matrix(k, n).noalias() += ap->value.matrix(m, k).transpose() * gy;
  });
}

/// Batched product: a [B, M, K] times b [B, K, N], or b [B, N, K] taken
/// transposed when `transpose_b`.
template <typename Scalar>
Var<Scalar> batched_matmul(const Var<Scalar> &a, const Var<Scalar> &b, bool transpose_b = false) {
  detail::require_rank(a, 3, "batched_matmul", "lhs");
  detail::require_rank(b, 3, "batched_matmul", "rhs");
  const Index batch = a->dim(0), m = a->dim(1), k = a->dim(2);
  const Index n = transpose_b ? b->dim(1) : b->dim(2);
  if (b->dim(0) != batch || (transpose_b ? b->dim(2) : b->dim(1)) != k) {
    throw DimensionError("batched_matmul: incompatible " + to_string(a->shape()) + " x " +
                         to_string(b->shape()));
  }
  using CMap = detail::CMap<Scalar>;
  using MMap = detail::MMap<Scalar>;
  const Index brows = b->dim(1), bcols = b->dim(2);
  Tensor<Scalar> out({batch, m, n});
  for (Index i = 0; i < batch; ++i) {
    CMap am(a->value.data() + i * m * k, m, k);
    CMap bm(b->value.data() + i * brows * bcols, brows, bcols);
    MMap om(out.data() + i * m * n, m, n);
    if (transpose_b)
      om.noalias() = am * bm.transpose();
    else
      om.noalias() = am * bm;
  }
  auto *ap = a.get();
  auto *bp = b.get();
  return detail::graph_of(a).record(
      "batched_matmul", {a, b}, std::move(out),
      [ap, bp, batch, m, k, n, brows, bcols, transpose_b](Node<Scalar> *yp) {
        for (Index i = 0; i < batch; ++i) {
          CMap gy(yp->grad.data() + i * m * n, m, n);
          CMap am(ap->value.data() + i * m * k, m, k);
          CMap bm(bp->value.data() + i * brows * bcols, brows, bcols);
          if (ap->requires_grad) {
            MMap ga(ap->grad_buffer().data() + i * m * k, m, k);
            if (transpose_b)
              ga.noalias() += gy * bm;
            else
              ga.noalias() += gy * bm.transpose();
          }
          if (bp->requires_grad) {
            MMap gb(bp->grad_buffer().data() + i * brows * bcols, brows, bcols);
            if (transpose_b)
              gb.noalias() += gy.transpose() * am;
            else
              gb.noalias() += am.transpose() * gy;
          }
        }
      });
}

/// x [..., K] times weight [K, N], plus bias [N] when given.
template <typename Scalar>
Var<Scalar> linear(const Var<Scalar> &x, const Var<Scalar> &weight, const Var<Scalar> &bias) {
  detail::require_rank(weight, 2, "linear", "weight");
  const Index k = weight->dim(0), n = weight->dim(1);
  if (x->dim(-1) != k) {
    throw DimensionError("linear: input feature size " + std::to_string(x->dim(-1)) +
                         " does not match weight " + to_string(weight->shape()));
  }
  const bool flat = x->value.rank() == 2;
  Shape out_shape = x->shape();
  out_shape.back() = n;
  auto y = matmul(flat ? x : reshape(x, {x->value.size() / k, k}), weight);
  if (bias) y = add_bias(y, bias, 1);
  return flat ? y : reshape(y, std::move(out_shape));
}

// ---------------------------------------------------------------------------
// Activations

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar> &x) {
  return detail::unary(
      x, "relu", [](Scalar v) { return v > Scalar(0) ? v : Scalar(0); },
      [](Scalar v, Scalar) { return v > Scalar(0) ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar> &x) {
  return detail::unary(
      x, "sigmoid", [](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); },
      [](Scalar, Scalar y) { return y * (Scalar(1) - y); });
}

/// x * sigmoid(x).
template <typename Scalar>
Var<Scalar> swish(const Var<Scalar> &x) {
  return detail::unary(
      x, "swish", [](Scalar v) { return v / (Scalar(1) + std::exp(-v)); },
      [](Scalar v, Scalar) {
        const Scalar s = Scalar(1) / (Scalar(1) + std::exp(-v));
        return s * (Scalar(1) + v * (Scalar(1) - s));
      });
}

/// erf-based GELU.
template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar> &x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return detail::unary(
      x, "gelu", [](Scalar v) { return Scalar(0.5) * v * (Scalar(1) + std::erf(v * Scalar(inv_sqrt2))); },
      [](Scalar v, Scalar) {
        return Scalar(0.5) * (Scalar(1) + std::erf(v * Scalar(inv_sqrt2))) +
               v * Scalar(inv_sqrt2pi) * std::exp(Scalar(-0.5) * v * v);
      });
}

/// Softmax over the last axis, max-subtracted.
template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar> &x) {
  const Index c = x->dim(-1);
  const Index rows = x->value.size() / c;
  Tensor<Scalar> out(x->shape());
  const auto xm = x->value.matrix(rows, c);
  auto om = out.matrix(rows, c);
  for (Index r = 0; r < rows; ++r) {
    om.row(r) = (xm.row(r).array() - xm.row(r).maxCoeff()).exp().matrix();
    om.row(r) /= om.row(r).sum();
  }
  auto *xp = x.get();
  return detail::graph_of(x).record("softmax", {x}, std::move(out), [xp, rows, c](Node<Scalar> *yp) {
    auto gx = xp->grad_buffer().matrix(rows, c);
    const auto gy = yp->grad.matrix(rows, c);
    const auto ym = yp->value.matrix(rows, c);
    for (Index r = 0; r < rows; ++r) {
      const Scalar dot = gy.row(r).dot(ym.row(r));
      gx.row(r).array() += ym.row(r).array() * (gy.row(r).array() - dot);
    }
  });
}

/// Replaces attention scores of padded keys with a large negative value.
/// scores is [B*heads, Lq, Lk]; key_mask is [B, Lk], nonzero for real tokens.
template <typename Scalar>
Var<Scalar> mask_keys(const Var<Scalar> &scores, std::span<const std::uint8_t> key_mask, Index heads) {
  detail::require_rank(scores, 3, "mask_keys", "scores");
  const Index bh = scores->dim(0), lq = scores->dim(1), lk = scores->dim(2);
  if (heads <= 0 || bh % heads != 0 || static_cast<Index>(key_mask.size()) != (bh / heads) * lk) {
    throw DimensionError("mask_keys: mask does not match scores " + to_string(scores->shape()));
  }
  auto keep = std::make_shared<std::vector<std::uint8_t>>(bh * lq * lk);
  Tensor<Scalar> out = scores->value;
  for (Index i = 0; i < bh; ++i)
    for (Index q = 0; q < lq; ++q)
      for (Index k = 0; k < lk; ++k) {
        const Index off = (i * lq + q) * lk + k;
        (*keep)[off] = key_mask[(i / heads) * lk + k] != 0;
        if (!(*keep)[off]) out[off] = Scalar(-1e9);
      }
  auto *sp = scores.get();
  return detail::graph_of(scores).record("mask_keys", {scores}, std::move(out), [sp, keep](Node<Scalar> *yp) {
    auto &g = sp->grad_buffer();
    for (Index i = 0; i < g.size(); ++i)
      if ((*keep)[i]) g[i] += yp->grad[i];
  });
}

/// Inverted dropout; identity when the graph is not in training mode.
template <typename Scalar>
Var<Scalar> dropout(const Var<Scalar> &x, double rate) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0, 1)");
  auto &g = detail::graph_of(x);
  if (!g.training() || rate == 0.0) return x;
  const Scalar keep_scale = Scalar(1.0 / (1.0 - rate));
  auto mask = std::make_shared<Tensor<Scalar>>(x->shape());
  std::bernoulli_distribution keep(1.0 - rate);
  for (Index i = 0; i < mask->size(); ++i) (*mask)[i] = keep(g.rng()) ? keep_scale : Scalar(0);
  Tensor<Scalar> out(x->shape(), (x->value.array() * mask->array()).eval());
  auto *xp = x.get();
  return g.record("dropout", {x}, std::move(out), [xp, mask](Node<Scalar> *yp) {
    xp->grad_buffer().array() += yp->grad.array() * mask->array();
  });
}

// ---------------------------------------------------------------------------
// Convolution and pooling

/// input [N,C,H,W], filters [K,C,Fh,Fw], optional bias [K] (pass nullptr).
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar> &input, const Var<Scalar> &filters, const Var<Scalar> &bias,
                   Index stride, Padding padding) {
  detail::require_rank(input, 4, "conv2d", "input");
  detail::require_rank(filters, 4, "conv2d", "filters");
  const Index n = input->dim(0), c = input->dim(1), h = input->dim(2), w = input->dim(3);
  const Index k = filters->dim(0), kh = filters->dim(2), kw = filters->dim(3);
  if (filters->dim(1) != c) {
    throw DimensionError("conv2d: filter channels " + std::to_string(filters->dim(1)) +
                         " do not match input channels " + std::to_string(c));
  }
  if (bias && (bias->value.rank() != 1 || bias->dim(0) != k))
    throw DimensionError("conv2d: bias must have one entry per filter");
  const auto geo_h = conv_geometry(h, kh, stride, padding);
  const auto geo_w = conv_geometry(w, kw, stride, padding);
  const detail::ConvShape cs{c, h, w, kh, kw, stride, geo_h.pad_before, geo_w.pad_before, geo_h.out, geo_w.out};
  const Index ckk = c * kh * kw, spatial = cs.out_h * cs.out_w;
  const bool pointwise = kh == 1 && kw == 1 && stride == 1;

  Tensor<Scalar> out({n, k, cs.out_h, cs.out_w});
  const auto wm = filters->value.matrix(k, ckk);
  RowMatrix<Scalar> cols;
  for (Index i = 0; i < n; ++i) {
    detail::MMap<Scalar> om(out.data() + i * k * spatial, k, spatial);
    const Scalar *xi = input->value.data() + i * c * h * w;
    if (pointwise) {
      om.noalias() = wm * detail::CMap<Scalar>(xi, c, spatial);
    } else {
      detail::im2col(xi, cs, cols);
      om.noalias() = wm * cols;
    }
    if (bias) om.colwise() += bias->value.array().matrix();
  }

  auto *xp = input.get();
  auto *fp = filters.get();
  auto *bp = bias.get();
  std::vector<Var<Scalar>> inputs{input, filters};
  if (bias) inputs.push_back(bias);
  return detail::graph_of(input).record(
      "conv2d", std::move(inputs), std::move(out),
      [xp, fp, bp, cs, n, k, ckk, spatial, pointwise](Node<Scalar> *yp) {
        RowMatrix<Scalar> cols, dcols;
        const auto wm = fp->value.matrix(k, ckk);
        const Index in_size = cs.channels * cs.h * cs.w;
        for (Index i = 0; i < n; ++i) {
          detail::CMap<Scalar> gy(yp->grad.data() + i * k * spatial, k, spatial);
          const Scalar *xi = xp->value.data() + i * in_size;
          if (bp && bp->requires_grad) bp->grad_buffer().array() += gy.rowwise().sum().array();
          if (fp->requires_grad) {
            auto gw = fp->grad_buffer().matrix(k, ckk);
            if (pointwise) {
              gw.noalias() += gy * detail::CMap<Scalar>(xi, cs.channels, spatial).transpose();
            } else {
              detail::im2col(xi, cs, cols);
              gw.noalias() += gy * cols.transpose();
            }
          }
          if (xp->requires_grad) {
            Scalar *gx = xp->grad_buffer().data() + i * in_size;
            if (pointwise) {
              detail::MMap<Scalar>(gx, cs.channels, spatial).noalias() += wm.transpose() * gy;
            } else {
              dcols.noalias() = wm.transpose() * gy;
              detail::col2im_add(dcols, cs, gx);
            }
          }
        }
      });
}

/// input [N,C,H,W], filters [C,1,Fh,Fw], optional bias [C]. Output channel c
/// reads input channel c only.
template <typename Scalar>
Var<Scalar> depthwise_conv2d(const Var<Scalar> &input, const Var<Scalar> &filters, const Var<Scalar> &bias,
                             Index stride, Padding padding) {
  detail::require_rank(input, 4, "depthwise_conv2d", "input");
  detail::require_rank(filters, 4, "depthwise_conv2d", "filters");
  const Index n = input->dim(0), c = input->dim(1), h = input->dim(2), w = input->dim(3);
  const Index kh = filters->dim(2), kw = filters->dim(3);
  if (filters->dim(0) != c || filters->dim(1) != 1) {
    throw DimensionError("depthwise_conv2d: filters " + to_string(filters->shape()) +
                         " need one plane per input channel (" + std::to_string(c) + ")");
  }
  if (bias && (bias->value.rank() != 1 || bias->dim(0) != c))
    throw DimensionError("depthwise_conv2d: bias must have one entry per channel");
  const auto geo_h = conv_geometry(h, kh, stride, padding);
  const auto geo_w = conv_geometry(w, kw, stride, padding);
  const Index oh = geo_h.out, ow = geo_w.out, ph = geo_h.pad_before, pw = geo_w.pad_before;

  Tensor<Scalar> out({n, c, oh, ow});
  for (Index p = 0; p < n * c; ++p) {
    const Index ch = p % c;
    const Scalar *x = input->value.data() + p * h * w;
    const Scalar *f = filters->value.data() + ch * kh * kw;
    Scalar *o = out.data() + p * oh * ow;
    const Scalar b0 = bias ? bias->value[ch] : Scalar(0);
    for (Index oy = 0; oy < oh; ++oy)
      for (Index ox = 0; ox < ow; ++ox) {
        Scalar acc = b0;
        for (Index a = 0; a < kh; ++a) {
          const Index y = oy * stride + a - ph;
          if (y < 0 || y >= h) continue;
          for (Index b = 0; b < kw; ++b) {
            const Index xx = ox * stride + b - pw;
            if (xx >= 0 && xx < w) acc += f[a * kw + b] * x[y * w + xx];
          }
        }
        o[oy * ow + ox] = acc;
      }
  }

  auto *xp = input.get();
  auto *fp = filters.get();
  auto *bp = bias.get();
  std::vector<Var<Scalar>> inputs{input, filters};
  if (bias) inputs.push_back(bias);
  return detail::graph_of(input).record(
      "depthwise_conv2d", std::move(inputs), std::move(out),
      [xp, fp, bp, n, c, h, w, kh, kw, stride, ph, pw, oh, ow](Node<Scalar> *yp) {
        Scalar *gxb = xp->requires_grad ? xp->grad_buffer().data() : nullptr;
        Scalar *gfb = fp->requires_grad ? fp->grad_buffer().data() : nullptr;
        Scalar *gbb = (bp && bp->requires_grad) ? bp->grad_buffer().data() : nullptr;
        for (Index p = 0; p < n * c; ++p) {
          const Index ch = p % c;
          const Scalar *x = xp->value.data() + p * h * w;
          const Scalar *f = fp->value.data() + ch * kh * kw;
          const Scalar *go = yp->grad.data() + p * oh * ow;
          for (Index oy = 0; oy < oh; ++oy)
            for (Index ox = 0; ox < ow; ++ox) {
              const Scalar gv = go[oy * ow + ox];
              if (gbb) gbb[ch] += gv;
              for (Index a = 0; a < kh; ++a) {
                const Index y = oy * stride + a - ph;
                if (y < 0 || y >= h) continue;
                for (Index b = 0; b < kw; ++b) {
                  const Index xx = ox * stride + b - pw;
                  if (xx < 0 || xx >= w) continue;
                  if (gfb) gfb[ch * kh * kw + a * kw + b] += gv * x[y * w + xx];
                  if (gxb) gxb[p * h * w + y * w + xx] += gv * f[a * kw + b];
                }
              }
            }
        }
      });
}

/// Max over P x P windows (no padding). Backward routes each window's
/// gradient to its first maximal element in row-major scan order.
template <typename Scalar>
Var<Scalar> maxpool(const Var<Scalar> &input, Index window, Index stride) {
  detail::require_rank(input, 4, "maxpool", "input");
  const Index n = input->dim(0), c = input->dim(1), h = input->dim(2), w = input->dim(3);
  if (window <= 0 || stride <= 0) throw DimensionError("maxpool: window and stride must be positive");
  if (window > h || window > w) {
    throw DimensionError("maxpool: window " + std::to_string(window) + " exceeds spatial extent of " +
                         to_string(input->shape()));
  }
  const Index oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  Tensor<Scalar> out({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<Index>>(out.size());
  for (Index p = 0; p < n * c; ++p) {
    const Scalar *x = input->value.data() + p * h * w;
    for (Index oy = 0; oy < oh; ++oy)
      for (Index ox = 0; ox < ow; ++ox) {
        Index best = oy * stride * w + ox * stride;
        for (Index a = 0; a < window; ++a)
          for (Index b = 0; b < window; ++b) {
            const Index off = (oy * stride + a) * w + ox * stride + b;
            if (x[off] > x[best]) best = off;
          }
        const Index o = (p * oh + oy) * ow + ox;
        out[o] = x[best];
        (*argmax)[o] = p * h * w + best;
      }
  }
  auto *xp = input.get();
  return detail::graph_of(input).record("maxpool", {input}, std::move(out), [xp, argmax](Node<Scalar> *yp) {
    auto &gx = xp->grad_buffer();
    for (Index o = 0; o < yp->grad.size(); ++o) gx[(*argmax)[o]] += yp->grad[o];
  });
}

/// [N,C,H,W] -> [N,C].
template <typename Scalar>
Var<Scalar> global_avg_pool(const Var<Scalar> &input) {
  detail::require_rank(input, 4, "global_avg_pool", "input");
  const Index n = input->dim(0), c = input->dim(1), hw = input->dim(2) * input->dim(3);
  Tensor<Scalar> out({n, c});
  out.matrix(n * c, 1) = input->value.matrix(n * c, hw).rowwise().mean();
  auto *xp = input.get();
  return detail::graph_of(input).record("global_avg_pool", {input}, std::move(out), [xp, n, c, hw](Node<Scalar> *yp) {
    xp->grad_buffer().matrix(n * c, hw).colwise() += yp->grad.matrix(n * c, 1).col(0) / static_cast<Scalar>(hw);
  });
}

/// x [N,C,H,W] scaled per (sample, channel) by gates [N,C].
template <typename Scalar>
Var<Scalar> scale_channels(const Var<Scalar> &x, const Var<Scalar> &gates) {
  detail::require_rank(x, 4, "scale_channels", "input");
  const Index n = x->dim(0), c = x->dim(1), hw = x->dim(2) * x->dim(3);
  if (gates->shape() != Shape{n, c}) {
    throw DimensionError("scale_channels: gates " + to_string(gates->shape()) + " do not match " +
                         to_string(x->shape()));
  }
  Tensor<Scalar> out(x->shape());
  out.matrix(n * c, hw) = (x->value.matrix(n * c, hw).array().colwise() * gates->value.array()).matrix();
  auto *xp = x.get();
  auto *sp = gates.get();
  return detail::graph_of(x).record("scale_channels", {x, gates}, std::move(out), [xp, sp, n, c, hw](Node<Scalar> *yp) {
    const auto gy = yp->grad.matrix(n * c, hw);
    if (xp->requires_grad)
      xp->grad_buffer().matrix(n * c, hw).array() += gy.array().colwise() * sp->value.array();
    if (sp->requires_grad)
      sp->grad_buffer().array() += (gy.array() * xp->value.matrix(n * c, hw).array()).rowwise().sum();
  });
}

// ---------------------------------------------------------------------------
// Normalization

/// Running statistics of a batch-norm layer, carried between steps.
template <typename Scalar>
struct NormStats {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  Array mean;
  Array var;

  explicit NormStats(Index channels = 0) : mean(Array::Zero(channels)), var(Array::Ones(channels)) {}
};

/// Per-channel normalization over (N, H, W) with learnable scale/shift. In
/// training mode, batch statistics are used and `stats` (if any) is updated;
/// in evaluation mode, or when `frozen` is set, the running statistics are
/// used and left untouched.
template <typename Scalar>
Var<Scalar> batch_norm(const Var<Scalar> &x, const Var<Scalar> &gamma, const Var<Scalar> &beta,
                       NormStats<Scalar> *stats, Scalar momentum = Scalar(0.1), Scalar eps = Scalar(1e-5),
                       bool frozen = false) {
  using Array = typename NormStats<Scalar>::Array;
  const Index rank = x->value.rank();
  if (rank != 2 && rank != 4) throw DimensionError("batch_norm: input must be [N,C] or [N,C,H,W]");
  const Index n = x->dim(0), c = x->dim(1), hw = rank == 4 ? x->dim(2) * x->dim(3) : 1;
  if (gamma->shape() != Shape{c} || beta->shape() != Shape{c})
    throw DimensionError("batch_norm: scale/shift must be [C]");
  auto &g = detail::graph_of(x);
  const bool use_batch = (g.training() && !frozen) || stats == nullptr;
  const Scalar count = static_cast<Scalar>(n * hw);
  const auto xm = x->value.matrix(n * c, hw);

  Array mu = Array::Zero(c), var = Array::Zero(c);
  if (use_batch) {
    for (Index r = 0; r < n * c; ++r) mu[r % c] += xm.row(r).sum();
    mu /= count;
    for (Index r = 0; r < n * c; ++r) var[r % c] += (xm.row(r).array() - mu[r % c]).square().sum();
    var /= count;
    if (stats && g.training()) {
      const Scalar unbiased = count > 1 ? count / (count - 1) : Scalar(1);
      stats->mean = (Scalar(1) - momentum) * stats->mean + momentum * mu;
      stats->var = (Scalar(1) - momentum) * stats->var + momentum * var * unbiased;
    }
  } else {
    mu = stats->mean;
    var = stats->var;
  }
  auto inv_std = std::make_shared<Array>((var + eps).rsqrt());
  auto xhat = std::make_shared<Tensor<Scalar>>(x->shape());
  Tensor<Scalar> out(x->shape());
  auto hm = xhat->matrix(n * c, hw);
  auto om = out.matrix(n * c, hw);
  for (Index r = 0; r < n * c; ++r) {
    const Index ch = r % c;
    hm.row(r) = ((xm.row(r).array() - mu[ch]) * (*inv_std)[ch]).matrix();
    om.row(r) = (hm.row(r).array() * gamma->value[ch] + beta->value[ch]).matrix();
  }

  auto *xp = x.get();
  auto *gp = gamma.get();
  auto *bp = beta.get();
  return g.record("batch_norm", {x, gamma, beta}, std::move(out),
                  [xp, gp, bp, xhat, inv_std, n, c, hw, count, use_batch](Node<Scalar> *yp) {
                    const auto gy = yp->grad.matrix(n * c, hw);
                    const auto hm = xhat->matrix(n * c, hw);
                    Array sum_gy = Array::Zero(c), sum_gy_xhat = Array::Zero(c);
                    for (Index r = 0; r < n * c; ++r) {
                      sum_gy[r % c] += gy.row(r).sum();
                      sum_gy_xhat[r % c] += gy.row(r).dot(hm.row(r));
                    }
                    if (gp->requires_grad) gp->grad_buffer().array() += sum_gy_xhat;
                    if (bp->requires_grad) bp->grad_buffer().array() += sum_gy;
                    if (!xp->requires_grad) return;
                    auto gx = xp->grad_buffer().matrix(n * c, hw);
                    for (Index r = 0; r < n * c; ++r) {
                      const Index ch = r % c;
                      const Scalar k = gp->value[ch] * (*inv_std)[ch];
                      if (use_batch) {
                        gx.row(r).array() += k * (gy.row(r).array() - sum_gy[ch] / count -
                                                  hm.row(r).array() * (sum_gy_xhat[ch] / count));
                      } else {
                        gx.row(r).array() += k * gy.row(r).array();
                      }
                    }
                  });
}

/// Normalization over the last axis with learnable scale/shift.
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar> &x, const Var<Scalar> &gamma, const Var<Scalar> &beta,
                       Scalar eps = Scalar(1e-5)) {
  const Index d = x->dim(-1);
  const Index rows = x->value.size() / d;
  if (gamma->shape() != Shape{d} || beta->shape() != Shape{d})
    throw DimensionError("layer_norm: scale/shift must match the last axis");
  auto xhat = std::make_shared<Tensor<Scalar>>(x->shape());
  auto inv_std = std::make_shared<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(rows);
  Tensor<Scalar> out(x->shape());
  const auto xm = x->value.matrix(rows, d);
  auto hm = xhat->matrix(rows, d);
  auto om = out.matrix(rows, d);
  for (Index r = 0; r < rows; ++r) {
    const Scalar mu = xm.row(r).mean();
    const Scalar var = (xm.row(r).array() - mu).square().mean();
    (*inv_std)[r] = Scalar(1) / std::sqrt(var + eps);
    hm.row(r) = ((xm.row(r).array() - mu) * (*inv_std)[r]).matrix();
    om.row(r) = (hm.row(r).array() * gamma->value.array().transpose() + beta->value.array().transpose()).matrix();
  }
  auto *xp = x.get();
  auto *gp = gamma.get();
  auto *bp = beta.get();
  return detail::graph_of(x).record(
      "layer_norm", {x, gamma, beta}, std::move(out), [xp, gp, bp, xhat, inv_std, rows, d](Node<Scalar> *yp) {
        const auto gy = yp->grad.matrix(rows, d);
        const auto hm = xhat->matrix(rows, d);
        if (gp->requires_grad)
          gp->grad_buffer().array() += (gy.array() * hm.array()).colwise().sum().transpose();
        if (bp->requires_grad) bp->grad_buffer().array() += gy.array().colwise().sum().transpose();
        if (!xp->requires_grad) return;
        auto gx = xp->grad_buffer().matrix(rows, d);
        for (Index r = 0; r < rows; ++r) {
          const Eigen::Array<Scalar, 1, Eigen::Dynamic> gh = gy.row(r).array() * gp->value.array().transpose();
          const Scalar m1 = gh.mean();
          const Scalar m2 = (gh * hm.row(r).array()).mean();
          gx.row(r).array() += (*inv_std)[r] * (gh - m1 - hm.row(r).array() * m2);
        }
      });
}

// ---------------------------------------------------------------------------
// Embedding and loss

/// Rows of `table` [V, D] gathered by `ids` laid out as `ids_shape`; output
/// shape is ids_shape + [D].
template <typename Scalar>
Var<Scalar> embedding(std::span<const std::int32_t> ids, const Shape &ids_shape, const Var<Scalar> &table) {
  detail::require_rank(table, 2, "embedding", "table");
  const Index vocab = table->dim(0), d = table->dim(1);
  if (num_elements(ids_shape) != static_cast<Index>(ids.size()))
    throw DimensionError("embedding: id count does not match id shape");
  for (auto id : ids) {
    if (id < 0 || id >= vocab)
      throw DimensionError("embedding: id " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab));
  }
  Shape out_shape = ids_shape;
  out_shape.push_back(d);
  Tensor<Scalar> out(out_shape);
  for (std::size_t i = 0; i < ids.size(); ++i)
    out.array().segment(static_cast<Index>(i) * d, d) = table->value.array().segment(ids[i] * d, d);
  auto id_copy = std::make_shared<std::vector<std::int32_t>>(ids.begin(), ids.end());
  auto *tp = table.get();
  return detail::graph_of(table).record("embedding", {table}, std::move(out), [tp, id_copy, d](Node<Scalar> *yp) {
    auto &gt = tp->grad_buffer();
    for (std::size_t i = 0; i < id_copy->size(); ++i)
      gt.array().segment((*id_copy)[i] * d, d) += yp->grad.array().segment(static_cast<Index>(i) * d, d);
  });
}

/// Mean over the batch of -log softmax(logits)[label], evaluated with the
/// row maximum subtracted. d loss / d logits = (softmax - onehot) / N.
template <typename Scalar>
Var<Scalar> softmax_crossentropy(const Var<Scalar> &logits, std::span<const int> labels) {
  detail::require_rank(logits, 2, "softmax_crossentropy", "logits");
  const Index n = logits->dim(0), c = logits->dim(1);
  if (static_cast<Index>(labels.size()) != n) throw DimensionError("softmax_crossentropy: one label per row required");
  for (int label : labels) {
    if (label < 0 || label >= c)
      throw std::out_of_range("softmax_crossentropy: label " + std::to_string(label) + " outside [0, " +
                              std::to_string(c) + ")");
  }
  auto probs = std::make_shared<RowMatrix<Scalar>>(n, c);
  const auto lm = logits->value.matrix(n, c);
  Scalar loss = 0;
  for (Index r = 0; r < n; ++r) {
    const Eigen::Array<Scalar, 1, Eigen::Dynamic> shifted = lm.row(r).array() - lm.row(r).maxCoeff();
    const Scalar lse = std::log(shifted.exp().sum());
    probs->row(r) = (shifted - lse).exp().matrix();
    loss -= shifted[labels[r]] - lse;
  }
  loss /= static_cast<Scalar>(n);
  auto label_copy = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  auto *lp = logits.get();
  return detail::graph_of(logits).record("softmax_crossentropy", {logits}, Tensor<Scalar>::constant({1}, loss),
                                         [lp, probs, label_copy, n, c](Node<Scalar> *yp) {
                                           auto gl = lp->grad_buffer().matrix(n, c);
                                           const Scalar s = yp->grad[0] / static_cast<Scalar>(n);
                                           gl += s * (*probs);
                                           for (Index r = 0; r < n; ++r) gl(r, (*label_copy)[r]) -= s;
                                         });
}

} // namespace docclf

#endif // DOCCLF_OPS_HPP
