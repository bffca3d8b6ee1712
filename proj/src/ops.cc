// mceend/ops.cc

#include "mceend/ops.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mceend {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// c (+)= op(a) op(b)
void gemm(ConstMap a, bool ta, ConstMap b, bool tb, MutMap c, bool accumulate) {
  if (!ta && !tb) {
    if (accumulate) c.noalias() += a * b; else c.noalias() = a * b;
  } else if (ta && !tb) {
    if (accumulate) c.noalias() += a.transpose() * b; else c.noalias() = a.transpose() * b;
  } else if (!ta && tb) {
    if (accumulate) c.noalias() += a * b.transpose(); else c.noalias() = a * b.transpose();
  } else {
    if (accumulate) c.noalias() += a.transpose() * b.transpose();
    else c.noalias() = a.transpose() * b.transpose();
  }
}

struct MatView {
  std::size_t batch = 1;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool batched = false;
};

MatView mat_view(const Tensor &t, const char *what) {
  if (t.rank() == 2) return {1, t.dim(0), t.dim(1), false};
  if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2), true};
  throw ShapeError(std::string(what) + ": expected a matrix or batch of matrices, got " +
                   shape_str(t.shape()));
}

void require_same_shape(const Tensor &a, const Tensor &b, const char *op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
}

// Rows axis of a matrix-like tensor and the sizes around it.
struct ColumnLayout {
  std::size_t outer = 1;  // batch
  std::size_t rows = 0;
  std::size_t cols = 0;
};

ColumnLayout column_layout(const Tensor &x, const char *op) {
  if (x.rank() < 2) {
    throw ShapeError(std::string(op) + ": needs rank >= 2, got " + shape_str(x.shape()));
  }
  ColumnLayout l;
  l.rows = x.dim(x.rank() - 2);
  l.cols = x.dim(x.rank() - 1);
  l.outer = x.numel() / (l.rows * l.cols);
  return l;
}

struct AxisLayout {
  std::size_t outer = 1;
  std::size_t len = 0;
  std::size_t inner = 1;
};

AxisLayout axis_layout(const Shape &shape, std::size_t axis) {
  AxisLayout l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  l.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

void check_axis(const Tensor &x, std::size_t axis, const char *op) {
  if (axis >= x.rank()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for " + shape_str(x.shape()));
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor &x, std::string_view name, Fwd f, Deriv df) {
  Tensor y(x.shape());
  auto xs = x.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = f(xs[i]);
  if (needs_grad({&x})) {
    Tape::current()->record(y, name, [x, y, df]() mutable {
      auto gx = grad_sink(x);
      auto gy = y.grad();
      auto xs = x.data();
      auto ys = y.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * df(xs[i], ys[i]);
    });
  }
  return y;
}

// Walks `in` in the order of the permuted output, calling fn(out_i, in_i).
template <typename Fn>
void for_each_permuted(const Shape &in_shape, std::span<const std::size_t> axes, Fn fn) {
  const std::size_t rank = in_shape.size();
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * in_shape[i];
  std::vector<std::size_t> out_shape(rank), stride(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[axes[i]];
    stride[i] = in_stride[axes[i]];
  }
  const std::size_t total = shape_numel(in_shape);
  const std::size_t last = out_shape[rank - 1];
  const std::size_t last_stride = stride[rank - 1];
  std::vector<std::size_t> counter(rank, 0);
  std::size_t in_off = 0;
  for (std::size_t out = 0; out < total; out += last) {
    for (std::size_t k = 0; k < last; ++k) fn(out + k, in_off + k * last_stride);
    // advance all but the innermost axis
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      ++counter[ax];
      in_off += stride[ax];
      if (counter[ax] < out_shape[ax]) break;
      in_off -= stride[ax] * out_shape[ax];
      counter[ax] = 0;
    }
  }
}

}  // namespace

Tensor matmul(const Tensor &a, const Tensor &b, bool trans_a, bool trans_b) {
  MatView va = mat_view(a, "matmul");
  MatView vb = mat_view(b, "matmul");
  const std::size_t m = trans_a ? va.cols : va.rows;
  const std::size_t k = trans_a ? va.rows : va.cols;
  const std::size_t kb = trans_b ? vb.cols : vb.rows;
  const std::size_t n = trans_b ? vb.rows : vb.cols;
  if (k != kb || (va.batched && vb.batched && va.batch != vb.batch)) {
    throw ShapeError("matmul: dimension mismatch between " + shape_str(a.shape()) +
                     (trans_a ? "^T" : "") + " and " + shape_str(b.shape()) +
                     (trans_b ? "^T" : ""));
  }
  const bool batched = va.batched || vb.batched;
  const std::size_t batch = va.batched ? va.batch : vb.batch;
  Tensor c(batched ? Shape{batch, m, n} : Shape{m, n});
  const std::size_t sa = va.batched ? va.rows * va.cols : 0;
  const std::size_t sb = vb.batched ? vb.rows * vb.cols : 0;
  const std::size_t sc = m * n;
  for (std::size_t i = 0; i < batch; ++i) {
    gemm(ConstMap(a.data().data() + i * sa, va.rows, va.cols), trans_a,
         ConstMap(b.data().data() + i * sb, vb.rows, vb.cols), trans_b,
         MutMap(c.data().data() + i * sc, m, n), false);
  }
  if (needs_grad({&a, &b})) {
    Tape::current()->record(c, "matmul", [a, b, c, va, vb, trans_a, trans_b, batch, sa, sb,
                                          sc, m, n]() mutable {
      auto gc = c.grad();
      auto ga = grad_sink(a);
      auto gb = grad_sink(b);
      for (std::size_t i = 0; i < batch; ++i) {
        ConstMap dc(gc.data() + i * sc, m, n);
        ConstMap am(a.data().data() + i * sa, va.rows, va.cols);
        ConstMap bm(b.data().data() + i * sb, vb.rows, vb.cols);
        if (!ga.empty()) {
          MutMap da(ga.data() + i * sa, va.rows, va.cols);
          if (!trans_a) gemm(dc, false, bm, !trans_b, da, true);  // dC op(B)^T
          else gemm(bm, trans_b, dc, true, da, true);             // op(B) dC^T
        }
        if (!gb.empty()) {
          MutMap db(gb.data() + i * sb, vb.rows, vb.cols);
          if (!trans_b) gemm(am, !trans_a, dc, false, db, true);  // op(A)^T dC
          else gemm(dc, true, am, trans_a, db, true);             // dC^T op(A)
        }
      }
    });
  }
  return c;
}

Tensor add(const Tensor &a, const Tensor &b) {
  require_same_shape(a, b, "add");
  Tensor c(a.shape());
  auto as = a.data(), bs = b.data();
  auto cs = c.data();
  for (std::size_t i = 0; i < cs.size(); ++i) cs[i] = as[i] + bs[i];
  if (needs_grad({&a, &b})) {
    Tape::current()->record(c, "add", [a, b, c]() mutable {
      auto gc = c.grad();
      for (auto g : {grad_sink(a), grad_sink(b)}) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gc[i];
      }
    });
  }
  return c;
}

Tensor sub(const Tensor &a, const Tensor &b) {
  require_same_shape(a, b, "sub");
  Tensor c(a.shape());
  auto as = a.data(), bs = b.data();
  auto cs = c.data();
  for (std::size_t i = 0; i < cs.size(); ++i) cs[i] = as[i] - bs[i];
  if (needs_grad({&a, &b})) {
    Tape::current()->record(c, "sub", [a, b, c]() mutable {
      auto gc = c.grad();
      auto ga = grad_sink(a), gb = grad_sink(b);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gc[i];
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gc[i];
    });
  }
  return c;
}

Tensor mul(const Tensor &a, const Tensor &b) {
  require_same_shape(a, b, "mul");
  Tensor c(a.shape());
  auto as = a.data(), bs = b.data();
  auto cs = c.data();
  for (std::size_t i = 0; i < cs.size(); ++i) cs[i] = as[i] * bs[i];
  if (needs_grad({&a, &b})) {
    Tape::current()->record(c, "mul", [a, b, c]() mutable {
      auto gc = c.grad();
      auto ga = grad_sink(a), gb = grad_sink(b);
      auto as = a.data(), bs = b.data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gc[i] * bs[i];
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gc[i] * as[i];
    });
  }
  return c;
}

Tensor scale(const Tensor &x, double s) {
  return unary(x, "scale", [s](double v) { return s * v; },
               [s](double, double) { return s; });
}

Tensor add_bias(const Tensor &x, const Tensor &b) {
  ColumnLayout l = column_layout(x, "add_bias");
  const bool vector_like = b.rank() == 1 || (b.rank() == 2 && b.dim(1) == 1);
  if (!vector_like || b.numel() != l.rows) {
    throw ShapeError("add_bias: bias " + shape_str(b.shape()) + " cannot be broadcast over " +
                     shape_str(x.shape()) + " (only the b 1^T pattern is supported)");
  }
  Tensor y(x.shape());
  auto xs = x.data(), bs = b.data();
  auto ys = y.data();
  std::size_t idx = 0;
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t r = 0; r < l.rows; ++r) {
      const double bias = bs[r];
      for (std::size_t c = 0; c < l.cols; ++c, ++idx) ys[idx] = xs[idx] + bias;
    }
  }
  if (needs_grad({&x, &b})) {
    Tape::current()->record(y, "add_bias", [x, b, y, l]() mutable {
      auto gy = y.grad();
      auto gx = grad_sink(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
      auto gb = grad_sink(b);
      if (gb.empty()) return;
      std::size_t idx = 0;
      for (std::size_t o = 0; o < l.outer; ++o) {
        for (std::size_t r = 0; r < l.rows; ++r) {
          double acc = 0.0;
          for (std::size_t c = 0; c < l.cols; ++c, ++idx) acc += gy[idx];
          gb[r] += acc;
        }
      }
    });
  }
  return y;
}

Tensor sigmoid(const Tensor &x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor &x) {
  return unary(x, "tanh", [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor &x) {
  return unary(x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor log(const Tensor &x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw std::domain_error("log: non-positive input");
  }
  return unary(x, "log", [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Tensor softmax_columns(const Tensor &x) {
  ColumnLayout l = column_layout(x, "softmax_columns");
  Tensor y(x.shape());
  auto xs = x.data();
  auto ys = y.data();
  std::vector<double> colmax(l.cols), colsum(l.cols);
  for (std::size_t o = 0; o < l.outer; ++o) {
    const double *xin = xs.data() + o * l.rows * l.cols;
    double *yout = ys.data() + o * l.rows * l.cols;
    std::fill(colmax.begin(), colmax.end(), -INFINITY);
    for (std::size_t r = 0; r < l.rows; ++r) {
      for (std::size_t c = 0; c < l.cols; ++c) {
        const double v = xin[r * l.cols + c];
        if (!std::isfinite(v)) throw std::domain_error("softmax_columns: non-finite input");
        colmax[c] = std::max(colmax[c], v);
      }
    }
    std::fill(colsum.begin(), colsum.end(), 0.0);
    for (std::size_t r = 0; r < l.rows; ++r) {
      for (std::size_t c = 0; c < l.cols; ++c) {
        const double e = std::exp(xin[r * l.cols + c] - colmax[c]);
        yout[r * l.cols + c] = e;
        colsum[c] += e;
      }
    }
    for (std::size_t r = 0; r < l.rows; ++r) {
      for (std::size_t c = 0; c < l.cols; ++c) yout[r * l.cols + c] /= colsum[c];
    }
  }
  if (needs_grad({&x})) {
    Tape::current()->record(y, "softmax_columns", [x, y, l]() mutable {
      auto gy = y.grad();
      auto gx = grad_sink(x);
      auto ys = y.data();
      std::vector<double> dot(l.cols);
      for (std::size_t o = 0; o < l.outer; ++o) {
        const std::size_t base = o * l.rows * l.cols;
        std::fill(dot.begin(), dot.end(), 0.0);
        for (std::size_t r = 0; r < l.rows; ++r) {
          for (std::size_t c = 0; c < l.cols; ++c) {
            dot[c] += ys[base + r * l.cols + c] * gy[base + r * l.cols + c];
          }
        }
        for (std::size_t r = 0; r < l.rows; ++r) {
          for (std::size_t c = 0; c < l.cols; ++c) {
            const std::size_t i = base + r * l.cols + c;
            gx[i] += ys[i] * (gy[i] - dot[c]);
          }
        }
      }
    });
  }
  return y;
}

Tensor permute(const Tensor &x, std::span<const std::size_t> axes) {
  const std::size_t rank = x.rank();
  std::vector<bool> seen(rank, false);
  if (axes.size() != rank) {
    throw ShapeError("permute: " + std::to_string(axes.size()) + " axes for " +
                     shape_str(x.shape()));
  }
  for (auto ax : axes) {
    if (ax >= rank || seen[ax]) throw ShapeError("permute: invalid axis order");
    seen[ax] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = x.dim(axes[i]);
  Tensor y(out_shape);
  auto xs = x.data();
  auto ys = y.data();
  std::vector<std::size_t> ax(axes.begin(), axes.end());
  for_each_permuted(x.shape(), ax, [&](std::size_t o, std::size_t i) { ys[o] = xs[i]; });
  if (needs_grad({&x})) {
    Tape::current()->record(y, "permute", [x, y, ax]() mutable {
      auto gy = y.grad();
      auto gx = grad_sink(x);
      for_each_permuted(x.shape(), ax, [&](std::size_t o, std::size_t i) { gx[i] += gy[o]; });
    });
  }
  return y;
}

Tensor permute(const Tensor &x, std::initializer_list<std::size_t> axes) {
  return permute(x, std::span<const std::size_t>(axes.begin(), axes.size()));
}

Tensor transpose(const Tensor &x) {
  if (x.rank() < 2) throw ShapeError("transpose: needs rank >= 2, got " + shape_str(x.shape()));
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[x.rank() - 1], axes[x.rank() - 2]);
  return permute(x, axes);
}

Tensor reshape(const Tensor &x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor y(std::move(shape), x.data());
  if (needs_grad({&x})) {
    Tape::current()->record(y, "reshape", [x, y]() mutable {
      auto gy = y.grad();
      auto gx = grad_sink(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
    });
  }
  return y;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Tensor &first = parts.front();
  check_axis(first, axis, "concat");
  Shape out_shape = first.shape();
  out_shape[axis] = 0;
  for (const auto &p : parts) {
    bool ok = p.rank() == first.rank();
    for (std::size_t i = 0; ok && i < p.rank(); ++i) {
      if (i != axis && p.dim(i) != first.dim(i)) ok = false;
    }
    if (!ok) {
      throw ShapeError("concat: ragged inputs " + shape_str(first.shape()) + " and " +
                       shape_str(p.shape()) + " along axis " + std::to_string(axis));
    }
    out_shape[axis] += p.dim(axis);
  }
  Tensor y(out_shape);
  AxisLayout lo = axis_layout(out_shape, axis);
  auto ys = y.data();
  std::size_t offset = 0;
  for (const auto &p : parts) {
    const std::size_t chunk = p.dim(axis) * lo.inner;
    auto ps = p.data();
    for (std::size_t o = 0; o < lo.outer; ++o) {
      std::copy_n(ps.data() + o * chunk, chunk, ys.data() + o * lo.len * lo.inner + offset);
    }
    offset += chunk;
  }
  std::vector<Tensor> saved(parts.begin(), parts.end());
  if (needs_grad(parts)) {
    Tape::current()->record(y, "concat", [saved, y, lo]() mutable {
      auto gy = y.grad();
      std::size_t offset = 0;
      for (const auto &p : saved) {
        const std::size_t chunk = p.numel() / lo.outer;
        auto gp = grad_sink(p);
        if (!gp.empty()) {
          for (std::size_t o = 0; o < lo.outer; ++o) {
            const double *src = gy.data() + o * lo.len * lo.inner + offset;
            double *dst = gp.data() + o * chunk;
            for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
          }
        }
        offset += chunk;
      }
    });
  }
  return y;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  if (parts.front().rank() < 2) throw ShapeError("concat_rows: needs matrices");
  return concat(parts, parts.front().rank() - 2);
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("stack: no inputs");
  std::vector<Tensor> lifted;
  lifted.reserve(parts.size());
  for (const auto &p : parts) {
    if (p.shape() != parts.front().shape()) {
      throw ShapeError("stack: shapes differ: " + shape_str(parts.front().shape()) + " vs " +
                       shape_str(p.shape()));
    }
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    lifted.push_back(reshape(p, s));
  }
  return concat(lifted, 0);
}

Tensor slice(const Tensor &x, std::size_t axis, std::size_t begin, std::size_t end) {
  check_axis(x, axis, "slice");
  if (begin >= end || end > x.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for axis of length " + std::to_string(x.dim(axis)));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  Tensor y(out_shape);
  AxisLayout li = axis_layout(x.shape(), axis);
  const std::size_t chunk = (end - begin) * li.inner;
  auto xs = x.data();
  auto ys = y.data();
  for (std::size_t o = 0; o < li.outer; ++o) {
    std::copy_n(xs.data() + (o * li.len + begin) * li.inner, chunk, ys.data() + o * chunk);
  }
  if (needs_grad({&x})) {
    Tape::current()->record(y, "slice", [x, y, li, begin, chunk]() mutable {
      auto gy = y.grad();
      auto gx = grad_sink(x);
      for (std::size_t o = 0; o < li.outer; ++o) {
        double *dst = gx.data() + (o * li.len + begin) * li.inner;
        const double *src = gy.data() + o * chunk;
        for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
      }
    });
  }
  return y;
}

Tensor gather(const Tensor &x, std::size_t axis, std::span<const std::size_t> index) {
  check_axis(x, axis, "gather");
  if (index.empty()) throw ShapeError("gather: empty index");
  for (auto i : index) {
    if (i >= x.dim(axis)) throw ShapeError("gather: index out of range");
  }
  Shape out_shape = x.shape();
  out_shape[axis] = index.size();
  Tensor y(out_shape);
  AxisLayout li = axis_layout(x.shape(), axis);
  const std::size_t n = index.size();
  auto xs = x.data();
  auto ys = y.data();
  for (std::size_t o = 0; o < li.outer; ++o) {
    for (std::size_t k = 0; k < n; ++k) {
      std::copy_n(xs.data() + (o * li.len + index[k]) * li.inner, li.inner,
                  ys.data() + (o * n + k) * li.inner);
    }
  }
  if (needs_grad({&x})) {
    std::vector<std::size_t> idx(index.begin(), index.end());
    Tape::current()->record(y, "gather", [x, y, li, idx]() mutable {
      auto gy = y.grad();
      auto gx = grad_sink(x);
      const std::size_t n = idx.size();
      for (std::size_t o = 0; o < li.outer; ++o) {
        for (std::size_t k = 0; k < n; ++k) {
          double *dst = gx.data() + (o * li.len + idx[k]) * li.inner;
          const double *src = gy.data() + (o * n + k) * li.inner;
          for (std::size_t i = 0; i < li.inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return y;
}

Tensor mean_over_axis(const Tensor &x, std::size_t axis) {
  check_axis(x, axis, "mean_over_axis");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor y(out_shape);
  AxisLayout li = axis_layout(x.shape(), axis);
  const double inv = 1.0 / static_cast<double>(li.len);
  auto xs = x.data();
  auto ys = y.data();
  for (std::size_t o = 0; o < li.outer; ++o) {
    double *dst = ys.data() + o * li.inner;
    for (std::size_t k = 0; k < li.len; ++k) {
      const double *src = xs.data() + (o * li.len + k) * li.inner;
      for (std::size_t i = 0; i < li.inner; ++i) dst[i] += src[i];
    }
    for (std::size_t i = 0; i < li.inner; ++i) dst[i] *= inv;
  }
  if (needs_grad({&x})) {
    Tape::current()->record(y, "mean_over_axis", [x, y, li, inv]() mutable {
      auto gy = y.grad();
      auto gx = grad_sink(x);
      for (std::size_t o = 0; o < li.outer; ++o) {
        const double *src = gy.data() + o * li.inner;
        for (std::size_t k = 0; k < li.len; ++k) {
          double *dst = gx.data() + (o * li.len + k) * li.inner;
          for (std::size_t i = 0; i < li.inner; ++i) dst[i] += src[i] * inv;
        }
      }
    });
  }
  return y;
}

Tensor sum(const Tensor &x) {
  Tensor y({1});
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  y.data()[0] = acc;
  if (needs_grad({&x})) {
    Tape::current()->record(y, "sum", [x, y]() mutable {
      const double g = y.grad()[0];
      for (auto &v : grad_sink(x)) v += g;
    });
  }
  return y;
}

Tensor mean(const Tensor &x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor layer_norm(const Tensor &x, const Tensor &gamma, const Tensor &beta, double eps) {
  ColumnLayout l = column_layout(x, "layer_norm");
  if (gamma.numel() != l.rows || beta.numel() != l.rows) {
    throw ShapeError("layer_norm: gain/bias of size " + std::to_string(gamma.numel()) + "/" +
                     std::to_string(beta.numel()) + " for normalized dimension " +
                     std::to_string(l.rows));
  }
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: epsilon must be positive");
  Tensor y(x.shape());
  Buffer xhat(x.numel());
  Buffer rstd(l.outer * l.cols);
  auto xs = x.data();
  auto ys = y.data();
  auto gs = gamma.data(), bs = beta.data();
  const double inv_rows = 1.0 / static_cast<double>(l.rows);
  std::vector<double> mu(l.cols), var(l.cols);
  for (std::size_t o = 0; o < l.outer; ++o) {
    const std::size_t base = o * l.rows * l.cols;
    std::fill(mu.begin(), mu.end(), 0.0);
    std::fill(var.begin(), var.end(), 0.0);
    for (std::size_t r = 0; r < l.rows; ++r) {
      for (std::size_t c = 0; c < l.cols; ++c) mu[c] += xs[base + r * l.cols + c];
    }
    for (auto &m : mu) m *= inv_rows;
    for (std::size_t r = 0; r < l.rows; ++r) {
      for (std::size_t c = 0; c < l.cols; ++c) {
        const double d = xs[base + r * l.cols + c] - mu[c];
        var[c] += d * d;
      }
    }
    double *rs = rstd.data() + o * l.cols;
    for (std::size_t c = 0; c < l.cols; ++c) rs[c] = 1.0 / std::sqrt(var[c] * inv_rows + eps);
    for (std::size_t r = 0; r < l.rows; ++r) {
      for (std::size_t c = 0; c < l.cols; ++c) {
        const std::size_t i = base + r * l.cols + c;
        xhat[i] = (xs[i] - mu[c]) * rs[c];
        ys[i] = gs[r] * xhat[i] + bs[r];
      }
    }
  }
  if (needs_grad({&x, &gamma, &beta})) {
    Tape::current()->record(y, "layer_norm", [x, gamma, beta, y, l, inv_rows,
                                              xhat = std::move(xhat),
                                              rstd = std::move(rstd)]() mutable {
      auto gy = y.grad();
      auto gx = grad_sink(x);
      auto gg = grad_sink(gamma);
      auto gb = grad_sink(beta);
      auto gs = gamma.data();
      std::vector<double> m1(l.cols), m2(l.cols);
      for (std::size_t o = 0; o < l.outer; ++o) {
        const std::size_t base = o * l.rows * l.cols;
        for (std::size_t r = 0; r < l.rows; ++r) {
          double sg = 0.0, sb = 0.0;
          for (std::size_t c = 0; c < l.cols; ++c) {
            const std::size_t i = base + r * l.cols + c;
            sg += gy[i] * xhat[i];
            sb += gy[i];
          }
          if (!gg.empty()) gg[r] += sg;
          if (!gb.empty()) gb[r] += sb;
        }
        if (gx.empty()) continue;
        std::fill(m1.begin(), m1.end(), 0.0);
        std::fill(m2.begin(), m2.end(), 0.0);
        for (std::size_t r = 0; r < l.rows; ++r) {
          for (std::size_t c = 0; c < l.cols; ++c) {
            const std::size_t i = base + r * l.cols + c;
            const double dxh = gy[i] * gs[r];
            m1[c] += dxh;
            m2[c] += dxh * xhat[i];
          }
        }
        const double *rs = rstd.data() + o * l.cols;
        for (std::size_t r = 0; r < l.rows; ++r) {
          for (std::size_t c = 0; c < l.cols; ++c) {
            const std::size_t i = base + r * l.cols + c;
            const double dxh = gy[i] * gs[r];
            gx[i] += rs[c] * (dxh - m1[c] * inv_rows - xhat[i] * m2[c] * inv_rows);
          }
        }
      }
    });
  }
  return y;
}

}  // namespace mceend
