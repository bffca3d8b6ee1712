// mceend/ops.h
//
// Differentiable tensor operations. Every op records a backward rule on the
// current tape when one of its inputs requires a gradient.
//
// Matrices are row-major. Rank-3 tensors are batches of matrices [B x m x n];
// "rows" and "columns" always refer to the last two axes.

#ifndef MCEEND_OPS_H_
#define MCEEND_OPS_H_

#include <cstddef>
#include <span>
#include <vector>

#include "mceend/tensor.h"

namespace mceend {

// C = op(A) op(B), op = transpose when the flag is set. Either side may be a
// single matrix broadcast against a batch on the other side.
Tensor matmul(const Tensor &a, const Tensor &b, bool trans_a = false,
              bool trans_b = false);

Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor scale(const Tensor &x, double s);

// x + b 1^T: b has one entry per row of x, repeated across columns (and
// across the batch for rank-3 x). The only broadcast pattern supported.
Tensor add_bias(const Tensor &x, const Tensor &b);

Tensor sigmoid(const Tensor &x);
Tensor tanh(const Tensor &x);
Tensor relu(const Tensor &x);
Tensor log(const Tensor &x);

// Normalizes every column (over the row axis) with a max-shifted softmax.
Tensor softmax_columns(const Tensor &x);

// Swaps the last two axes.
Tensor transpose(const Tensor &x);
Tensor permute(const Tensor &x, std::span<const std::size_t> axes);
Tensor permute(const Tensor &x, std::initializer_list<std::size_t> axes);
Tensor reshape(const Tensor &x, Shape shape);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat_rows(std::span<const Tensor> parts);
// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);

Tensor slice(const Tensor &x, std::size_t axis, std::size_t begin, std::size_t end);
// Reorders (or repeats) entries along an axis.
Tensor gather(const Tensor &x, std::size_t axis, std::span<const std::size_t> index);

// Removes the axis by averaging over it.
Tensor mean_over_axis(const Tensor &x, std::size_t axis);
Tensor sum(const Tensor &x);
Tensor mean(const Tensor &x);

// Column-wise layer normalization over the row axis with affine gain/bias
// (one entry per row).
Tensor layer_norm(const Tensor &x, const Tensor &gamma, const Tensor &beta,
                  double eps);

}  // namespace mceend

#endif  // MCEEND_OPS_H_
