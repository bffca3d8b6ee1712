// mceend/pit.h
//
// Permutation-free binary cross-entropy and posterior alignment.

#ifndef MCEEND_PIT_H_
#define MCEEND_PIT_H_

#include <cstddef>
#include <span>
#include <vector>

#include "mceend/tensor.h"

namespace mceend {

using Permutation = std::vector<std::size_t>;

inline constexpr double kPosteriorClamp = 1e-7;
inline constexpr std::size_t kMaxPitSpeakers = 6;

// All permutations of 0..n-1 in lexicographic order.
std::vector<Permutation> all_permutations(std::size_t n);

// Rows of `labels` reordered so that row s of the result is row perm[s].
Tensor permute_rows(const Tensor &labels, const Permutation &perm);

// -(1/(S T)) sum [L log Y + (1 - L) log(1 - Y)], Y clamped to
// [1e-7, 1 - 1e-7]. Differentiable in Y.
Tensor bce(const Tensor &posteriors, const Tensor &labels);

struct PitResult {
  Tensor loss;
  Permutation permutation;  // label row assigned to each output row
};

// Minimum of bce(Y, permute_rows(L, perm)) over all S! permutations; the
// lexicographically first minimizer wins ties. Only the winning branch is
// recorded on the tape.
PitResult pit_loss(const Tensor &posteriors, const Tensor &labels);

// Pearson correlation of two equally long rows; 0 when either is constant.
double pearson(std::span<const double> a, std::span<const double> b);

// Permutation of b's rows maximizing the summed correlation with a's rows
// (row s of a is paired with row perm[s] of b).
Permutation best_permutation_by_correlation(const Tensor &a, const Tensor &b);

}  // namespace mceend

#endif  // MCEEND_PIT_H_
