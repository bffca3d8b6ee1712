// mceend/grad_check.h

#ifndef MCEEND_GRAD_CHECK_H_
#define MCEEND_GRAD_CHECK_H_

#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "mceend/tensor.h"

namespace mceend {

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  // Denominator floor of the relative error, so that entries whose true
  // gradient is ~0 are judged by absolute error instead.
  double abs_floor = 1e-5;
  // Check at most this many entries per input (random subsample); 0 = all.
  std::size_t max_entries_per_input = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = false;
};

// Compares tape gradients of the scalar f() with respect to `inputs` against
// central finite differences. `inputs` must be leaves that require grad; f is
// re-evaluated with perturbed values (off the tape) for the numeric side.
GradCheckReport grad_check(const std::function<Tensor()> &f, std::vector<Tensor> inputs,
                           const GradCheckOptions &options = {});

}  // namespace mceend

#endif  // MCEEND_GRAD_CHECK_H_
