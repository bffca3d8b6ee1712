// mceend/grad_check.cc

#include "mceend/grad_check.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mceend {

GradCheckReport grad_check(const std::function<Tensor()> &f, std::vector<Tensor> inputs,
                           const GradCheckOptions &options) {
  for (auto &in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
  }
  for (auto &in : inputs) {
    auto g = in.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].data();
    std::vector<std::size_t> index(values.size());
    std::iota(index.begin(), index.end(), 0);
    if (options.max_entries_per_input > 0 && index.size() > options.max_entries_per_input) {
      std::shuffle(index.begin(), index.end(), rng);
      index.resize(options.max_entries_per_input);
    }
    for (std::size_t i : index) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = f().item();
      values[i] = saved - options.step;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k][i];
      const double denom =
          std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error || !std::isfinite(rel)) {
        report.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        report.worst_input = k;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= options.tol;
  return report;
}

}  // namespace mceend
