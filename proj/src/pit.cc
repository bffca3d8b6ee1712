// mceend/pit.cc

#include "mceend/pit.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mceend {

namespace {

double clamp_posterior(double y) {
  return std::clamp(y, kPosteriorClamp, 1.0 - kPosteriorClamp);
}

double bce_value(std::span<const double> y, std::span<const double> l) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = clamp_posterior(y[i]);
    acc += l[i] * std::log(p) + (1.0 - l[i]) * std::log(1.0 - p);
  }
  return -acc / static_cast<double>(y.size());
}

void check_pair(const Tensor &y, const Tensor &l, const char *what) {
  if (y.rank() != 2 || y.shape() != l.shape()) {
    throw ShapeError(std::string(what) + ": posteriors " + shape_str(y.shape()) +
                     " and labels " + shape_str(l.shape()) + " differ");
  }
}

}  // namespace

std::vector<Permutation> all_permutations(std::size_t n) {
  Permutation p(n);
  std::iota(p.begin(), p.end(), 0);
  std::vector<Permutation> out;
  do {
    out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

Tensor permute_rows(const Tensor &labels, const Permutation &perm) {
  if (labels.rank() != 2 || perm.size() != labels.dim(0)) {
    throw ShapeError("permute_rows: permutation of size " + std::to_string(perm.size()) +
                     " for " + shape_str(labels.shape()));
  }
  const std::size_t cols = labels.dim(1);
  Tensor out(labels.shape());
  for (std::size_t s = 0; s < perm.size(); ++s) {
    std::copy_n(labels.data().data() + perm[s] * cols, cols, out.data().data() + s * cols);
  }
  return out;
}

Tensor bce(const Tensor &posteriors, const Tensor &labels) {
  check_pair(posteriors, labels, "bce");
  Tensor loss({1});
  loss.data()[0] = bce_value(posteriors.data(), labels.data());
  if (needs_grad({&posteriors})) {
    Tape::current()->record(loss, "bce", [posteriors, labels, loss]() mutable {
      const double g = loss.grad()[0] / static_cast<double>(posteriors.numel());
      auto gy = grad_sink(posteriors);
      auto y = posteriors.data();
      auto l = labels.data();
      for (std::size_t i = 0; i < gy.size(); ++i) {
        if (y[i] < kPosteriorClamp || y[i] > 1.0 - kPosteriorClamp) continue;
        gy[i] -= g * (l[i] / y[i] - (1.0 - l[i]) / (1.0 - y[i]));
      }
    });
  }
  return loss;
}

PitResult pit_loss(const Tensor &posteriors, const Tensor &labels) {
  check_pair(posteriors, labels, "pit_loss");
  const std::size_t speakers = posteriors.dim(0);
  if (speakers > kMaxPitSpeakers) {
    throw std::invalid_argument("pit_loss: " + std::to_string(speakers) +
                                " speakers exceed the enumeration limit of " +
                                std::to_string(kMaxPitSpeakers));
  }
  Permutation best;
  double best_value = INFINITY;
  for (const auto &perm : all_permutations(speakers)) {
    const double v = bce_value(posteriors.data(), permute_rows(labels, perm).data());
    if (v < best_value) {
      best_value = v;
      best = perm;
    }
  }
  return {bce(posteriors, permute_rows(labels, best)), best};
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

Permutation best_permutation_by_correlation(const Tensor &a, const Tensor &b) {
  check_pair(a, b, "best_permutation_by_correlation");
  const std::size_t speakers = a.dim(0), frames = a.dim(1);
  std::vector<double> corr(speakers * speakers);
  for (std::size_t i = 0; i < speakers; ++i) {
    for (std::size_t j = 0; j < speakers; ++j) {
      corr[i * speakers + j] = pearson(a.data().subspan(i * frames, frames),
                                       b.data().subspan(j * frames, frames));
    }
  }
  Permutation best;
  double best_score = -INFINITY;
  for (const auto &perm : all_permutations(speakers)) {
    double score = 0.0;
    for (std::size_t s = 0; s < speakers; ++s) score += corr[s * speakers + perm[s]];
    if (score > best_score) {
      best_score = score;
      best = perm;
    }
  }
  return best;
}

}  // namespace mceend
