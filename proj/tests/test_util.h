// tests/test_util.h

#ifndef MCEEND_TESTS_TEST_UTIL_H_
#define MCEEND_TESTS_TEST_UTIL_H_

#include <cstdint>
#include <random>

#include "mceend/nn.h"
#include "mceend/ops.h"
#include "mceend/tensor.h"

namespace testutil {

// Overwrites every parameter in place with N(0, stddev^2); LN gains are
// centred on 1.
inline void randomize(const mceend::ParamList &params, std::mt19937_64 &rng,
                      double stddev = 0.5) {
  std::normal_distribution<double> n(0.0, stddev);
  for (const auto &[name, t] : params) {
    const bool gain = name.size() >= 6 && name.compare(name.size() - 6, 6, ".gamma") == 0;
    for (double &v : mceend::Tensor(t).data()) v = (gain ? 1.0 : 0.0) + n(rng);
  }
}

// Scalar probe sum(y .* W) with a fixed random W, so every output entry
// contributes a distinct weight to the gradient.
inline mceend::Tensor probe(const mceend::Tensor &y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return mceend::sum(mceend::mul(y, mceend::Tensor::randn(y.shape(), rng)));
}

inline mceend::Tensor leaf(mceend::Shape shape, std::mt19937_64 &rng) {
  return mceend::Tensor::randn(std::move(shape), rng).set_requires_grad();
}

}  // namespace testutil

#endif  // MCEEND_TESTS_TEST_UTIL_H_
