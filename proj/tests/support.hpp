#pragma once

#include <cmath>
#include <random>

#include "ucp/tensor.hpp"

namespace testing {

template <typename T>
ucp::Tensor<T> random_tensor(ucp::Shape4 s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  ucp::Tensor<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(d(rng));
  return t;
}

template <typename T>
double max_abs_diff(const ucp::Tensor<T>& a, const ucp::Tensor<T>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

}  // namespace testing
