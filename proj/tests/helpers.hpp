#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "dlss/imaging.hpp"
#include "dlss/nn/tensor.hpp"

namespace dlss::test {

inline Micrograph random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(h) * w);
  for (double& x : v) x = u(rng);
  return Micrograph(h, w, std::move(v));
}

template <class T>
nn::Tensor<T> random_tensor(nn::Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<T> v(s.numel());
  for (T& x : v) x = static_cast<T>(u(rng));
  return nn::Tensor<T>::from(s, std::move(v), grad);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

}  // namespace dlss::test
