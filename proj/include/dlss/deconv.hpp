#pragma once

#include <vector>

#include "dlss/imaging.hpp"

namespace dlss {

/// Adaptive-moment gradient descent schedule for non-blind deconvolution.
/// The step size at iteration i is eta0 * decay^i.
struct DeconvConfig {
  int iterations = 100;
  double eta0 = 0.3;
  double decay = 0.99;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// Throws InvalidInput unless the kernel is odd-sized, flip/transpose symmetric
// and sums to 1 within 1e-12.
void validate_kernel(const BlurKernel& k);

// Exact gradient of MSE(blur(x, k), b) with respect to x, given the residual
// r = blur(x, k) - b: (2/N) * B^T r, where B^T folds reflect padding back.
std::vector<double> blur_gradient(const Micrograph& x, const Micrograph& residual, const BlurKernel& k);

// Estimates x minimizing MSE(blur(x, k), blurred), starting from x = blurred.
// Runs in double precision. When `objective` is non-null it receives the
// data-fit MSE before every step and after the last one (iterations + 1 values).
Micrograph deconvolve(const Micrograph& blurred, const BlurKernel& k, const DeconvConfig& cfg = {},
                      std::vector<double>* objective = nullptr);

}  // namespace dlss
