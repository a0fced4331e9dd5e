#pragma once

#include <vector>

#include "dlss/nn/network.hpp"
#include "dlss/nn/tensor.hpp"

namespace dlss::nn {

/// ADAM with a per-call learning rate and first-moment decay, so schedules
/// that change beta1 mid-run stay correctly bias-corrected: the first-moment
/// correction uses the product of the beta1 values actually applied.
template <class T>
class Adam {
 public:
  explicit Adam(std::vector<Tensor<T>> params, double beta2 = 0.999, double epsilon = 1e-8);

  // Consumes the accumulated gradients, then zeroes them. Parameters with no
  // gradient this step are treated as having a zero gradient.
  void step(double lr, double beta1);
  void zero_grad();

  long long steps() const { return t_; }
  std::vector<NamedArray> export_state(const std::string& prefix) const;
  void import_state(const std::vector<NamedArray>& state, const std::string& prefix);

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta2_, epsilon_;
  double beta1_product_ = 1.0;
  double beta2_product_ = 1.0;
  long long t_ = 0;
};

}  // namespace dlss::nn
