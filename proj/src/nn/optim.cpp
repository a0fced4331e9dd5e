#include "dlss/nn/optim.hpp"

#include <cmath>
#include <map>

#include "dlss/error.hpp"

namespace dlss::nn {

template <class T>
Adam<T>::Adam(std::vector<Tensor<T>> params, double beta2, double epsilon)
    : params_(std::move(params)), beta2_(beta2), epsilon_(epsilon) {
  if (!(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) throw InvalidInput("adam: bad beta2/epsilon");
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

template <class T>
void Adam<T>::step(double lr, double beta1) {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw InvalidInput("adam: beta1 must lie in [0,1)");
  ++t_;
  beta1_product_ *= beta1;
  beta2_product_ *= beta2_;
  const double c1 = 1.0 - beta1_product_;
  const double c2 = 1.0 - beta2_product_;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor<T>& p = params_[k];
    auto g = p.grad();
    auto val = p.value();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double gi = g.empty() ? 0.0 : static_cast<double>(g[i]);
      m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      val[i] = static_cast<T>(static_cast<double>(val[i]) - lr * mh / (std::sqrt(vh) + epsilon_));
    }
  }
  zero_grad();
}

template <class T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) {
    if (!p.grad().empty()) p.zero_grad();
  }
}

template <class T>
std::vector<NamedArray> Adam<T>::export_state(const std::string& prefix) const {
  std::vector<NamedArray> out;
  out.push_back({prefix + ".adam", {static_cast<double>(t_), beta1_product_, beta2_product_}});
  for (std::size_t k = 0; k < params_.size(); ++k) {
    out.push_back({prefix + ".m" + std::to_string(k), m_[k]});
    out.push_back({prefix + ".v" + std::to_string(k), v_[k]});
  }
  return out;
}

template <class T>
void Adam<T>::import_state(const std::vector<NamedArray>& state, const std::string& prefix) {
  std::map<std::string, const std::vector<double>*> by_name;
  for (const auto& a : state) by_name[a.name] = &a.values;
  auto take = [&](const std::string& name, std::size_t size) -> const std::vector<double>& {
    auto it = by_name.find(name);
    if (it == by_name.end() || it->second->size() != size) throw InvalidInput("adam: missing or malformed '" + name + "'");
    return *it->second;
  };
  const auto& head = take(prefix + ".adam", 3);
  t_ = static_cast<long long>(head[0]);
  beta1_product_ = head[1];
  beta2_product_ = head[2];
  for (std::size_t k = 0; k < params_.size(); ++k) {
    m_[k] = take(prefix + ".m" + std::to_string(k), params_[k].numel());
    v_[k] = take(prefix + ".v" + std::to_string(k), params_[k].numel());
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace dlss::nn
