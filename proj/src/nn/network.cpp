#include "dlss/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "dlss/error.hpp"
#include "dlss/nn/ops.hpp"

namespace dlss::nn {

std::string_view layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::linear: return "linear";
    case LayerKind::bilinear_resize: return "bilinear_resize";
    case LayerKind::nearest_resize: return "nearest_resize";
    case LayerKind::relu: return "relu";
    case LayerKind::leaky_relu: return "leaky_relu";
    case LayerKind::softplus: return "softplus";
    case LayerKind::residual_add: return "residual_add";
    case LayerKind::random_crop: return "random_crop";
    case LayerKind::mean_only_bn: return "mean_only_bn";
  }
  return "?";
}

std::string_view norm_kind_name(NormKind k) {
  switch (k) {
    case NormKind::none: return "none";
    case NormKind::weight_norm: return "weight_norm";
    case NormKind::spectral: return "spectral";
  }
  return "?";
}

namespace {

bool has_weight(LayerKind k) { return k == LayerKind::conv || k == LayerKind::linear; }

std::string source_str(const Source& s) {
  if (s.index == Source::kPrevious) return "prev";
  if (s.index < 0) return "in" + std::to_string(-s.index - 1);
  return "L" + std::to_string(s.index);
}

double unit_normalize(std::vector<double>& x) {
  double n = 0;
  for (double v : x) n += v * v;
  n = std::sqrt(n);
  if (n > 0) {
    for (double& v : x) v /= n;
  }
  return n;
}

// One power-iteration step on the (cols x rows) view of w stored [rows][cols].
void power_step(std::span<const double> w, std::size_t rows, std::size_t cols, SpectralState& st) {
  if (st.u.size() != cols) st.u.assign(cols, 1.0 / std::sqrt(static_cast<double>(cols)));
  if (st.v.size() != rows) st.v.assign(rows, 1.0 / std::sqrt(static_cast<double>(rows)));
  std::vector<double> v(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) v[i] += w[i * cols + j] * st.u[j];
  }
  if (unit_normalize(v) > 0) st.v = std::move(v);
  std::vector<double> u(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) u[j] += w[i * cols + j] * st.v[i];
  }
  if (unit_normalize(u) > 0) st.u = std::move(u);
}

}  // namespace

std::vector<double> spectral_normalize(std::span<const double> w, int cols, SpectralState& state, double* sigma_out) {
  if (cols < 1 || w.size() % static_cast<std::size_t>(cols) != 0) throw InvalidInput("spectral_normalize: bad matrix view");
  const std::size_t rows = w.size() / cols;
  power_step(w, rows, cols, state);
  double sigma = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < static_cast<std::size_t>(cols); ++j) sigma += state.u[j] * w[i * cols + j] * state.v[i];
  }
  if (!(sigma > 1e-12)) sigma = 1e-12;
  if (sigma_out != nullptr) *sigma_out = sigma;
  std::vector<double> out(w.begin(), w.end());
  for (double& x : out) x /= sigma;
  return out;
}

LayerSpec make_layer(LayerKind kind, std::string name, std::vector<Source> inputs) {
  LayerSpec l;
  l.kind = kind;
  l.name = std::move(name);
  l.inputs = std::move(inputs);
  return l;
}

LayerSpec conv_layer(std::string name, int out_channels, int kernel, int stride, NormKind norm, bool bias,
                     std::vector<Source> inputs) {
  LayerSpec l = make_layer(LayerKind::conv, std::move(name), std::move(inputs));
  l.out_channels = out_channels;
  l.kernel = kernel;
  l.stride = stride;
  l.norm = norm;
  l.bias = bias;
  return l;
}

LayerSpec linear_layer(std::string name, int out_channels, NormKind norm, bool bias, std::vector<Source> inputs) {
  LayerSpec l = make_layer(LayerKind::linear, std::move(name), std::move(inputs));
  l.out_channels = out_channels;
  l.kernel = 1;
  l.norm = norm;
  l.bias = bias;
  return l;
}

LayerSpec resize_layer(LayerKind kind, std::string name, int out_h, int out_w, std::vector<Source> inputs) {
  LayerSpec l = make_layer(kind, std::move(name), std::move(inputs));
  l.out_h = out_h;
  l.out_w = out_w;
  return l;
}

double normal_draw(std::mt19937_64& rng, double mean, double sd) {
  return std::normal_distribution<double>(mean, sd)(rng);
}

std::string NetworkSpec::describe() const {
  std::ostringstream os;
  os << "network " << name << "\n";
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    os << "input " << i << " " << inputs[i].h << "x" << inputs[i].w << "x" << inputs[i].c << "\n";
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    os << i << " " << l.name << " " << layer_kind_name(l.kind);
    if (!l.inputs.empty()) {
      os << " from";
      for (const Source& s : l.inputs) os << " " << source_str(s);
    }
    if (has_weight(l.kind)) {
      os << " out=" << l.out_channels << " k=" << l.kernel << " s=" << l.stride << " norm=" << norm_kind_name(l.norm)
         << " bias=" << (l.bias ? 1 : 0);
    }
    if (l.kind == LayerKind::bilinear_resize || l.kind == LayerKind::nearest_resize || l.kind == LayerKind::random_crop) {
      os << " to=" << l.out_h << "x" << l.out_w;
    }
    if (l.kind == LayerKind::leaky_relu) os << " slope=" << l.slope;
    os << "\n";
  }
  return os.str();
}

std::uint64_t NetworkSpec::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : describe()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

template <class T>
std::vector<int> Network<T>::source_indices(std::size_t layer) const {
  const LayerSpec& l = spec_.layers[layer];
  std::vector<int> out;
  if (l.inputs.empty()) {
    out.push_back(layer == 0 ? -1 : static_cast<int>(layer) - 1);
    return out;
  }
  for (const Source& s : l.inputs) {
    out.push_back(s.index == Source::kPrevious ? (layer == 0 ? -1 : static_cast<int>(layer) - 1) : s.index);
  }
  return out;
}

template <class T>
Network<T>::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  if (spec_.inputs.empty()) throw InvalidInput("network " + spec_.name + ": needs at least one input");
  if (spec_.layers.empty()) throw InvalidInput("network " + spec_.name + ": needs at least one layer");
  state_.resize(spec_.layers.size());
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    const std::string where = "network " + spec_.name + ", layer " + std::to_string(i) + " '" + l.name + "'";
    std::vector<Shape> in;
    for (int s : source_indices(i)) {
      if (s >= static_cast<int>(i)) throw InvalidInput(where + ": refers to a later layer");
      if (s < 0) {
        const int k = -s - 1;
        if (k >= static_cast<int>(spec_.inputs.size())) throw InvalidInput(where + ": no external input " + std::to_string(k));
        in.push_back(spec_.inputs[k]);
      } else {
        in.push_back(shapes_[s]);
      }
      in.back().n = 1;
    }
    const std::size_t expected = l.kind == LayerKind::residual_add ? 2 : 1;
    if (in.size() != expected) throw InvalidInput(where + ": expects " + std::to_string(expected) + " inputs");
    const Shape x = in[0];
    Shape out = x;
    switch (l.kind) {
      case LayerKind::conv:
        if (l.out_channels < 1 || l.kernel < 1 || l.stride < 1) throw InvalidInput(where + ": bad conv parameters");
        out = {1, (x.h + l.stride - 1) / l.stride, (x.w + l.stride - 1) / l.stride, l.out_channels};
        break;
      case LayerKind::linear:
        if (l.out_channels < 1) throw InvalidInput(where + ": bad linear width");
        out = {1, 1, 1, l.out_channels};
        break;
      case LayerKind::bilinear_resize:
      case LayerKind::nearest_resize:
        if (l.out_h < 1 || l.out_w < 1) throw InvalidInput(where + ": bad resize target");
        out = {1, l.out_h, l.out_w, x.c};
        break;
      case LayerKind::random_crop:
        if (l.out_h < 1 || l.out_w < 1 || l.out_h > x.h || l.out_w > x.w) {
          throw InvalidInput(where + ": crop " + std::to_string(l.out_h) + "x" + std::to_string(l.out_w) +
                             " larger than input " + x.str());
        }
        out = {1, l.out_h, l.out_w, x.c};
        break;
      case LayerKind::residual_add:
        if (!(in[0] == in[1])) throw InvalidInput(where + ": residual shapes differ " + in[0].str() + " vs " + in[1].str());
        break;
      default:
        break;
    }
    shapes_.push_back(out);

    LayerState& st = state_[i];
    if (has_weight(l.kind)) {
      const Shape ws = l.kind == LayerKind::conv ? Shape{l.kernel, l.kernel, x.c, l.out_channels}
                                                 : Shape{1, 1, static_cast<int>(x.per_sample()), l.out_channels};
      st.weight = static_cast<int>(params_.size());
      params_.push_back({l.name + (l.norm == NormKind::weight_norm ? ".v" : ".w"), Tensor<T>::zeros(ws, true)});
      if (l.norm == NormKind::weight_norm) {
        st.gain = static_cast<int>(params_.size());
        params_.push_back({l.name + ".g", Tensor<T>::full({1, 1, 1, l.out_channels}, T(1), true)});
      }
      if (l.bias) {
        st.bias = static_cast<int>(params_.size());
        params_.push_back({l.name + ".b", Tensor<T>::zeros({1, 1, 1, l.out_channels}, true)});
      }
      if (l.norm == NormKind::spectral) {
        st.spectral.u.assign(l.out_channels, 1.0 / std::sqrt(static_cast<double>(l.out_channels)));
        const std::size_t rest = ws.numel() / l.out_channels;
        st.spectral.v.assign(rest, 1.0 / std::sqrt(static_cast<double>(rest)));
      }
    }
    if (l.kind == LayerKind::mean_only_bn) st.running_mean.assign(x.c, T(0));
  }
}

template <class T>
Tensor<T> Network<T>::effective_weight(std::size_t layer) const {
  const LayerSpec& l = spec_.layers[layer];
  const LayerState& st = state_[layer];
  const Tensor<T>& w = params_[st.weight].tensor;
  switch (l.norm) {
    case NormKind::weight_norm: return weight_norm(w, params_[st.gain].tensor);
    case NormKind::spectral: {
      std::vector<T> u(st.spectral.u.begin(), st.spectral.u.end());
      std::vector<T> v(st.spectral.v.begin(), st.spectral.v.end());
      return spectral_divide<T>(w, u, v);
    }
    case NormKind::none: break;
  }
  return w;
}

template <class T>
Tensor<T> Network<T>::forward(const std::vector<Tensor<T>>& inputs, Mode mode, std::mt19937_64* rng) {
  if (mode == Mode::eval) {
    NoGradGuard guard;
    return run(inputs, mode, rng, false);
  }
  return run(inputs, mode, rng, false);
}

template <class T>
Tensor<T> Network<T>::forward(const std::vector<Tensor<T>>& inputs, std::mt19937_64* rng) const {
  NoGradGuard guard;
  // Eval mode touches no member state.
  return const_cast<Network*>(this)->run(inputs, Mode::eval, rng, false);
}

template <class T>
Tensor<T> Network<T>::run(const std::vector<Tensor<T>>& inputs, Mode mode, std::mt19937_64* rng, bool probe) {
  if (inputs.size() != spec_.inputs.size()) {
    throw InvalidInput("network " + spec_.name + ": expected " + std::to_string(spec_.inputs.size()) + " inputs");
  }
  const int batch = inputs[0].shape().n;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Shape want = spec_.inputs[k];
    want.n = batch;
    if (!(inputs[k].shape() == want)) {
      throw InvalidInput("network " + spec_.name + ": input " + std::to_string(k) + " has shape " + inputs[k].shape().str() +
                         ", expected " + want.str());
    }
  }

  std::vector<Tensor<T>> outs(spec_.layers.size());
  auto fetch = [&](int s) -> const Tensor<T>& { return s < 0 ? inputs[-s - 1] : outs[s]; };

  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    LayerState& st = state_[i];
    const std::vector<int> src = source_indices(i);
    const Tensor<T>& x = fetch(src[0]);
    Tensor<T> y;
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::linear: {
        const Tensor<T> w = effective_weight(i);
        y = l.kind == LayerKind::conv ? conv2d(x, w, l.stride) : linear(x, w);
        if (st.bias >= 0) y = add_bias(y, params_[st.bias].tensor);
        if (probe) {
          double s = 0, s2 = 0;
          for (T v : y.value()) {
            s += v;
            s2 += static_cast<double>(v) * v;
          }
          const double n = static_cast<double>(y.numel());
          const double sd = std::sqrt(std::max(s2 / n - (s / n) * (s / n), 0.0));
          if (sd > 0) {
            const T f = static_cast<T>(l.init_target_std / sd);
            if (st.gain >= 0) {
              for (T& g : params_[st.gain].tensor.value()) g *= f;
            } else if (l.norm == NormKind::none) {
              for (T& w2 : params_[st.weight].tensor.value()) w2 *= f;
              if (st.bias >= 0) {
                for (T& b : params_[st.bias].tensor.value()) b *= f;
              }
            }
            if (st.gain >= 0 || l.norm == NormKind::none) {
              for (T& v : y.value()) v *= f;
            }
          }
        }
        break;
      }
      case LayerKind::bilinear_resize: y = bilinear_resize(x, l.out_h, l.out_w); break;
      case LayerKind::nearest_resize: y = nearest_resize(x, l.out_h, l.out_w); break;
      case LayerKind::relu: y = relu(x); break;
      case LayerKind::leaky_relu: y = leaky_relu(x, static_cast<T>(l.slope)); break;
      case LayerKind::softplus: y = softplus(x); break;
      case LayerKind::residual_add: y = add(x, fetch(src[1])); break;
      case LayerKind::random_crop: {
        const Shape s = x.shape();
        int r = (s.h - l.out_h) / 2, c = (s.w - l.out_w) / 2;
        if (rng != nullptr) {
          r = std::uniform_int_distribution<int>(0, s.h - l.out_h)(*rng);
          c = std::uniform_int_distribution<int>(0, s.w - l.out_w)(*rng);
        }
        y = crop(x, r, c, l.out_h, l.out_w);
        break;
      }
      case LayerKind::mean_only_bn: {
        const int ch = x.shape().c;
        if (probe || (mode == Mode::train && !frozen_)) {
          std::vector<double> m(ch, 0.0);
          for (std::size_t k = 0; k < x.numel(); ++k) m[k % ch] += x.value()[k];
          const double count = static_cast<double>(x.numel() / ch);
          for (int k = 0; k < ch; ++k) {
            const T batch_mean = static_cast<T>(m[k] / count);
            st.running_mean[k] = probe ? batch_mean : T(0.99) * st.running_mean[k] + T(0.01) * batch_mean;
          }
        }
        y = subtract_channel<T>(x, st.running_mean);
        break;
      }
    }
    outs[i] = std::move(y);
  }
  return outs.back();
}

template <class T>
std::vector<Tensor<T>> Network<T>::trainable() const {
  std::vector<Tensor<T>> out;
  for (const Param& p : params_) out.push_back(p.tensor);
  return out;
}

template <class T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const Param& p : params_) n += p.tensor.numel();
  return n;
}

template <class T>
void Network<T>::init_normal(std::mt19937_64& rng, double sd, bool zero_bias) {
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    LayerState& st = state_[i];
    if (st.weight < 0) continue;
    Tensor<T>& w = params_[st.weight].tensor;
    for (T& v : w.value()) v = static_cast<T>(normal_draw(rng, 0.0, sd));
    if (st.gain >= 0) {
      // g = ||v|| so the effective weight starts equal to the draw.
      const int c = w.shape().c;
      std::vector<double> norms(c, 0.0);
      for (std::size_t k = 0; k < w.numel(); ++k) norms[k % c] += static_cast<double>(w.value()[k]) * w.value()[k];
      for (int k = 0; k < c; ++k) params_[st.gain].tensor.value()[k] = static_cast<T>(std::sqrt(norms[k]));
    }
    if (st.bias >= 0 && zero_bias) {
      for (T& b : params_[st.bias].tensor.value()) b = T(0);
    }
    if (spec_.layers[i].norm == NormKind::spectral) {
      for (double& x : st.spectral.u) x = normal_draw(rng, 0.0, 1.0);
      unit_normalize(st.spectral.u);
      for (double& x : st.spectral.v) x = normal_draw(rng, 0.0, 1.0);
      unit_normalize(st.spectral.v);
    }
  }
}

template <class T>
void Network<T>::init_he(std::mt19937_64& rng) {
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    LayerState& st = state_[i];
    if (st.weight < 0) continue;
    Tensor<T>& w = params_[st.weight].tensor;
    const double fan_in = static_cast<double>(w.numel() / w.shape().c);
    const double sd = std::sqrt(2.0 / fan_in);
    for (T& v : w.value()) v = static_cast<T>(normal_draw(rng, 0.0, sd));
    if (st.gain >= 0) {
      const int c = w.shape().c;
      std::vector<double> norms(c, 0.0);
      for (std::size_t k = 0; k < w.numel(); ++k) norms[k % c] += static_cast<double>(w.value()[k]) * w.value()[k];
      for (int k = 0; k < c; ++k) params_[st.gain].tensor.value()[k] = static_cast<T>(std::sqrt(norms[k]));
    }
    if (st.bias >= 0) {
      for (T& b : params_[st.bias].tensor.value()) b = T(0);
    }
  }
}

template <class T>
void Network<T>::init_data_dependent(const std::vector<Tensor<T>>& probe) {
  NoGradGuard guard;
  run(probe, Mode::train, nullptr, true);
}

template <class T>
void Network<T>::power_iterate() {
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    if (state_[i].weight < 0 || spec_.layers[i].norm != NormKind::spectral) continue;
    const Tensor<T>& w = params_[state_[i].weight].tensor;
    std::vector<double> wd(w.value().begin(), w.value().end());
    power_step(wd, w.numel() / w.shape().c, w.shape().c, state_[i].spectral);
  }
}

template <class T>
std::vector<NamedArray> Network<T>::export_state() const {
  std::vector<NamedArray> out;
  for (const Param& p : params_) out.push_back({p.name, std::vector<double>(p.tensor.value().begin(), p.tensor.value().end())});
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerState& st = state_[i];
    const std::string& n = spec_.layers[i].name;
    if (!st.running_mean.empty()) out.push_back({n + ".running_mean", {st.running_mean.begin(), st.running_mean.end()}});
    if (!st.spectral.u.empty()) {
      out.push_back({n + ".sn_u", st.spectral.u});
      out.push_back({n + ".sn_v", st.spectral.v});
    }
  }
  return out;
}

template <class T>
void Network<T>::import_state(const std::vector<NamedArray>& state) {
  std::map<std::string, const std::vector<double>*> by_name;
  for (const NamedArray& a : state) by_name[a.name] = &a.values;
  auto take = [&](const std::string& name, std::size_t size) -> const std::vector<double>& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw InvalidInput("network " + spec_.name + ": state lacks '" + name + "'");
    if (it->second->size() != size) throw InvalidInput("network " + spec_.name + ": '" + name + "' has wrong size");
    return *it->second;
  };
  for (Param& p : params_) {
    const auto& v = take(p.name, p.tensor.numel());
    std::transform(v.begin(), v.end(), p.tensor.value().begin(), [](double x) { return static_cast<T>(x); });
  }
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    LayerState& st = state_[i];
    const std::string& n = spec_.layers[i].name;
    if (!st.running_mean.empty()) {
      const auto& v = take(n + ".running_mean", st.running_mean.size());
      std::transform(v.begin(), v.end(), st.running_mean.begin(), [](double x) { return static_cast<T>(x); });
    }
    if (!st.spectral.u.empty()) {
      st.spectral.u = take(n + ".sn_u", st.spectral.u.size());
      st.spectral.v = take(n + ".sn_v", st.spectral.v.size());
    }
  }
}

template <class T>
std::string Network<T>::describe() const {
  std::ostringstream os;
  os << spec_.name << " (" << parameter_count() << " parameters)\n";
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    const Shape& s = shapes_[i];
    os << "  " << i << "\t" << l.name << "\t" << layer_kind_name(l.kind);
    if (has_weight(l.kind)) {
      os << " " << l.kernel << "x" << l.kernel << "/" << l.stride << " " << norm_kind_name(l.norm) << (l.bias ? " +b" : "");
    }
    os << "\t-> " << s.h << "x" << s.w << "x" << s.c << "\n";
  }
  return os.str();
}

template class Network<float>;
template class Network<double>;

}  // namespace dlss::nn
