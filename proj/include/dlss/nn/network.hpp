#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dlss/nn/tensor.hpp"

namespace dlss::nn {

enum class LayerKind {
  conv,
  linear,
  bilinear_resize,
  nearest_resize,
  relu,
  leaky_relu,
  softplus,
  residual_add,
  random_crop,
  mean_only_bn,
};

enum class NormKind { none, weight_norm, spectral };

enum class Mode { train, eval };

std::string_view layer_kind_name(LayerKind k);
std::string_view norm_kind_name(NormKind k);

/// Reference to a value a layer consumes: an earlier layer's output or one of
/// the network's external inputs.
struct Source {
  static constexpr int kPrevious = -1000000;
  int index = kPrevious;  // >= 0 layer index; < 0 external input -(k+1)

  static Source layer(int i) { return {i}; }
  static Source input(int k) { return {-(k + 1)}; }
  static Source previous() { return {}; }
};

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  std::vector<Source> inputs;  // empty = previous layer (or input 0 for the first layer)

  // conv / linear
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  NormKind norm = NormKind::none;
  bool bias = false;
  // Standard deviation the data-dependent init targets for this layer's output.
  double init_target_std = 1.0;

  // resize / crop target
  int out_h = 0;
  int out_w = 0;

  double slope = 0.2;  // leaky_relu
};

LayerSpec make_layer(LayerKind kind, std::string name, std::vector<Source> inputs = {});
LayerSpec conv_layer(std::string name, int out_channels, int kernel, int stride, NormKind norm, bool bias,
                     std::vector<Source> inputs = {});
LayerSpec linear_layer(std::string name, int out_channels, NormKind norm, bool bias, std::vector<Source> inputs = {});
LayerSpec resize_layer(LayerKind kind, std::string name, int out_h, int out_w, std::vector<Source> inputs = {});

/// Per-sample input extents (n is ignored).
struct NetworkSpec {
  std::string name;
  std::vector<Shape> inputs;
  std::vector<LayerSpec> layers;

  std::string describe() const;
  std::uint64_t hash() const;  // FNV-1a over describe()
};

struct NamedArray {
  std::string name;
  std::vector<double> values;
  bool operator==(const NamedArray&) const = default;
};

/// Power-iteration estimates for one weight's (out_channels x rest) view.
struct SpectralState {
  std::vector<double> u;  // out_channels, unit length
  std::vector<double> v;  // rest, unit length
};

// One power-iteration update of `state` for the matrix view of `w` (storage
// [rest][cols]) followed by division by sigma = u^T W v, floored at 1e-12.
// Returns the normalized weights; `sigma_out` receives sigma.
std::vector<double> spectral_normalize(std::span<const double> w, int cols, SpectralState& state,
                                       double* sigma_out = nullptr);

template <class T>
class Network {
 public:
  struct Param {
    std::string name;
    Tensor<T> tensor;
  };

  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  // Per-sample output extents of every layer, inferred at construction.
  const std::vector<Shape>& layer_shapes() const { return shapes_; }
  Shape output_shape() const { return shapes_.back(); }

  // Train mode records the graph and updates running means unless frozen.
  // Eval mode records nothing, mutates nothing, and is safe to call from
  // several threads at once. `rng` drives random crops; without it crops are
  // centred.
  Tensor<T> forward(const std::vector<Tensor<T>>& inputs, Mode mode, std::mt19937_64* rng = nullptr);
  Tensor<T> forward(const std::vector<Tensor<T>>& inputs, std::mt19937_64* rng = nullptr) const;

  std::vector<Param>& params() { return params_; }
  std::vector<Tensor<T>> trainable() const;
  std::size_t parameter_count() const;

  void init_normal(std::mt19937_64& rng, double sd, bool zero_bias = true);
  void init_he(std::mt19937_64& rng);
  // One probe forward with the given inputs; each conv/linear gain is rescaled
  // so its output standard deviation hits the layer's init_target_std and
  // running means are seeded from the probe. Requires weight_norm layers.
  void init_data_dependent(const std::vector<Tensor<T>>& probe);

  void power_iterate();
  void set_frozen(bool frozen) { frozen_ = frozen; }
  bool frozen() const { return frozen_; }

  // Running means, spectral estimates and parameters under stable names.
  std::vector<NamedArray> export_state() const;
  // Throws InvalidInput on a missing name or a size mismatch.
  void import_state(const std::vector<NamedArray>& state);

  std::string describe() const;

 private:
  struct LayerState {
    int weight = -1;  // index into params_
    int gain = -1;
    int bias = -1;
    SpectralState spectral;
    std::vector<T> running_mean;
  };

  Tensor<T> run(const std::vector<Tensor<T>>& inputs, Mode mode, std::mt19937_64* rng, bool probe);
  Tensor<T> effective_weight(std::size_t layer) const;
  std::vector<int> source_indices(std::size_t layer) const;

  NetworkSpec spec_;
  std::vector<Shape> shapes_;
  std::vector<Param> params_;
  std::vector<LayerState> state_;
  bool frozen_ = false;
};

double normal_draw(std::mt19937_64& rng, double mean, double sd);

}  // namespace dlss::nn
