#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dlss/imaging.hpp"
#include "dlss/nn/network.hpp"

namespace dlss {

enum class GeneratorVariant { one_stage, two_stage };

GeneratorVariant parse_generator_variant(std::string_view s);
std::string_view generator_variant_name(GeneratorVariant v);

struct GeneratorSpec {
  GeneratorVariant variant = GeneratorVariant::two_stage;
  int target_side = 64;
  int base_channels = 16;
  int depth = 3;
  int step = 5;  // one_stage only: the coverage the input side is built for
  // Output-conv init std; small so untrained generators start near the skip path.
  double output_init_std = 0.02;

  static GeneratorSpec desk(GeneratorVariant v);
  static GeneratorSpec full_scale(GeneratorVariant v);

  void validate() const;
  // Input side consumed for coverage step s.
  int input_side(int s) const;
};

struct DiscriminatorSetSpec {
  int target_side = 64;
  int base_channels = 16;
  double slope = 0.2;

  // round(w * target_side / 512) for w in {70, 140, 280}.
  std::array<int, 3> crop_sizes() const;
  void validate() const;
};

/// Common surface of both generator variants. Inputs and outputs are batches
/// of single-channel images in NHWC layout.
class Generator {
 public:
  virtual ~Generator() = default;

  const GeneratorSpec& spec() const { return spec_; }

  // Expects prepared inputs (see prepare_input). Train mode records the graph.
  virtual nn::Tensor<float> forward(const nn::Tensor<float>& input, nn::Mode mode) = 0;
  // Eval forward; thread-safe on a fixed parameter set.
  virtual nn::Tensor<float> forward(const nn::Tensor<float>& input) const = 0;

  virtual std::vector<nn::Network<float>*> networks() = 0;
  virtual std::vector<const nn::Network<float>*> networks() const = 0;

  // N(0, 0.05) weights, gains set to ||v||, then a data-dependent rescale on
  // a uniform [-0.8, 0.8] probe.
  virtual void initialize(std::mt19937_64& rng) = 0;

  void set_frozen(bool frozen);
  std::size_t parameter_count() const;
  std::uint64_t architecture_hash() const;
  std::string describe() const;
  std::vector<nn::NamedArray> export_state() const;
  void import_state(const std::vector<nn::NamedArray>& state);

 protected:
  explicit Generator(GeneratorSpec spec) : spec_(spec) {}
  GeneratorSpec spec_;
};

class OneStageGenerator final : public Generator {
 public:
  explicit OneStageGenerator(GeneratorSpec spec);

  nn::Tensor<float> forward(const nn::Tensor<float>& input, nn::Mode mode) override;
  nn::Tensor<float> forward(const nn::Tensor<float>& input) const override;
  std::vector<nn::Network<float>*> networks() override { return {&net_}; }
  std::vector<const nn::Network<float>*> networks() const override { return {&net_}; }
  void initialize(std::mt19937_64& rng) override;

 private:
  nn::Network<float> net_;
};

class TwoStageGenerator final : public Generator {
 public:
  explicit TwoStageGenerator(GeneratorSpec spec);

  struct Outputs {
    nn::Tensor<float> image;     // target_side x target_side x 1
    nn::Tensor<float> features;  // inner features, half side
  };

  Outputs forward_all(const nn::Tensor<float>& input, nn::Mode mode);
  // Trainer T on inner features; half-side single-channel image.
  nn::Tensor<float> trainer(const nn::Tensor<float>& features, const nn::Tensor<float>& input, nn::Mode mode);

  nn::Tensor<float> forward(const nn::Tensor<float>& input, nn::Mode mode) override;
  nn::Tensor<float> forward(const nn::Tensor<float>& input) const override;
  std::vector<nn::Network<float>*> networks() override { return {&inner_, &outer_, &trainer_}; }
  std::vector<const nn::Network<float>*> networks() const override { return {&inner_, &outer_, &trainer_}; }
  void initialize(std::mt19937_64& rng) override;

  nn::Network<float>& inner() { return inner_; }
  nn::Network<float>& outer() { return outer_; }
  nn::Network<float>& trainer_net() { return trainer_; }
  // Parameters of the generator proper (inner + outer), excluding the trainer.
  std::vector<nn::Tensor<float>> generator_params() const;

 private:
  nn::Network<float> inner_;
  nn::Network<float> outer_;
  nn::Network<float> trainer_;
};

std::unique_ptr<Generator> build_generator(const GeneratorSpec& spec);
std::unique_ptr<OneStageGenerator> build_one_stage(const GeneratorSpec& spec, Coverage cov);
std::unique_ptr<TwoStageGenerator> build_two_stage(const GeneratorSpec& spec);

nn::NetworkSpec one_stage_spec(const GeneratorSpec& spec);
nn::NetworkSpec inner_spec(const GeneratorSpec& spec);
nn::NetworkSpec outer_spec(const GeneratorSpec& spec);
nn::NetworkSpec trainer_spec(const GeneratorSpec& spec);
nn::NetworkSpec discriminator_spec(const DiscriminatorSetSpec& spec, int member);

/// Three least-squares critics on random crops of increasing size.
class DiscriminatorSet {
 public:
  explicit DiscriminatorSet(DiscriminatorSetSpec spec);

  const DiscriminatorSetSpec& spec() const { return spec_; }
  // N(0, 0.03) weights, zero biases, random unit spectral vectors.
  void initialize(std::mt19937_64& rng);
  // One score tensor (N,1,1,1) per member.
  std::vector<nn::Tensor<float>> scores(const nn::Tensor<float>& image, nn::Mode mode, std::mt19937_64* rng);
  void power_iterate();

  nn::Network<float>& member(int i) { return members_[i]; }
  const nn::Network<float>& member(int i) const { return members_[i]; }
  std::vector<nn::Tensor<float>> trainable() const;
  std::vector<nn::NamedArray> export_state() const;
  void import_state(const std::vector<nn::NamedArray>& state);

 private:
  DiscriminatorSetSpec spec_;
  std::vector<nn::Network<float>> members_;
};

// Batch of one from a micrograph, and back.
nn::Tensor<float> to_tensor(const Micrograph& m);
nn::Tensor<float> to_tensor(const std::vector<Micrograph>& batch);
Micrograph from_tensor(const nn::Tensor<float>& t, int index = 0);

// The network input for a low-resolution scan taken at step s: unchanged for
// one_stage (side must equal ceil(target/s)), nearest-upsampled to the target
// side for two_stage.
Micrograph prepare_input(const GeneratorSpec& spec, const Micrograph& lowres, Coverage cov);

// Eval-mode supersampling of a low-resolution scan. Output is clamped to
// [0,1]; with overwrite_known the probed pixels take their input values.
Micrograph infer(const Generator& g, const Micrograph& lowres, Coverage cov, bool overwrite_known = false);

}  // namespace dlss
