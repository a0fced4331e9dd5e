#include "dlss/models.hpp"

#include <cmath>
#include <sstream>

#include "dlss/error.hpp"

namespace dlss {

using nn::LayerKind;
using nn::LayerSpec;
using nn::NetworkSpec;
using nn::NormKind;
using nn::Source;

GeneratorVariant parse_generator_variant(std::string_view s) {
  if (s == "one_stage") return GeneratorVariant::one_stage;
  if (s == "two_stage") return GeneratorVariant::two_stage;
  throw InvalidInput("unknown generator variant '" + std::string(s) + "'");
}

std::string_view generator_variant_name(GeneratorVariant v) {
  return v == GeneratorVariant::one_stage ? "one_stage" : "two_stage";
}

GeneratorSpec GeneratorSpec::desk(GeneratorVariant v) {
  GeneratorSpec s;
  s.variant = v;
  return s;
}

GeneratorSpec GeneratorSpec::full_scale(GeneratorVariant v) {
  GeneratorSpec s;
  s.variant = v;
  s.target_side = 512;
  s.base_channels = 64;
  s.depth = 5;
  return s;
}

void GeneratorSpec::validate() const {
  if (target_side < 8 || target_side % 4 != 0) throw InvalidInput("generator: target_side must be a multiple of 4 and >= 8");
  if (base_channels < 2) throw InvalidInput("generator: base_channels must be >= 2");
  if (depth < 1) throw InvalidInput("generator: depth must be >= 1");
  if (step < 1 || step > target_side) throw InvalidInput("generator: step out of range");
  if (!(output_init_std > 0)) throw InvalidInput("generator: output_init_std must be positive");
}

int GeneratorSpec::input_side(int s) const {
  return variant == GeneratorVariant::one_stage ? downsampled_side(target_side, s) : target_side;
}

std::array<int, 3> DiscriminatorSetSpec::crop_sizes() const {
  std::array<int, 3> out{};
  const int base[3] = {70, 140, 280};
  for (int i = 0; i < 3; ++i) out[i] = static_cast<int>(std::lround(base[i] * static_cast<double>(target_side) / 512.0));
  return out;
}

void DiscriminatorSetSpec::validate() const {
  const auto w = crop_sizes();
  if (w[0] < 3) throw InvalidInput("discriminators: target_side too small for the smallest crop");
  if (!(w[0] < w[1] && w[1] < w[2])) throw InvalidInput("discriminators: crop sizes must increase");
  if (w[2] > target_side) throw InvalidInput("discriminators: crop larger than image");
  if (base_channels < 1) throw InvalidInput("discriminators: base_channels must be >= 1");
}

namespace {

// relu -> mean-only bn -> conv, the pre-activation unit of every generator.
int pre_act_conv(std::vector<LayerSpec>& layers, const std::string& name, int channels, int kernel, int stride = 1,
                 std::vector<Source> from = {}) {
  layers.push_back(nn::make_layer(LayerKind::relu, name + ".act", std::move(from)));
  layers.push_back(nn::make_layer(LayerKind::mean_only_bn, name + ".bn"));
  layers.push_back(nn::conv_layer(name, channels, kernel, stride, NormKind::weight_norm, false));
  return static_cast<int>(layers.size()) - 1;
}

// Two pre-activation convs plus an identity shortcut from `in`.
int residual_block(std::vector<LayerSpec>& layers, const std::string& name, int channels, int in) {
  pre_act_conv(layers, name + ".c1", channels, 3, 1, {Source::layer(in)});
  const int c2 = pre_act_conv(layers, name + ".c2", channels, 3);
  layers.push_back(nn::make_layer(LayerKind::residual_add, name + ".add", {Source::layer(in), Source::layer(c2)}));
  return static_cast<int>(layers.size()) - 1;
}

int output_conv(std::vector<LayerSpec>& layers, const std::string& name, double init_std, std::vector<Source> from = {}) {
  const int i = pre_act_conv(layers, name, 1, 3, 1, std::move(from));
  layers[i].init_target_std = init_std;
  return i;
}

std::vector<float> uniform_probe(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(u(rng));
  return v;
}

}  // namespace

NetworkSpec one_stage_spec(const GeneratorSpec& spec) {
  const int side = spec.target_side;
  const int n = downsampled_side(side, spec.step);
  const int b = spec.base_channels;
  NetworkSpec s;
  s.name = "one_stage";
  s.inputs = {{1, n, n, 1}};
  auto& L = s.layers;
  // No non-linearity before the first conv.
  L.push_back(nn::conv_layer("conv0", b, 3, 1, NormKind::weight_norm, false));
  int x = 0;
  for (int d = 0; d < spec.depth; ++d) x = residual_block(L, "low" + std::to_string(d), b, x);
  L.push_back(nn::resize_layer(LayerKind::bilinear_resize, "up1", side / 2, side / 2, {Source::layer(x)}));
  pre_act_conv(L, "mid", b, 3);
  L.push_back(nn::resize_layer(LayerKind::bilinear_resize, "up2", side, side));
  pre_act_conv(L, "high", std::max(b / 2, 1), 3);
  const int out = output_conv(L, "out", spec.output_init_std);
  L.push_back(nn::resize_layer(LayerKind::bilinear_resize, "skip", side, side, {Source::input(0)}));
  const int skip = static_cast<int>(L.size()) - 1;
  L.push_back(nn::make_layer(LayerKind::residual_add, "sum", {Source::layer(out), Source::layer(skip)}));
  return s;
}

NetworkSpec inner_spec(const GeneratorSpec& spec) {
  const int side = spec.target_side;
  const int b = spec.base_channels;
  NetworkSpec s;
  s.name = "inner";
  s.inputs = {{1, side, side, 1}};
  auto& L = s.layers;
  L.push_back(nn::conv_layer("conv0", b, 3, 1, NormKind::weight_norm, false));
  int x = pre_act_conv(L, "down", 2 * b, 3, 2);
  for (int d = 0; d < spec.depth; ++d) x = residual_block(L, "core" + std::to_string(d), 2 * b, x);
  return s;
}

NetworkSpec trainer_spec(const GeneratorSpec& spec) {
  const int side = spec.target_side;
  NetworkSpec s;
  s.name = "trainer";
  s.inputs = {{1, side / 2, side / 2, 2 * spec.base_channels}, {1, side, side, 1}};
  auto& L = s.layers;
  const int out = output_conv(L, "out", spec.output_init_std, {Source::input(0)});
  L.push_back(nn::resize_layer(LayerKind::bilinear_resize, "skip", side / 2, side / 2, {Source::input(1)}));
  L.push_back(nn::make_layer(LayerKind::residual_add, "sum", {Source::layer(out), Source::layer(out + 1)}));
  return s;
}

NetworkSpec outer_spec(const GeneratorSpec& spec) {
  const int side = spec.target_side;
  const int b = spec.base_channels;
  NetworkSpec s;
  s.name = "outer";
  // Input 0: the (nearest-upsampled) scan; input 1: inner features.
  s.inputs = {{1, side, side, 1}, {1, side / 2, side / 2, 2 * b}};
  auto& L = s.layers;
  L.push_back(nn::conv_layer("conv0", b, 3, 1, NormKind::weight_norm, false, {Source::input(0)}));
  L.push_back(nn::resize_layer(LayerKind::bilinear_resize, "feat_up", side, side, {Source::input(1)}));
  L.push_back(nn::conv_layer("feat_proj", b, 1, 1, NormKind::weight_norm, false));
  L.push_back(nn::make_layer(LayerKind::residual_add, "merge", {Source::layer(0), Source::layer(2)}));
  int x = 3;
  for (int d = 0; d < spec.depth; ++d) x = residual_block(L, "fine" + std::to_string(d), b, x);
  const int out = output_conv(L, "out", spec.output_init_std, {Source::layer(x)});
  L.push_back(nn::make_layer(LayerKind::residual_add, "sum", {Source::layer(out), Source::input(0)}));
  return s;
}

NetworkSpec discriminator_spec(const DiscriminatorSetSpec& spec, int member) {
  spec.validate();
  if (member < 0 || member > 2) throw InvalidInput("discriminator member must be 0..2");
  const int w = spec.crop_sizes()[member];
  NetworkSpec s;
  s.name = "disc" + std::to_string(member + 1);
  s.inputs = {{1, spec.target_side, spec.target_side, 1}};
  auto& L = s.layers;
  L.push_back(nn::resize_layer(LayerKind::random_crop, "crop", w, w));
  int size = w;
  int channels = spec.base_channels;
  int k = 0;
  do {
    L.push_back(nn::conv_layer("conv" + std::to_string(k), channels, 3, 2, NormKind::spectral, true));
    LayerSpec act = nn::make_layer(LayerKind::leaky_relu, "lrelu" + std::to_string(k));
    act.slope = spec.slope;
    L.push_back(act);
    size = (size + 1) / 2;
    channels = std::min(channels * 2, 4 * spec.base_channels);
    ++k;
  } while (size > 4);
  L.push_back(nn::linear_layer("head", 1, NormKind::spectral, true));
  return s;
}

// ---- Generator --------------------------------------------------------------

void Generator::set_frozen(bool frozen) {
  for (auto* n : networks()) n->set_frozen(frozen);
}

std::size_t Generator::parameter_count() const {
  std::size_t total = 0;
  for (const auto* n : networks()) total += n->parameter_count();
  return total;
}

std::uint64_t Generator::architecture_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto* n : networks()) {
    h ^= n->spec().hash();
    h *= 1099511628211ULL;
  }
  return h;
}

std::string Generator::describe() const {
  std::ostringstream os;
  os << generator_variant_name(spec_.variant) << " generator, target " << spec_.target_side << "px, base "
     << spec_.base_channels << ", depth " << spec_.depth;
  if (spec_.variant == GeneratorVariant::one_stage) os << ", step " << spec_.step;
  os << ", " << parameter_count() << " parameters\n";
  for (const auto* n : networks()) os << n->describe();
  return os.str();
}

std::vector<nn::NamedArray> Generator::export_state() const {
  std::vector<nn::NamedArray> out;
  for (const auto* n : networks()) {
    for (auto a : n->export_state()) {
      a.name = n->spec().name + "/" + a.name;
      out.push_back(std::move(a));
    }
  }
  return out;
}

void Generator::import_state(const std::vector<nn::NamedArray>& state) {
  for (auto* n : networks()) {
    const std::string prefix = n->spec().name + "/";
    std::vector<nn::NamedArray> mine;
    for (const auto& a : state) {
      if (a.name.rfind(prefix, 0) == 0) mine.push_back({a.name.substr(prefix.size()), a.values});
    }
    n->import_state(mine);
  }
}

OneStageGenerator::OneStageGenerator(GeneratorSpec spec)
    : Generator((spec.validate(), spec)), net_(one_stage_spec(spec)) {
  if (spec.variant != GeneratorVariant::one_stage) throw InvalidInput("OneStageGenerator needs variant one_stage");
}

nn::Tensor<float> OneStageGenerator::forward(const nn::Tensor<float>& input, nn::Mode mode) {
  return net_.forward({input}, mode);
}

nn::Tensor<float> OneStageGenerator::forward(const nn::Tensor<float>& input) const { return net_.forward({input}); }

void OneStageGenerator::initialize(std::mt19937_64& rng) {
  net_.init_normal(rng, 0.05);
  const int n = net_.spec().inputs[0].h;
  net_.init_data_dependent({nn::Tensor<float>::from({1, n, n, 1}, uniform_probe(rng, static_cast<std::size_t>(n) * n))});
}

TwoStageGenerator::TwoStageGenerator(GeneratorSpec spec)
    : Generator((spec.validate(), spec)), inner_(inner_spec(spec)), outer_(outer_spec(spec)), trainer_(trainer_spec(spec)) {
  if (spec.variant != GeneratorVariant::two_stage) throw InvalidInput("TwoStageGenerator needs variant two_stage");
}

TwoStageGenerator::Outputs TwoStageGenerator::forward_all(const nn::Tensor<float>& input, nn::Mode mode) {
  Outputs o;
  o.features = inner_.forward({input}, mode);
  o.image = outer_.forward({input, o.features}, mode);
  return o;
}

nn::Tensor<float> TwoStageGenerator::trainer(const nn::Tensor<float>& features, const nn::Tensor<float>& input,
                                             nn::Mode mode) {
  return trainer_.forward({features, input}, mode);
}

nn::Tensor<float> TwoStageGenerator::forward(const nn::Tensor<float>& input, nn::Mode mode) {
  return forward_all(input, mode).image;
}

nn::Tensor<float> TwoStageGenerator::forward(const nn::Tensor<float>& input) const {
  const nn::Tensor<float> f = inner_.forward({input});
  return outer_.forward({input, f});
}

void TwoStageGenerator::initialize(std::mt19937_64& rng) {
  const int side = spec_.target_side;
  const nn::Tensor<float> probe =
      nn::Tensor<float>::from({1, side, side, 1}, uniform_probe(rng, static_cast<std::size_t>(side) * side));
  inner_.init_normal(rng, 0.05);
  outer_.init_normal(rng, 0.05);
  trainer_.init_normal(rng, 0.05);
  inner_.init_data_dependent({probe});
  const nn::Tensor<float> f = inner_.forward({probe});
  outer_.init_data_dependent({probe, f});
  trainer_.init_data_dependent({f, probe});
}

std::vector<nn::Tensor<float>> TwoStageGenerator::generator_params() const {
  std::vector<nn::Tensor<float>> out = inner_.trainable();
  for (auto& t : outer_.trainable()) out.push_back(t);
  return out;
}

std::unique_ptr<Generator> build_generator(const GeneratorSpec& spec) {
  if (spec.variant == GeneratorVariant::one_stage) return std::make_unique<OneStageGenerator>(spec);
  return std::make_unique<TwoStageGenerator>(spec);
}

std::unique_ptr<OneStageGenerator> build_one_stage(const GeneratorSpec& spec, Coverage cov) {
  GeneratorSpec s = spec;
  s.variant = GeneratorVariant::one_stage;
  s.step = cov.step();
  return std::make_unique<OneStageGenerator>(s);
}

std::unique_ptr<TwoStageGenerator> build_two_stage(const GeneratorSpec& spec) {
  GeneratorSpec s = spec;
  s.variant = GeneratorVariant::two_stage;
  return std::make_unique<TwoStageGenerator>(s);
}

// ---- discriminators ---------------------------------------------------------

DiscriminatorSet::DiscriminatorSet(DiscriminatorSetSpec spec) : spec_(spec) {
  spec_.validate();
  for (int i = 0; i < 3; ++i) members_.emplace_back(discriminator_spec(spec_, i));
}

void DiscriminatorSet::initialize(std::mt19937_64& rng) {
  for (auto& m : members_) m.init_normal(rng, 0.03, true);
}

std::vector<nn::Tensor<float>> DiscriminatorSet::scores(const nn::Tensor<float>& image, nn::Mode mode,
                                                        std::mt19937_64* rng) {
  std::vector<nn::Tensor<float>> out;
  for (auto& m : members_) out.push_back(m.forward({image}, mode, rng));
  return out;
}

void DiscriminatorSet::power_iterate() {
  for (auto& m : members_) m.power_iterate();
}

std::vector<nn::Tensor<float>> DiscriminatorSet::trainable() const {
  std::vector<nn::Tensor<float>> out;
  for (const auto& m : members_) {
    for (auto& t : m.trainable()) out.push_back(t);
  }
  return out;
}

std::vector<nn::NamedArray> DiscriminatorSet::export_state() const {
  std::vector<nn::NamedArray> out;
  for (const auto& m : members_) {
    for (auto a : m.export_state()) {
      a.name = m.spec().name + "/" + a.name;
      out.push_back(std::move(a));
    }
  }
  return out;
}

void DiscriminatorSet::import_state(const std::vector<nn::NamedArray>& state) {
  for (auto& m : members_) {
    const std::string prefix = m.spec().name + "/";
    std::vector<nn::NamedArray> mine;
    for (const auto& a : state) {
      if (a.name.rfind(prefix, 0) == 0) mine.push_back({a.name.substr(prefix.size()), a.values});
    }
    m.import_state(mine);
  }
}

// ---- tensors <-> micrographs ------------------------------------------------

nn::Tensor<float> to_tensor(const Micrograph& m) { return to_tensor(std::vector<Micrograph>{m}); }

nn::Tensor<float> to_tensor(const std::vector<Micrograph>& batch) {
  if (batch.empty()) throw InvalidInput("to_tensor: empty batch");
  const int h = batch[0].height(), w = batch[0].width();
  std::vector<float> v;
  v.reserve(batch.size() * h * w);
  for (const Micrograph& m : batch) {
    if (m.height() != h || m.width() != w) throw InvalidInput("to_tensor: batch images differ in size");
    for (double x : m.values()) v.push_back(static_cast<float>(x));
  }
  return nn::Tensor<float>::from({static_cast<int>(batch.size()), h, w, 1}, std::move(v));
}

Micrograph from_tensor(const nn::Tensor<float>& t, int index) {
  const nn::Shape s = t.shape();
  if (s.c != 1) throw InvalidInput("from_tensor: expected a single-channel tensor");
  if (index < 0 || index >= s.n) throw InvalidInput("from_tensor: batch index out of range");
  const std::size_t ps = s.per_sample();
  std::vector<double> v(t.value().begin() + index * ps, t.value().begin() + (index + 1) * ps);
  return Micrograph(s.h, s.w, std::move(v));
}

Micrograph prepare_input(const GeneratorSpec& spec, const Micrograph& lowres, Coverage cov) {
  const int n = downsampled_side(spec.target_side, cov.step());
  if (lowres.height() != n || lowres.width() != n) {
    throw InvalidInput("generator: a " + std::to_string(spec.target_side) + "px target at step " +
                       std::to_string(cov.step()) + " needs a " + std::to_string(n) + "px input, got " +
                       std::to_string(lowres.height()) + "x" + std::to_string(lowres.width()));
  }
  if (spec.variant == GeneratorVariant::one_stage) {
    if (cov.step() != spec.step) {
      throw InvalidInput("generator: one-stage model built for step " + std::to_string(spec.step) + ", got " +
                         std::to_string(cov.step()));
    }
    return lowres;
  }
  return upsample_nearest(lowres, spec.target_side, cov.step());
}

Micrograph infer(const Generator& g, const Micrograph& lowres, Coverage cov, bool overwrite_known) {
  const Micrograph in = prepare_input(g.spec(), lowres, cov);
  Micrograph out = clamp_unit(from_tensor(g.forward(to_tensor(in))));
  if (overwrite_known) {
    const int s = cov.step();
    for (int r = 0; r < lowres.height(); ++r) {
      for (int c = 0; c < lowres.width(); ++c) out(r * s, c * s) = lowres(r, c);
    }
  }
  return out;
}

}  // namespace dlss
