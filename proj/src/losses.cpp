#include "dlss/losses.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "dlss/error.hpp"
#include "dlss/nn/ops.hpp"

namespace dlss {

double p_raw(double c) {
  if (!(c > 0.0 && c <= 1.0)) throw InvalidInput("p_raw: coverage fraction must lie in (0,1]");
  return 0.002211 - 0.037887 * c + 0.289451 * c * c;
}

double CoverageScale::raw(double c) const {
  if (!(c > 0.0 && c <= 1.0)) throw InvalidInput("coverage scale: fraction must lie in (0,1]");
  if (mode == Mode::ema_tracked) {
    for (int s : steps) {
      if (std::abs(c - 1.0 / (static_cast<double>(s) * s)) < 1e-15) {
        auto it = ema.find(s);
        if (it != ema.end()) return it->second;
      }
    }
  }
  return coefficients[0] + coefficients[1] * c + coefficients[2] * c * c;
}

double CoverageScale::p(double c) const {
  if (steps.empty()) throw InvalidInput("coverage scale: empty coverage set");
  double total = 0;
  for (int s : steps) total += raw(1.0 / (static_cast<double>(s) * s));
  return raw(c) / (total / static_cast<double>(steps.size()));
}

void CoverageScale::observe(int step, double mse) {
  if (mode != Mode::ema_tracked) return;
  if (!std::isfinite(mse) || mse < 0) throw InvalidInput("coverage scale: observed MSE must be finite and non-negative");
  auto it = ema.find(step);
  if (it == ema.end()) {
    const double c = 1.0 / (static_cast<double>(step) * step);
    it = ema.emplace(step, coefficients[0] + coefficients[1] * c + coefficients[2] * c * c).first;
  }
  it->second = ema_decay * it->second + (1.0 - ema_decay) * mse;
}

void CoverageScale::validate() const {
  if (steps.empty()) throw InvalidInput("coverage scale: empty coverage set");
  for (int s : steps) {
    if (s < 1) throw InvalidInput("coverage scale: steps must be >= 1");
    if (!(raw(1.0 / (static_cast<double>(s) * s)) > 0)) {
      throw InvalidInput("coverage scale: non-positive scale at s=" + std::to_string(s));
    }
  }
  if (!(ema_decay > 0 && ema_decay < 1)) throw InvalidInput("coverage scale: ema_decay must lie in (0,1)");
}

double p(double c, const CoverageScale& scale) { return scale.p(c); }

void LossConfig::validate() const {
  if (!(lambda_mse > 0 && lambda_aux > 0 && lambda_one_stage > 0)) throw InvalidInput("loss config: lambdas must be positive");
  if (predictor_count < 1) throw InvalidInput("loss config: predictor_count must be >= 1");
  if (crop_size < 1) throw InvalidInput("loss config: crop_size must be >= 1");
  if (!(epsilon_guard > 0)) throw InvalidInput("loss config: epsilon_guard must be positive");
}

Micrograph mask_known_pixels(const Micrograph& output, const Micrograph& target, Coverage cov) {
  if (output.height() != target.height() || output.width() != target.width()) {
    throw InvalidInput("mask_known_pixels: output and target shapes differ");
  }
  Micrograph out = output;
  const int s = cov.step();
  for (int r = 0; r < out.height(); r += s) {
    for (int c = 0; c < out.width(); c += s) out(r, c) = target(r, c);
  }
  return out;
}

namespace {

template <class T>
LossTerm<T> finish(nn::Tensor<T> scaled, AlrcState& alrc) {
  LossTerm<T> out;
  out.raw = static_cast<double>(scaled.item());
  const AlrcResult r = alrc_apply(out.raw, alrc);
  alrc = r.state;
  out.effective = r.effective_loss;
  out.grad_scale = r.grad_scale;
  out.raw_tensor = std::move(scaled);
  return out;
}

}  // namespace

template <class T>
LossTerm<T> loss_mse_blurred(const nn::Tensor<T>& gen_out, std::span<const T> blurred_target, double c,
                             const CoverageScale& scale, const LossConfig& cfg, AlrcState& alrc) {
  const double k = cfg.lambda_mse / scale.p(c);
  return finish(nn::affine<T>(nn::mse<T>(gen_out, blurred_target), static_cast<T>(k), T(0)), alrc);
}

double homogenized_value(double scaled_mse, double mu1, double mu_m, double epsilon_guard) {
  return mu1 * scaled_mse / std::max(mu_m, epsilon_guard);
}

template <class T>
LossTerm<T> loss_mse_homogenized(const nn::Tensor<T>& gen_out, std::span<const T> target, double c,
                                 const CoverageScale& scale, const LossConfig& cfg, AlrcState& alrc, double mu_m) {
  if (!std::isfinite(mu_m)) throw InvalidInput("loss_mse_homogenized: predictor mean is not finite");
  const double k = cfg.lambda_mse * alrc_mu1(alrc) / (scale.p(c) * std::max(mu_m, cfg.epsilon_guard));
  return finish(nn::affine<T>(nn::mse<T>(gen_out, target), static_cast<T>(k), T(0)), alrc);
}

template <class T>
LossTerm<T> loss_aux(const nn::Tensor<T>& trainer_out, std::span<const T> half_blurred_target, double c,
                     const CoverageScale& scale, const LossConfig& cfg, AlrcState& alrc) {
  if (trainer_out.numel() != half_blurred_target.size()) throw InvalidInput("loss_aux: trainer output and target sizes differ");
  const double k = cfg.lambda_aux / scale.p(c);
  return finish(nn::affine<T>(nn::mse<T>(trainer_out, half_blurred_target), static_cast<T>(k), T(0)), alrc);
}

template <class T>
LossTerm<T> loss_one_stage(const nn::Tensor<T>& gen_out, std::span<const T> blurred_target, const LossConfig& cfg,
                           AlrcState& alrc) {
  return finish(nn::affine<T>(nn::mse<T>(gen_out, blurred_target), static_cast<T>(cfg.lambda_one_stage), T(0)), alrc);
}

double loss_discriminator(std::span<const double> fake_scores, std::span<const double> real_scores) {
  if (fake_scores.empty() || fake_scores.size() != real_scores.size()) {
    throw InvalidInput("loss_discriminator: need matching non-empty score sets");
  }
  double s = 0;
  for (std::size_t i = 0; i < fake_scores.size(); ++i) {
    s += fake_scores[i] * fake_scores[i] + (real_scores[i] - 1.0) * (real_scores[i] - 1.0);
  }
  return s / static_cast<double>(fake_scores.size());
}

double loss_generator_adv(std::span<const double> fake_scores) {
  if (fake_scores.empty()) throw InvalidInput("loss_generator_adv: no scores");
  double s = 0;
  for (double f : fake_scores) s += (f - 1.0) * (f - 1.0);
  return s / static_cast<double>(fake_scores.size());
}

double loss_generator_total(double mse_term, double aux_term, double adv_term) { return mse_term + aux_term + adv_term; }

template <class T>
nn::Tensor<T> loss_discriminator(const std::vector<nn::Tensor<T>>& fake, const std::vector<nn::Tensor<T>>& real) {
  if (fake.empty() || fake.size() != real.size()) throw InvalidInput("loss_discriminator: need matching non-empty score sets");
  std::vector<nn::Tensor<T>> terms;
  std::vector<T> weights;
  const T w = T(1) / static_cast<T>(fake.size());
  for (std::size_t i = 0; i < fake.size(); ++i) {
    terms.push_back(nn::mse_to_value<T>(fake[i], T(0)));
    terms.push_back(nn::mse_to_value<T>(real[i], T(1)));
    weights.push_back(w);
    weights.push_back(w);
  }
  return nn::weighted_sum<T>(terms, weights);
}

template <class T>
nn::Tensor<T> loss_generator_adv(const std::vector<nn::Tensor<T>>& fake) {
  if (fake.empty()) throw InvalidInput("loss_generator_adv: no scores");
  std::vector<nn::Tensor<T>> terms;
  for (const auto& f : fake) terms.push_back(nn::mse_to_value<T>(f, T(1)));
  return nn::weighted_sum<T>(terms, std::vector<T>(fake.size(), T(1) / static_cast<T>(fake.size())));
}

Micrograph half_blurred_target(const Micrograph& target, const BlurKernel& k) {
  Micrograph b = blur(target, k);
  return interpolate(b, target.height() / 2, target.width() / 2, InterpMethod::bilinear);
}

// ---- predictor ensemble -----------------------------------------------------

namespace {

nn::NetworkSpec predictor_spec(int crop) {
  using nn::LayerKind;
  nn::NetworkSpec s;
  s.name = "predictor";
  s.inputs = {{1, crop, crop, 1}};
  s.layers = {nn::linear_layer("fc1", 32, nn::NormKind::none, true), nn::make_layer(LayerKind::relu, "act1"),
              nn::linear_layer("fc2", 32, nn::NormKind::none, true), nn::make_layer(LayerKind::relu, "act2"),
              nn::linear_layer("fc3", 1, nn::NormKind::none, true), nn::make_layer(LayerKind::softplus, "out")};
  return s;
}

}  // namespace

PredictorEnsemble::PredictorEnsemble(int count, int crop, std::uint64_t seed) : crop_(crop) {
  if (count < 1 || crop < 1) throw InvalidInput("predictor ensemble: count and crop must be >= 1");
  std::mt19937_64 rng(seed);
  members_.reserve(count);
  for (int i = 0; i < count; ++i) {
    members_.emplace_back(predictor_spec(crop));
    members_.back().init_he(rng);
  }
  for (auto& m : members_) optimizers_.emplace_back(m.trainable());
}

nn::Tensor<float> PredictorEnsemble::draw_crop(const Micrograph& target, std::mt19937_64& rng) const {
  if (target.height() < crop_ || target.width() < crop_) {
    throw InvalidInput("predictor: target smaller than the " + std::to_string(crop_) + "px crop");
  }
  const int r = std::uniform_int_distribution<int>(0, target.height() - crop_)(rng);
  const int c = std::uniform_int_distribution<int>(0, target.width() - crop_)(rng);
  std::vector<float> v(static_cast<std::size_t>(crop_) * crop_);
  for (int i = 0; i < crop_; ++i) {
    for (int j = 0; j < crop_; ++j) v[static_cast<std::size_t>(i) * crop_ + j] = static_cast<float>(target(r + i, c + j));
  }
  return nn::Tensor<float>::from({1, crop_, crop_, 1}, std::move(v));
}

double PredictorEnsemble::train_step(const Micrograph& target, double label, std::mt19937_64& rng, double lr,
                                     double beta1) {
  double total = 0;
  for (std::size_t i = 0; i < members_.size(); ++i) {
    const nn::Tensor<float> x = draw_crop(target, rng);
    const nn::Tensor<float> y = members_[i].forward({x}, nn::Mode::train);
    const nn::Tensor<float> l = nn::mse_to_value<float>(y, static_cast<float>(label));
    total += l.item();
    nn::backward(l);
    optimizers_[i].step(lr, beta1);
  }
  return total / static_cast<double>(members_.size());
}

std::vector<double> PredictorEnsemble::outputs(const Micrograph& target, std::mt19937_64& rng) const {
  std::vector<double> out;
  for (const auto& m : members_) out.push_back(m.forward({draw_crop(target, rng)}).item());
  return out;
}

double PredictorEnsemble::mean(const Micrograph& target, std::mt19937_64& rng) const {
  const std::vector<double> o = outputs(target, rng);
  double s = 0;
  for (double v : o) s += v;
  return s / static_cast<double>(o.size());
}

std::vector<nn::NamedArray> PredictorEnsemble::export_state() const {
  std::vector<nn::NamedArray> out;
  for (std::size_t i = 0; i < members_.size(); ++i) {
    const std::string prefix = "m" + std::to_string(i) + ".";
    for (auto a : members_[i].export_state()) {
      a.name = prefix + a.name;
      out.push_back(std::move(a));
    }
    for (auto a : optimizers_[i].export_state(prefix + "opt")) out.push_back(std::move(a));
  }
  return out;
}

void PredictorEnsemble::import_state(const std::vector<nn::NamedArray>& state) {
  for (std::size_t i = 0; i < members_.size(); ++i) {
    const std::string prefix = "m" + std::to_string(i) + ".";
    std::vector<nn::NamedArray> mine;
    for (const auto& a : state) {
      if (a.name.rfind(prefix, 0) == 0) mine.push_back({a.name.substr(prefix.size()), a.values});
    }
    members_[i].import_state(mine);
    optimizers_[i].import_state(state, prefix + "opt");
  }
}

double predictor_train_step(PredictorEnsemble& ensemble, const Micrograph& target, double scaled_mse,
                            std::mt19937_64& rng, double lr, double beta1) {
  return ensemble.train_step(target, scaled_mse, rng, lr, beta1);
}

double predictor_mean(const PredictorEnsemble& ensemble, const Micrograph& target, std::mt19937_64& rng) {
  return ensemble.mean(target, rng);
}

LossLog::LossLog(const std::filesystem::path& path) : out_(path) {
  if (!out_) throw InvalidInput("loss log: cannot open " + path.string());
  out_ << "iter,term_name,raw,effective\n";
}

void LossLog::write(long long iter, std::string_view term, double raw, double effective) {
  out_ << iter << "," << term << "," << std::setprecision(9) << raw << "," << effective << "\n";
}

#define DLSS_INSTANTIATE_LOSSES(T)                                                                                   \
  template LossTerm<T> loss_mse_blurred<T>(const nn::Tensor<T>&, std::span<const T>, double, const CoverageScale&,   \
                                           const LossConfig&, AlrcState&);                                           \
  template LossTerm<T> loss_mse_homogenized<T>(const nn::Tensor<T>&, std::span<const T>, double,                     \
                                               const CoverageScale&, const LossConfig&, AlrcState&, double);         \
  template LossTerm<T> loss_aux<T>(const nn::Tensor<T>&, std::span<const T>, double, const CoverageScale&,           \
                                   const LossConfig&, AlrcState&);                                                   \
  template LossTerm<T> loss_one_stage<T>(const nn::Tensor<T>&, std::span<const T>, const LossConfig&, AlrcState&);   \
  template nn::Tensor<T> loss_discriminator<T>(const std::vector<nn::Tensor<T>>&, const std::vector<nn::Tensor<T>>&); \
  template nn::Tensor<T> loss_generator_adv<T>(const std::vector<nn::Tensor<T>>&);

DLSS_INSTANTIATE_LOSSES(float)
DLSS_INSTANTIATE_LOSSES(double)

}  // namespace dlss
