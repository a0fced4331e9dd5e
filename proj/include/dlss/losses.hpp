#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "dlss/alrc.hpp"
#include "dlss/imaging.hpp"
#include "dlss/nn/network.hpp"
#include "dlss/nn/optim.hpp"

namespace dlss {

// Fitted final training MSE as a function of coverage fraction c in (0,1].
double p_raw(double c);

/// Normalizer that equalizes expected loss magnitudes across coverages.
struct CoverageScale {
  enum class Mode { fixed_polynomial, ema_tracked };

  std::array<double, 3> coefficients{0.002211, -0.037887, 0.289451};
  std::vector<int> steps{4, 5, 6, 7, 8, 9, 10};  // c_all = {1/s^2}
  Mode mode = Mode::fixed_polynomial;
  double ema_decay = 0.999;
  std::map<int, double> ema;  // ema_tracked only; seeded from the polynomial

  double raw(double c) const;
  // raw(c) / mean over c_all of raw. In ema_tracked mode the tracked values
  // replace the polynomial for steps in c_all.
  double p(double c) const;
  double p_step(int step) const { return p(1.0 / (static_cast<double>(step) * step)); }

  // ema_tracked: folds an observed unscaled MSE into the step's average.
  void observe(int step, double mse);
  void validate() const;
};

double p(double c, const CoverageScale& scale);

struct LossConfig {
  double lambda_mse = 200.0;
  double lambda_aux = 200.0;
  double lambda_one_stage = 200.0;
  int predictor_count = 20;
  int crop_size = 5;
  double epsilon_guard = 0.1;
  BlurKernel eval_blur = gaussian_kernel(5, 2.5);
  BlurKernel adv_blur = gaussian_kernel(3, 1.5);

  void validate() const;
};

// Copies target values into `output` at every probing location (i*s, j*s).
Micrograph mask_known_pixels(const Micrograph& output, const Micrograph& target, Coverage cov);

/// A differentiable raw loss plus its clipped value. Backpropagate with
/// nn::backward(raw_tensor, grad_scale) so the clip acts as a constant factor.
template <class T>
struct LossTerm {
  nn::Tensor<T> raw_tensor;
  double raw = 0;
  double effective = 0;
  double grad_scale = 1;
};

// ALRC(lambda_mse * MSE(gen_out, blurred_target) / p(c)).
template <class T>
LossTerm<T> loss_mse_blurred(const nn::Tensor<T>& gen_out, std::span<const T> blurred_target, double c,
                             const CoverageScale& scale, const LossConfig& cfg, AlrcState& alrc);

// ALRC(lambda_mse * mu1 * MSE(gen_out, target) / (p(c) * max(mu_m, eps))).
// mu1 and mu_m enter as constants.
template <class T>
LossTerm<T> loss_mse_homogenized(const nn::Tensor<T>& gen_out, std::span<const T> target, double c,
                                 const CoverageScale& scale, const LossConfig& cfg, AlrcState& alrc, double mu_m);

// The pre-clipping homogenized value for a given scaled MSE.
double homogenized_value(double scaled_mse, double mu1, double mu_m, double epsilon_guard);

// ALRC(lambda_aux * MSE(trainer_out, half_blurred_target) / p(c)).
template <class T>
LossTerm<T> loss_aux(const nn::Tensor<T>& trainer_out, std::span<const T> half_blurred_target, double c,
                     const CoverageScale& scale, const LossConfig& cfg, AlrcState& alrc);

// ALRC(lambda_one_stage * MSE(gen_out, blurred_target)).
template <class T>
LossTerm<T> loss_one_stage(const nn::Tensor<T>& gen_out, std::span<const T> blurred_target, const LossConfig& cfg,
                           AlrcState& alrc);

// Least-squares adversarial objectives averaged over discriminator scales.
double loss_discriminator(std::span<const double> fake_scores, std::span<const double> real_scores);
double loss_generator_adv(std::span<const double> fake_scores);
double loss_generator_total(double mse_term, double aux_term, double adv_term);

template <class T>
nn::Tensor<T> loss_discriminator(const std::vector<nn::Tensor<T>>& fake, const std::vector<nn::Tensor<T>>& real);
template <class T>
nn::Tensor<T> loss_generator_adv(const std::vector<nn::Tensor<T>>& fake);

// Bilinear downsample of blur(target) to half the side, the trainer target.
Micrograph half_blurred_target(const Micrograph& target, const BlurKernel& k);

/// N small dense regressors predicting the scaled generator error from d x d
/// target crops (25 -> 32 -> 32 -> 1, rectifiers, softplus output).
class PredictorEnsemble {
 public:
  PredictorEnsemble(int count, int crop, std::uint64_t seed);

  int size() const { return static_cast<int>(members_.size()); }
  int crop() const { return crop_; }

  // One ADAM step per member on its own fresh crop; returns the mean
  // pre-update member loss.
  double train_step(const Micrograph& target, double label, std::mt19937_64& rng, double lr, double beta1);
  // Member outputs on fresh crops (one crop per member).
  std::vector<double> outputs(const Micrograph& target, std::mt19937_64& rng) const;
  double mean(const Micrograph& target, std::mt19937_64& rng) const;

  nn::Network<float>& member(int i) { return members_[i]; }
  std::vector<nn::NamedArray> export_state() const;
  void import_state(const std::vector<nn::NamedArray>& state);

 private:
  nn::Tensor<float> draw_crop(const Micrograph& target, std::mt19937_64& rng) const;

  int crop_;
  std::vector<nn::Network<float>> members_;
  std::vector<nn::Adam<float>> optimizers_;
};

double predictor_train_step(PredictorEnsemble& ensemble, const Micrograph& target, double scaled_mse,
                            std::mt19937_64& rng, double lr = 0.0003, double beta1 = 0.9);
double predictor_mean(const PredictorEnsemble& ensemble, const Micrograph& target, std::mt19937_64& rng);

/// Line-oriented loss stream: `iter,term_name,raw,effective`.
class LossLog {
 public:
  explicit LossLog(const std::filesystem::path& path);
  void write(long long iter, std::string_view term, double raw, double effective);

 private:
  std::ofstream out_;
};

}  // namespace dlss
