#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "dlss/error.hpp"
#include "dlss/losses.hpp"
#include "dlss/nn/ops.hpp"
#include "helpers.hpp"

using namespace dlss;

// Oracle values below were evaluated by hand from the three published
// coefficients (0.002211, -0.037887, 0.289451) in exact decimal arithmetic.
TEST(CoverageScaling, RawPolynomialValues) {
  EXPECT_NEAR(p_raw(1.0 / 16), 9.7373046875e-4, 1e-15);
  EXPECT_NEAR(p_raw(1.0 / 100), 1.8610751e-3, 1e-15);
  EXPECT_NEAR(p_raw(1e-300), 0.002211, 1e-15);
  EXPECT_THROW(p_raw(0.0), InvalidInput);
  EXPECT_THROW(p_raw(1.5), InvalidInput);
}

TEST(CoverageScaling, NormalizedValues) {
  const CoverageScale scale;
  EXPECT_NEAR(scale.p(1.0 / 16), 0.6547167975952788, 1e-9);
  EXPECT_NEAR(scale.p(1.0 / 100), 1.2513494941988412, 1e-9);
  EXPECT_NEAR(scale.p_step(4), scale.p(1.0 / 16), 1e-15);
  EXPECT_NEAR(p(1.0 / 16, scale), 0.6547, 1e-4);
}

TEST(CoverageScaling, MeanOverTrainingCoveragesIsOne) {
  const CoverageScale scale;
  double s = 0, raw = 0;
  for (int k = 4; k <= 10; ++k) {
    s += scale.p_step(k);
    raw += p_raw(1.0 / (k * k));
  }
  EXPECT_NEAR(s / 7, 1.0, 1e-9);
  EXPECT_NEAR(raw / 7, 1.4872544470012567e-3, 1e-15);
}

TEST(CoverageScaling, EmaTrackedFollowsObservations) {
  CoverageScale scale;
  scale.mode = CoverageScale::Mode::ema_tracked;
  const double before = scale.raw(1.0 / 25);
  for (int i = 0; i < 5000; ++i) scale.observe(5, 0.01);
  EXPECT_NEAR(scale.raw(1.0 / 25), 0.01, 1e-4);
  EXPECT_NE(before, scale.raw(1.0 / 25));
  double s = 0;
  for (int k = 4; k <= 10; ++k) s += scale.p_step(k);
  EXPECT_NEAR(s / 7, 1.0, 1e-9);
}

TEST(Losses, BlurredMseExample) {
  // Uniform 0.1 difference at c = 1/16: 200 * 0.01 / p(1/16).
  const LossConfig cfg;
  const CoverageScale scale;
  AlrcState alrc;
  alrc.mu1 = 10;
  alrc.mu2 = 200;
  const auto out = nn::Tensor<double>::full({1, 4, 4, 1}, 0.6, true);
  const std::vector<double> tgt(16, 0.5);
  const auto term = loss_mse_blurred<double>(out, tgt, 1.0 / 16, scale, cfg, alrc);
  EXPECT_NEAR(term.raw, 3.0547558995673185, 1e-9);
  EXPECT_NEAR(term.raw, 3.0549, 5e-4);
  EXPECT_DOUBLE_EQ(term.effective, term.raw);
  EXPECT_DOUBLE_EQ(term.grad_scale, 1.0);
}

TEST(Losses, OraclePredictorCancelsToMu1) {
  const LossConfig cfg;
  const CoverageScale scale;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 0.3);
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    const auto out = test::random_tensor<double>({1, 6, 6, 1}, 100 + i, 0.0, 1.0);
    std::vector<double> tgt(36);
    for (double& t : tgt) t = u(rng);
    const double c = 1.0 / (16 + i % 85);
    AlrcState alrc;
    alrc.mu1 = 25 + i;
    double m = 0;
    for (std::size_t k = 0; k < tgt.size(); ++k) m += (out.value()[k] - tgt[k]) * (out.value()[k] - tgt[k]);
    m /= tgt.size();
    const double scaled = cfg.lambda_mse * m / scale.p(c);
    if (scaled < 0.1) continue;
    ++checked;
    EXPECT_NEAR(homogenized_value(scaled, alrc.mu1, scaled, cfg.epsilon_guard), alrc.mu1, 1e-9);
    const auto term = loss_mse_homogenized<double>(out, tgt, c, scale, cfg, alrc, scaled);
    EXPECT_NEAR(term.raw, 25.0 + i, 1e-9);
  }
  EXPECT_GT(checked, 100);
}

TEST(Losses, EpsilonGuard) {
  EXPECT_DOUBLE_EQ(homogenized_value(0.5, 25, 0.01, 0.1), 25 * 0.5 / 0.1);
}

TEST(Losses, AdversarialArithmetic) {
  const std::vector<double> one{1, 1, 1}, zero{0, 0, 0}, half{0.5, 0.5, 0.5};
  EXPECT_DOUBLE_EQ(loss_discriminator(one, zero), 2.0);
  EXPECT_DOUBLE_EQ(loss_discriminator(half, half), 0.5);
  const std::vector<double> mixed{0.5, 1, 0};
  EXPECT_DOUBLE_EQ(loss_generator_adv(mixed), 5.0 / 12.0);
  EXPECT_DOUBLE_EQ(loss_generator_total(1, 2, 3), 6);

  std::vector<nn::Tensor<double>> f, r;
  for (double v : mixed) {
    f.push_back(nn::Tensor<double>::full({1, 1, 1, 1}, v, true));
    r.push_back(nn::Tensor<double>::full({1, 1, 1, 1}, 1.0 - v, true));
  }
  EXPECT_NEAR(loss_generator_adv<double>(f).item(), 5.0 / 12.0, 1e-15);
  EXPECT_NEAR(loss_discriminator<double>(f, r).item(), loss_discriminator(mixed, std::vector<double>{0.5, 0, 1}), 1e-15);
}

TEST(Losses, ConfigDefaults) {
  const LossConfig cfg;
  EXPECT_EQ(cfg.lambda_aux, 200);
  EXPECT_EQ(cfg.adv_blur.size, 3);
  EXPECT_EQ(cfg.adv_blur.sigma, 1.5);
  EXPECT_EQ(cfg.eval_blur.size, 5);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Losses, HalfBlurredTargetSide) {
  const Micrograph t = test::random_image(64, 64, 1);
  const Micrograph h = half_blurred_target(t, gaussian_kernel(5, 2.5));
  EXPECT_EQ(h.height(), 32);
  EXPECT_EQ(h.width(), 32);
}

TEST(Losses, MaskKnownPixels) {
  const Micrograph out(6, 6, 0.0), tgt(6, 6, 1.0);
  const Micrograph m = mask_known_pixels(out, tgt, Coverage(3));
  int ones = 0;
  for (double v : m.values()) ones += v == 1.0;
  EXPECT_EQ(ones, 4);
  EXPECT_EQ(m(3, 3), 1.0);
  EXPECT_EQ(m(3, 4), 0.0);
}

TEST(Predictor, FreshEnsembleIsFinite) {
  PredictorEnsemble ens(20, 5, 1);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double m = ens.mean(test::random_image(16, 16, i), rng);
    ASSERT_TRUE(std::isfinite(m));
    ASSERT_GE(m, 0.0);
  }
}

TEST(Predictor, LearnsNoiseVariance) {
  // Noise level sets the label; the ensemble mean should track it.
  auto make = [](std::mt19937_64& rng, double sigma) {
    std::normal_distribution<double> n(0.0, sigma);
    Micrograph m(16, 16);
    for (double& v : m.values()) v = std::clamp(0.5 + n(rng), 0.0, 1.0);
    return m;
  };
  PredictorEnsemble ens(4, 5, 7);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.02, 0.2);
  for (int i = 0; i < 3000; ++i) {
    const double s = u(rng);
    ens.train_step(make(rng, s), 200 * s * s, rng, 0.001, 0.9);
  }
  std::vector<double> pred, label;
  for (int i = 0; i < 200; ++i) {
    const double s = u(rng);
    const Micrograph m = make(rng, s);
    pred.push_back(ens.mean(m, rng));
    label.push_back(200 * s * s);
  }
  const auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  const double mp = mean(pred), ml = mean(label);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sxy += (pred[i] - mp) * (label[i] - ml);
    sxx += (pred[i] - mp) * (pred[i] - mp);
    syy += (label[i] - ml) * (label[i] - ml);
  }
  EXPECT_GT(sxy / std::sqrt(sxx * syy), 0.8);
}

TEST(Predictor, StateRoundTrip) {
  PredictorEnsemble a(3, 5, 1), b(3, 5, 2);
  b.import_state(a.export_state());
  const Micrograph t = test::random_image(8, 8, 3);
  std::mt19937_64 r1(9), r2(9);
  EXPECT_EQ(a.outputs(t, r1), b.outputs(t, r2));
}

TEST(LossLog, WritesHeaderAndRows) {
  const auto p = std::filesystem::temp_directory_path() / "dlss_losslog.csv";
  {
    LossLog log(p);
    log.write(3, "aux", 1.5, 1.25);
  }
  std::ifstream in(p);
  std::string a, b;
  std::getline(in, a);
  std::getline(in, b);
  EXPECT_EQ(a, "iter,term_name,raw,effective");
  EXPECT_EQ(b.substr(0, 6), "3,aux,");
  std::filesystem::remove(p);
}
