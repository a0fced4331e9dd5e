#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "dlss/alrc.hpp"
#include "dlss/error.hpp"

using namespace dlss;

namespace {
AlrcState small_state() {
  AlrcState s;
  s.mu1 = 2;
  s.mu2 = 5;
  s.n = 3;
  return s;
}
}  // namespace

TEST(Alrc, BelowThresholdPassesThrough) {
  const AlrcState s = small_state();
  EXPECT_DOUBLE_EQ(s.threshold(), 5.0);
  const AlrcResult r = alrc_apply(3.0, s);
  EXPECT_DOUBLE_EQ(r.effective_loss, 3.0);
  EXPECT_DOUBLE_EQ(r.grad_scale, 1.0);
}

TEST(Alrc, AboveThresholdClips) {
  const AlrcResult r = alrc_apply(9.0, small_state());
  EXPECT_DOUBLE_EQ(r.effective_loss, 5.0);
  EXPECT_NEAR(r.grad_scale, 5.0 / 9.0, 1e-15);
  // Moments advance with the clipped value.
  EXPECT_NEAR(r.state.mu1, 0.999 * 2 + 0.001 * 5, 1e-15);
  EXPECT_NEAR(r.state.mu2, 0.999 * 5 + 0.001 * 25, 1e-15);
}

TEST(Alrc, DefaultInitFloorsVariance) {
  const AlrcState s;
  EXPECT_DOUBLE_EQ(alrc_mu1(s), 25.0);
  EXPECT_DOUBLE_EQ(s.threshold(), 25.0 + 3.0 * std::sqrt(AlrcState::kVarianceFloor));
}

TEST(Alrc, ZeroLossDecaysMeanGeometrically) {
  AlrcState s;
  for (int k = 0; k < 50; ++k) s = alrc_apply(0.0, s).state;
  EXPECT_NEAR(s.mu1, 25.0 * std::pow(0.999, 50), 1e-12);
}

TEST(Alrc, ConstantLossIsFixedPoint) {
  AlrcState s = small_state();
  for (int k = 0; k < 20000; ++k) s = alrc_apply(3.0, s).state;
  EXPECT_NEAR(s.mu1, 3.0, 1e-6);
}

TEST(Alrc, RejectsBadLoss) {
  const AlrcState s;
  EXPECT_THROW(alrc_apply(-1.0, s), InvalidInput);
  EXPECT_THROW(alrc_apply(std::numeric_limits<double>::quiet_NaN(), s), InvalidInput);
  EXPECT_THROW(alrc_apply(std::numeric_limits<double>::infinity(), s), InvalidInput);
  AlrcState bad;
  bad.beta1 = 1.0;
  EXPECT_THROW(bad.validate(), InvalidInput);
}

TEST(AlrcProperty, EffectiveBoundedAndScaleExact) {
  std::mt19937_64 rng(42);
  std::lognormal_distribution<double> heavy(1.0, 1.5);
  AlrcState s;
  for (int i = 0; i < 200000; ++i) {
    const double loss = heavy(rng) * (i % 97 == 0 ? 100.0 : 1.0);
    const double t = s.threshold();
    const AlrcResult r = alrc_apply(loss, s);
    ASSERT_LE(r.effective_loss, t);
    ASSERT_GT(r.grad_scale, 0.0);
    ASSERT_LE(r.grad_scale, 1.0);
    ASSERT_EQ(r.grad_scale * loss, r.effective_loss) << "loss " << loss;
    if (loss <= t) {
      ASSERT_EQ(r.effective_loss, loss);
    }
    s = r.state;
  }
}
