#include <gtest/gtest.h>

#include <random>

#include "dlss/config.hpp"
#include "dlss/error.hpp"
#include "dlss/replay.hpp"
#include "dlss/schedule.hpp"

using namespace dlss;

namespace {

void expect_hyper(const Hyper& h, double lr, double beta) {
  EXPECT_TRUE(h.active);
  EXPECT_NEAR(h.lr, lr, 1e-15);
  EXPECT_NEAR(h.beta, beta, 1e-15);
}

}  // namespace

TEST(TwoStageSchedule, TableExamples) {
  const TwoStageSchedule s;
  expect_hyper(s.at(0, NetRole::G), 0.0003, 0.9);
  expect_hyper(s.at(1200000, NetRole::G), 0.0001, 0.5);
  expect_hyper(s.at(550000, NetRole::G), 0.0003, 0.9);
  expect_hyper(s.at(999999, NetRole::G), 0.0003 / 8, 0.5 + 0.4 / 8);
}

TEST(TwoStageSchedule, PhaseBoundaries) {
  const TwoStageSchedule s;
  EXPECT_EQ(s.boundaries(), (std::vector<long long>{0, 500000, 1000000, 1500000, 2000000}));
  expect_hyper(s.at(499999, NetRole::G), 0.0003, 0.9);
  expect_hyper(s.at(500000, NetRole::G), 0.0003, 0.9);
  expect_hyper(s.at(562500, NetRole::G), 0.0003 * 7 / 8, 0.5 + 0.4 * 7 / 8);
  expect_hyper(s.at(1000000, NetRole::G), 0.0001, 0.5);
  expect_hyper(s.at(1999999, NetRole::G), 0.0001 / 8, 0.5);
  expect_hyper(s.at(0, NetRole::T), 0.0006, 0.9);
  expect_hyper(s.at(1000000, NetRole::T), 0.0002, 0.5);
  expect_hyper(s.at(0, NetRole::M), 0.0003, 0.9);
  EXPECT_FALSE(s.at(1000000, NetRole::M).active);
  EXPECT_FALSE(s.at(0, NetRole::D).active);
  expect_hyper(s.at(1000000, NetRole::D), 0.0001, 0.5);
  EXPECT_THROW(s.at(-1, NetRole::G), InvalidInput);
  EXPECT_THROW(s.at(2000000, NetRole::G), InvalidInput);
}

TEST(TwoStageSchedule, FreezeAndAdversarialFlags) {
  const TwoStageSchedule s(1000, 1000);
  EXPECT_FALSE(s.frozen(499));
  EXPECT_TRUE(s.frozen(500));
  EXPECT_FALSE(s.frozen(1000));
  EXPECT_TRUE(s.frozen(1500));
  EXPECT_FALSE(s.adversarial(999));
  EXPECT_TRUE(s.adversarial(1000));
  const TwoStageSchedule no_adv(1000, 0);
  EXPECT_EQ(no_adv.total(), 1000);
}

TEST(TwoStageSchedule, LearningRatesNeverIncreaseWithinASpan) {
  const TwoStageSchedule s(4000, 4000);
  for (NetRole r : {NetRole::G, NetRole::T}) {
    for (long long i = 1; i < s.total(); ++i) {
      if (i == s.non_adversarial()) continue;
      ASSERT_LE(s.at(i, r).lr, s.at(i - 1, r).lr) << net_role_name(r) << " at " << i;
    }
  }
}

TEST(DecayMultiplier, EightLevels) {
  EXPECT_EQ(decay_multiplier(0, 0, 800), 1.0);
  EXPECT_EQ(decay_multiplier(99, 0, 800), 1.0);
  EXPECT_EQ(decay_multiplier(100, 0, 800), 7.0 / 8);
  EXPECT_EQ(decay_multiplier(799, 0, 800), 1.0 / 8);
  EXPECT_THROW(decay_multiplier(800, 0, 800), InvalidInput);
}

TEST(OneStageSchedule, Milestones) {
  const OneStageSchedule s(100000);
  expect_hyper(s.at(0), 0.001, 0.9);
  expect_hyper(s.at(20000), 0.0005, 0.9);
  expect_hyper(s.at(60000), 0.00025, 0.5);
  EXPECT_FALSE(s.frozen(49999));
  EXPECT_TRUE(s.frozen(50000));
  for (long long i = 1; i < s.total(); i += 97) ASSERT_LE(s.at(i).lr, s.at(i - 1).lr);
}

TEST(Replay, Quantile) {
  EXPECT_EQ(quantile({3, 1, 2}, 0.5), 2);
  EXPECT_NEAR(quantile({0, 10}, 0.8), 8, 1e-12);
  EXPECT_THROW(quantile({}, 0.5), InvalidInput);
  EXPECT_THROW(quantile({1}, 1.5), InvalidInput);
}

TEST(Replay, ReplayFraction) {
  ReplayBuffer<int> buf(16, 0.2);
  for (int i = 0; i < 16; ++i) buf.offer(i, 1.0 + i);
  std::mt19937_64 rng(1);
  int replayed = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    bool r = false;
    buf.maybe_replay(-1, rng, &r);
    replayed += r;
  }
  EXPECT_NEAR(static_cast<double>(replayed) / n, 0.20, 0.01);
}

TEST(Replay, AdmissionAtTheEightiethPercentile) {
  ReplayBuffer<int> buf(64, 0.2, 1000);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  int admitted = 0;
  for (int i = 0; i < 20000; ++i) {
    admitted += buf.offer(i, u(rng));
    ASSERT_LE(buf.size(), buf.capacity());
  }
  EXPECT_NEAR(admitted / 20000.0, 0.2, 0.02);
  EXPECT_NEAR(buf.threshold(), 0.8, 0.05);
  EXPECT_FALSE(buf.offer(-1, 0.5));
  EXPECT_TRUE(buf.offer(-2, 0.99));
  EXPECT_EQ(buf.entries().back().payload, -2);
}

TEST(Replay, EmptyBufferNeverReplays) {
  ReplayBuffer<int> buf;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(replay_maybe(buf, i, rng), i);
}

TEST(Config, RoundTrip) {
  TrainRunConfig c = TrainRunConfig::defaults(GeneratorVariant::two_stage);
  c.mode = CoverageMode::unified;
  c.steps = {4, 5, 6, 7, 8, 9, 10};
  c.blur_targets = false;
  c.seed = 1234567890123ULL;
  c.output_init_std = 0.015;
  const TrainRunConfig d = TrainRunConfig::parse(c.serialize());
  EXPECT_EQ(d.to_key_values(), c.to_key_values());
  EXPECT_EQ(format_steps(parse_steps("4..10")), format_steps(c.steps));
  EXPECT_EQ(parse_steps("4,5,7"), (std::vector<int>{4, 5, 7}));
}

TEST(Config, ErrorsNameTheField) {
  TrainRunConfig c = TrainRunConfig::defaults(GeneratorVariant::one_stage);
  c.batch_size = 0;
  try {
    c.validate();
    FAIL() << "expected InvalidInput";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("config.batch_size"), std::string::npos);
  }
  try {
    TrainRunConfig::parse("side = banana\n");
    FAIL() << "expected InvalidInput";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("config.side"), std::string::npos);
  }
  EXPECT_THROW(TrainRunConfig::parse("colour = red\n"), InvalidInput);
  EXPECT_THROW(parse_key_values("a = 1\na = 2\n"), InvalidInput);
  EXPECT_THROW(parse_key_values("no equals sign\n"), InvalidInput);
}

TEST(Config, IndividualCoverageTakesOneStep) {
  TrainRunConfig c = TrainRunConfig::defaults(GeneratorVariant::two_stage);
  c.steps = {4, 5};
  EXPECT_THROW(c.validate(), InvalidInput);
  c.mode = CoverageMode::unified;
  EXPECT_NO_THROW(c.validate());
}
