#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "dlss/error.hpp"
#include "dlss/training.hpp"

using namespace dlss;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dlss_training_" + name);
  fs::remove_all(p);
  return p;
}

TrainRunConfig tiny_two_stage(const fs::path& root) {
  TrainRunConfig c = TrainRunConfig::defaults(GeneratorVariant::two_stage);
  c.side = 32;
  c.base_channels = 4;
  c.depth = 1;
  c.iterations = 16;
  c.predictor_count = 3;
  c.checkpoint_root = root.string();
  return c;
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string s;
  std::getline(in, s);
  return s;
}

}  // namespace

TEST(Dataset, SyntheticSplitIsDisjointAndSized) {
  const auto tr = Dataset::synthetic_split(300, 16, 5, io::Split::train);
  const auto va = Dataset::synthetic_split(300, 16, 5, io::Split::validation);
  const auto te = Dataset::synthetic_split(300, 16, 5, io::Split::test);
  EXPECT_EQ(tr.size(), 210u);
  EXPECT_EQ(va.size(), 45u);
  EXPECT_EQ(te.size(), 45u);
  // Flat corpus images normalize to the same constant grid; all others are unique.
  auto flat = [](const Micrograph& m) { return std::all_of(m.values().begin(), m.values().end(), [&](double v) { return v == m.values()[0]; }); };
  for (const auto& a : te.images) {
    if (flat(a)) continue;
    for (const auto& b : tr.images) ASSERT_FALSE(a == b);
  }
  EXPECT_EQ(Dataset::synthetic_split(300, 16, 5, io::Split::test).images, te.images);
}

TEST(ExampleStream, CropsAndRejectsSmallImages) {
  const Dataset d = Dataset::synthetic(4, 24, 1);
  ExampleStream s(d, 16, 2);
  for (int i = 0; i < 10; ++i) {
    const Micrograph m = s.next();
    EXPECT_EQ(m.height(), 16);
    EXPECT_EQ(m.width(), 16);
  }
  EXPECT_EQ(s.drawn(), 10);
  EXPECT_THROW(ExampleStream(d, 32, 2), InvalidInput);
}

TEST(ExampleStream, DeterministicPerSeed) {
  const Dataset d = Dataset::synthetic(8, 24, 1);
  ExampleStream a(d, 16, 3), b(d, 16, 3), c(d, 16, 4);
  bool differs = false;
  for (int i = 0; i < 20; ++i) {
    const Micrograph x = a.next();
    EXPECT_EQ(x, b.next());
    differs |= !(x == c.next());
  }
  EXPECT_TRUE(differs);
}

TEST(DrawStep, UniformOverConfiguredSteps) {
  TrainRunConfig c = TrainRunConfig::defaults(GeneratorVariant::two_stage);
  c.mode = CoverageMode::unified;
  c.steps = {4, 5, 6, 7, 8, 9, 10};
  std::mt19937_64 rng(1);
  std::map<int, int> hist;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++hist[draw_step(c, rng)];
  ASSERT_EQ(hist.size(), 7u);
  for (const auto& [s, k] : hist) EXPECT_NEAR(static_cast<double>(k) / n, 1.0 / 7, 0.02) << "step " << s;
  c.mode = CoverageMode::individual_coverage;
  c.steps = {6};
  for (int i = 0; i < 10; ++i) EXPECT_EQ(draw_step(c, rng), 6);
}

TEST(Boxcar, TrailingMean) {
  const auto b = boxcar({1, 2, 3, 4, 5}, 2);
  EXPECT_EQ(b, (std::vector<double>{1, 1.5, 2.5, 3.5, 4.5}));
}

TEST(Training, TwoStageRunIsDeterministic) {
  const fs::path root = scratch("det");
  TrainRunConfig c = tiny_two_stage(root);
  const Dataset d = Dataset::synthetic(6, 32, 9);
  c.run_id = "a";
  const TrainResult a = train(c, d);
  c.run_id = "b";
  const TrainResult b = train(c, d);
  EXPECT_EQ(a.effective_loss, b.effective_loss);
  EXPECT_EQ(a.steps_used, b.steps_used);
  EXPECT_EQ(load_checkpoint(a.checkpoints.back()).tensors, load_checkpoint(b.checkpoints.back()).tensors);
  fs::remove_all(root);
}

TEST(Training, TwoStageWritesArtifacts) {
  const fs::path root = scratch("artifacts");
  TrainRunConfig c = tiny_two_stage(root);
  c.mode = CoverageMode::unified;
  c.steps = {4, 5, 6};
  c.blur_targets = false;
  c.adversarial_iterations = 8;
  c.checkpoint_every = 8;
  long long calls = 0;
  const TrainResult r = train(c, Dataset::synthetic(6, 32, 9), [&](long long, double) { ++calls; });
  EXPECT_EQ(calls, 24);
  EXPECT_EQ(r.effective_loss.size(), 24u);
  for (double l : r.effective_loss) EXPECT_TRUE(std::isfinite(l));
  for (int s : r.steps_used) EXPECT_TRUE(s >= 4 && s <= 6);
  EXPECT_TRUE(fs::exists(r.run_dir / "metrics.csv"));
  EXPECT_EQ(first_line(r.run_dir / "losses.csv"), "iter,term_name,raw,effective");
  ASSERT_FALSE(r.checkpoints.empty());
  const Checkpoint ck = load_checkpoint(r.checkpoints.back());
  EXPECT_FALSE(ck.section("D/").empty());
  EXPECT_FALSE(ck.section("M/").empty());
  auto g = load_generator(ck);
  EXPECT_EQ(g->spec().target_side, 32);
  EXPECT_EQ(latest_checkpoint(r.run_dir), r.checkpoints.back());
  fs::remove_all(root);
}

TEST(Training, OneStageLossDecreases) {
  const fs::path root = scratch("one");
  TrainRunConfig c = TrainRunConfig::defaults(GeneratorVariant::one_stage);
  c.side = 32;
  c.base_channels = 8;
  c.depth = 1;
  c.batch_size = 4;
  c.iterations = 300;
  c.steps = {4};
  c.checkpoint_root = root.string();
  const TrainResult r = train(c, Dataset::synthetic(40, 32, 3));
  const auto box = boxcar(r.effective_loss, 50);
  EXPECT_LT(box.back(), box[49]);
  EXPECT_EQ(first_line(r.run_dir / "metrics.csv"), "iteration,loss_raw,loss_effective,lr,beta,frozen");
  fs::remove_all(root);
}

TEST(Training, InvalidConfigThrowsBeforeWork) {
  TrainRunConfig c = TrainRunConfig::defaults(GeneratorVariant::two_stage);
  c.batch_size = 4;
  EXPECT_THROW(train(c, Dataset::synthetic(2, 64, 1)), InvalidInput);
}
