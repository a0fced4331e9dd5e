#include <gtest/gtest.h>

#include <filesystem>

#include "dlss/checkpoint.hpp"
#include "dlss/error.hpp"
#include "dlss/models.hpp"
#include "dlss/training.hpp"
#include "helpers.hpp"

using namespace dlss;

namespace {

GeneratorSpec small(GeneratorVariant v) {
  GeneratorSpec s = GeneratorSpec::desk(v);
  s.target_side = 32;
  s.base_channels = 4;
  s.depth = 1;
  return s;
}

}  // namespace

TEST(Models, TwoStageShapes) {
  auto g = build_two_stage(GeneratorSpec::desk(GeneratorVariant::two_stage));
  std::mt19937_64 rng(1);
  g->initialize(rng);
  const auto x = test::random_tensor<float>({2, 64, 64, 1}, 2, 0, 1, false);
  const auto o = g->forward_all(x, nn::Mode::eval);
  EXPECT_EQ(o.features.shape().h, 32);
  EXPECT_EQ(o.features.shape().w, 32);
  EXPECT_EQ(o.image.shape(), (nn::Shape{2, 64, 64, 1}));
  const auto t = g->trainer(o.features, x, nn::Mode::eval);
  EXPECT_EQ(t.shape(), (nn::Shape{2, 32, 32, 1}));
}

TEST(Models, OneStageShapesForEveryStep) {
  for (int s = 4; s <= 10; ++s) {
    auto g = build_one_stage(GeneratorSpec::desk(GeneratorVariant::one_stage), Coverage(s));
    EXPECT_EQ(g->spec().input_side(s), (64 + s - 1) / s);
    const int n = g->spec().input_side(s);
    const auto y = g->forward(test::random_tensor<float>({1, n, n, 1}, s, 0, 1, false));
    EXPECT_EQ(y.shape(), (nn::Shape{1, 64, 64, 1})) << "step " << s;
  }
  auto g5 = build_one_stage(GeneratorSpec::desk(GeneratorVariant::one_stage), Coverage(5));
  EXPECT_EQ(g5->spec().input_side(5), 13);
}

TEST(Models, DiscriminatorCropSizes) {
  DiscriminatorSetSpec d;
  d.target_side = 64;
  EXPECT_EQ(d.crop_sizes(), (std::array<int, 3>{9, 18, 35}));
  d.target_side = 512;
  EXPECT_EQ(d.crop_sizes(), (std::array<int, 3>{70, 140, 280}));
  DiscriminatorSet set(DiscriminatorSetSpec{});
  std::mt19937_64 rng(3);
  set.initialize(rng);
  const auto sc = set.scores(test::random_tensor<float>({2, 64, 64, 1}, 4, 0, 1, false), nn::Mode::eval, &rng);
  ASSERT_EQ(sc.size(), 3u);
  for (const auto& s : sc) EXPECT_EQ(s.shape(), (nn::Shape{2, 1, 1, 1}));
}

TEST(Models, GeneratorsHaveNoBiases) {
  for (auto v : {GeneratorVariant::one_stage, GeneratorVariant::two_stage}) {
    auto g = build_generator(small(v));
    for (auto* n : g->networks()) {
      for (const auto& p : n->params()) EXPECT_FALSE(p.name.ends_with(".b")) << p.name;
    }
  }
}

TEST(Models, InitializedOutputsAreFinite) {
  auto g = build_two_stage(small(GeneratorVariant::two_stage));
  std::mt19937_64 rng(5);
  g->initialize(rng);
  const Micrograph lo = downsample_nearest(test::random_image(32, 32, 6), Coverage(4));
  const Micrograph out = infer(*g, lo, Coverage(4), true);
  for (double v : out.values()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  for (int r = 0; r < lo.height(); ++r) {
    for (int c = 0; c < lo.width(); ++c) EXPECT_EQ(out(4 * r, 4 * c), lo(r, c));
  }
}

TEST(Models, PrepareInputValidates) {
  const auto one = small(GeneratorVariant::one_stage);
  EXPECT_THROW(prepare_input(one, Micrograph(6, 6), Coverage(5)), InvalidInput);
  EXPECT_THROW(prepare_input(one, Micrograph(8, 8), Coverage(4)), InvalidInput);  // built for step 5
  EXPECT_EQ(prepare_input(one, Micrograph(7, 7), Coverage(5)).height(), 7);
  const auto two = small(GeneratorVariant::two_stage);
  EXPECT_EQ(prepare_input(two, Micrograph(8, 8), Coverage(4)).height(), 32);
}

TEST(Models, CheckpointRoundTrip) {
  for (auto v : {GeneratorVariant::one_stage, GeneratorVariant::two_stage}) {
    auto g = build_generator(small(v));
    std::mt19937_64 rng(7);
    g->initialize(rng);
    const auto path = std::filesystem::temp_directory_path() / "dlss_model_rt.bin";
    save_checkpoint(path, generator_checkpoint(*g, 42));
    auto h = load_generator(path);
    EXPECT_EQ(h->architecture_hash(), g->architecture_hash());
    EXPECT_EQ(h->export_state(), g->export_state());
    const Micrograph lo = test::random_image(7, 7, 8);
    const auto x2 = to_tensor(prepare_input(g->spec(), lo, Coverage(5)));
    const auto a = g->forward(x2);
    const auto b = h->forward(x2);
    EXPECT_TRUE(std::equal(a.value().begin(), a.value().end(), b.value().begin()));

    Checkpoint ck = load_checkpoint(path);
    EXPECT_EQ(ck.iteration, 42);
    ck.architecture_hash ^= 1;
    EXPECT_THROW(load_generator(ck), InvalidInput);
    std::filesystem::remove(path);
  }
}

TEST(Models, ArchitectureHashDependsOnShape) {
  auto a = build_generator(small(GeneratorVariant::two_stage));
  auto spec = small(GeneratorVariant::two_stage);
  spec.base_channels = 6;
  auto b = build_generator(spec);
  EXPECT_NE(a->architecture_hash(), b->architecture_hash());
  EXPECT_FALSE(a->describe().empty());
}

TEST(Models, SpecValidation) {
  auto s = small(GeneratorVariant::two_stage);
  s.target_side = 30;
  EXPECT_THROW(s.validate(), InvalidInput);
  EXPECT_THROW(build_two_stage(s), InvalidInput);
  EXPECT_THROW(parse_generator_variant("three_stage"), InvalidInput);
}

TEST(Checkpoint, TruncatedFileIsRejected) {
  auto g = build_generator(small(GeneratorVariant::one_stage));
  const auto path = std::filesystem::temp_directory_path() / "dlss_trunc.bin";
  save_checkpoint(path, generator_checkpoint(*g, 1));
  std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
  EXPECT_THROW(load_checkpoint(path), InvalidInput);
  std::filesystem::remove(path);
}
