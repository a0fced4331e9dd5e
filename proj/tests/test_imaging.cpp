#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

#include "dlss/error.hpp"
#include "dlss/image_io.hpp"
#include "dlss/imaging.hpp"
#include "helpers.hpp"

using namespace dlss;
namespace fs = std::filesystem;

TEST(Normalize, ConstantGridMapsToHalf) {
  const std::vector<double> raw(9, 7.0);
  const Micrograph m = normalize_crop(3, 3, raw);
  for (double v : m.values()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Normalize, NaNBecomesZeroBeforeScaling) {
  const std::vector<double> raw{std::numeric_limits<double>::quiet_NaN(), 1.0, 3.0};
  const Micrograph m = normalize_crop(1, 3, raw);
  EXPECT_DOUBLE_EQ(m(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(m(0, 1), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(m(0, 2), 1.0);
}

TEST(Normalize, OutputSpansUnitInterval) {
  const Micrograph m = normalize_crop(test::random_image(16, 16, 3));
  const auto [lo, hi] = std::minmax_element(m.values().begin(), m.values().end());
  EXPECT_DOUBLE_EQ(*lo, 0.0);
  EXPECT_DOUBLE_EQ(*hi, 1.0);
  EXPECT_TRUE(m.is_valid());
}

TEST(Augment, FlipHorizontal) {
  const Micrograph m(2, 2, std::vector<double>{1, 2, 3, 4}, ValueRange::signed_unit);
  const Micrograph f = augment(m, true, false, 0);
  EXPECT_EQ(f.values()[0], 2);
  EXPECT_EQ(f.values()[1], 1);
  EXPECT_EQ(f.values()[2], 4);
  EXPECT_EQ(f.values()[3], 3);
}

TEST(Augment, DihedralGroupPreservesMultiset) {
  const Micrograph m = test::random_image(5, 5, 11);
  std::vector<double> ref(m.values().begin(), m.values().end());
  std::sort(ref.begin(), ref.end());
  for (int flags = 0; flags < 16; ++flags) {
    const Micrograph a = augment(m, flags & 1, (flags >> 1) & 1, flags >> 2);
    std::vector<double> v(a.values().begin(), a.values().end());
    std::sort(v.begin(), v.end());
    EXPECT_EQ(v, ref);
  }
  EXPECT_EQ(augment(augment(m, false, false, 2), false, false, 2), m);
  EXPECT_THROW(augment(m, false, false, 4), InvalidInput);
  EXPECT_EQ(augment(augment(m, true, false, 0), true, false, 0), m);
}

TEST(Sampling, DownsampleSidesAt512) {
  EXPECT_EQ(downsampled_side(512, 5), 103);
  EXPECT_EQ(downsampled_side(512, 7), 74);
  EXPECT_EQ(downsampled_side(512, 10), 52);
  EXPECT_EQ(downsampled_side(64, 5), 13);
}

TEST(Sampling, DownsampleKeepsLatticePoints) {
  const Micrograph m = test::random_image(20, 20, 5);
  const Micrograph d = downsample_nearest(m, Coverage(3));
  ASSERT_EQ(d.height(), 7);
  for (int r = 0; r < 7; ++r) {
    for (int c = 0; c < 7; ++c) EXPECT_EQ(d(r, c), m(3 * r, 3 * c));
  }
  EXPECT_EQ(downsample_nearest(m, Coverage(1)), m);
}

TEST(Sampling, UpsampleTruncatesFinalBlock) {
  Micrograph lo(103, 103);
  for (int r = 0; r < 103; ++r) {
    for (int c = 0; c < 103; ++c) lo(r, c) = (r * 103 + c) / (103.0 * 103.0);
  }
  const Micrograph up = upsample_nearest(lo, 512, 5);
  ASSERT_EQ(up.height(), 512);
  EXPECT_EQ(up(509, 0), lo(101, 0));
  EXPECT_EQ(up(510, 0), lo(102, 0));
  EXPECT_EQ(up(511, 511), lo(102, 102));
  EXPECT_EQ(up(505, 0), lo(101, 0));
  EXPECT_THROW(upsample_nearest(lo, 512, 4), InvalidInput);
}

TEST(Coverage, FractionAndValidation) {
  EXPECT_DOUBLE_EQ(Coverage(4).fraction(), 1.0 / 16.0);
  EXPECT_THROW(Coverage(0), InvalidInput);
}

TEST(Interpolate, BilinearTwoByTwoIsVerticalRamp) {
  const Micrograph m(2, 2, std::vector<double>{0, 0, 1, 1});
  const Micrograph up = interpolate(m, 8, InterpMethod::bilinear);
  for (int r = 0; r < 8; ++r) {
    for (int c = 1; c < 8; ++c) EXPECT_DOUBLE_EQ(up(r, c), up(r, 0));
    if (r > 0) {
      EXPECT_GE(up(r, 0), up(r - 1, 0));
    }
  }
  EXPECT_DOUBLE_EQ(up(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(up(7, 0), 1.0);
  // Half-pixel centres: row 2 sits a quarter of the way between the samples.
  EXPECT_NEAR(up(2, 0), 0.125, 1e-12);
}

TEST(Interpolate, IdentityAndConstants) {
  const Micrograph m = test::random_image(9, 9, 2);
  for (auto method : {InterpMethod::nearest, InterpMethod::area, InterpMethod::bilinear, InterpMethod::bicubic,
                      InterpMethod::lanczos}) {
    const Micrograph same = interpolate(m, 9, method);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(same.values()[i], m.values()[i], 1e-12) << interp_method_name(method);
    const Micrograph flat(5, 5, 0.3);
    const Micrograph out = interpolate(flat, 17, method);
    for (double v : out.values()) EXPECT_NEAR(v, 0.3, 1e-12) << interp_method_name(method);
    EXPECT_EQ(parse_interp_method(interp_method_name(method)), method);
  }
  EXPECT_THROW(parse_interp_method("sinc"), InvalidInput);
}

TEST(Blur, GaussianKernelNormalizedAndSymmetric) {
  const BlurKernel k = gaussian_kernel(5, 2.5);
  EXPECT_NEAR(std::accumulate(k.weights.begin(), k.weights.end(), 0.0), 1.0, 1e-14);
  // Independent evaluation: product of normalized 1-D taps exp(-d^2 / 12.5).
  double taps[5], s = 0;
  for (int d = -2; d <= 2; ++d) s += taps[d + 2] = std::exp(-d * d / (2 * 2.5 * 2.5));
  EXPECT_NEAR(k.at(2, 2), (taps[2] / s) * (taps[2] / s), 1e-15);
  EXPECT_NEAR(k.at(2, 2), 0.0541203, 1e-7);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) {
      EXPECT_DOUBLE_EQ(k.at(r, c), k.at(c, r));
      EXPECT_DOUBLE_EQ(k.at(r, c), k.at(4 - r, c));
    }
  }
  EXPECT_THROW(gaussian_kernel(4, 1.0), InvalidInput);
}

TEST(Blur, AdjointIdentity) {
  const BlurKernel k = gaussian_kernel(5, 1.3);
  const int h = 9, w = 7;
  const Micrograph x = test::random_image(h, w, 1), y = test::random_image(h, w, 2);
  std::vector<double> bx(x.size()), bty(y.size());
  correlate_reflect<double>(h, w, x.values(), k, bx);
  correlate_reflect_adjoint<double>(h, w, y.values(), k, bty);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lhs += bx[i] * y.values()[i];
    rhs += x.values()[i] * bty[i];
  }
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Blur, ConstantImageUnchanged) {
  const Micrograph m(12, 12, 0.4);
  const Micrograph b = blur(m, gaussian_kernel(5, 2.5));
  for (double v : b.values()) EXPECT_NEAR(v, 0.4, 1e-14);
}

TEST(Blur, ReflectIndex) {
  EXPECT_EQ(reflect_index(-1, 5), 1);
  EXPECT_EQ(reflect_index(-2, 5), 2);
  EXPECT_EQ(reflect_index(5, 5), 3);
  EXPECT_EQ(reflect_index(6, 5), 2);
  EXPECT_EQ(reflect_index(3, 1), 0);
}

TEST(Mse, BasicsAndShapeCheck) {
  const Micrograph a(2, 2, 0.2), b(2, 2, 0.5);
  EXPECT_NEAR(mse(a, b), 0.09, 1e-15);
  EXPECT_THROW(mse(a, Micrograph(3, 3)), InvalidInput);
}

TEST(Synth, CorpusIsDeterministicAndValid) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Micrograph a = synth_corpus_image(s, 32);
    EXPECT_EQ(a, synth_corpus_image(s, 32));
    EXPECT_TRUE(a.is_valid());
  }
}

TEST(Synth, FieldCorrelationLength) {
  // Wrap-around autocorrelation along rows, averaged over many fields; the
  // e-folding lag is interpolated from the estimate.
  const int side = 64;
  const double L = 4.0;
  SynthConfig cfg;
  cfg.field_corr_length = L;
  std::vector<double> acf(9, 0.0);
  for (std::uint64_t s = 0; s < 60; ++s) {
    const Micrograph m = synth_micrograph(s, side, SynthStyle::gaussian_field, cfg);
    const double mean = std::accumulate(m.values().begin(), m.values().end(), 0.0) / m.size();
    for (int lag = 0; lag < 9; ++lag) {
      double a = 0;
      for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) a += (m(r, c) - mean) * (m(r, (c + lag) % side) - mean);
      }
      acf[lag] += a;
    }
  }
  const double target = acf[0] / std::exp(1.0);
  int k = 1;
  while (k < 8 && acf[k] > target) ++k;
  const double est = (k - 1) + (acf[k - 1] - target) / (acf[k - 1] - acf[k]);
  EXPECT_NEAR(est, L, 0.2 * L);
}

TEST(Io, TiffAndRawRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "dlss_io_test";
  fs::create_directories(dir);
  const Micrograph m = test::random_image(7, 11, 4);
  io::write_tiff(dir / "a.tif", m);
  const Micrograph t = io::read_tiff(dir / "a.tif");
  ASSERT_EQ(t.height(), 7);
  ASSERT_EQ(t.width(), 11);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(t.values()[i], static_cast<float>(m.values()[i]));
  io::save_image(dir / "b.raw", m);
  const Micrograph r = io::load_image(dir / "b.raw");
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(r.values()[i], static_cast<float>(m.values()[i]));
  EXPECT_THROW(io::load_image(dir / "missing.tif"), InvalidInput);
  fs::remove_all(dir);
}

TEST(Io, ManifestRoundTrip) {
  const fs::path p = fs::temp_directory_path() / "dlss_manifest_test.csv";
  const std::vector<io::ManifestRecord> recs{{"train/0.tif", io::Split::train}, {"test/1.tif", io::Split::test}};
  io::write_manifest(p, recs);
  const auto back = io::read_manifest(p);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].path, "test/1.tif");
  EXPECT_EQ(back[1].split, io::Split::test);
  EXPECT_THROW(io::parse_split("holdout"), InvalidInput);
  fs::remove(p);
}
