#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include "dlss/error.hpp"
#include "dlss/simd.hpp"

using namespace dlss;

namespace {

template <class T>
std::vector<T> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<T> v(n);
  for (T& x : v) x = static_cast<T>(u(rng));
  return v;
}

bool have_avx2() { return simd::available(simd::Backend::avx2); }

template <class T>
void check_kernels(double tol) {
  const auto& ref = simd::kernels<T>(simd::Backend::scalar);
  const auto& fast = simd::kernels<T>(simd::Backend::avx2);
  for (std::size_t n : {0u, 1u, 3u, 7u, 8u, 9u, 15u, 16u, 17u, 31u, 64u, 257u, 1000u}) {
    const auto x = random_vec<T>(n, 1 + n);
    auto y1 = random_vec<T>(n, 100 + n);
    auto y2 = y1;
    ref.axpy(n, T(0.37), x.data(), y1.data());
    fast.axpy(n, T(0.37), x.data(), y2.data());
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], tol) << "axpy n=" << n;
    EXPECT_NEAR(ref.dot(n, x.data(), y1.data()), fast.dot(n, x.data(), y1.data()), tol * (1 + n)) << "dot n=" << n;
  }
  struct Dims {
    std::size_t m, n, k;
  };
  for (Dims d : {Dims{1, 1, 1}, Dims{3, 5, 7}, Dims{8, 8, 8}, Dims{17, 9, 33}, Dims{4, 31, 2}, Dims{64, 16, 144}}) {
    // Padded leading dimensions exercise the strided paths.
    const std::size_t lda = d.k + 3, ldb = d.n + 2, ldc = d.n + 1;
    const auto a = random_vec<T>(d.m * lda, 7);
    const auto b = random_vec<T>(d.k * ldb, 8);
    auto c1 = random_vec<T>(d.m * ldc, 9);
    auto c2 = c1;
    ref.gemm_nn(d.m, d.n, d.k, a.data(), lda, b.data(), ldb, c1.data(), ldc);
    fast.gemm_nn(d.m, d.n, d.k, a.data(), lda, b.data(), ldb, c2.data(), ldc);
    for (std::size_t i = 0; i < c1.size(); ++i) ASSERT_NEAR(c1[i], c2[i], tol * d.k) << "gemm_nn " << d.m << "x" << d.n;

    const std::size_t ldt = d.m + 2;
    const auto at = random_vec<T>(d.k * ldt, 10);
    auto t1 = random_vec<T>(d.m * ldc, 11);
    auto t2 = t1;
    ref.gemm_tn(d.m, d.n, d.k, at.data(), ldt, b.data(), ldb, t1.data(), ldc);
    fast.gemm_tn(d.m, d.n, d.k, at.data(), ldt, b.data(), ldb, t2.data(), ldc);
    for (std::size_t i = 0; i < t1.size(); ++i) ASSERT_NEAR(t1[i], t2[i], tol * d.k) << "gemm_tn " << d.m << "x" << d.n;
  }
}

}  // namespace

TEST(Simd, ScalarAlwaysAvailable) {
  EXPECT_TRUE(simd::available(simd::Backend::scalar));
  EXPECT_EQ(simd::name(simd::Backend::scalar), "scalar");
}

TEST(Simd, FloatKernelsMatchReference) {
  if (!have_avx2()) GTEST_SKIP() << "no AVX2 on this machine";
  check_kernels<float>(1e-5);
}

TEST(Simd, DoubleKernelsMatchReference) {
  if (!have_avx2()) GTEST_SKIP() << "no AVX2 on this machine";
  check_kernels<double>(1e-12);
}

TEST(Simd, GemmMatchesNaiveProduct) {
  const auto& k = simd::kernels<double>();
  const std::size_t m = 5, n = 6, kk = 7;
  const auto a = random_vec<double>(m * kk, 1);
  const auto b = random_vec<double>(kk * n, 2);
  std::vector<double> c(m * n, 0.0);
  k.gemm_nn(m, n, kk, a.data(), kk, b.data(), n, c.data(), n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t p = 0; p < kk; ++p) s += a[i * kk + p] * b[p * n + j];
      EXPECT_NEAR(c[i * n + j], s, 1e-12);
    }
  }
}

TEST(Simd, HalfDecodeIsExhaustivelyEquivalent) {
  if (!have_avx2()) GTEST_SKIP() << "no AVX2 on this machine";
  std::vector<std::uint16_t> all(65536);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint16_t>(i);
  std::vector<float> a(all.size()), b(all.size());
  simd::half_kernels(simd::Backend::scalar).from_half(all.size(), all.data(), a.data());
  simd::half_kernels(simd::Backend::avx2).from_half(all.size(), all.data(), b.data());
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (std::isnan(a[i])) {
      EXPECT_TRUE(std::isnan(b[i])) << i;
    } else {
      std::uint32_t x, y;
      std::memcpy(&x, &a[i], 4);
      std::memcpy(&y, &b[i], 4);
      ASSERT_EQ(x, y) << "half 0x" << std::hex << i;
    }
  }
}

TEST(Simd, HalfEncodeMatchesReferenceRoundToNearestEven) {
  if (!have_avx2()) GTEST_SKIP() << "no AVX2 on this machine";
  // Every half value, the midpoints between neighbours, and random floats.
  std::vector<std::uint16_t> all(65536);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint16_t>(i);
  std::vector<float> exact(all.size());
  simd::half_kernels(simd::Backend::scalar).from_half(all.size(), all.data(), exact.data());
  std::vector<float> probe;
  for (std::size_t i = 0; i + 1 < exact.size(); ++i) {
    if (!std::isfinite(exact[i]) || !std::isfinite(exact[i + 1])) continue;
    probe.push_back(exact[i]);
    probe.push_back(0.5f * (exact[i] + exact[i + 1]));
  }
  const auto r = random_vec<float>(100000, 3);
  for (float x : r) probe.push_back(x * 70000.0f);
  probe.push_back(1e-10f);
  probe.push_back(-0.0f);
  probe.push_back(std::numeric_limits<float>::infinity());
  std::vector<std::uint16_t> a(probe.size()), b(probe.size());
  simd::half_kernels(simd::Backend::scalar).to_half(probe.size(), probe.data(), a.data());
  simd::half_kernels(simd::Backend::avx2).to_half(probe.size(), probe.data(), b.data());
  for (std::size_t i = 0; i < probe.size(); ++i) ASSERT_EQ(a[i], b[i]) << "value " << probe[i];
}

TEST(Simd, HalfKnownEncodings) {
  const float in[] = {0.0f, 1.0f, -2.0f, 0.5f, 65504.0f, 1.0f / 1024.0f};
  const std::uint16_t want[] = {0x0000, 0x3C00, 0xC000, 0x3800, 0x7BFF, 0x1400};
  std::uint16_t out[6];
  simd::half_kernels().to_half(6, in, out);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(out[i], want[i]) << in[i];
}

TEST(Simd, BackendOverride) {
  const auto before = simd::active_backend();
  simd::set_backend(simd::Backend::scalar);
  EXPECT_EQ(simd::active_backend(), simd::Backend::scalar);
  simd::set_backend(before);
  if (!have_avx2()) {
    EXPECT_THROW(simd::set_backend(simd::Backend::avx2), InvalidInput);
  }
}
