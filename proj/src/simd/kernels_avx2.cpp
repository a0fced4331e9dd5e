// Compiled with -mavx2 -mfma -mf16c; only reached after a CPUID check.

#include <immintrin.h>

#include "dlss/simd.hpp"

namespace dlss::simd::detail {
namespace {

// Lane traits so one micro-kernel body serves float (8 lanes) and double (4 lanes).
template <class T>
struct Vec;

template <>
struct Vec<float> {
  using reg = __m256;
  static constexpr std::size_t lanes = 8;
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg set1(float a) { return _mm256_set1_ps(a); }
  static reg zero() { return _mm256_setzero_ps(); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static float hsum(reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    lo = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, lo);
    lo = _mm_add_ss(lo, sh);
    return _mm_cvtss_f32(lo);
  }
};

template <>
struct Vec<double> {
  using reg = __m256d;
  static constexpr std::size_t lanes = 4;
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg set1(double a) { return _mm256_set1_pd(a); }
  static reg zero() { return _mm256_setzero_pd(); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static double hsum(reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
  }
};

template <class T>
void axpy(std::size_t n, T a, const T* x, T* y) {
  using V = Vec<T>;
  constexpr std::size_t L = V::lanes;
  const auto av = V::set1(a);
  std::size_t i = 0;
  for (; i + 2 * L <= n; i += 2 * L) {
    V::store(y + i, V::fmadd(av, V::load(x + i), V::load(y + i)));
    V::store(y + i + L, V::fmadd(av, V::load(x + i + L), V::load(y + i + L)));
  }
  for (; i + L <= n; i += L) V::store(y + i, V::fmadd(av, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

template <class T>
T dot(std::size_t n, const T* x, const T* y) {
  using V = Vec<T>;
  constexpr std::size_t L = V::lanes;
  auto s0 = V::zero();
  auto s1 = V::zero();
  std::size_t i = 0;
  for (; i + 2 * L <= n; i += 2 * L) {
    s0 = V::fmadd(V::load(x + i), V::load(y + i), s0);
    s1 = V::fmadd(V::load(x + i + L), V::load(y + i + L), s1);
  }
  for (; i + L <= n; i += L) s0 = V::fmadd(V::load(x + i), V::load(y + i), s0);
  T s = V::hsum(s0) + V::hsum(s1);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

// Register-blocked C += A*B with A addressed as a[i*ai + p*ap]; covers both the
// NN layout (ai=lda, ap=1) and the TN layout (ai=1, ap=lda).
template <class T>
void gemm_blocked(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t ai, std::size_t ap,
                  const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  using V = Vec<T>;
  using R = typename V::reg;
  constexpr std::size_t L = V::lanes;
  constexpr std::size_t MR = 4;

  std::size_t i = 0;
  for (; i + MR <= m; i += MR) {
    std::size_t j = 0;
    for (; j + 2 * L <= n; j += 2 * L) {
      R acc[MR][2];
      for (std::size_t r = 0; r < MR; ++r) {
        acc[r][0] = V::load(c + (i + r) * ldc + j);
        acc[r][1] = V::load(c + (i + r) * ldc + j + L);
      }
      for (std::size_t p = 0; p < k; ++p) {
        const R b0 = V::load(b + p * ldb + j);
        const R b1 = V::load(b + p * ldb + j + L);
        for (std::size_t r = 0; r < MR; ++r) {
          const R av = V::set1(a[(i + r) * ai + p * ap]);
          acc[r][0] = V::fmadd(av, b0, acc[r][0]);
          acc[r][1] = V::fmadd(av, b1, acc[r][1]);
        }
      }
      for (std::size_t r = 0; r < MR; ++r) {
        V::store(c + (i + r) * ldc + j, acc[r][0]);
        V::store(c + (i + r) * ldc + j + L, acc[r][1]);
      }
    }
    for (; j + L <= n; j += L) {
      R acc[MR];
      for (std::size_t r = 0; r < MR; ++r) acc[r] = V::load(c + (i + r) * ldc + j);
      for (std::size_t p = 0; p < k; ++p) {
        const R b0 = V::load(b + p * ldb + j);
        for (std::size_t r = 0; r < MR; ++r) acc[r] = V::fmadd(V::set1(a[(i + r) * ai + p * ap]), b0, acc[r]);
      }
      for (std::size_t r = 0; r < MR; ++r) V::store(c + (i + r) * ldc + j, acc[r]);
    }
    for (; j < n; ++j) {
      for (std::size_t r = 0; r < MR; ++r) {
        T s = c[(i + r) * ldc + j];
        for (std::size_t p = 0; p < k; ++p) s += a[(i + r) * ai + p * ap] * b[p * ldb + j];
        c[(i + r) * ldc + j] = s;
      }
    }
  }
  for (; i < m; ++i) {
    T* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) axpy<T>(n, a[i * ai + p * ap], b + p * ldb, crow);
  }
}

template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc) {
  gemm_blocked<T>(m, n, k, a, lda, 1, b, ldb, c, ldc);
}

template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc) {
  gemm_blocked<T>(m, n, k, a, 1, lda, b, ldb, c, ldc);
}

void to_half(std::size_t n, const float* in, std::uint16_t* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m128i h = _mm256_cvtps_ph(_mm256_loadu_ps(in + i), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(out + i), h);
  }
  if (i < n) {
    alignas(32) float tmp[8] = {};
    alignas(16) std::uint16_t res[8];
    for (std::size_t t = 0; i + t < n; ++t) tmp[t] = in[i + t];
    const __m128i h = _mm256_cvtps_ph(_mm256_load_ps(tmp), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    _mm_store_si128(reinterpret_cast<__m128i*>(res), h);
    for (std::size_t t = 0; i + t < n; ++t) out[i + t] = res[t];
  }
}

void from_half(std::size_t n, const std::uint16_t* in, float* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m128i h = _mm_loadu_si128(reinterpret_cast<const __m128i*>(in + i));
    _mm256_storeu_ps(out + i, _mm256_cvtph_ps(h));
  }
  if (i < n) {
    alignas(16) std::uint16_t tmp[8] = {};
    alignas(32) float res[8];
    for (std::size_t t = 0; i + t < n; ++t) tmp[t] = in[i + t];
    _mm256_store_ps(res, _mm256_cvtph_ps(_mm_load_si128(reinterpret_cast<const __m128i*>(tmp))));
    for (std::size_t t = 0; i + t < n; ++t) out[i + t] = res[t];
  }
}

}  // namespace

template <class T>
const Kernels<T>& avx2_kernels() {
  static const Kernels<T> table{&axpy<T>, &dot<T>, &gemm_nn<T>, &gemm_tn<T>};
  return table;
}

template const Kernels<float>& avx2_kernels<float>();
template const Kernels<double>& avx2_kernels<double>();

const HalfKernels& avx2_half_kernels() {
  static const HalfKernels table{&to_half, &from_half};
  return table;
}

}  // namespace dlss::simd::detail
