#pragma once

// Data-parallel inner loops. Every kernel has a portable scalar reference and,
// on x86-64, an AVX2/FMA/F16C variant. The active table is chosen once at
// startup from CPUID; DLSS_SIMD=scalar in the environment forces the
// reference path.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace dlss::simd {

enum class Backend { scalar, avx2 };

template <class T>
struct Kernels {
  // y += a * x
  void (*axpy)(std::size_t n, T a, const T* x, T* y);
  T (*dot)(std::size_t n, const T* x, const T* y);
  // C[m x n] += A[m x k] * B[k x n], row-major with leading dimensions.
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
                  std::size_t ldb, T* c, std::size_t ldc);
  // C[m x n] += A^T * B where A is stored k x m.
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
                  std::size_t ldb, T* c, std::size_t ldc);
};

struct HalfKernels {
  void (*to_half)(std::size_t n, const float* in, std::uint16_t* out);
  void (*from_half)(std::size_t n, const std::uint16_t* in, float* out);
};

bool available(Backend b);
Backend active_backend();
// Overrides the CPUID choice; throws InvalidInput if the backend is unavailable.
void set_backend(Backend b);
std::string_view name(Backend b);

template <class T>
const Kernels<T>& kernels();
template <class T>
const Kernels<T>& kernels(Backend b);

const HalfKernels& half_kernels();
const HalfKernels& half_kernels(Backend b);

namespace detail {
template <class T>
const Kernels<T>& scalar_kernels();
const HalfKernels& scalar_half_kernels();
#if defined(DLSS_HAVE_AVX2)
template <class T>
const Kernels<T>& avx2_kernels();
const HalfKernels& avx2_half_kernels();
#endif
}  // namespace detail

}  // namespace dlss::simd
