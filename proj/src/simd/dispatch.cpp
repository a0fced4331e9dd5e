#include <atomic>
#include <cstdlib>
#include <cstring>

#include "dlss/error.hpp"
#include "dlss/simd.hpp"

namespace dlss::simd {
namespace {

bool cpu_has_avx2() {
#if defined(DLSS_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma") && __builtin_cpu_supports("f16c");
#else
  return false;
#endif
}

Backend detect() {
  if (const char* env = std::getenv("DLSS_SIMD"); env != nullptr && std::strcmp(env, "scalar") == 0) {
    return Backend::scalar;
  }
  return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& active() {
  static std::atomic<Backend> b{detect()};
  return b;
}

}  // namespace

bool available(Backend b) { return b == Backend::scalar || cpu_has_avx2(); }

Backend active_backend() { return active().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (!available(b)) throw InvalidInput("simd backend not available on this CPU: " + std::string(name(b)));
  active().store(b, std::memory_order_relaxed);
}

std::string_view name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

template <class T>
const Kernels<T>& kernels(Backend b) {
#if defined(DLSS_HAVE_AVX2)
  if (b == Backend::avx2) {
    if (!cpu_has_avx2()) throw InvalidInput("avx2 kernels requested on a CPU without avx2/fma/f16c");
    return detail::avx2_kernels<T>();
  }
#else
  if (b == Backend::avx2) throw InvalidInput("built without avx2 kernels");
#endif
  return detail::scalar_kernels<T>();
}

template <class T>
const Kernels<T>& kernels() {
  return kernels<T>(active_backend());
}

template const Kernels<float>& kernels<float>();
template const Kernels<double>& kernels<double>();
template const Kernels<float>& kernels<float>(Backend);
template const Kernels<double>& kernels<double>(Backend);

const HalfKernels& half_kernels(Backend b) {
#if defined(DLSS_HAVE_AVX2)
  if (b == Backend::avx2) {
    if (!cpu_has_avx2()) throw InvalidInput("avx2 kernels requested on a CPU without avx2/fma/f16c");
    return detail::avx2_half_kernels();
  }
#else
  if (b == Backend::avx2) throw InvalidInput("built without avx2 kernels");
#endif
  return detail::scalar_half_kernels();
}

const HalfKernels& half_kernels() { return half_kernels(active_backend()); }

}  // namespace dlss::simd
