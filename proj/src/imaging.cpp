#include "dlss/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dlss/error.hpp"
#include "dlss/simd.hpp"

namespace dlss {

Micrograph::Micrograph(int height, int width, double fill, ValueRange range)
    : height_(height), width_(width), range_(range) {
  if (height < 0 || width < 0) throw InvalidInput("micrograph dimensions must be non-negative");
  values_.assign(static_cast<std::size_t>(height) * width, fill);
}

Micrograph::Micrograph(int height, int width, std::vector<double> values, ValueRange range)
    : height_(height), width_(width), values_(std::move(values)), range_(range) {
  if (height < 0 || width < 0) throw InvalidInput("micrograph dimensions must be non-negative");
  if (values_.size() != static_cast<std::size_t>(height) * width) {
    throw InvalidInput("micrograph value count does not match " + std::to_string(height) + "x" +
                       std::to_string(width));
  }
}

bool Micrograph::is_valid() const {
  try {
    validate();
    return true;
  } catch (const InvalidInput&) {
    return false;
  }
}

void Micrograph::validate() const {
  const double lo = range_ == ValueRange::unit ? 0.0 : -1.0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double v = values_[i];
    if (!std::isfinite(v)) throw InvalidInput("non-finite value at index " + std::to_string(i));
    if (v < lo || v > 1.0) throw InvalidInput("value out of range at index " + std::to_string(i));
  }
}

Coverage::Coverage(int step) : step_(step) {
  if (step < 1) throw InvalidInput("coverage step must be >= 1, got " + std::to_string(step));
}

InterpMethod parse_interp_method(std::string_view name) {
  if (name == "nearest") return InterpMethod::nearest;
  if (name == "area") return InterpMethod::area;
  if (name == "bilinear") return InterpMethod::bilinear;
  if (name == "bicubic") return InterpMethod::bicubic;
  if (name == "lanczos") return InterpMethod::lanczos;
  throw InvalidInput("unknown interpolation method '" + std::string(name) + "'");
}

std::string_view interp_method_name(InterpMethod m) {
  switch (m) {
    case InterpMethod::nearest: return "nearest";
    case InterpMethod::area: return "area";
    case InterpMethod::bilinear: return "bilinear";
    case InterpMethod::bicubic: return "bicubic";
    case InterpMethod::lanczos: return "lanczos";
  }
  return "?";
}

Micrograph normalize_crop(int height, int width, std::span<const double> raw) {
  if (height <= 0 || width <= 0 || raw.empty()) throw InvalidInput("normalize_crop: empty grid");
  if (raw.size() != static_cast<std::size_t>(height) * width) throw InvalidInput("normalize_crop: size mismatch");

  std::vector<double> v(raw.begin(), raw.end());
  for (double& x : v) {
    if (!std::isfinite(x)) x = 0.0;
  }
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (hi == lo) {
    std::fill(v.begin(), v.end(), 0.5);
  } else {
    const double inv = 1.0 / (hi - lo);
    for (double& x : v) x = std::clamp((x - lo) * inv, 0.0, 1.0);
  }
  return Micrograph(height, width, std::move(v));
}

Micrograph normalize_crop(const Micrograph& raw) { return normalize_crop(raw.height(), raw.width(), raw.values()); }

namespace {

Micrograph rotate_ccw(const Micrograph& m) {
  const int n = m.height();
  Micrograph out(n, n, 0.0, m.range());
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) out(n - 1 - c, r) = m(r, c);
  }
  return out;
}

}  // namespace

Micrograph augment(const Micrograph& m, bool flip_h, bool flip_v, int rot90_count) {
  if (!m.square()) throw InvalidInput("augment: input must be square");
  if (rot90_count < 0 || rot90_count > 3) throw InvalidInput("augment: rot90_count must be in 0..3");
  const int n = m.height();
  Micrograph out = m;
  if (flip_h) {
    for (int r = 0; r < n; ++r) std::reverse(out.values().begin() + r * n, out.values().begin() + (r + 1) * n);
  }
  if (flip_v) {
    for (int r = 0; r < n / 2; ++r) {
      std::swap_ranges(out.values().begin() + r * n, out.values().begin() + (r + 1) * n,
                       out.values().begin() + (n - 1 - r) * n);
    }
  }
  for (int k = 0; k < rot90_count; ++k) out = rotate_ccw(out);
  return out;
}

int downsampled_side(int side, int step) {
  if (step < 1) throw InvalidInput("step must be >= 1");
  return (side + step - 1) / step;
}

Micrograph downsample_nearest(const Micrograph& m, Coverage cov) {
  const int s = cov.step();
  const int oh = downsampled_side(m.height(), s);
  const int ow = downsampled_side(m.width(), s);
  Micrograph out(oh, ow, 0.0, m.range());
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) out(r, c) = m(r * s, c * s);
  }
  return out;
}

Micrograph upsample_nearest(const Micrograph& m, int target_side, int step) {
  if (m.empty()) throw InvalidInput("upsample_nearest: empty input");
  if (target_side < m.height() || target_side < m.width()) {
    throw InvalidInput("upsample_nearest: target side smaller than input");
  }
  if (step < 1) throw InvalidInput("upsample_nearest: step must be >= 1");
  if ((m.height() - 1) * step >= target_side || (m.width() - 1) * step >= target_side ||
      m.height() * step < target_side || m.width() * step < target_side) {
    throw InvalidInput("upsample_nearest: step " + std::to_string(step) + " does not map a side of " +
                       std::to_string(m.height()) + " onto " + std::to_string(target_side));
  }
  Micrograph out(target_side, target_side, 0.0, m.range());
  for (int r = 0; r < target_side; ++r) {
    for (int c = 0; c < target_side; ++c) out(r, c) = m(r / step, c / step);
  }
  return out;
}

Micrograph upsample_nearest(const Micrograph& m, int target_side) {
  if (m.empty()) throw InvalidInput("upsample_nearest: empty input");
  if (target_side < m.height() || target_side < m.width()) {
    throw InvalidInput("upsample_nearest: target side smaller than input");
  }
  const int side = std::max(m.height(), m.width());
  return upsample_nearest(m, target_side, (target_side + side - 1) / side);
}

namespace {

struct Tap {
  int index;
  double weight;
};

double cubic_weight(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

double lanczos_weight(double x) {
  constexpr double lobes = 3.0;
  if (std::abs(x) >= lobes) return 0.0;
  return sinc(x) * sinc(x / lobes);
}

// Per-output-index taps along one axis.
std::vector<std::vector<Tap>> axis_taps(int in, int out, InterpMethod method) {
  std::vector<std::vector<Tap>> taps(out);
  const double scale = static_cast<double>(in) / out;
  auto clampi = [in](int i) { return std::clamp(i, 0, in - 1); };

  for (int o = 0; o < out; ++o) {
    auto& t = taps[o];
    switch (method) {
      case InterpMethod::nearest: {
        t.push_back({clampi(static_cast<int>(std::floor((o + 0.5) * scale))), 1.0});
        break;
      }
      case InterpMethod::area: {
        const double lo = o * scale;
        const double hi = (o + 1) * scale;
        for (int k = static_cast<int>(std::floor(lo)); k < hi && k < in; ++k) {
          const double overlap = std::min(hi, k + 1.0) - std::max(lo, static_cast<double>(k));
          if (overlap > 0.0) t.push_back({k, overlap / scale});
        }
        break;
      }
      case InterpMethod::bilinear: {
        const double x = (o + 0.5) * scale - 0.5;
        const int x0 = static_cast<int>(std::floor(x));
        const double f = x - x0;
        t.push_back({clampi(x0), 1.0 - f});
        t.push_back({clampi(x0 + 1), f});
        break;
      }
      case InterpMethod::bicubic: {
        const double x = (o + 0.5) * scale - 0.5;
        const int x0 = static_cast<int>(std::floor(x));
        for (int k = x0 - 1; k <= x0 + 2; ++k) t.push_back({clampi(k), cubic_weight(x - k)});
        break;
      }
      case InterpMethod::lanczos: {
        const double x = (o + 0.5) * scale - 0.5;
        const int x0 = static_cast<int>(std::floor(x));
        double total = 0.0;
        for (int k = x0 - 2; k <= x0 + 3; ++k) {
          const double w = lanczos_weight(x - k);
          t.push_back({clampi(k), w});
          total += w;
        }
        for (auto& tap : t) tap.weight /= total;
        break;
      }
    }
  }
  return taps;
}

}  // namespace

Micrograph interpolate(const Micrograph& m, int target_height, int target_width, InterpMethod method) {
  if (m.empty()) throw InvalidInput("interpolate: empty input");
  if (target_height <= 0 || target_width <= 0) throw InvalidInput("interpolate: target must be positive");
  const auto row_taps = axis_taps(m.height(), target_height, method);
  const auto col_taps = axis_taps(m.width(), target_width, method);

  // Horizontal pass into (in_h x out_w), then vertical.
  std::vector<double> tmp(static_cast<std::size_t>(m.height()) * target_width, 0.0);
  for (int r = 0; r < m.height(); ++r) {
    for (int c = 0; c < target_width; ++c) {
      double s = 0.0;
      for (const Tap& t : col_taps[c]) s += t.weight * m(r, t.index);
      tmp[static_cast<std::size_t>(r) * target_width + c] = s;
    }
  }
  Micrograph out(target_height, target_width, 0.0, m.range());
  for (int r = 0; r < target_height; ++r) {
    for (const Tap& t : row_taps[r]) {
      const double* src = tmp.data() + static_cast<std::size_t>(t.index) * target_width;
      for (int c = 0; c < target_width; ++c) out(r, c) += t.weight * src[c];
    }
  }
  return out;
}

Micrograph interpolate(const Micrograph& m, int target_side, InterpMethod method) {
  return interpolate(m, target_side, target_side, method);
}

BlurKernel gaussian_kernel(int size, double sigma) {
  if (size < 1 || size % 2 == 0) throw InvalidInput("gaussian_kernel: size must be a positive odd integer");
  if (!(sigma > 0.0)) throw InvalidInput("gaussian_kernel: sigma must be positive");
  BlurKernel k;
  k.size = size;
  k.sigma = sigma;
  k.weights.resize(static_cast<std::size_t>(size) * size);
  const int r = size / 2;
  double total = 0.0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dy = y - r;
      const double dx = x - r;
      const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      k.weights[static_cast<std::size_t>(y) * size + x] = w;
      total += w;
    }
  }
  for (double& w : k.weights) w /= total;
  return k;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

template <class T>
void correlate_reflect(int height, int width, std::span<const T> in, const BlurKernel& k, std::span<T> out) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (in.size() != n || out.size() != n) throw InvalidInput("correlate_reflect: buffer size mismatch");
  const int r = k.radius();
  const int pw = width + 2 * r;
  const int ph = height + 2 * r;
  std::vector<T> pad(static_cast<std::size_t>(ph) * pw);
  for (int py = 0; py < ph; ++py) {
    const int sy = reflect_index(py - r, height);
    for (int px = 0; px < pw; ++px) pad[static_cast<std::size_t>(py) * pw + px] = in[sy * width + reflect_index(px - r, width)];
  }
  const std::vector<T> w(k.weights.begin(), k.weights.end());
  const auto& kern = simd::kernels<T>();
  std::fill(out.begin(), out.end(), T(0));
  for (int y = 0; y < height; ++y) {
    T* orow = out.data() + static_cast<std::size_t>(y) * width;
    for (int ky = 0; ky < k.size; ++ky) {
      const T* prow = pad.data() + static_cast<std::size_t>(y + ky) * pw;
      for (int kx = 0; kx < k.size; ++kx) kern.axpy(width, w[ky * k.size + kx], prow + kx, orow);
    }
  }
}

template <class T>
void correlate_reflect_adjoint(int height, int width, std::span<const T> grad_out, const BlurKernel& k,
                               std::span<T> grad_in) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (grad_out.size() != n || grad_in.size() != n) throw InvalidInput("correlate_reflect_adjoint: buffer size mismatch");
  const int r = k.radius();
  const int pw = width + 2 * r;
  const int ph = height + 2 * r;
  std::vector<T> pad(static_cast<std::size_t>(ph) * pw, T(0));
  const std::vector<T> w(k.weights.begin(), k.weights.end());
  const auto& kern = simd::kernels<T>();
  for (int y = 0; y < height; ++y) {
    const T* grow = grad_out.data() + static_cast<std::size_t>(y) * width;
    for (int ky = 0; ky < k.size; ++ky) {
      T* prow = pad.data() + static_cast<std::size_t>(y + ky) * pw;
      for (int kx = 0; kx < k.size; ++kx) kern.axpy(width, w[ky * k.size + kx], grow, prow + kx);
    }
  }
  std::fill(grad_in.begin(), grad_in.end(), T(0));
  for (int py = 0; py < ph; ++py) {
    const int sy = reflect_index(py - r, height);
    for (int px = 0; px < pw; ++px) {
      grad_in[sy * width + reflect_index(px - r, width)] += pad[static_cast<std::size_t>(py) * pw + px];
    }
  }
}

template void correlate_reflect<float>(int, int, std::span<const float>, const BlurKernel&, std::span<float>);
template void correlate_reflect<double>(int, int, std::span<const double>, const BlurKernel&, std::span<double>);
template void correlate_reflect_adjoint<float>(int, int, std::span<const float>, const BlurKernel&, std::span<float>);
template void correlate_reflect_adjoint<double>(int, int, std::span<const double>, const BlurKernel&,
                                                std::span<double>);

Micrograph blur(const Micrograph& m, const BlurKernel& k) {
  Micrograph out(m.height(), m.width(), 0.0, m.range());
  correlate_reflect<double>(m.height(), m.width(), m.values(), k, out.values());
  return out;
}

double mse(const Micrograph& a, const Micrograph& b) {
  if (a.height() != b.height() || a.width() != b.width()) throw InvalidInput("mse: shape mismatch");
  if (a.empty()) throw InvalidInput("mse: empty images");
  double s = 0.0;
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  return s / static_cast<double>(av.size());
}

Micrograph crop(const Micrograph& m, int row, int col, int height, int width) {
  if (row < 0 || col < 0 || height < 0 || width < 0 || row + height > m.height() || col + width > m.width()) {
    throw InvalidInput("crop: window outside image");
  }
  Micrograph out(height, width, 0.0, m.range());
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) out(r, c) = m(row + r, col + c);
  }
  return out;
}

Micrograph clamp_unit(const Micrograph& m) {
  Micrograph out = m;
  for (double& v : out.values()) v = std::clamp(v, 0.0, 1.0);
  out.set_range(ValueRange::unit);
  return out;
}

}  // namespace dlss
