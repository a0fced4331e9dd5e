#include "dlss/serving.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "dlss/error.hpp"
#include "dlss/simd.hpp"

namespace dlss {

namespace {

std::atomic<long long> g_clamped{0};

void put_u16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v & 0xFF);
  p[1] = static_cast<std::uint8_t>(v >> 8);
}

std::uint16_t get_u16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put_f32(std::uint8_t* p, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  for (int b = 0; b < 4; ++b) p[b] = static_cast<std::uint8_t>(v >> (8 * b));
}

float get_f32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

Micrograph reflect_pad(const Micrograph& m, int height, int width) {
  Micrograph out(height, width, 0.0, m.range());
  for (int r = 0; r < height; ++r) {
    const int rr = reflect_index(r, m.height());
    for (int c = 0; c < width; ++c) out(r, c) = m(rr, reflect_index(c, m.width()));
  }
  return out;
}

// Boundaries between consecutive tiles: midpoint of each overlap.
std::vector<int> ownership(const std::vector<int>& origins, int tile, int n) {
  std::vector<int> b(origins.size() + 1);
  b[0] = 0;
  for (std::size_t j = 0; j + 1 < origins.size(); ++j) b[j + 1] = (origins[j + 1] + origins[j] + tile) / 2;
  b.back() = n;
  return b;
}

}  // namespace

WirePrecision parse_precision(std::string_view s) {
  if (s == "u8") return WirePrecision::u8;
  if (s == "f16") return WirePrecision::f16;
  if (s == "f32") return WirePrecision::f32;
  throw InvalidInput("unknown precision '" + std::string(s) + "' (expected u8, f16 or f32)");
}

std::string_view precision_name(WirePrecision p) {
  switch (p) {
    case WirePrecision::u8: return "u8";
    case WirePrecision::f16: return "f16";
    case WirePrecision::f32: return "f32";
  }
  return "?";
}

int bytes_per_pixel(WirePrecision p) {
  switch (p) {
    case WirePrecision::u8: return 1;
    case WirePrecision::f16: return 2;
    case WirePrecision::f32: return 4;
  }
  return 0;
}

long long clamp_warning_count() { return g_clamped.load(); }

Encoded quantize(const Micrograph& m, WirePrecision p) {
  const auto v = m.values();
  const std::size_t n = v.size();
  Encoded e;
  std::vector<float> f(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = v[i];
    if (!(x >= 0.0 && x <= 1.0)) {
      ++e.clamped;
      x = std::isnan(x) ? 0.0 : std::clamp(x, 0.0, 1.0);
    }
    f[i] = static_cast<float>(x);
    if (p == WirePrecision::u8) e.bytes.push_back(static_cast<std::uint8_t>(std::lround(255.0 * x)));
  }
  if (p == WirePrecision::f16) {
    std::vector<std::uint16_t> h(n);
    simd::half_kernels().to_half(n, f.data(), h.data());
    e.bytes.resize(2 * n);
    for (std::size_t i = 0; i < n; ++i) put_u16(&e.bytes[2 * i], h[i]);
  } else if (p == WirePrecision::f32) {
    e.bytes.resize(4 * n);
    for (std::size_t i = 0; i < n; ++i) put_f32(&e.bytes[4 * i], f[i]);
  }
  g_clamped += e.clamped;
  return e;
}

Micrograph dequantize(std::span<const std::uint8_t> bytes, int height, int width, WirePrecision p) {
  if (height < 1 || width < 1) throw InvalidInput("dequantize: dimensions must be positive");
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (bytes.size() != n * bytes_per_pixel(p)) {
    throw InvalidInput("payload of " + std::to_string(bytes.size()) + " bytes does not match " + std::to_string(width) +
                       "x" + std::to_string(height) + " " + std::string(precision_name(p)));
  }
  std::vector<double> v(n);
  if (p == WirePrecision::u8) {
    for (std::size_t i = 0; i < n; ++i) v[i] = bytes[i] / 255.0;
  } else if (p == WirePrecision::f16) {
    std::vector<std::uint16_t> h(n);
    std::vector<float> f(n);
    for (std::size_t i = 0; i < n; ++i) h[i] = get_u16(&bytes[2 * i]);
    simd::half_kernels().from_half(n, h.data(), f.data());
    for (std::size_t i = 0; i < n; ++i) v[i] = f[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) v[i] = get_f32(&bytes[4 * i]);
  }
  return Micrograph(height, width, std::move(v));
}

Micrograph typecast(const Micrograph& m, WirePrecision p) {
  const Encoded e = quantize(m, p);
  return dequantize(e.bytes, m.height(), m.width(), p);
}

std::vector<PrecisionRow> precision_study(const Generator& g, std::span<const Micrograph> targets, int step,
                                          std::span<const WirePrecision> precisions, bool blur_targets) {
  const Coverage cov(step);
  std::vector<PrecisionRow> rows;
  for (WirePrecision p : precisions) rows.push_back({p, {}, {}});
  for (const Micrograph& t : targets) {
    const Micrograph lowres = downsample_nearest(t, cov);
    const Micrograph ref = blur_targets ? blur(t, eval_kernel()) : t;
    for (auto& row : rows) {
      const Micrograph in = prepare_input(g.spec(), typecast(lowres, row.precision), cov);
      row.mses.push_back(mse(from_tensor(g.forward(to_tensor(in))), ref));
    }
  }
  for (auto& row : rows) row.stats = mse_stats(row.mses);
  return rows;
}

TilePlan TilePlan::for_tile(int tile) {
  TilePlan p;
  p.tile = tile;
  p.margin = static_cast<int>(std::lround(20.0 * tile / 512.0));
  p.overlap = 2 * p.margin;
  return p;
}

void TilePlan::validate() const {
  if (tile < 1) throw InvalidInput("tile plan: tile must be >= 1");
  if (overlap < 0 || overlap >= tile) throw InvalidInput("tile plan: overlap must lie in [0, tile)");
  if (margin < 0 || 2 * margin > overlap) throw InvalidInput("tile plan: margin must lie in [0, overlap/2]");
}

std::vector<int> tile_origins(int n, int step, const TilePlan& plan) {
  plan.validate();
  if (step < 1) throw InvalidInput("tile_origins: step must be >= 1");
  std::vector<int> q{0};
  const int last = n > plan.tile ? (n - plan.tile + step - 1) / step : 0;
  const int stride = std::max(1, (plan.tile - plan.overlap) / step);
  while (q.back() < last) q.push_back(std::min(q.back() + stride, last));
  for (int& v : q) v *= step;
  return q;
}

TileFn model_tile_fn(const Generator& g, Coverage cov) {
  return [&g, cov](const std::vector<Micrograph>& tiles) {
    std::vector<Micrograph> out;
    out.reserve(tiles.size());
    constexpr std::size_t chunk = 16;
    for (std::size_t i = 0; i < tiles.size(); i += chunk) {
      std::vector<Micrograph> batch;
      for (std::size_t j = i; j < std::min(tiles.size(), i + chunk); ++j) batch.push_back(prepare_input(g.spec(), tiles[j], cov));
      const auto y = g.forward(to_tensor(batch));
      for (std::size_t j = 0; j < batch.size(); ++j) out.push_back(clamp_unit(from_tensor(y, static_cast<int>(j))));
    }
    return out;
  };
}

Micrograph tiled_infer(const TileFn& fn, const Micrograph& lowres, Coverage cov, int out_height, int out_width,
                       const TilePlan& plan) {
  plan.validate();
  if (lowres.empty()) throw InvalidInput("tiled_infer: empty input");
  const int s = cov.step();
  const int k = downsampled_side(plan.tile, s);
  if (out_height < 1 || out_width < 1 || downsampled_side(out_height, s) != lowres.height() ||
      downsampled_side(out_width, s) != lowres.width()) {
    throw InvalidInput("tiled_infer: output " + std::to_string(out_width) + "x" + std::to_string(out_height) +
                       " does not match a " + std::to_string(lowres.width()) + "x" + std::to_string(lowres.height()) +
                       " scan at step " + std::to_string(s));
  }
  // Enough low-resolution rows and columns that the last tile reaches the output edge.
  auto padded = [&](int out) { return k + (out > plan.tile ? (out - plan.tile + s - 1) / s : 0); };
  const int ph = std::max(lowres.height(), padded(out_height));
  const int pw = std::max(lowres.width(), padded(out_width));
  const Micrograph src = (ph == lowres.height() && pw == lowres.width()) ? lowres : reflect_pad(lowres, ph, pw);

  const auto rows = tile_origins(std::max(out_height, plan.tile), s, plan);
  const auto cols = tile_origins(std::max(out_width, plan.tile), s, plan);
  std::vector<Micrograph> tiles;
  for (int r : rows) {
    for (int c : cols) tiles.push_back(crop(src, r / s, c / s, k, k));
  }
  const auto results = fn(tiles);
  if (results.size() != tiles.size()) throw StateError("tiled_infer: tile function returned the wrong count");

  const auto rb = ownership(rows, plan.tile, out_height);
  const auto cb = ownership(cols, plan.tile, out_width);
  Micrograph out(out_height, out_width, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const Micrograph& t = results[i * cols.size() + j];
      if (t.height() != plan.tile || t.width() != plan.tile) throw StateError("tiled_infer: tile output has the wrong size");
      for (int r = rb[i]; r < rb[i + 1]; ++r) {
        for (int c = cb[j]; c < cb[j + 1]; ++c) out(r, c) = t(r - rows[i], c - cols[j]);
      }
    }
  }
  return out;
}

Micrograph tiled_infer(const Generator& g, const Micrograph& lowres, Coverage cov, int out_height, int out_width) {
  return tiled_infer(model_tile_fn(g, cov), lowres, cov, out_height, out_width, TilePlan::for_tile(g.spec().target_side));
}

}  // namespace dlss
