#include <cmath>
#include <numbers>
#include <random>

#include "dlss/error.hpp"
#include "dlss/imaging.hpp"

namespace dlss {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Micrograph rescale_unit(int side, std::vector<double> v) {
  return normalize_crop(side, side, std::span<const double>(v));
}

// White noise smoothed by a circular (wrap-around) separable Gaussian. The
// autocorrelation of the result is exp(-r^2 / (4 sigma_f^2)), so an e-folding
// length L needs sigma_f = L / 2.
Micrograph gaussian_field(std::mt19937_64& rng, int side, double corr_length) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(side) * side);
  for (double& x : v) x = normal(rng);

  const double sf = std::max(corr_length / 2.0, 1e-6);
  const int radius = std::min(side / 2, static_cast<int>(std::ceil(4.0 * sf)));
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (int d = -radius; d <= radius; ++d) {
    taps[d + radius] = std::exp(-(d * d) / (2.0 * sf * sf));
    total += taps[d + radius];
  }
  for (double& t : taps) t /= total;

  auto wrap = [side](int i) { return ((i % side) + side) % side; };
  std::vector<double> tmp(v.size(), 0.0);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      double s = 0.0;
      for (int d = -radius; d <= radius; ++d) s += taps[d + radius] * v[r * side + wrap(c + d)];
      tmp[r * side + c] = s;
    }
  }
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      double s = 0.0;
      for (int d = -radius; d <= radius; ++d) s += taps[d + radius] * tmp[wrap(r + d) * side + c];
      v[r * side + c] = s;
    }
  }
  return rescale_unit(side, std::move(v));
}

Micrograph lattice(std::mt19937_64& rng, int side, double spacing, const SynthConfig& cfg) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double theta = unit(rng) * kTwoPi;
  const double ox = unit(rng) * spacing;
  const double oy = unit(rng) * spacing;
  const double dose = cfg.dose_min * std::pow(cfg.dose_max / cfg.dose_min, unit(rng));
  const double sigma = cfg.blob_sigma_ratio * spacing;
  const double ct = std::cos(theta);
  const double st = std::sin(theta);

  std::vector<double> v(static_cast<std::size_t>(side) * side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      // lattice coordinates of the pixel
      const double x = c - ox;
      const double y = r - oy;
      const double u = (ct * x + st * y) / spacing;
      const double w = (-st * x + ct * y) / spacing;
      const double fu = u - std::floor(u);
      const double fw = w - std::floor(w);
      double s = cfg.background;
      for (int du = -1; du <= 1; ++du) {
        for (int dw = -1; dw <= 1; ++dw) {
          const double eu = (fu - du) * spacing;
          const double ew = (fw - dw) * spacing;
          s += std::exp(-(eu * eu + ew * ew) / (2.0 * sigma * sigma));
        }
      }
      v[r * side + c] = s;
    }
  }
  Micrograph clean = rescale_unit(side, std::move(v));
  std::vector<double> noisy(clean.size());
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    std::poisson_distribution<long> shot(dose * clean.values()[i]);
    noisy[i] = static_cast<double>(shot(rng)) / dose;
  }
  return rescale_unit(side, std::move(noisy));
}

Micrograph gradient(std::mt19937_64& rng, int side) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double theta = unit(rng) * kTwoPi;
  std::vector<double> v(static_cast<std::size_t>(side) * side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) v[r * side + c] = std::cos(theta) * c + std::sin(theta) * r;
  }
  return rescale_unit(side, std::move(v));
}

}  // namespace

SynthStyle parse_synth_style(std::string_view name) {
  if (name == "flat") return SynthStyle::flat;
  if (name == "gradient") return SynthStyle::gradient;
  if (name == "gaussian_field") return SynthStyle::gaussian_field;
  if (name == "lattice") return SynthStyle::lattice;
  throw InvalidInput("unknown synthetic style '" + std::string(name) + "'");
}

Micrograph synth_micrograph(std::uint64_t seed, int side, SynthStyle style, const SynthConfig& cfg) {
  if (side < 16) throw InvalidInput("synth_micrograph: side must be >= 16");
  std::mt19937_64 rng(seed);
  switch (style) {
    case SynthStyle::flat: return Micrograph(side, side, 0.5);
    case SynthStyle::gradient: return gradient(rng, side);
    case SynthStyle::gaussian_field: return gaussian_field(rng, side, cfg.field_corr_length);
    case SynthStyle::lattice: {
      std::uniform_real_distribution<double> sp(cfg.lattice_spacing_min, cfg.lattice_spacing_max);
      const double spacing = sp(rng);
      return lattice(rng, side, spacing, cfg);
    }
  }
  return Micrograph(side, side, 0.5);
}

Micrograph synth_corpus_image(std::uint64_t seed, int side, const SynthConfig& cfg) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double pick = unit(rng);
  const std::uint64_t sub = rng();
  if (pick < 0.45) {
    SynthConfig c = cfg;
    c.field_corr_length = cfg.field_corr_length * (0.6 + unit(rng));
    return synth_micrograph(sub, side, SynthStyle::gaussian_field, c);
  }
  if (pick < 0.90) return synth_micrograph(sub, side, SynthStyle::lattice, cfg);
  if (pick < 0.95) return synth_micrograph(sub, side, SynthStyle::gradient, cfg);
  return synth_micrograph(sub, side, SynthStyle::flat, cfg);
}

}  // namespace dlss
