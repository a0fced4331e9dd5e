#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dlss {

enum class ValueRange { unit, signed_unit };

/// Single-channel scan stored row-major in double precision.
///
/// The range tag records whether values are meant to live in [0,1] or [-1,1];
/// `validate()` enforces it. Construction does not, so intermediate results
/// (deconvolution estimates, generator outputs before clamping) can be held
/// in the same type.
class Micrograph {
 public:
  Micrograph() = default;
  Micrograph(int height, int width, double fill = 0.0, ValueRange range = ValueRange::unit);
  Micrograph(int height, int width, std::vector<double> values, ValueRange range = ValueRange::unit);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  bool square() const { return height_ == width_; }

  double& operator()(int row, int col) { return values_[static_cast<std::size_t>(row) * width_ + col]; }
  double operator()(int row, int col) const { return values_[static_cast<std::size_t>(row) * width_ + col]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  ValueRange range() const { return range_; }
  void set_range(ValueRange r) { range_ = r; }

  bool is_valid() const;
  // Throws InvalidInput naming the first violated invariant.
  void validate() const;

  bool operator==(const Micrograph&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
  ValueRange range_ = ValueRange::unit;
};

/// Scan step s; the retained fraction of probing locations is 1/s^2.
class Coverage {
 public:
  explicit Coverage(int step);
  int step() const { return step_; }
  double fraction() const { return 1.0 / (static_cast<double>(step_) * step_); }
  bool operator==(const Coverage&) const = default;

 private:
  int step_;
};

struct BlurKernel {
  int size = 1;
  double sigma = 1.0;
  std::vector<double> weights;  // size x size, row-major

  int radius() const { return size / 2; }
  double at(int row, int col) const { return weights[static_cast<std::size_t>(row) * size + col]; }
};

enum class InterpMethod { nearest, area, bilinear, bicubic, lanczos };

InterpMethod parse_interp_method(std::string_view name);
std::string_view interp_method_name(InterpMethod m);

// Non-finite entries become 0, then the grid is mapped linearly onto [0,1];
// a uniform grid maps to 0.5 everywhere.
Micrograph normalize_crop(int height, int width, std::span<const double> raw);
Micrograph normalize_crop(const Micrograph& raw);

// Flips (horizontal, then vertical) followed by rot90_count counter-clockwise
// quarter turns. Square inputs only.
Micrograph augment(const Micrograph& m, bool flip_h, bool flip_v, int rot90_count);

// out(i,j) = in(i*s, j*s); output sides are ceil(side/s).
Micrograph downsample_nearest(const Micrograph& m, Coverage cov);
int downsampled_side(int side, int step);

// Each input pixel is replicated over its s x s probing block, truncated at
// the far edge. The two-argument form infers s = ceil(target/side).
Micrograph upsample_nearest(const Micrograph& m, int target_side);
Micrograph upsample_nearest(const Micrograph& m, int target_side, int step);

Micrograph interpolate(const Micrograph& m, int target_side, InterpMethod method);
Micrograph interpolate(const Micrograph& m, int target_height, int target_width, InterpMethod method);

BlurKernel gaussian_kernel(int size, double sigma);

// 2-D correlation with reflect (edge-excluding mirror) padding.
Micrograph blur(const Micrograph& m, const BlurKernel& k);

int reflect_index(int i, int n);

// Raw-buffer forms of blur and its exact adjoint, shared by deconvolution and
// the fixed-blur network op. `out` is overwritten.
template <class T>
void correlate_reflect(int height, int width, std::span<const T> in, const BlurKernel& k, std::span<T> out);
template <class T>
void correlate_reflect_adjoint(int height, int width, std::span<const T> grad_out, const BlurKernel& k,
                               std::span<T> grad_in);

double mse(const Micrograph& a, const Micrograph& b);
Micrograph crop(const Micrograph& m, int row, int col, int height, int width);
Micrograph clamp_unit(const Micrograph& m);

// ---- synthetic micrographs --------------------------------------------------

enum class SynthStyle { flat, gradient, gaussian_field, lattice };

SynthStyle parse_synth_style(std::string_view name);

/// Frozen generator parameters. Bump `version` whenever a default changes so
/// recorded acceptance runs stay attributable.
struct SynthConfig {
  int version = 1;
  double field_corr_length = 4.0;  // px, e-folding length of the field autocorrelation
  double lattice_spacing_min = 4.0;
  double lattice_spacing_max = 7.0;
  double blob_sigma_ratio = 0.22;  // blob std as a fraction of spacing
  double background = 0.15;
  double dose_min = 30.0;  // expected counts at unit intensity
  double dose_max = 300.0;
};

Micrograph synth_micrograph(std::uint64_t seed, int side, SynthStyle style, const SynthConfig& cfg = {});

// Corpus sampler: picks a style and perturbs the field/lattice parameters from
// the seed (45% field, 45% lattice, 5% gradient, 5% flat).
Micrograph synth_corpus_image(std::uint64_t seed, int side, const SynthConfig& cfg = {});

}  // namespace dlss
