#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dlss/imaging.hpp"
#include "dlss/models.hpp"

namespace dlss {

/// Something that turns a low-resolution scan back into a full-size image.
class Reconstructor {
 public:
  virtual ~Reconstructor() = default;
  virtual std::string name() const = 0;
  virtual Micrograph reconstruct(const Micrograph& lowres, Coverage cov, int height, int width) const = 0;
};

class InterpReconstructor final : public Reconstructor {
 public:
  explicit InterpReconstructor(InterpMethod m) : method_(m) {}
  std::string name() const override { return std::string(interp_method_name(method_)); }
  Micrograph reconstruct(const Micrograph& lowres, Coverage cov, int height, int width) const override;

 private:
  InterpMethod method_;
};

class ModelReconstructor final : public Reconstructor {
 public:
  ModelReconstructor(std::shared_ptr<const Generator> g, std::string label);
  std::string name() const override { return label_; }
  // Output side must equal the model's target side.
  Micrograph reconstruct(const Micrograph& lowres, Coverage cov, int height, int width) const override;
  const Generator& generator() const { return *g_; }

 private:
  std::shared_ptr<const Generator> g_;
  std::string label_;
};

// "nearest" .. "lanczos", or "model:<checkpoint>". Throws InvalidInput for an
// unknown name or a missing checkpoint.
std::unique_ptr<Reconstructor> make_reconstructor(std::string_view method);

struct MseStats {
  double root_mean = 0;  // sqrt(mean(mse))
  double root_std = 0;   // sqrt(population std(mse))
  std::size_t count = 0;
};

MseStats mse_stats(std::span<const double> mses);

struct Histogram {
  double range_max = 0.0125;
  std::vector<long long> counts;
  long long overflow = 0;

  std::vector<double> edges() const;  // counts.size() + 1 values
  long long total() const;
};

// Equispaced bins over [0, range_max); values >= range_max go to overflow.
Histogram mse_histogram(std::span<const double> mses, int bin_count = 100, double range_max = 0.0125);

struct ScoreSet {
  std::vector<double> mses;
  MseStats stats;
  Histogram histogram;
};

struct EvalReport {
  std::string method;
  int step = 1;
  bool blur_targets = false;
  ScoreSet unmasked;
  ScoreSet masked;  // probed pixels replaced by the scoring target
};

// Targets are full-resolution images; each is downsampled at `step`,
// reconstructed and scored against the target (blurred 5x5, sigma 2.5 when
// blur_targets).
// 5x5, sigma 2.5 kernel applied to targets when scoring against blurred references.
const BlurKernel& eval_kernel();

EvalReport evaluate_method(const Reconstructor& r, std::span<const Micrograph> targets, int step, bool blur_targets);

struct SweepPoint {
  int step = 1;
  bool seen = false;
  double rmse = 0;
  double rmse_masked = 0;
};

std::vector<SweepPoint> coverage_sweep(const Reconstructor& r, std::span<const Micrograph> targets,
                                       std::span<const int> steps, std::span<const int> seen_steps,
                                       bool blur_targets = false);

/// Mean squared error per output pixel accumulated over a split.
class PixelErrorMap {
 public:
  PixelErrorMap(int height, int width);
  static PixelErrorMap from_field(int height, int width, std::vector<double> mse);

  void accumulate(const Micrograph& output, const Micrograph& target);
  int height() const { return h_; }
  int width() const { return w_; }
  long long samples() const { return samples_; }

  std::vector<double> mse() const;  // per pixel
  Micrograph rmse_map() const;
  double mean_mse() const;
  // RMSE of pixels at each minimum Chebyshev distance to an edge.
  std::vector<double> edge_curve() const;
  // RMSE of the pixels that remain when those closer than t to an edge are
  // discarded, for t = 0 .. max distance.
  std::vector<double> discard_curve() const;

 private:
  int h_, w_;
  std::vector<double> sum_;
  long long samples_ = 0;
};

int edge_distance(int r, int c, int height, int width);

// First index after which every value stays within rel_tol of the last one.
std::size_t curve_knee(std::span<const double> curve, double rel_tol = 1e-9);

PixelErrorMap per_pixel_rmse(const Reconstructor& r, std::span<const Micrograph> targets, std::span<const int> steps,
                             bool blur_targets = false);

// Mean absolute 4-neighbour Laplacian over interior pixels; 0 for images
// narrower than 3 px.
double mal(const Micrograph& m);

// Mean over crops of MAL_seg / MAL_near. Segments are the non-overlapping
// segment_side blocks of the full-resolution crop (default ceil(side/s)).
double mal_ratio(std::span<const Micrograph> crops, Coverage cov, int segment_side = 0);

void write_stats_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports);
void write_histogram_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports);
void write_sweep_csv(const std::filesystem::path& path, std::string_view method, const std::vector<SweepPoint>& sweep);
void write_curve_csv(const std::filesystem::path& path, const PixelErrorMap& map);

}  // namespace dlss
