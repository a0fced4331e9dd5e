#include "dlss/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "dlss/error.hpp"
#include "dlss/training.hpp"

namespace dlss {

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw InvalidInput("cannot write " + path.string());
  os << std::setprecision(10);
  return os;
}

Micrograph mask_probes(Micrograph out, const Micrograph& target, int s) {
  for (int r = 0; r < out.height(); r += s) {
    for (int c = 0; c < out.width(); c += s) out(r, c) = target(r, c);
  }
  return out;
}

ScoreSet score(std::vector<double> mses) {
  ScoreSet s;
  s.stats = mse_stats(mses);
  s.histogram = mse_histogram(mses);
  s.mses = std::move(mses);
  return s;
}

}  // namespace

const BlurKernel& eval_kernel() {
  static const BlurKernel k = gaussian_kernel(5, 2.5);
  return k;
}

Micrograph InterpReconstructor::reconstruct(const Micrograph& lowres, Coverage, int height, int width) const {
  return clamp_unit(interpolate(lowres, height, width, method_));
}

ModelReconstructor::ModelReconstructor(std::shared_ptr<const Generator> g, std::string label)
    : g_(std::move(g)), label_(std::move(label)) {
  if (!g_) throw InvalidInput("model reconstructor: null generator");
}

Micrograph ModelReconstructor::reconstruct(const Micrograph& lowres, Coverage cov, int height, int width) const {
  const int side = g_->spec().target_side;
  if (height != side || width != side) {
    throw InvalidInput("model '" + label_ + "' produces " + std::to_string(side) + "px outputs, asked for " +
                       std::to_string(height) + "x" + std::to_string(width));
  }
  return infer(*g_, lowres, cov);
}

std::unique_ptr<Reconstructor> make_reconstructor(std::string_view method) {
  constexpr std::string_view prefix = "model:";
  if (method.substr(0, prefix.size()) == prefix) {
    const std::filesystem::path ckpt(std::string(method.substr(prefix.size())));
    std::shared_ptr<const Generator> g = load_generator(ckpt);
    return std::make_unique<ModelReconstructor>(std::move(g), std::string(method));
  }
  return std::make_unique<InterpReconstructor>(parse_interp_method(method));
}

MseStats mse_stats(std::span<const double> mses) {
  MseStats s;
  s.count = mses.size();
  if (mses.empty()) return s;
  double sum = 0;
  for (double v : mses) sum += v;
  const double mean = sum / static_cast<double>(mses.size());
  double var = 0;
  for (double v : mses) var += (v - mean) * (v - mean);
  var /= static_cast<double>(mses.size());
  s.root_mean = std::sqrt(std::max(mean, 0.0));
  s.root_std = std::sqrt(std::sqrt(var));
  return s;
}

std::vector<double> Histogram::edges() const {
  std::vector<double> e(counts.size() + 1);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = range_max * static_cast<double>(i) / static_cast<double>(counts.size());
  return e;
}

long long Histogram::total() const {
  long long t = overflow;
  for (long long c : counts) t += c;
  return t;
}

Histogram mse_histogram(std::span<const double> mses, int bin_count, double range_max) {
  if (bin_count < 1) throw InvalidInput("mse_histogram: bin_count must be >= 1");
  if (!(range_max > 0)) throw InvalidInput("mse_histogram: range_max must be positive");
  Histogram h;
  h.range_max = range_max;
  h.counts.assign(bin_count, 0);
  for (double v : mses) {
    if (!(v >= 0)) throw InvalidInput("mse_histogram: MSEs must be non-negative");
    if (v >= range_max) {
      ++h.overflow;
      continue;
    }
    const int b = std::min(static_cast<int>(v / range_max * bin_count), bin_count - 1);
    ++h.counts[b];
  }
  return h;
}

EvalReport evaluate_method(const Reconstructor& r, std::span<const Micrograph> targets, int step, bool blur_targets) {
  const Coverage cov(step);
  EvalReport rep;
  rep.method = r.name();
  rep.step = step;
  rep.blur_targets = blur_targets;
  std::vector<double> plain, masked;
  plain.reserve(targets.size());
  masked.reserve(targets.size());
  for (const Micrograph& t : targets) {
    const Micrograph out = r.reconstruct(downsample_nearest(t, cov), cov, t.height(), t.width());
    const Micrograph ref = blur_targets ? blur(t, eval_kernel()) : t;
    plain.push_back(mse(out, ref));
    masked.push_back(mse(mask_probes(out, ref, step), ref));
  }
  rep.unmasked = score(std::move(plain));
  rep.masked = score(std::move(masked));
  return rep;
}

std::vector<SweepPoint> coverage_sweep(const Reconstructor& r, std::span<const Micrograph> targets,
                                       std::span<const int> steps, std::span<const int> seen_steps,
                                       bool blur_targets) {
  std::vector<SweepPoint> out;
  for (int s : steps) {
    const EvalReport rep = evaluate_method(r, targets, s, blur_targets);
    SweepPoint p;
    p.step = s;
    p.seen = std::find(seen_steps.begin(), seen_steps.end(), s) != seen_steps.end();
    p.rmse = rep.unmasked.stats.root_mean;
    p.rmse_masked = rep.masked.stats.root_mean;
    out.push_back(p);
  }
  return out;
}

PixelErrorMap::PixelErrorMap(int height, int width) : h_(height), w_(width) {
  if (height < 1 || width < 1) throw InvalidInput("pixel error map: dimensions must be positive");
  sum_.assign(static_cast<std::size_t>(height) * width, 0.0);
}

PixelErrorMap PixelErrorMap::from_field(int height, int width, std::vector<double> mse) {
  PixelErrorMap m(height, width);
  if (mse.size() != m.sum_.size()) throw InvalidInput("pixel error map: field size mismatch");
  m.sum_ = std::move(mse);
  m.samples_ = 1;
  return m;
}

void PixelErrorMap::accumulate(const Micrograph& output, const Micrograph& target) {
  if (output.height() != h_ || output.width() != w_ || target.height() != h_ || target.width() != w_) {
    throw InvalidInput("pixel error map: image dimensions differ from the map");
  }
  const auto a = output.values();
  const auto b = target.values();
  for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += (a[i] - b[i]) * (a[i] - b[i]);
  ++samples_;
}

std::vector<double> PixelErrorMap::mse() const {
  std::vector<double> m(sum_.size(), 0.0);
  if (samples_ == 0) return m;
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = sum_[i] / static_cast<double>(samples_);
  return m;
}

Micrograph PixelErrorMap::rmse_map() const {
  auto m = mse();
  for (double& v : m) v = std::sqrt(v);
  return Micrograph(h_, w_, std::move(m));
}

double PixelErrorMap::mean_mse() const {
  const auto m = mse();
  double s = 0;
  for (double v : m) s += v;
  return s / static_cast<double>(m.size());
}

int edge_distance(int r, int c, int height, int width) {
  return std::min({r, c, height - 1 - r, width - 1 - c});
}

std::vector<double> PixelErrorMap::edge_curve() const {
  const int dmax = edge_distance((h_ - 1) / 2, (w_ - 1) / 2, h_, w_);
  std::vector<double> sum(dmax + 1, 0.0);
  std::vector<long long> n(dmax + 1, 0);
  const auto m = mse();
  for (int r = 0; r < h_; ++r) {
    for (int c = 0; c < w_; ++c) {
      const int d = edge_distance(r, c, h_, w_);
      sum[d] += m[static_cast<std::size_t>(r) * w_ + c];
      ++n[d];
    }
  }
  for (int d = 0; d <= dmax; ++d) sum[d] = std::sqrt(sum[d] / static_cast<double>(n[d]));
  return sum;
}

std::vector<double> PixelErrorMap::discard_curve() const {
  const int dmax = edge_distance((h_ - 1) / 2, (w_ - 1) / 2, h_, w_);
  std::vector<double> sum(dmax + 1, 0.0);
  std::vector<long long> n(dmax + 1, 0);
  const auto m = mse();
  for (int r = 0; r < h_; ++r) {
    for (int c = 0; c < w_; ++c) {
      const int d = edge_distance(r, c, h_, w_);
      sum[d] += m[static_cast<std::size_t>(r) * w_ + c];
      ++n[d];
    }
  }
  std::vector<double> out(dmax + 1);
  double s = 0;
  long long k = 0;
  for (int t = dmax; t >= 0; --t) {
    s += sum[t];
    k += n[t];
    out[t] = std::sqrt(s / static_cast<double>(k));
  }
  return out;
}

std::size_t curve_knee(std::span<const double> curve, double rel_tol) {
  if (curve.empty()) throw InvalidInput("curve_knee: empty curve");
  const double last = curve.back();
  const double tol = rel_tol * std::max(std::abs(last), 1e-300);
  std::size_t k = curve.size() - 1;
  while (k > 0 && std::abs(curve[k - 1] - last) <= tol) --k;
  return k;
}

PixelErrorMap per_pixel_rmse(const Reconstructor& r, std::span<const Micrograph> targets, std::span<const int> steps,
                             bool blur_targets) {
  if (targets.empty()) throw InvalidInput("per_pixel_rmse: no targets");
  PixelErrorMap map(targets[0].height(), targets[0].width());
  for (int s : steps) {
    const Coverage cov(s);
    for (const Micrograph& t : targets) {
      const Micrograph out = r.reconstruct(downsample_nearest(t, cov), cov, t.height(), t.width());
      map.accumulate(out, blur_targets ? blur(t, eval_kernel()) : t);
    }
  }
  return map;
}

double mal(const Micrograph& m) {
  const int h = m.height(), w = m.width();
  if (h < 3 || w < 3) return 0.0;
  double s = 0;
  for (int r = 1; r < h - 1; ++r) {
    for (int c = 1; c < w - 1; ++c) {
      s += std::abs(m(r - 1, c) + m(r + 1, c) + m(r, c - 1) + m(r, c + 1) - 4.0 * m(r, c));
    }
  }
  return s / (static_cast<double>(h - 2) * (w - 2));
}

double mal_ratio(std::span<const Micrograph> crops, Coverage cov, int segment_side) {
  if (crops.empty()) throw InvalidInput("mal_ratio: no crops");
  double total = 0;
  for (const Micrograph& m : crops) {
    const int side = std::min(m.height(), m.width());
    const int k = segment_side > 0 ? segment_side : downsampled_side(side, cov.step());
    if (k > side) {
      throw InvalidInput("mal_ratio: segment side " + std::to_string(k) + " exceeds crop side " + std::to_string(side));
    }
    if (k < 3) throw InvalidInput("mal_ratio: segments need at least 3 px for a Laplacian");
    double seg = 0;
    int count = 0;
    for (int r = 0; r + k <= m.height(); r += k) {
      for (int c = 0; c + k <= m.width(); c += k) {
        seg += mal(crop(m, r, c, k, k));
        ++count;
      }
    }
    seg /= count;
    const double near = mal(downsample_nearest(m, cov));
    if (near == 0.0) {
      total += seg == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    } else {
      total += seg / near;
    }
  }
  return total / static_cast<double>(crops.size());
}

void write_stats_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports) {
  auto os = open_csv(path);
  os << "method,step,coverage,blur_targets,masked,root_mean,root_std,count,overflow\n";
  for (const auto& r : reports) {
    for (int masked = 0; masked < 2; ++masked) {
      const ScoreSet& s = masked ? r.masked : r.unmasked;
      os << r.method << "," << r.step << "," << Coverage(r.step).fraction() << "," << (r.blur_targets ? 1 : 0) << ","
         << masked << "," << s.stats.root_mean << "," << s.stats.root_std << "," << s.stats.count << ","
         << s.histogram.overflow << "\n";
    }
  }
}

void write_histogram_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports) {
  auto os = open_csv(path);
  os << "method,step,masked,bin_lo,bin_hi,count\n";
  for (const auto& r : reports) {
    for (int masked = 0; masked < 2; ++masked) {
      const Histogram& h = masked ? r.masked.histogram : r.unmasked.histogram;
      const auto e = h.edges();
      for (std::size_t b = 0; b < h.counts.size(); ++b) {
        os << r.method << "," << r.step << "," << masked << "," << e[b] << "," << e[b + 1] << "," << h.counts[b] << "\n";
      }
      os << r.method << "," << r.step << "," << masked << "," << h.range_max << ",inf," << h.overflow << "\n";
    }
  }
}

void write_sweep_csv(const std::filesystem::path& path, std::string_view method, const std::vector<SweepPoint>& sweep) {
  auto os = open_csv(path);
  os << "method,step,coverage,seen,rmse,rmse_masked\n";
  for (const auto& p : sweep) {
    os << method << "," << p.step << "," << Coverage(p.step).fraction() << "," << (p.seen ? 1 : 0) << "," << p.rmse
       << "," << p.rmse_masked << "\n";
  }
}

void write_curve_csv(const std::filesystem::path& path, const PixelErrorMap& map) {
  auto os = open_csv(path);
  os << "distance,edge_rmse,discard_rmse\n";
  const auto e = map.edge_curve();
  const auto d = map.discard_curve();
  for (std::size_t i = 0; i < e.size(); ++i) os << i << "," << e[i] << "," << d[i] << "\n";
}

}  // namespace dlss
