#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "dlss/evaluation.hpp"
#include "dlss/imaging.hpp"
#include "dlss/models.hpp"

namespace dlss {

enum class WirePrecision { u8, f16, f32 };

WirePrecision parse_precision(std::string_view s);
std::string_view precision_name(WirePrecision p);
int bytes_per_pixel(WirePrecision p);

struct Encoded {
  std::vector<std::uint8_t> bytes;  // row-major, little-endian
  long long clamped = 0;           // values pulled into [0,1] before encoding
};

// u8 stores round(255 x); f16 and f32 are IEEE binary16/binary32.
Encoded quantize(const Micrograph& m, WirePrecision p);
Micrograph dequantize(std::span<const std::uint8_t> bytes, int height, int width, WirePrecision p);
// quantize then dequantize.
Micrograph typecast(const Micrograph& m, WirePrecision p);

// Process-wide count of clamped values across all quantize calls.
long long clamp_warning_count();

struct PrecisionRow {
  WirePrecision precision;
  MseStats stats;
  std::vector<double> mses;
};

// Inputs are typecast, restored to working precision and supersampled; MSE is
// taken on the unclamped generator output, against eval_kernel()-blurred
// targets when `blur_targets` is set.
std::vector<PrecisionRow> precision_study(const Generator& g, std::span<const Micrograph> targets, int step,
                                          std::span<const WirePrecision> precisions, bool blur_targets = false);

/// Overlapping tiles in output coordinates. `tile` is the model output side,
/// `margin` px are discarded on interior tile edges.
struct TilePlan {
  int tile = 64;
  int overlap = 6;
  int margin = 3;

  // m = round(20 tile / 512) and o = 2m.
  static TilePlan for_tile(int tile);
  void validate() const;
};

// Maps a batch of low-resolution tiles to full-resolution tiles.
using TileFn = std::function<std::vector<Micrograph>(const std::vector<Micrograph>& lowres_tiles)>;

TileFn model_tile_fn(const Generator& g, Coverage cov);

// Supersamples a low-resolution scan of any size to out_height x out_width.
// Tile origins fall on the probe lattice; each output pixel comes from the
// tile whose overlap midpoint it lies before. Scans smaller than a tile are
// reflect-padded, inferred once and cropped.
Micrograph tiled_infer(const TileFn& fn, const Micrograph& lowres, Coverage cov, int out_height, int out_width,
                       const TilePlan& plan);
Micrograph tiled_infer(const Generator& g, const Micrograph& lowres, Coverage cov, int out_height, int out_width);

// Tile origins along one axis of length n (exposed for tests).
std::vector<int> tile_origins(int n, int step, const TilePlan& plan);

}  // namespace dlss
