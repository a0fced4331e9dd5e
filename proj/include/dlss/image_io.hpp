#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dlss/imaging.hpp"

namespace dlss::io {

// Baseline uncompressed TIFF, single channel. Reads 8/16-bit unsigned and
// 32-bit float samples in either byte order; always writes little-endian
// float32.
Micrograph read_tiff(const std::filesystem::path& path);
void write_tiff(const std::filesystem::path& path, const Micrograph& m);

// Raw little-endian float32 with a sidecar text file `<path>.hdr` holding
// "width height".
Micrograph read_raw(const std::filesystem::path& path);
void write_raw(const std::filesystem::path& path, const Micrograph& m);

// Dispatches on extension: .tif/.tiff or anything else as raw.
Micrograph load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const Micrograph& m);

// 8-bit binary PGM of values linearly mapped from [lo, hi].
void write_pgm(const std::filesystem::path& path, const Micrograph& m, double lo, double hi);

enum class Split { train, validation, test };

Split parse_split(std::string_view s);
std::string_view split_name(Split s);

struct ManifestRecord {
  std::string path;
  Split split;
};

// One record per line: `path,split`. Blank lines and lines starting with '#'
// are skipped.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

}  // namespace dlss::io
