#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dlss/alrc.hpp"
#include "dlss/nn/network.hpp"

namespace dlss {

/// Versioned binary container: architecture hash and description, iteration
/// counter, free-form metadata, ALRC states and named double-precision arrays.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t architecture_hash = 0;
  std::string architecture;
  long long iteration = 0;
  std::map<std::string, std::string> meta;
  std::map<std::string, AlrcState> alrc;
  std::vector<nn::NamedArray> tensors;

  // Tensors whose names start with `prefix`, prefix stripped.
  std::vector<nn::NamedArray> section(const std::string& prefix) const;
  void add_section(const std::string& prefix, const std::vector<nn::NamedArray>& arrays);
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws InvalidInput on a bad magic, unknown version or truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// <root>/<run_id>/<iteration>.bin
std::filesystem::path checkpoint_path(const std::filesystem::path& root, const std::string& run_id, long long iteration);
// Highest-iteration checkpoint in a run directory, or empty when none exist.
std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);

}  // namespace dlss
