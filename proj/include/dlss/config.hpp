#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dlss/models.hpp"

namespace dlss {

// `key = value` lines; '#' starts a comment. Throws InvalidInput with the
// line number on malformed input or duplicate keys.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::string format_key_values(const std::map<std::string, std::string>& kv);

// "4..10" or "4,5,7" (a single "5" also works).
std::vector<int> parse_steps(const std::string& s);
std::string format_steps(const std::vector<int>& steps);

enum class CoverageMode { individual_coverage, unified };

struct TrainRunConfig {
  std::string run_id = "run";
  GeneratorVariant variant = GeneratorVariant::two_stage;
  CoverageMode mode = CoverageMode::individual_coverage;
  std::vector<int> steps{5};
  int side = 64;
  int base_channels = 16;
  int depth = 3;
  int batch_size = 1;
  long long iterations = 10000;  // non-adversarial span (two-stage) or whole run (one-stage)
  long long adversarial_iterations = 0;
  bool blur_targets = true;
  bool replay = true;
  int predictor_count = 20;
  std::uint64_t seed = 1;
  std::string manifest;  // empty: synthetic corpus
  int synthetic_count = 2000;
  long long checkpoint_every = 0;  // 0: final checkpoint only
  std::string checkpoint_root = "ckpt";
  double output_init_std = 0.02;

  // Desk-scale defaults for each variant (one-stage: batch 16).
  static TrainRunConfig defaults(GeneratorVariant v);

  // Throws InvalidInput naming the offending field ("config.side: ...").
  void validate() const;
  GeneratorSpec generator_spec() const;

  std::map<std::string, std::string> to_key_values() const;
  static TrainRunConfig from_key_values(const std::map<std::string, std::string>& kv);

  std::string serialize() const { return format_key_values(to_key_values()); }
  static TrainRunConfig parse(const std::string& text) { return from_key_values(parse_key_values(text)); }
  static TrainRunConfig load(const std::filesystem::path& path);
};

}  // namespace dlss
