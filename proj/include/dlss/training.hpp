#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dlss/checkpoint.hpp"
#include "dlss/config.hpp"
#include "dlss/image_io.hpp"
#include "dlss/imaging.hpp"
#include "dlss/losses.hpp"
#include "dlss/models.hpp"

namespace dlss {

/// In-memory image set. Images may be larger than the training side; examples
/// are random side x side crops with a random D4 augmentation.
struct Dataset {
  std::vector<Micrograph> images;

  static Dataset synthetic(int count, int side, std::uint64_t seed, const SynthConfig& cfg = {});
  // Loads every manifest record of `split`. Relative paths resolve against
  // `root` (or the manifest's directory when root is empty). Unreadable files
  // are skipped and counted in `skipped`.
  static Dataset from_manifest(const std::filesystem::path& manifest, io::Split split,
                               const std::filesystem::path& root = {}, int* skipped = nullptr);
  // Deterministic 70/15/15 split of the synthetic corpus.
  static Dataset synthetic_split(int count, int side, std::uint64_t seed, io::Split split);

  std::size_t size() const { return images.size(); }
};

// Independent generator for example `index` under a run seed.
std::mt19937_64 example_rng(std::uint64_t seed, std::uint64_t index);

// Epoch-style sampler: a shuffled permutation, reshuffled when exhausted.
class ExampleStream {
 public:
  ExampleStream(const Dataset& data, int side, std::uint64_t seed);
  // Next augmented side x side example.
  Micrograph next();
  long long drawn() const { return drawn_; }

 private:
  const Dataset& data_;
  int side_;
  std::uint64_t seed_;
  std::mt19937_64 shuffle_rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  long long drawn_ = 0;
};

// Coverage step for the next example: the single configured step, or a
// uniform draw from cfg.steps in unified mode.
int draw_step(const TrainRunConfig& cfg, std::mt19937_64& rng);

struct TrainResult {
  std::filesystem::path run_dir;
  std::vector<std::filesystem::path> checkpoints;
  std::vector<double> effective_loss;  // generator objective per iteration
  std::vector<int> steps_used;         // coverage step per iteration
  long long replayed = 0;
};

using ProgressFn = std::function<void(long long iteration, double effective_loss)>;

// Two-stage recipe: non-adversarial span (blurred or homogenized MSE plus the
// trainer loss, with the predictor ensemble when targets are unblurred) and an
// optional adversarial span. Writes metrics.csv, losses.csv and checkpoints
// under <checkpoint_root>/<run_id>/.
TrainResult train_two_stage(const TrainRunConfig& cfg, const Dataset& data, ProgressFn progress = {});

// One-stage recipe on a single coverage with batch cfg.batch_size.
TrainResult train_one_stage(const TrainRunConfig& cfg, const Dataset& data, ProgressFn progress = {});

TrainResult train(const TrainRunConfig& cfg, const Dataset& data, ProgressFn progress = {});

// Rebuilds the generator recorded in a checkpoint and loads its parameters.
// Throws InvalidInput when the stored architecture hash does not match.
std::unique_ptr<Generator> load_generator(const std::filesystem::path& checkpoint);
std::unique_ptr<Generator> load_generator(const Checkpoint& ckpt);

// Checkpoint holding a generator (and nothing else) with its spec as metadata.
Checkpoint generator_checkpoint(const Generator& g, long long iteration);

// Mean of the trailing `window` values ending at each index.
std::vector<double> boxcar(const std::vector<double>& v, std::size_t window);

}  // namespace dlss
