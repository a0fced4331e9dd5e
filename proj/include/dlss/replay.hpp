#pragma once

#include <cstddef>
#include <deque>
#include <random>
#include <vector>

namespace dlss {

// Linearly interpolated q-quantile (q in [0,1]) of a non-empty sample.
double quantile(std::vector<double> values, double q);

/// Hard-example memory: errors at or above the running 80th percentile are
/// kept and, with probability `replay_probability`, handed back in place of a
/// fresh example. Eviction is first-in first-out.
template <class Payload>
class ReplayBuffer {
 public:
  struct Entry {
    Payload payload;
    double error;
  };

  explicit ReplayBuffer(std::size_t capacity = 512, double replay_probability = 0.2, std::size_t window = 1000)
      : capacity_(capacity), p_(replay_probability), window_size_(window) {}

  // Fresh example unless a replay is drawn. `replayed` reports which.
  Payload maybe_replay(Payload fresh, std::mt19937_64& rng, bool* replayed = nullptr) {
    const bool use = !entries_.empty() && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p_;
    if (replayed != nullptr) *replayed = use;
    if (!use) return fresh;
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, entries_.size() - 1)(rng);
    return entries_[k].payload;
  }

  // Records `error` in the percentile window and admits the example when the
  // error is at or above the updated 80th-percentile estimate.
  bool offer(Payload payload, double error) {
    window_.push_back(error);
    if (window_.size() > window_size_) window_.pop_front();
    threshold_ = quantile(std::vector<double>(window_.begin(), window_.end()), 0.8);
    if (error < threshold_ || capacity_ == 0) return false;
    if (entries_.size() == capacity_) entries_.pop_front();
    entries_.push_back({std::move(payload), error});
    return true;
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  double threshold() const { return threshold_; }
  const std::deque<Entry>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  double p_;
  std::size_t window_size_;
  std::deque<double> window_;
  std::deque<Entry> entries_;
  double threshold_ = 0;
};

template <class Payload>
Payload replay_maybe(ReplayBuffer<Payload>& buffer, Payload fresh, std::mt19937_64& rng) {
  return buffer.maybe_replay(std::move(fresh), rng);
}

}  // namespace dlss
