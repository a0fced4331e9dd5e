#pragma once

#include <string_view>
#include <vector>

namespace dlss {

enum class NetRole { G, M, T, D };

std::string_view net_role_name(NetRole r);

struct Hyper {
  double lr = 0;
  double beta = 0;
  bool active = false;  // false where the table has no entry
};

// m_k = 1 - k/8 with k = floor(8 (i - start) / length), k in 0..7.
double decay_multiplier(long long i, long long start, long long length);

/// Learning rate and first-moment decay per network for the two-stage recipe:
/// a non-adversarial span followed by an optional adversarial span, each split
/// into a constant half and a decaying half.
class TwoStageSchedule {
 public:
  explicit TwoStageSchedule(long long non_adversarial = 1000000, long long adversarial = 1000000);

  long long total() const { return boundaries_.back(); }
  long long non_adversarial() const { return non_adv_; }
  bool adversarial(long long i) const { return i >= non_adv_; }
  // {0, b1, b2, ...}: start of every phase plus the end.
  const std::vector<long long>& boundaries() const { return boundaries_; }
  // Mean-only batch norm freezes halfway through each span.
  bool frozen(long long i) const;

  // Throws InvalidInput when i is outside [0, total).
  Hyper at(long long i, NetRole net) const;

 private:
  long long non_adv_, adv_;
  std::vector<long long> boundaries_;
};

/// One-stage policy: lr 0.001, halved at 1/8 and again at 1/4 of the run;
/// batch norm frozen and beta1 0.9 -> 0.5 from the halfway point.
class OneStageSchedule {
 public:
  explicit OneStageSchedule(long long total = 100000);

  long long total() const { return total_; }
  Hyper at(long long i) const;
  bool frozen(long long i) const;

 private:
  long long total_;
};

}  // namespace dlss
