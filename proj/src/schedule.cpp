#include "dlss/schedule.hpp"

#include <string>

#include "dlss/error.hpp"

namespace dlss {

std::string_view net_role_name(NetRole r) {
  switch (r) {
    case NetRole::G: return "G";
    case NetRole::M: return "M";
    case NetRole::T: return "T";
    case NetRole::D: return "D";
  }
  return "?";
}

double decay_multiplier(long long i, long long start, long long length) {
  if (length < 1 || i < start || i >= start + length) throw InvalidInput("decay_multiplier: iteration outside the phase");
  const long long k = (8 * (i - start)) / length;
  return 1.0 - static_cast<double>(k) / 8.0;
}

TwoStageSchedule::TwoStageSchedule(long long non_adversarial, long long adversarial)
    : non_adv_(non_adversarial), adv_(adversarial) {
  if (non_adversarial < 2 || adversarial < 0 || adversarial == 1) {
    throw InvalidInput("schedule: spans must be >= 2 iterations (adversarial may be 0)");
  }
  boundaries_ = {0, non_adv_ / 2, non_adv_};
  if (adv_ > 0) {
    boundaries_.push_back(non_adv_ + adv_ / 2);
    boundaries_.push_back(non_adv_ + adv_);
  }
}

bool TwoStageSchedule::frozen(long long i) const {
  return (i >= boundaries_[1] && i < non_adv_) || (adv_ > 0 && i >= boundaries_[3]);
}

Hyper TwoStageSchedule::at(long long i, NetRole net) const {
  if (i < 0 || i >= total()) throw InvalidInput("schedule: iteration " + std::to_string(i) + " outside [0, " + std::to_string(total()) + ")");
  int phase = 0;
  while (i >= boundaries_[phase + 1]) ++phase;
  const long long start = boundaries_[phase];
  const long long len = boundaries_[phase + 1] - start;
  const double m = (phase == 1 || phase == 3) ? decay_multiplier(i, start, len) : 1.0;
  switch (net) {
    case NetRole::G:
      if (phase == 0) return {0.0003, 0.9, true};
      if (phase == 1) return {0.0003 * m, 0.5 + 0.4 * m, true};
      if (phase == 2) return {0.0001, 0.5, true};
      return {0.0001 * m, 0.5, true};
    case NetRole::M:
      if (phase == 0) return {0.0003, 0.9, true};
      if (phase == 1) return {0.0003 * m, 0.9, true};
      return {};
    case NetRole::T:
      if (phase == 0) return {0.0006, 0.9, true};
      if (phase == 1) return {0.0006 * m, 0.5 + 0.4 * m, true};
      if (phase == 2) return {0.0002, 0.5, true};
      return {0.0002 * m, 0.5, true};
    case NetRole::D:
      if (phase >= 2) return {0.0001, 0.5, true};
      return {};
  }
  return {};
}

OneStageSchedule::OneStageSchedule(long long total) : total_(total) {
  if (total < 8) throw InvalidInput("one-stage schedule: total must be >= 8 iterations");
}

Hyper OneStageSchedule::at(long long i) const {
  if (i < 0 || i >= total_) throw InvalidInput("schedule: iteration " + std::to_string(i) + " outside [0, " + std::to_string(total_) + ")");
  double lr = 0.001;
  if (i >= total_ / 4) {
    lr = 0.00025;
  } else if (i >= total_ / 8) {
    lr = 0.0005;
  }
  return {lr, frozen(i) ? 0.5 : 0.9, true};
}

bool OneStageSchedule::frozen(long long i) const { return i >= total_ / 2; }

}  // namespace dlss
