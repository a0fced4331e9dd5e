#include "dlss/replay.hpp"

#include <algorithm>
#include <cmath>

#include "dlss/error.hpp"

namespace dlss {

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidInput("quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidInput("quantile: q must lie in [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double f = pos - static_cast<double>(lo);
  return values[lo] + f * (values[hi] - values[lo]);
}

}  // namespace dlss
