#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "dynpoint/errors.hpp"

namespace dynpoint {

/// Median; for even counts the mean of the two central order statistics.
inline double median(std::vector<double> values) {
  if (values.empty()) throw EmptyDomainError("median of an empty set");
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

inline double mean(std::span<const double> values) {
  if (values.empty()) throw EmptyDomainError("mean of an empty set");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

}  // namespace dynpoint
