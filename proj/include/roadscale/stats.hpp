#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "roadscale/error.hpp"

namespace roadscale {

/// Median of `values`, reordering them in place. Even counts take the mean
/// of the two central order statistics.
inline double median_inplace(std::span<double> values) {
  if (values.empty()) {
    throw Error(Errc::EmptyInput, "median of empty set");
  }
  const auto n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  const double upper = *mid;
  if (n % 2 == 1) {
    return upper;
  }
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

inline double median(std::vector<double> values) { return median_inplace(values); }

/// Neumaier compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace roadscale
