#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

namespace exitcde::interp {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

// One irregularly sampled multivariate series: N observation times and an
// N x d value matrix in which NaN marks a missing entry.
struct TimeSeriesSample {
  std::vector<double> times;
  std::vector<double> values;  // row-major, times.size() x channels
  std::size_t channels = 0;

  std::optional<std::size_t> label;  // classification target
  std::vector<double> target;        // forecasting target, horizon x channels

  std::size_t length() const { return times.size(); }
  double& at(std::size_t row, std::size_t channel) { return values[row * channels + channel]; }
  double at(std::size_t row, std::size_t channel) const { return values[row * channels + channel]; }

  double terminal_time() const { return times.empty() ? 0.0 : times.back(); }
  std::size_t observed_count(std::size_t channel) const;
  std::size_t missing_count() const;

  // Throws DataError when times are not strictly increasing or the value
  // matrix does not match the declared shape.
  void validate() const;
};

}  // namespace exitcde::interp
