#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "exitcde/interp/time_series.hpp"

namespace exitcde::interp {

struct SplineOptions {
  bool append_time = true;
  // Per-channel cumulative observation count, splined like a data channel.
  bool observation_intensity = false;
  // Out-of-domain queries clamp to the nearest endpoint instead of throwing.
  bool clamp = false;
};

// Natural cubic spline through one channel's observed knots. Outside its own
// knot range the channel continues linearly, which keeps it C2 because the
// second derivative vanishes at both ends.
class CubicChannel {
 public:
  CubicChannel(std::vector<double> knots, std::span<const double> values);

  double value(double t) const;
  double derivative(double t) const;
  double second_derivative(double t) const;

  const std::vector<double>& knots() const { return knots_; }

 private:
  std::size_t interval(double t) const;

  std::vector<double> knots_;
  // Per interval: a + b u + c u^2 + d u^3 with u = t - knots_[i].
  std::vector<double> a_, b_, c_, d_;
  double end_value_ = 0.0;
  double end_slope_ = 0.0;
};

// Continuous control path X(t) over [first time, last time]. Channel layout:
// data channels, then optional intensity channels, then the optional time
// channel. Immutable after construction.
class SplinePath {
 public:
  SplinePath(std::vector<CubicChannel> channels, std::vector<double> knots, bool append_time,
             bool clamp);

  std::size_t channels() const { return channels_.size() + (append_time_ ? 1 : 0); }
  double start() const { return knots_.front(); }
  double end() const { return knots_.back(); }
  // Union of observation times across data channels.
  const std::vector<double>& knots() const { return knots_; }
  bool has_time_channel() const { return append_time_; }

  std::vector<double> eval(double t) const;
  void eval(double t, std::span<double> out) const;
  std::vector<double> derivative(double t) const;
  void derivative(double t, std::span<double> out) const;
  std::vector<double> second_derivative(double t) const;

 private:
  // Returns the query time to use and whether it lay outside the domain.
  double resolve(double t, bool& outside) const;

  std::vector<CubicChannel> channels_;
  std::vector<double> knots_;
  bool append_time_;
  bool clamp_;
};

// Splines each channel over its own observed knots. Throws DataError for a
// channel with fewer than two observations or for non-increasing times.
SplinePath fit_spline(const TimeSeriesSample& sample, const SplineOptions& options = {});

}  // namespace exitcde::interp
