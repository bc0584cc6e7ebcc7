#include "exitcde/interp/spline.hpp"

#include <algorithm>
#include <sstream>
#include <string>

#include "exitcde/errors.hpp"

namespace exitcde::interp {

std::size_t TimeSeriesSample::observed_count(std::size_t channel) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < length(); ++i) n += is_missing(at(i, channel)) ? 0 : 1;
  return n;
}

std::size_t TimeSeriesSample::missing_count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), is_missing));
}

void TimeSeriesSample::validate() const {
  if (values.size() != times.size() * channels) {
    throw DataError("sample holds " + std::to_string(values.size()) + " values for " +
                    std::to_string(times.size()) + " times x " + std::to_string(channels) +
                    " channels");
  }
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) {
      std::ostringstream os;
      os << "times must be strictly increasing: t[" << i - 1 << "]=" << times[i - 1] << ", t[" << i
         << "]=" << times[i];
      throw DataError(os.str());
    }
  }
}

CubicChannel::CubicChannel(std::vector<double> knots, std::span<const double> values)
    : knots_(std::move(knots)) {
  const std::size_t n = knots_.size();
  if (n < 2 || values.size() != n) throw DataError("cubic channel needs at least two knots");

  // Natural boundary: second derivatives m[0] = m[n-1] = 0; tridiagonal
  // system for the interior ones solved by forward elimination.
  std::vector<double> h(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) h[i] = knots_[i + 1] - knots_[i];
  std::vector<double> m(n, 0.0);
  if (n > 2) {
    const std::size_t k = n - 2;
    std::vector<double> diag(k), upper(k), rhs(k);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t i = j + 1;
      diag[j] = 2.0 * (h[i - 1] + h[i]);
      upper[j] = h[i];
      rhs[j] = 6.0 * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
    }
    for (std::size_t j = 1; j < k; ++j) {
      const double w = h[j] / diag[j - 1];  // sub-diagonal entry of row j is h[j]
      diag[j] -= w * upper[j - 1];
      rhs[j] -= w * rhs[j - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for (std::size_t j = k - 1; j-- > 0;) m[j + 1] = (rhs[j] - upper[j] * m[j + 2]) / diag[j];
  }

  a_.resize(n - 1);
  b_.resize(n - 1);
  c_.resize(n - 1);
  d_.resize(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    a_[i] = values[i];
    b_[i] = (values[i + 1] - values[i]) / h[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0;
    c_[i] = m[i] / 2.0;
    d_[i] = (m[i + 1] - m[i]) / (6.0 * h[i]);
  }
  end_value_ = values[n - 1];
  const double hl = h[n - 2];
  end_slope_ = b_[n - 2] + hl * (2.0 * c_[n - 2] + 3.0 * d_[n - 2] * hl);
}

std::size_t CubicChannel::interval(double t) const {
  auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  if (it == knots_.begin()) return 0;
  return std::min<std::size_t>(static_cast<std::size_t>(it - knots_.begin()) - 1, a_.size() - 1);
}

double CubicChannel::value(double t) const {
  if (t < knots_.front()) return a_[0] + b_[0] * (t - knots_.front());
  if (t > knots_.back()) return end_value_ + end_slope_ * (t - knots_.back());
  if (t == knots_.back()) return end_value_;
  const std::size_t i = interval(t);
  const double u = t - knots_[i];
  return a_[i] + u * (b_[i] + u * (c_[i] + u * d_[i]));
}

double CubicChannel::derivative(double t) const {
  if (t < knots_.front()) return b_[0];
  if (t >= knots_.back()) return end_slope_;
  const std::size_t i = interval(t);
  const double u = t - knots_[i];
  return b_[i] + u * (2.0 * c_[i] + 3.0 * u * d_[i]);
}

double CubicChannel::second_derivative(double t) const {
  if (t < knots_.front() || t > knots_.back()) return 0.0;
  const std::size_t i = interval(t);
  const double u = t - knots_[i];
  return 2.0 * c_[i] + 6.0 * u * d_[i];
}

SplinePath::SplinePath(std::vector<CubicChannel> channels, std::vector<double> knots,
                       bool append_time, bool clamp)
    : channels_(std::move(channels)), knots_(std::move(knots)), append_time_(append_time),
      clamp_(clamp) {
  if (knots_.size() < 2) throw DataError("spline path needs at least two knot times");
}

double SplinePath::resolve(double t, bool& outside) const {
  outside = t < start() || t > end();
  if (!outside) return t;
  if (!clamp_) {
    std::ostringstream os;
    os << "path query at t=" << t << " outside [" << start() << ", " << end() << "]";
    throw DomainError(os.str(), t, start(), end());
  }
  return std::clamp(t, start(), end());
}

void SplinePath::eval(double t, std::span<double> out) const {
  bool outside;
  const double q = resolve(t, outside);
  for (std::size_t c = 0; c < channels_.size(); ++c) out[c] = channels_[c].value(q);
  if (append_time_) out[channels_.size()] = q;
}

std::vector<double> SplinePath::eval(double t) const {
  std::vector<double> out(channels());
  eval(t, out);
  return out;
}

void SplinePath::derivative(double t, std::span<double> out) const {
  bool outside;
  const double q = resolve(t, outside);
  for (std::size_t c = 0; c < channels_.size(); ++c) {
    out[c] = outside ? 0.0 : channels_[c].derivative(q);
  }
  if (append_time_) out[channels_.size()] = outside ? 0.0 : 1.0;
}

std::vector<double> SplinePath::derivative(double t) const {
  std::vector<double> out(channels());
  derivative(t, out);
  return out;
}

std::vector<double> SplinePath::second_derivative(double t) const {
  bool outside;
  const double q = resolve(t, outside);
  std::vector<double> out(channels(), 0.0);
  for (std::size_t c = 0; c < channels_.size(); ++c) {
    out[c] = outside ? 0.0 : channels_[c].second_derivative(q);
  }
  return out;
}

SplinePath fit_spline(const TimeSeriesSample& sample, const SplineOptions& options) {
  sample.validate();
  const std::size_t n = sample.length();
  const std::size_t d = sample.channels;

  std::vector<bool> row_observed(n, false);
  std::vector<CubicChannel> channels;
  channels.reserve(d * (options.observation_intensity ? 2 : 1));
  for (std::size_t c = 0; c < d; ++c) {
    std::vector<double> knots, values;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = sample.at(i, c);
      if (is_missing(v)) continue;
      knots.push_back(sample.times[i]);
      values.push_back(v);
      row_observed[i] = true;
    }
    if (knots.size() < 2) {
      throw DataError("channel " + std::to_string(c) + " has " + std::to_string(knots.size()) +
                      " observation(s); at least 2 are required");
    }
    channels.emplace_back(std::move(knots), values);
  }

  if (options.observation_intensity) {
    for (std::size_t c = 0; c < d; ++c) {
      std::vector<double> counts(n);
      double running = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        running += is_missing(sample.at(i, c)) ? 0.0 : 1.0;
        counts[i] = running;
      }
      channels.emplace_back(sample.times, counts);
    }
  }

  std::vector<double> knots;
  for (std::size_t i = 0; i < n; ++i) {
    if (row_observed[i]) knots.push_back(sample.times[i]);
  }
  return SplinePath(std::move(channels), std::move(knots), options.append_time, options.clamp);
}

}  // namespace exitcde::interp
