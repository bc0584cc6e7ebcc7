#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "exitcde/diff/tape.hpp"
#include "exitcde/errors.hpp"

namespace exitcde::solve {

enum class Method { kEuler, kRk4, kDopri5 };

const char* method_name(Method m);
Method parse_method(const std::string& name);

struct SolverConfig {
  Method method = Method::kRk4;
  double step = 1.0;  // fixed-step methods
  double rtol = 1e-6;
  double atol = 1e-8;
  std::size_t max_steps = 1'000'000;

  // Throws ConfigError on a non-positive step, tolerance, or step budget.
  void validate() const;
};

// Accepted grid points of one solve, including both endpoints. `slopes[i]` is
// the field evaluated at (times[i], states[i]) for every step start.
template <class State>
struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  std::vector<State> slopes;

  const State& final_state() const { return states.back(); }
};

// Arithmetic the steppers need from a state type.
template <class State>
struct StateOps;

template <>
struct StateOps<std::vector<double>> {
  using State = std::vector<double>;
  static std::span<const double> values(const State& s) { return s; }
  // base + h * sum_j coeffs[j] * ks[j]; zero coefficients are skipped.
  static State combine(const State& base, double h, std::span<const double> coeffs,
                       std::span<const State* const> ks) {
    State out(base.size(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += 1.0 * base[i];
    for (std::size_t j = 0; j < ks.size(); ++j) {
      if (coeffs[j] == 0.0) continue;
      const double c = h * coeffs[j];
      const State& k = *ks[j];
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * k[i];
    }
    return out;
  }
};

template <>
struct StateOps<diff::Var> {
  using State = diff::Var;
  static std::span<const double> values(const State& s) { return s.value().data(); }
  static State combine(const State& base, double h, std::span<const double> coeffs,
                       std::span<const State* const> ks) {
    std::vector<diff::Var> terms{base};
    std::vector<double> cs{1.0};
    for (std::size_t j = 0; j < ks.size(); ++j) {
      if (coeffs[j] == 0.0) continue;
      terms.push_back(*ks[j]);
      cs.push_back(h * coeffs[j]);
    }
    return diff::lincomb(terms, cs);
  }
};

namespace detail {

template <class State>
void check_finite(const State& k, double t) {
  for (double v : StateOps<State>::values(k)) {
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "non-finite dynamics value at t=" << t;
      throw IntegrationError(os.str(), t);
    }
  }
}

template <class State, class F>
State eval_field(F& field, double t, const State& z) {
  State k = field(t, z);
  check_finite(k, t);
  return k;
}

}  // namespace detail

// Explicit Euler: z + s f(z, t).
template <class State, class F>
State euler_step(F&& field, const State& z, double t, double s, State* slope = nullptr) {
  State k = detail::eval_field(field, t, z);
  std::array<double, 1> c{1.0};
  std::array<const State*, 1> ks{&k};
  if (slope) *slope = k;
  return StateOps<State>::combine(z, s, c, ks);
}

// Classical fourth-order Runge-Kutta step.
template <class State, class F>
State rk4_step(F&& field, const State& z, double t, double s, State* slope = nullptr) {
  using Ops = StateOps<State>;
  const std::array<double, 1> one{1.0};
  State f1 = detail::eval_field(field, t, z);
  std::array<const State*, 1> k1{&f1};
  State f2 = detail::eval_field(field, t + s / 2.0, Ops::combine(z, s / 2.0, one, k1));
  std::array<const State*, 1> k2{&f2};
  State f3 = detail::eval_field(field, t + s / 2.0, Ops::combine(z, s / 2.0, one, k2));
  std::array<const State*, 1> k3{&f3};
  State f4 = detail::eval_field(field, t + s, Ops::combine(z, s, one, k3));
  const std::array<double, 4> w{1.0 / 6.0, 2.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0};
  std::array<const State*, 4> ks{&f1, &f2, &f3, &f4};
  if (slope) *slope = f1;
  return Ops::combine(z, s, w, ks);
}

// Grid of a fixed-step solve from t0 to t1: every breakpoint strictly inside
// the interval becomes a grid point and each segment advances in full steps
// of `step` from its start, ending with one shorter step. Remainders below
// 1e-9 step are merged, so the grid varies continuously with t0 and t1.
std::vector<double> fixed_grid(double t0, double t1, double step,
                               std::span<const double> breakpoints = {});

namespace detail {

// Dormand-Prince 5(4) tableau.
struct Dopri {
  static constexpr std::array<double, 7> c{0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
  static constexpr std::array<std::array<double, 6>, 7> a{{
      {0, 0, 0, 0, 0, 0},
      {1.0 / 5, 0, 0, 0, 0, 0},
      {3.0 / 40, 9.0 / 40, 0, 0, 0, 0},
      {44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0},
      {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0, 0},
      {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656, 0},
      {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
  }};
  // Fifth-order minus embedded fourth-order weights.
  static constexpr std::array<double, 7> e{71.0 / 57600,     0.0,         -71.0 / 16695,
                                           71.0 / 1920,      -17253.0 / 339200, 22.0 / 525,
                                           -1.0 / 40};
};

inline double scaled_rms(std::span<const double> v, std::span<const double> y0,
                         std::span<const double> y1, double rtol, double atol) {
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    acc += (v[i] / sc) * (v[i] / sc);
  }
  return std::sqrt(acc / static_cast<double>(std::max<std::size_t>(v.size(), 1)));
}

// Initial step from the error norms of the state and of f at t0.
template <class State, class F>
double initial_step(F& field, const State& z0, const State& f0, double t0, double dir,
                    double hmax, const SolverConfig& cfg) {
  using Ops = StateOps<State>;
  auto y = Ops::values(z0);
  auto f = Ops::values(f0);
  double dnf = 0.0, dny = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double sk = cfg.atol + cfg.rtol * std::abs(y[i]);
    dnf += (f[i] / sk) * (f[i] / sk);
    dny += (y[i] / sk) * (y[i] / sk);
  }
  const double n = static_cast<double>(std::max<std::size_t>(y.size(), 1));
  dnf = std::sqrt(dnf / n);
  dny = std::sqrt(dny / n);
  double h = (dnf <= 1e-5 || dny <= 1e-5) ? 1e-6 : 0.01 * dny / dnf;
  h = std::min(h, hmax);
  const std::array<double, 1> one{1.0};
  std::array<const State*, 1> k{&f0};
  State y1 = Ops::combine(z0, dir * h, one, k);
  State f1 = eval_field(field, t0 + dir * h, y1);
  auto fv1 = Ops::values(f1);
  double der2 = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double sk = cfg.atol + cfg.rtol * std::abs(y[i]);
    der2 += ((fv1[i] - f[i]) / sk) * ((fv1[i] - f[i]) / sk);
  }
  der2 = std::sqrt(der2 / n) / h;
  const double der12 = std::max(std::abs(der2), dnf);
  const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 1.0 / 5.0);
  return std::min({100.0 * h, h1, hmax});
}

template <class State, class F>
Trajectory<State> integrate_dopri5(F& field, const State& z0, double t0, double t1,
                                   const SolverConfig& cfg, std::vector<double> stops) {
  using Ops = StateOps<State>;
  constexpr double kSafe = 0.9, kBeta = 0.04, kFacMin = 0.2, kFacMax = 10.0;
  const double expo1 = 0.2 - kBeta * 0.75;
  const double dir = t1 > t0 ? 1.0 : -1.0;

  Trajectory<State> traj;
  traj.times.push_back(t0);
  traj.states.push_back(z0);

  State y = z0;
  State k1 = eval_field(field, t0, y);
  double t = t0;
  double h = initial_step(field, y, k1, t0, dir, std::abs(t1 - t0), cfg);
  double facold = 1e-4;
  bool last_rejected = false;
  std::size_t stop_idx = 0;
  std::size_t steps = 0;

  while (dir * (t1 - t) > 0.0) {
    if (++steps > cfg.max_steps) {
      std::ostringstream os;
      os << "max_steps (" << cfg.max_steps << ") exceeded at t=" << t;
      throw IntegrationError(os.str(), t);
    }
    while (stop_idx < stops.size() && dir * (stops[stop_idx] - t) <= 0.0) ++stop_idx;
    const double target = stop_idx < stops.size() ? stops[stop_idx] : t1;
    bool lands = false;
    if (h >= std::abs(target - t)) {
      h = std::abs(target - t);
      lands = true;
    }
    if (h <= 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) {
      std::ostringstream os;
      os << "step size underflow at t=" << t << " (problem may be stiff)";
      throw StiffnessError(os.str(), t);
    }
    const double hs = dir * h;

    std::array<State, 7> k;
    k[0] = k1;
    for (std::size_t s = 1; s < 6; ++s) {
      std::array<const State*, 6> ks{};
      for (std::size_t j = 0; j < s; ++j) ks[j] = &k[j];
      State ys = Ops::combine(y, hs, std::span<const double>(Dopri::a[s].data(), s),
                              std::span<const State* const>(ks.data(), s));
      k[s] = eval_field(field, t + Dopri::c[s] * hs, ys);
    }
    std::array<const State*, 6> ks6{&k[0], &k[1], &k[2], &k[3], &k[4], &k[5]};
    State y_new = Ops::combine(y, hs, Dopri::a[6], ks6);
    const double t_new = lands ? target : t + hs;
    k[6] = eval_field(field, t_new, y_new);

    auto yv = Ops::values(y);
    auto ynv = Ops::values(y_new);
    std::vector<double> errv(yv.size(), 0.0);
    for (std::size_t s = 0; s < 7; ++s) {
      if (Dopri::e[s] == 0.0) continue;
      auto kv = Ops::values(k[s]);
      for (std::size_t i = 0; i < errv.size(); ++i) errv[i] += hs * Dopri::e[s] * kv[i];
    }
    const double err = scaled_rms(errv, yv, ynv, cfg.rtol, cfg.atol);

    const double fac11 = std::pow(std::max(err, 1e-300), expo1);
    if (err <= 1.0) {
      double fac = fac11 / std::pow(facold, kBeta);
      fac = std::clamp(fac / kSafe, 1.0 / kFacMax, 1.0 / kFacMin);
      double h_new = h / fac;
      if (last_rejected) h_new = std::min(h_new, h);
      facold = std::max(err, 1e-4);
      traj.slopes.push_back(k1);
      t = t_new;
      y = y_new;
      k1 = k[6];
      traj.times.push_back(t);
      traj.states.push_back(y);
      last_rejected = false;
      h = h_new;
    } else {
      h = h / std::min(1.0 / kFacMin, fac11 / kSafe);
      last_rejected = true;
    }
  }
  return traj;
}

}  // namespace detail

// Solves dz/dt = field(t, z) from t0 to t1 (t1 < t0 integrates backward).
// Fixed-step methods place a grid point on every breakpoint; dopri5 never
// steps across one.
template <class State, class F>
Trajectory<State> integrate(F&& field, const State& z0, double t0, double t1,
                            const SolverConfig& cfg, std::span<const double> breakpoints = {}) {
  cfg.validate();
  if (t0 == t1) throw IntegrationError("integration interval is empty (t0 == t1)", t0);
  if (!std::isfinite(t0) || !std::isfinite(t1)) {
    throw IntegrationError("integration bounds must be finite", t0);
  }

  if (cfg.method == Method::kDopri5) {
    std::vector<double> stops;
    const double lo = std::min(t0, t1), hi = std::max(t0, t1);
    for (double b : breakpoints) {
      if (b > lo && b < hi) stops.push_back(b);
    }
    std::sort(stops.begin(), stops.end());
    if (t1 < t0) std::reverse(stops.begin(), stops.end());
    return detail::integrate_dopri5(field, z0, t0, t1, cfg, std::move(stops));
  }

  const std::vector<double> grid = fixed_grid(t0, t1, cfg.step, breakpoints);
  if (grid.size() - 1 > cfg.max_steps) {
    std::ostringstream os;
    os << "max_steps (" << cfg.max_steps << ") exceeded at t="
       << grid[std::min(cfg.max_steps, grid.size() - 1)];
    throw IntegrationError(os.str(), grid[std::min(cfg.max_steps, grid.size() - 1)]);
  }
  Trajectory<State> traj;
  traj.times = grid;
  traj.states.reserve(grid.size());
  traj.slopes.reserve(grid.size() - 1);
  traj.states.push_back(z0);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double s = grid[i + 1] - grid[i];
    State slope;
    State next = cfg.method == Method::kEuler
                     ? euler_step(field, traj.states.back(), grid[i], s, &slope)
                     : rk4_step(field, traj.states.back(), grid[i], s, &slope);
    traj.slopes.push_back(std::move(slope));
    traj.states.push_back(std::move(next));
  }
  return traj;
}

}  // namespace exitcde::solve
