#include "exitcde/solve/adjoint.hpp"

#include <algorithm>

namespace exitcde::solve {

namespace {

using Vec = std::vector<double>;

Vec augmented_dynamics(const VjpDynamics& dynamics, std::size_t n, std::size_t p, double t,
                       const Vec& w) {
  std::span<const double> z(w.data(), n);
  std::span<const double> a(w.data() + n, n);
  VjpEval e = dynamics(t, z, a);
  if (e.f.size() != n || e.a_dz.size() != n || e.a_dtheta.size() != p) {
    throw ShapeError("adjoint: dynamics returned mismatched vector sizes");
  }
  Vec out(2 * n + p);
  std::copy(e.f.begin(), e.f.end(), out.begin());
  for (std::size_t i = 0; i < n; ++i) out[n + i] = -e.a_dz[i];
  for (std::size_t i = 0; i < p; ++i) out[2 * n + i] = -e.a_dtheta[i];
  return out;
}

Vec solve_segment(const VjpDynamics& dynamics, std::size_t n, std::size_t p, const Vec& w0,
                  double from, double to, const SolverConfig& cfg,
                  std::span<const double> breakpoints) {
  auto field = [&](double t, const Vec& w) { return augmented_dynamics(dynamics, n, p, t, w); };
  return integrate(field, w0, from, to, cfg, breakpoints).final_state();
}

}  // namespace

AdjointResult integrate_adjoint(const VjpDynamics& dynamics, std::size_t n_params,
                                std::span<const double> z_end, std::span<const double> a_end,
                                double t_end, double t_start, const SolverConfig& cfg,
                                std::span<const double> breakpoints, AdjointPolicy policy,
                                const Trajectory<std::vector<double>>* stored) {
  const std::size_t n = z_end.size();
  if (a_end.size() != n) throw ShapeError("adjoint: seed size does not match state size");
  Vec w(2 * n + n_params, 0.0);
  std::copy(z_end.begin(), z_end.end(), w.begin());
  std::copy(a_end.begin(), a_end.end(), w.begin() + static_cast<std::ptrdiff_t>(n));

  if (policy == AdjointPolicy::kRecompute) {
    w = solve_segment(dynamics, n, n_params, w, t_end, t_start, cfg, breakpoints);
  } else {
    if (!stored || stored->times.size() < 2) {
      throw Error("adjoint: stored-trajectory policy requires a forward trajectory");
    }
    const auto& times = stored->times;
    const bool forward_increasing = times.back() > times.front();
    // Walk stored grid points from t_end down to t_start.
    std::vector<std::size_t> order(times.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (!forward_increasing) std::reverse(order.begin(), order.end());
    std::vector<std::size_t> path;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const double t = times[*it];
      const double lo = std::min(t_start, t_end), hi = std::max(t_start, t_end);
      if (t >= lo && t <= hi) path.push_back(*it);
    }
    if (path.empty() || times[path.front()] != t_end || times[path.back()] != t_start) {
      throw Error("adjoint: stored trajectory does not span the requested interval");
    }
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
      const Vec& zs = stored->states[path[k]];
      std::copy(zs.begin(), zs.end(), w.begin());
      w = solve_segment(dynamics, n, n_params, w, times[path[k]], times[path[k + 1]], cfg,
                        breakpoints);
    }
    const Vec& z0 = stored->states[path.back()];
    std::copy(z0.begin(), z0.end(), w.begin());
  }

  AdjointResult r;
  r.z_start.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(n));
  r.a_start.assign(w.begin() + static_cast<std::ptrdiff_t>(n),
                   w.begin() + static_cast<std::ptrdiff_t>(2 * n));
  r.grad_params.assign(w.begin() + static_cast<std::ptrdiff_t>(2 * n), w.end());
  return r;
}

}  // namespace exitcde::solve
