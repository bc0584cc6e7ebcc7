#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "exitcde/solve/solver.hpp"

namespace exitcde::solve {

// Field value and vector-Jacobian products at one point:
// f(t, z), a^T df/dz and a^T df/dtheta.
struct VjpEval {
  std::vector<double> f;
  std::vector<double> a_dz;
  std::vector<double> a_dtheta;
};

using VjpDynamics =
    std::function<VjpEval(double t, std::span<const double> z, std::span<const double> a)>;

enum class AdjointPolicy {
  // Re-integrate z backward alongside the adjoint; constant memory.
  kRecompute,
  // Reset z to stored forward states at every stored grid point.
  kStoredTrajectory,
};

struct AdjointResult {
  std::vector<double> z_start;      // z at t_start (recomputed or stored)
  std::vector<double> a_start;      // dL/dz(t_start)
  std::vector<double> grad_params;  // dL/dtheta contributed over [t_start, t_end]
};

// Solves the augmented system d/dt [z, a, g] = [f, -a^T df/dz, -a^T df/dtheta]
// from t_end back to t_start with a(t_end) = a_end and g(t_end) = 0.
// `stored` is required for kStoredTrajectory and must span [t_start, t_end].
AdjointResult integrate_adjoint(const VjpDynamics& dynamics, std::size_t n_params,
                                std::span<const double> z_end, std::span<const double> a_end,
                                double t_end, double t_start, const SolverConfig& cfg,
                                std::span<const double> breakpoints = {},
                                AdjointPolicy policy = AdjointPolicy::kRecompute,
                                const Trajectory<std::vector<double>>* stored = nullptr);

}  // namespace exitcde::solve
