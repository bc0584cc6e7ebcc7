#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exitcde/diff/ndarray.hpp"
#include "exitcde/field/params.hpp"
#include "exitcde/interp/spline.hpp"
#include "exitcde/interp/time_series.hpp"
#include "exitcde/model/architecture.hpp"
#include "exitcde/solve/solver.hpp"

namespace exitcde::model {

struct IntegrationBounds {
  double tau_start = 0.0;
  double tau_end = 1.0;

  friend bool operator==(const IntegrationBounds&, const IntegrationBounds&) = default;
};

// Minimum separation between the bounds: 1e-3 T.
double bound_gap(double terminal);

// Enforces 0 <= tau_start <= T - gap and tau_end >= tau_start + gap, then
// applies the mode's frozen values.
IntegrationBounds clamp_bounds(IntegrationBounds b, double terminal, Mode mode);

struct Prediction {
  diff::NdArray output;
  std::vector<std::string> warnings;
};

// Encoder NCDE, decoder NODE and main CDE with trainable integration bounds.
// Immutable during a forward pass; the trainer mutates parameters and bounds
// between passes.
class ExitModel {
 public:
  ExitModel(Architecture arch, solve::SolverConfig solver, double terminal,
            Mode mode = Mode::kExit);

  // Draws every field's parameters from `seed` and resets bounds to (0, T).
  void initialize(std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  const FieldSpecs& fields() const { return fields_; }
  const solve::SolverConfig& solver() const { return solver_; }
  void set_solver(const solve::SolverConfig& s) { solver_ = s; }

  field::ParameterSet& params() { return params_; }
  const field::ParameterSet& params() const { return params_; }

  const IntegrationBounds& bounds() const { return bounds_; }
  // Stores clamp_bounds(b); returns the stored value.
  const IntegrationBounds& set_bounds(IntegrationBounds b);

  double terminal() const { return terminal_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode m);
  std::uint64_t seed() const { return seed_; }

  interp::SplineOptions spline_options() const;
  interp::SplinePath path_for(const interp::TimeSeriesSample& sample) const;
  // The last `readouts` knots of the path.
  std::vector<double> readout_times(const interp::SplinePath& path) const;

  std::vector<std::vector<double>> encode(const interp::SplinePath& path,
                                          const std::vector<double>& readout_times) const;
  // (z0, Y0) at the current tau_start.
  std::pair<std::vector<double>, std::vector<double>> init_latent_states(
      const std::vector<std::vector<double>>& readouts, const interp::SplinePath& path,
      std::vector<std::string>* warnings = nullptr) const;
  std::vector<double> combined_dynamics(std::span<const double> state, double t) const;

  Prediction forward(const interp::TimeSeriesSample& sample) const;

 private:
  Architecture arch_;
  FieldSpecs fields_;
  solve::SolverConfig solver_;
  field::ParameterSet params_;
  IntegrationBounds bounds_;
  double terminal_;
  Mode mode_;
  std::uint64_t seed_ = 0;
};

// z(tau_end) via the separated route: decode Y alone, then drive z with the
// recorded f values at every stage. Fixed-step methods only.
std::vector<double> separated_latent(const ExitModel& model, const interp::TimeSeriesSample& sample);

// Text checkpoint; doubles are written in hexadecimal so the round trip is
// exact.
void save_checkpoint(const ExitModel& model, const std::string& path);
ExitModel load_checkpoint(const std::string& path);

}  // namespace exitcde::model
