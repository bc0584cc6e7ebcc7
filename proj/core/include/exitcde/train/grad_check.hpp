#pragma once

#include <string>
#include <vector>

#include "exitcde/interp/time_series.hpp"
#include "exitcde/model/exit_model.hpp"

namespace exitcde::train {

struct GradCheckGroup {
  std::string name;  // field name, "tau_start" or "tau_end"
  double direct_error = 0.0;   // analytic direct vs finite difference
  double adjoint_error = 0.0;  // analytic adjoint vs finite difference
  double mode_gap = 0.0;       // adjoint vs direct
  double scale = 0.0;          // max |finite difference|
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;

  double max_error() const;
  double max_mode_gap() const;
  bool passed(double tol) const { return max_error() <= tol && max_mode_gap() <= tol; }
};

// Compares analytic gradients from both modes against central differences of
// the loss for every parameter group and both bounds. Errors are relative to
// the group's largest finite-difference entry, floored at `floor`. A bound
// that sits on a constraint is probed with a one-sided stencil.
GradCheckReport grad_check(const model::ExitModel& model, const interp::TimeSeriesSample& sample,
                           double eps = 1e-5, double c_kr = 0.0, double floor = 1e-6);

}  // namespace exitcde::train
