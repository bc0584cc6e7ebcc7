#pragma once

#include <string>
#include <vector>

#include "exitcde/field/params.hpp"
#include "exitcde/interp/time_series.hpp"
#include "exitcde/model/exit_model.hpp"
#include "exitcde/solve/adjoint.hpp"

namespace exitcde::train {

enum class GradientMode {
  kDirect,   // reverse sweep through every solver operation
  kAdjoint,  // backward adjoint solves, constant tape size per evaluation
};

const char* gradient_mode_name(GradientMode m);
GradientMode parse_gradient_mode(const std::string& name);

struct SampleLoss {
  double total = 0.0;  // task + c_kr * kinetic
  double task = 0.0;
  double kinetic = 0.0;
  std::vector<double> prediction;
};

// Loss of one sample under the model's current parameters and bounds.
SampleLoss sample_loss(const model::ExitModel& model, const interp::TimeSeriesSample& sample,
                       double c_kr);

struct SampleGradient {
  SampleLoss loss;
  field::ParameterSet grads;  // d total / d theta
  // Task-loss derivatives with respect to the bounds.
  double d_tau_start = 0.0;
  double d_tau_end = 0.0;
};

SampleGradient sample_gradient(const model::ExitModel& model, const interp::TimeSeriesSample& sample,
                               double c_kr, GradientMode mode,
                               solve::AdjointPolicy policy = solve::AdjointPolicy::kRecompute);

}  // namespace exitcde::train
