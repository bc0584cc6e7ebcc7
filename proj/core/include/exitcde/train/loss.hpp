#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "exitcde/diff/tape.hpp"
#include "exitcde/interp/time_series.hpp"
#include "exitcde/model/architecture.hpp"

namespace exitcde::train {

// Softmax cross-entropy of one logit vector; throws Error for an
// out-of-range class.
double cross_entropy(std::span<const double> logits, std::size_t target);
double mean_squared_error(std::span<const double> prediction, std::span<const double> target);

// Cross-entropy against the sample's label or MSE against its forecasting
// target.
double task_loss(std::span<const double> prediction, const interp::TimeSeriesSample& sample,
                 model::Task task);
diff::Var task_loss(diff::Var prediction, const interp::TimeSeriesSample& sample, model::Task task);

// Mean over solver steps of the squared norm of the recorded dynamics.
double kinetic_penalty(const std::vector<std::vector<double>>& slopes);
diff::Var kinetic_penalty(std::span<const diff::Var> slopes);

// a^T (G f) with G row-major a.size() x f.size().
double tau_end_gradient(std::span<const double> a_z, std::span<const double> g_out,
                        std::span<const double> f_out);
// -a^T (G f): the lower limit enters the integral with the opposite sign, so
// tau_start <- tau_start - lr * value descends the loss.
double tau_start_gradient(std::span<const double> a_z, std::span<const double> g_out,
                          std::span<const double> f_out);

}  // namespace exitcde::train
