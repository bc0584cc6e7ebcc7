#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "exitcde/interp/time_series.hpp"
#include "exitcde/model/exit_model.hpp"

namespace exitcde::train {

double accuracy(const std::vector<std::vector<double>>& logits, std::span<const std::size_t> labels);

// Mann-Whitney AUROC with average ranks for ties. NaN when either class is
// absent.
double auroc(std::span<const double> scores, std::span<const std::size_t> labels);

struct EvalResult {
  double loss = 0.0;      // mean task loss
  double accuracy = 0.0;  // classification only
  double auroc = 0.0;     // binary classification only, NaN otherwise
  double mse = 0.0;       // forecasting only
  std::vector<std::vector<double>> predictions;

  // Accuracy for classification, MSE for forecasting.
  double metric(model::Task task) const { return task == model::Task::kClassification ? accuracy : mse; }
};

EvalResult evaluate(const model::ExitModel& model, std::span<const interp::TimeSeriesSample> samples,
                    std::size_t threads = 1);

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
// by index is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace exitcde::train
