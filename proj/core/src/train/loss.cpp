#include "exitcde/train/loss.hpp"

#include <algorithm>
#include <cmath>

#include "exitcde/errors.hpp"

namespace exitcde::train {

double cross_entropy(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) {
    throw Error("class index " + std::to_string(target) + " is out of range for " +
                std::to_string(logits.size()) + " classes");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  return std::log(s) + m - logits[target];
}

double mean_squared_error(std::span<const double> prediction, std::span<const double> target) {
  if (prediction.size() != target.size() || prediction.empty()) {
    throw ShapeError("prediction has " + std::to_string(prediction.size()) +
                     " values but the target has " + std::to_string(target.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = prediction[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(prediction.size());
}

double task_loss(std::span<const double> prediction, const interp::TimeSeriesSample& sample,
                 model::Task task) {
  if (task == model::Task::kClassification) {
    if (!sample.label) throw DataError("classification sample has no label");
    return cross_entropy(prediction, *sample.label);
  }
  return mean_squared_error(prediction, sample.target);
}

diff::Var task_loss(diff::Var prediction, const interp::TimeSeriesSample& sample, model::Task task) {
  if (task == model::Task::kClassification) {
    if (!sample.label) throw DataError("classification sample has no label");
    return diff::softmax_cross_entropy(prediction, *sample.label);
  }
  if (prediction.value().size() != sample.target.size()) {
    throw ShapeError("prediction has " + std::to_string(prediction.value().size()) +
                     " values but the target has " + std::to_string(sample.target.size()));
  }
  diff::Tape* tape = prediction.tape();
  const auto target = tape->constant(diff::NdArray::vector(sample.target));
  return diff::scale(diff::sum_squares(diff::sub(prediction, target)),
                     1.0 / static_cast<double>(sample.target.size()));
}

double kinetic_penalty(const std::vector<std::vector<double>>& slopes) {
  if (slopes.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& s : slopes) {
    for (double v : s) acc += v * v;
  }
  return acc / static_cast<double>(slopes.size());
}

diff::Var kinetic_penalty(std::span<const diff::Var> slopes) {
  if (slopes.empty()) throw Error("kinetic penalty of an empty trajectory");
  std::vector<diff::Var> terms;
  terms.reserve(slopes.size());
  for (const auto& s : slopes) terms.push_back(diff::sum_squares(s));
  const std::vector<double> w(terms.size(), 1.0 / static_cast<double>(terms.size()));
  return diff::lincomb(terms, w);
}

double tau_end_gradient(std::span<const double> a_z, std::span<const double> g_out,
                        std::span<const double> f_out) {
  if (g_out.size() != a_z.size() * f_out.size()) {
    throw ShapeError("g output has " + std::to_string(g_out.size()) + " entries, expected " +
                     std::to_string(a_z.size()) + " x " + std::to_string(f_out.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a_z.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < f_out.size(); ++j) row += g_out[i * f_out.size() + j] * f_out[j];
    acc += a_z[i] * row;
  }
  return acc;
}

double tau_start_gradient(std::span<const double> a_z, std::span<const double> g_out,
                          std::span<const double> f_out) {
  return -tau_end_gradient(a_z, g_out, f_out);
}

}  // namespace exitcde::train
