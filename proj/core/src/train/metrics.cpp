#include "exitcde/train/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include "exitcde/errors.hpp"
#include "exitcde/train/loss.hpp"

namespace exitcde::train {

double accuracy(const std::vector<std::vector<double>>& logits, std::span<const std::size_t> labels) {
  if (logits.size() != labels.size()) throw ShapeError("accuracy: logits and labels differ in count");
  if (logits.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto arg = std::max_element(logits[i].begin(), logits[i].end()) - logits[i].begin();
    if (static_cast<std::size_t>(arg) == labels[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(logits.size());
}

double auroc(std::span<const double> scores, std::span<const std::size_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auroc: scores and labels differ in count");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      pos += 1.0;
      rank_sum += rank[i];
    } else {
      neg += 1.0;
    }
  }
  if (pos == 0.0 || neg == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t w) {
    for (std::size_t i = w; i < n; i += workers) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

EvalResult evaluate(const model::ExitModel& model, std::span<const interp::TimeSeriesSample> samples,
                    std::size_t threads) {
  EvalResult r;
  if (samples.empty()) return r;
  const auto task = model.architecture().task;
  r.predictions.resize(samples.size());
  std::vector<double> losses(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    r.predictions[i] = model.forward(samples[i]).output.values();
    losses[i] = task_loss(r.predictions[i], samples[i], task);
  });
  const double n = static_cast<double>(samples.size());
  for (double l : losses) r.loss += l;
  r.loss /= n;
  r.auroc = std::numeric_limits<double>::quiet_NaN();
  if (task == model::Task::kClassification) {
    std::vector<std::size_t> labels;
    for (const auto& s : samples) labels.push_back(*s.label);
    r.accuracy = accuracy(r.predictions, labels);
    if (model.architecture().output_dim == 2) {
      std::vector<double> scores;
      for (const auto& p : r.predictions) scores.push_back(p[1] - p[0]);
      r.auroc = auroc(scores, labels);
    }
  } else {
    r.mse = r.loss;
  }
  return r;
}

}  // namespace exitcde::train
