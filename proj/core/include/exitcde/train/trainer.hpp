#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "exitcde/field/params.hpp"
#include "exitcde/interp/time_series.hpp"
#include "exitcde/model/architecture.hpp"
#include "exitcde/model/exit_model.hpp"
#include "exitcde/solve/adjoint.hpp"
#include "exitcde/train/gradients.hpp"

namespace exitcde::train {

enum class OptimizerKind { kSgd, kAdam };

const char* optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& name);

struct TrainConfig {
  double lr = 1e-2;      // parameter learning rate
  double lr_tau = 1e-1;  // bound learning rate
  double c_kr = 0.0;     // kinetic coefficient
  double c_wd = 0.0;     // decoupled weight decay on phi_z, phi_Y and output
  std::size_t max_epochs = 200;
  std::size_t batch_size = 32;
  std::size_t patience = 50;  // epochs without train-loss improvement
  GradientMode gradient_mode = GradientMode::kDirect;
  solve::AdjointPolicy adjoint_policy = solve::AdjointPolicy::kRecompute;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  double time_limit_s = 0.0;  // 0 disables the wall-clock budget

  void validate() const;
};

model::KeyValues train_entries(const TrainConfig& cfg);
TrainConfig train_from(const model::KeyValues& kv, const std::string& section = "train");

// True for parameters that receive weight decay.
bool weight_decayed(const std::string& name);

// Stateful first-order optimizer over a ParameterSet.
class ParameterOptimizer {
 public:
  explicit ParameterOptimizer(const TrainConfig& cfg);
  void step(field::ParameterSet& params, const field::ParameterSet& grads);

 private:
  OptimizerKind kind_;
  double lr_, wd_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;  // accuracy or MSE
  double tau_start = 0.0;
  double tau_end = 0.0;
  double wall_s = 0.0;  // not serialized
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool diverged = false;
  std::string stop_reason;

  // One JSON object per epoch: epoch, train_loss, val_loss, val_metric,
  // tau_start, tau_end.
  void write(std::ostream& out) const;
  void write(const std::string& path) const;
};

// Batch-mean gradient, evaluated on up to `threads` workers and reduced in
// sample order so the result does not depend on the worker count.
struct BatchGradient {
  double loss = 0.0;
  field::ParameterSet grads;
  double d_tau_start = 0.0;
  double d_tau_end = 0.0;
};

BatchGradient batch_gradient(const model::ExitModel& model,
                             std::span<const interp::TimeSeriesSample* const> batch,
                             const TrainConfig& cfg);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains parameters and bounds; on return the model holds the snapshot with
// the lowest validation loss (training loss when `val` is empty).
TrainReport fit(model::ExitModel& model, std::span<const interp::TimeSeriesSample> train,
                std::span<const interp::TimeSeriesSample> val, const TrainConfig& cfg,
                const EpochCallback& on_epoch = {});

}  // namespace exitcde::train
