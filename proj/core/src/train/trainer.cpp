#include "exitcde/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "exitcde/errors.hpp"
#include "exitcde/train/metrics.hpp"

namespace exitcde::train {

const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(lr_tau >= 0.0)) throw ConfigError("train.lr_tau must be non-negative");
  if (!(c_kr >= 0.0)) throw ConfigError("train.c_kr must be non-negative");
  if (!(c_wd >= 0.0)) throw ConfigError("train.c_wd must be non-negative");
  if (max_epochs == 0) throw ConfigError("train.max_epochs must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (patience == 0) throw ConfigError("train.patience must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("train.adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("train.adam_beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be positive");
  if (threads == 0) throw ConfigError("train.threads must be positive");
  if (!(time_limit_s >= 0.0)) throw ConfigError("train.time_limit_s must be non-negative");
}

model::KeyValues train_entries(const TrainConfig& c) {
  using model::format_double;
  return {
      {"lr", format_double(c.lr)},
      {"lr_tau", format_double(c.lr_tau)},
      {"c_kr", format_double(c.c_kr)},
      {"c_wd", format_double(c.c_wd)},
      {"max_epochs", std::to_string(c.max_epochs)},
      {"batch_size", std::to_string(c.batch_size)},
      {"patience", std::to_string(c.patience)},
      {"gradient_mode", gradient_mode_name(c.gradient_mode)},
      {"adjoint_policy",
       c.adjoint_policy == solve::AdjointPolicy::kRecompute ? "recompute" : "stored"},
      {"optimizer", optimizer_name(c.optimizer)},
      {"adam_beta1", format_double(c.adam_beta1)},
      {"adam_beta2", format_double(c.adam_beta2)},
      {"adam_eps", format_double(c.adam_eps)},
      {"seed", std::to_string(c.seed)},
      {"threads", std::to_string(c.threads)},
      {"time_limit_s", format_double(c.time_limit_s)},
  };
}

TrainConfig train_from(const model::KeyValues& kv, const std::string& section) {
  using model::parse_double;
  using model::parse_size;
  TrainConfig c;
  for (const auto& [key, v] : kv) {
    const std::string k = section + "." + key;
    try {
      if (key == "lr") c.lr = parse_double(v, k);
      else if (key == "lr_tau") c.lr_tau = parse_double(v, k);
      else if (key == "c_kr") c.c_kr = parse_double(v, k);
      else if (key == "c_wd") c.c_wd = parse_double(v, k);
      else if (key == "max_epochs") c.max_epochs = parse_size(v, k);
      else if (key == "batch_size") c.batch_size = parse_size(v, k);
      else if (key == "patience") c.patience = parse_size(v, k);
      else if (key == "gradient_mode") c.gradient_mode = parse_gradient_mode(v);
      else if (key == "adjoint_policy") {
        if (v == "recompute") c.adjoint_policy = solve::AdjointPolicy::kRecompute;
        else if (v == "stored") c.adjoint_policy = solve::AdjointPolicy::kStoredTrajectory;
        else throw ConfigError("'" + v + "' is not recompute or stored");
      } else if (key == "optimizer") c.optimizer = parse_optimizer(v);
      else if (key == "adam_beta1") c.adam_beta1 = parse_double(v, k);
      else if (key == "adam_beta2") c.adam_beta2 = parse_double(v, k);
      else if (key == "adam_eps") c.adam_eps = parse_double(v, k);
      else if (key == "seed") c.seed = parse_size(v, k);
      else if (key == "threads") c.threads = parse_size(v, k);
      else if (key == "time_limit_s") c.time_limit_s = parse_double(v, k);
      else throw ConfigError("unknown key");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      if (msg.rfind(k, 0) == 0) throw;
      throw ConfigError(k + ": " + msg);
    }
  }
  return c;
}

bool weight_decayed(const std::string& name) {
  return name.rfind("phi_z.", 0) == 0 || name.rfind("phi_Y.", 0) == 0 || name.rfind("output.", 0) == 0;
}

ParameterOptimizer::ParameterOptimizer(const TrainConfig& cfg)
    : kind_(cfg.optimizer),
      lr_(cfg.lr),
      wd_(cfg.c_wd),
      beta1_(cfg.adam_beta1),
      beta2_(cfg.adam_beta2),
      eps_(cfg.adam_eps) {}

void ParameterOptimizer::step(field::ParameterSet& params, const field::ParameterSet& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : params.arrays()) {
    auto& w = p.values();
    const auto& g = grads.get(name).values();
    if (wd_ > 0.0 && weight_decayed(name)) {
      for (double& v : w) v -= lr_ * wd_ * v;
    }
    if (kind_ == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr_ * g[i];
      continue;
    }
    auto& m = m_[name];
    auto& v = v_[name];
    m.resize(w.size(), 0.0);
    v.resize(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

void TrainReport::write(std::ostream& out) const {
  for (const auto& e : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    j["val_metric"] = e.val_metric;
    j["tau_start"] = e.tau_start;
    j["tau_end"] = e.tau_end;
    out << j.dump() << "\n";
  }
}

void TrainReport::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write(out);
}

BatchGradient batch_gradient(const model::ExitModel& model,
                             std::span<const interp::TimeSeriesSample* const> batch,
                             const TrainConfig& cfg) {
  std::vector<SampleGradient> per(batch.size());
  parallel_for(batch.size(), cfg.threads, [&](std::size_t i) {
    per[i] = sample_gradient(model, *batch[i], cfg.c_kr, cfg.gradient_mode, cfg.adjoint_policy);
  });
  BatchGradient out;
  out.grads = model.params().zeros_like();
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : per) {
    out.loss += w * s.loss.total;
    out.d_tau_start += w * s.d_tau_start;
    out.d_tau_end += w * s.d_tau_end;
    for (auto& [name, g] : out.grads.arrays()) {
      auto& dst = g.values();
      const auto& src = s.grads.get(name).values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += w * src[i];
    }
  }
  return out;
}

namespace {

bool finite(const BatchGradient& g) {
  if (!std::isfinite(g.loss) || !std::isfinite(g.d_tau_start) || !std::isfinite(g.d_tau_end)) return false;
  for (const auto& [name, a] : g.grads.arrays()) {
    if (!a.all_finite()) return false;
  }
  return true;
}

struct Snapshot {
  field::ParameterSet params;
  model::IntegrationBounds bounds;
};

}  // namespace

TrainReport fit(model::ExitModel& model, std::span<const interp::TimeSeriesSample> train,
                std::span<const interp::TimeSeriesSample> val, const TrainConfig& cfg,
                const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty()) throw DataError("training set is empty");
  const auto start = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  TrainReport report;
  ParameterOptimizer opt(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  Snapshot best{model.params(), model.bounds()};
  double best_val = std::numeric_limits<double>::infinity();
  double best_train = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  const model::Mode mode = model.mode();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    bool diverged = false;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      std::vector<const interp::TimeSeriesSample*> batch;
      for (std::size_t i = b; i < e; ++i) batch.push_back(&train[order[i]]);
      BatchGradient g;
      try {
        g = batch_gradient(model, batch, cfg);
      } catch (const IntegrationError&) {
        diverged = true;
      }
      if (diverged || !finite(g)) {
        diverged = true;
        break;
      }
      epoch_loss += g.loss * static_cast<double>(batch.size());

      opt.step(model.params(), g.grads);
      model::IntegrationBounds nb = model.bounds();
      if (mode == model::Mode::kExit) nb.tau_start -= cfg.lr_tau * g.d_tau_start;
      if (mode != model::Mode::kFixedExit) nb.tau_end -= cfg.lr_tau * g.d_tau_end;
      model.set_bounds(nb);
    }
    if (diverged) {
      report.diverged = true;
      report.stop_reason = "non-finite loss or gradient in epoch " + std::to_string(epoch);
      break;
    }
    epoch_loss /= static_cast<double>(train.size());

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss;
    if (!val.empty()) {
      const auto ev = evaluate(model, val, cfg.threads);
      rec.val_loss = ev.loss;
      rec.val_metric = ev.metric(model.architecture().task);
    } else {
      rec.val_loss = epoch_loss;
      rec.val_metric = std::numeric_limits<double>::quiet_NaN();
    }
    rec.tau_start = model.bounds().tau_start;
    rec.tau_end = model.bounds().tau_end;
    rec.wall_s = elapsed();
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (std::isfinite(rec.val_loss) && rec.val_loss < best_val) {
      best_val = rec.val_loss;
      best = {model.params(), model.bounds()};
      report.best_epoch = epoch;
    }
    if (epoch_loss < best_train) {
      best_train = epoch_loss;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      report.stop_reason = "train loss did not improve for " + std::to_string(cfg.patience) + " epochs";
      break;
    }
    if (cfg.time_limit_s > 0.0 && rec.wall_s >= cfg.time_limit_s) {
      report.stop_reason = "time limit reached";
      break;
    }
  }
  if (report.stop_reason.empty()) report.stop_reason = "max_epochs reached";

  model.params() = best.params;
  model.set_bounds(best.bounds);
  report.best_val_loss = best_val;
  return report;
}

}  // namespace exitcde::train
