#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "exitcde/data/dataset.hpp"
#include "exitcde/model/architecture.hpp"
#include "exitcde/model/exit_model.hpp"
#include "exitcde/solve/solver.hpp"
#include "exitcde/train/metrics.hpp"
#include "exitcde/train/trainer.hpp"

namespace exitcde::cli {

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" or "csv"
  data::SyntheticKind kind = data::SyntheticKind::kTwoFreqSine;
  std::string path;  // csv source
  std::size_t samples = 300;
  std::size_t length = 50;
  double noise = 0.1;
  std::size_t horizon = 0;  // forecasting only
  std::size_t classes = 0;  // csv classification; 0 infers
  double terminal = 0.0;    // 0 keeps each sample's row count minus one
  double drop_ratio = 0.0;
  bool drop_rows = false;
  bool normalize = true;
  std::vector<double> split{4.0, 1.0, 1.0};  // relative train, val, test weights
};

struct RunConfig {
  DataConfig data;
  model::Architecture model;
  solve::SolverConfig solver;
  train::TrainConfig train;
  model::Mode mode = model::Mode::kExit;
  std::uint64_t seed = 0;  // drives generation, dropping, splitting, init and batching
  std::string out = "out";

  // Field-level ConfigError on the first invalid entry.
  void validate() const;
};

// INI sections [run], [data], [model], [solver], [train]. Unknown sections
// and keys are rejected.
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::string& path);
// Every effective value; parse_run_config reads it back unchanged.
void write_run_config(const RunConfig& cfg, std::ostream& out);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<model::Mode> mode;
  std::optional<double> drop_ratio;
  std::optional<std::string> out;
  std::optional<std::size_t> thread_cap;
};

void apply_overrides(RunConfig& cfg, const Overrides& o);

struct PreparedData {
  data::Split split;  // normalized with train statistics
  double terminal = 0.0;
};

// Deterministic in the config: load or generate, rescale, drop, split,
// normalize. Throws ConfigError when the data disagree with the model section.
PreparedData prepare_data(const RunConfig& cfg);

model::ExitModel build_model(const RunConfig& cfg, double terminal);

struct TrainOutcome {
  train::TrainReport report;
  train::EvalResult test;
};

TrainOutcome train_model(model::ExitModel& model, const RunConfig& cfg, const PreparedData& data,
                         std::ostream* progress = nullptr);

struct AblationRow {
  model::Mode mode = model::Mode::kFixedExit;
  double best_val_loss = 0.0;
  double test_metric = 0.0;
  model::IntegrationBounds bounds;
};

// Fixed-EXIT, Terminal-EXIT and EXIT trained from the same initialization.
std::vector<AblationRow> ablate(const RunConfig& cfg, const PreparedData& data);

// One-line summary: accuracy (and AUROC for two classes) or MSE.
std::string metric_line(const train::EvalResult& r, model::Task task);

enum class Command { kTrain, kEval, kPredict, kGradCheck, kAblate };

const char* command_name(Command c);
Command parse_command(const std::string& name);

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

// Runs a validated config; never throws. Artifacts go to cfg.out.
int run(Command command, const RunConfig& cfg, std::ostream& out, std::ostream& err,
        bool verbose = false);

}  // namespace exitcde::cli
