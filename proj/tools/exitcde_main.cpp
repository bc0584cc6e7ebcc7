#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "exitcde/cli/run.hpp"
#include "exitcde/errors.hpp"

using namespace exitcde;

int main(int argc, char** argv) {
  CLI::App app{"Train and evaluate neural CDE models with learned integration bounds."};
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<double> drop_ratio;
  std::optional<std::string> out;
  bool verbose = false;

  app.add_option("command", command, "train, eval, predict, gradcheck or ablate")
      ->required()
      ->check(CLI::IsMember({"train", "eval", "predict", "gradcheck", "ablate"}));
  app.add_option("--config", config_path, "INI run configuration")->required();
  app.add_option("--seed", seed, "Seed for data, initialization and batching");
  app.add_option("--mode", mode, "Bound mode")->check(CLI::IsMember({"exit", "terminal_exit", "fixed_exit"}));
  app.add_option("--drop-ratio", drop_ratio, "Fraction of observations to drop")->check(CLI::Range(0.0, 1.0));
  app.add_option("--out", out, "Artifact directory");
  app.add_flag("-v,--verbose", verbose, "Per-epoch progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitConfig;
  }

  cli::RunConfig cfg;
  try {
    cfg = cli::load_run_config(config_path);
    cli::Overrides o;
    o.seed = seed;
    if (mode) o.mode = model::parse_mode(*mode);
    o.drop_ratio = drop_ratio;
    o.out = out;
    if (const char* env = std::getenv("EXITCDE_THREADS")) {
      o.thread_cap = model::parse_size(env, "EXITCDE_THREADS");
    }
    cli::apply_overrides(cfg, o);
    cfg.validate();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cli::kExitConfig;
  }
  return cli::run(cli::parse_command(command), cfg, std::cout, std::cerr, verbose);
}
