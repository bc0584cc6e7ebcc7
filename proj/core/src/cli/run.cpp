#include "exitcde/cli/run.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "exitcde/errors.hpp"
#include "exitcde/train/grad_check.hpp"

namespace exitcde::cli {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;
using model::format_double;
using model::KeyValues;
using model::parse_bool;
using model::parse_double;
using model::parse_size;

namespace {

std::string format_weights(const std::vector<double>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) s += ',';
    s += format_double(w[i]);
  }
  return s;
}

std::vector<double> parse_weights(const std::string& text, const std::string& key) {
  std::vector<double> w;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) w.push_back(parse_double(item, key));
  return w;
}

KeyValues run_entries(const RunConfig& c) {
  return {{"mode", model::mode_name(c.mode)}, {"seed", std::to_string(c.seed)}, {"out", c.out}};
}

KeyValues data_entries(const DataConfig& d) {
  return {
      {"source", d.source},
      {"kind", data::synthetic_name(d.kind)},
      {"path", d.path},
      {"samples", std::to_string(d.samples)},
      {"length", std::to_string(d.length)},
      {"noise", format_double(d.noise)},
      {"horizon", std::to_string(d.horizon)},
      {"classes", std::to_string(d.classes)},
      {"terminal", format_double(d.terminal)},
      {"drop_ratio", format_double(d.drop_ratio)},
      {"drop_rows", d.drop_rows ? "true" : "false"},
      {"normalize", d.normalize ? "true" : "false"},
      {"split", format_weights(d.split)},
  };
}

using Setter = std::function<void(const std::string&, const std::string&)>;

void apply(const KeyValues& kv, const std::string& section, const std::map<std::string, Setter>& setters) {
  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    const std::string name = section + "." + key;
    if (it == setters.end()) throw ConfigError(name + ": unknown key");
    try {
      it->second(value, name);
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      if (msg.rfind(name, 0) == 0) throw;
      throw ConfigError(name + ": " + msg);
    }
  }
}

DataConfig data_from(const KeyValues& kv) {
  DataConfig d;
  auto size = [](std::size_t& dst) {
    return [&dst](const std::string& v, const std::string& k) { dst = parse_size(v, k); };
  };
  auto real = [](double& dst) {
    return [&dst](const std::string& v, const std::string& k) { dst = parse_double(v, k); };
  };
  auto flag = [](bool& dst) {
    return [&dst](const std::string& v, const std::string& k) { dst = parse_bool(v, k); };
  };
  apply(kv, "data",
        {
            {"source", [&](const std::string& v, const std::string&) { d.source = v; }},
            {"kind", [&](const std::string& v, const std::string&) { d.kind = data::parse_synthetic(v); }},
            {"path", [&](const std::string& v, const std::string&) { d.path = v; }},
            {"samples", size(d.samples)},
            {"length", size(d.length)},
            {"noise", real(d.noise)},
            {"horizon", size(d.horizon)},
            {"classes", size(d.classes)},
            {"terminal", real(d.terminal)},
            {"drop_ratio", real(d.drop_ratio)},
            {"drop_rows", flag(d.drop_rows)},
            {"normalize", flag(d.normalize)},
            {"split", [&](const std::string& v, const std::string& k) { d.split = parse_weights(v, k); }},
        });
  return d;
}

model::Task synthetic_task(data::SyntheticKind k) {
  return k == data::SyntheticKind::kArForecasting ? model::Task::kForecasting
                                                  : model::Task::kClassification;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void RunConfig::validate() const {
  require(data.source == "synthetic" || data.source == "csv",
          "data.source: expected synthetic or csv, got '" + data.source + "'");
  require(data.source != "csv" || !data.path.empty(), "data.path: required for a csv source");
  require(data.source != "synthetic" || data.samples > 0, "data.samples: must be positive");
  require(data.source != "synthetic" || data.length >= 2, "data.length: must be at least 2");
  require(data.noise >= 0.0, "data.noise: must be non-negative");
  require(data.terminal >= 0.0, "data.terminal: must be non-negative");
  require(data.drop_ratio >= 0.0 && data.drop_ratio < 1.0, "data.drop_ratio: must lie in [0, 1)");
  require(data.split.size() == 3, "data.split: expected three weights for train, val and test");
  for (double w : data.split) require(w >= 0.0, "data.split: weights must be non-negative");
  require(data.split[0] > 0.0, "data.split: the train weight must be positive");
  if (data.source == "synthetic") {
    require(synthetic_task(data.kind) == model.task,
            std::string("model.task: ") + model::task_name(model.task) + " does not match data.kind " +
                data::synthetic_name(data.kind));
  }
  require((model.task == model::Task::kForecasting) == (data.horizon > 0),
          "data.horizon: must be positive exactly when model.task is forecasting");
  require(out.size() > 0, "run.out: must not be empty");
  model.validate();
  solver.validate();
  train.validate();
  require(train.seed == seed, "train.seed: must equal run.seed");
}

RunConfig parse_run_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("line " + std::to_string(e.line()) + ": " + e.message());
  }
  std::map<std::string, KeyValues> sections;
  for (const auto& [name, node] : tree) {
    static const char* const known[] = {"run", "data", "model", "solver", "train"};
    if (std::find(std::begin(known), std::end(known), name) == std::end(known)) {
      throw ConfigError(node.empty() && !node.data().empty() ? name + ": key outside a section"
                                                              : "[" + name + "]: unknown section");
    }
    if (!node.data().empty()) throw ConfigError(name + ": key outside a section");
    for (const auto& [key, leaf] : node) sections[name][key] = leaf.data();
  }

  RunConfig c;
  apply(sections["run"], "run",
        {
            {"mode", [&](const std::string& v, const std::string&) { c.mode = model::parse_mode(v); }},
            {"seed", [&](const std::string& v, const std::string& k) { c.seed = parse_size(v, k); }},
            {"out", [&](const std::string& v, const std::string&) { c.out = v; }},
        });
  c.data = data_from(sections["data"]);
  c.model = model::architecture_from(sections["model"]);
  c.solver = model::solver_from(sections["solver"]);
  auto& train_kv = sections["train"];
  if (!train_kv.count("seed")) train_kv["seed"] = std::to_string(c.seed);
  c.train = train::train_from(train_kv);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config");
  try {
    return parse_run_config(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_run_config(const RunConfig& cfg, std::ostream& out) {
  const std::pair<const char*, KeyValues> sections[] = {
      {"run", run_entries(cfg)},
      {"data", data_entries(cfg.data)},
      {"model", model::architecture_entries(cfg.model)},
      {"solver", model::solver_entries(cfg.solver)},
      {"train", train::train_entries(cfg.train)},
  };
  bool first = true;
  for (const auto& [name, kv] : sections) {
    if (!first) out << '\n';
    first = false;
    out << '[' << name << "]\n";
    for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
  }
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.seed = cfg.train.seed = *o.seed;
  if (o.mode) cfg.mode = *o.mode;
  if (o.drop_ratio) cfg.data.drop_ratio = *o.drop_ratio;
  if (o.out) cfg.out = *o.out;
  if (o.thread_cap && *o.thread_cap > 0) cfg.train.threads = std::min(cfg.train.threads, *o.thread_cap);
}

PreparedData prepare_data(const RunConfig& cfg) {
  const DataConfig& d = cfg.data;
  data::Dataset ds;
  if (d.source == "csv") {
    ds = data::load_csv(d.path, data::CsvOptions{d.horizon, d.terminal, d.classes});
  } else {
    ds = data::generate_synthetic(d.kind, d.samples, cfg.seed,
                                  data::SyntheticOptions{d.length, d.noise, d.horizon});
    if (d.terminal > 0.0) {
      for (auto& s : ds.samples) data::rescale_times(s, d.terminal);
    }
  }
  if (d.drop_ratio > 0.0) ds = data::drop_observations(ds, d.drop_ratio, cfg.seed, d.drop_rows);

  const model::Architecture& a = cfg.model;
  require(a.task == ds.task, std::string("model.task: ") + model::task_name(a.task) +
                                 " does not match the data's " + model::task_name(ds.task));
  require(a.input_channels == ds.channels, "model.input_channels: " + std::to_string(a.input_channels) +
                                               " does not match the data's " +
                                               std::to_string(ds.channels) + " channels");
  if (ds.task == model::Task::kClassification) {
    require(a.output_dim == ds.classes, "model.output_dim: " + std::to_string(a.output_dim) +
                                            " does not match the data's " + std::to_string(ds.classes) +
                                            " classes");
  } else {
    require(a.horizon == ds.horizon, "model.horizon: " + std::to_string(a.horizon) +
                                         " does not match the data's " + std::to_string(ds.horizon));
    require(a.output_dim == ds.horizon * ds.channels,
            "model.output_dim: must equal horizon x channels = " + std::to_string(ds.horizon * ds.channels));
  }

  const double total = std::accumulate(d.split.begin(), d.split.end(), 0.0);
  PreparedData p;
  p.split = data::split(ds, d.split[0] / total, d.split[1] / total, d.split[2] / total, cfg.seed);
  if (d.normalize) {
    const data::Normalization n = data::fit_normalization(p.split.train);
    data::apply_normalization(p.split.train, n);
    data::apply_normalization(p.split.val, n);
    data::apply_normalization(p.split.test, n);
  }
  p.terminal = ds.terminal();
  return p;
}

model::ExitModel build_model(const RunConfig& cfg, double terminal) {
  model::ExitModel m(cfg.model, cfg.solver, terminal, cfg.mode);
  m.initialize(cfg.seed);
  return m;
}

TrainOutcome train_model(model::ExitModel& model, const RunConfig& cfg, const PreparedData& data,
                         std::ostream* progress) {
  train::EpochCallback cb;
  if (progress) {
    cb = [progress](const train::EpochRecord& r) {
      *progress << "epoch " << r.epoch << " train_loss=" << r.train_loss << " val_loss=" << r.val_loss
                << " val_metric=" << r.val_metric << " tau=[" << r.tau_start << ", " << r.tau_end << "]\n";
    };
  }
  TrainOutcome o;
  o.report = train::fit(model, data.split.train.samples, data.split.val.samples, cfg.train, cb);
  const auto& eval_set = data.split.test.empty() ? data.split.val : data.split.test;
  o.test = train::evaluate(model, eval_set.samples, cfg.train.threads);
  return o;
}

std::vector<AblationRow> ablate(const RunConfig& cfg, const PreparedData& data) {
  std::vector<AblationRow> rows;
  for (model::Mode mode : {model::Mode::kFixedExit, model::Mode::kTerminalExit, model::Mode::kExit}) {
    RunConfig c = cfg;
    c.mode = mode;
    model::ExitModel m = build_model(c, data.terminal);
    const TrainOutcome o = train_model(m, c, data);
    rows.push_back({mode, o.report.best_val_loss, o.test.metric(c.model.task), m.bounds()});
  }
  return rows;
}

std::string metric_line(const train::EvalResult& r, model::Task task) {
  std::ostringstream s;
  s << std::setprecision(6);
  if (task == model::Task::kClassification) {
    s << "accuracy=" << r.accuracy;
    if (!std::isnan(r.auroc)) s << " auroc=" << r.auroc;
  } else {
    s << "mse=" << r.mse;
  }
  s << " loss=" << r.loss;
  return s.str();
}

const char* command_name(Command c) {
  switch (c) {
    case Command::kTrain: return "train";
    case Command::kEval: return "eval";
    case Command::kPredict: return "predict";
    case Command::kGradCheck: return "gradcheck";
    case Command::kAblate: return "ablate";
  }
  return "?";
}

Command parse_command(const std::string& name) {
  for (Command c : {Command::kTrain, Command::kEval, Command::kPredict, Command::kGradCheck, Command::kAblate}) {
    if (name == command_name(c)) return c;
  }
  throw ConfigError("unknown command '" + name + "'");
}

namespace {

constexpr double kGradCheckTolerance = 1e-4;

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

model::ExitModel restore(const RunConfig& cfg) {
  const fs::path ckpt = fs::path(cfg.out) / "checkpoint.txt";
  if (!fs::exists(ckpt)) throw Error("checkpoint not found: " + ckpt.string());
  model::ExitModel m = model::load_checkpoint(ckpt.string());
  if (model::architecture_entries(m.architecture()) != model::architecture_entries(cfg.model)) {
    throw ConfigError("model: the config does not match the architecture stored in " + ckpt.string());
  }
  return m;
}

void write_predictions(const std::string& path, const train::EvalResult& r, const data::Dataset& ds) {
  std::ofstream f(path);
  if (!f) throw Error(path + ": cannot write predictions");
  f << std::setprecision(17);
  if (ds.task == model::Task::kClassification) {
    f << "index,label,predicted";
    for (std::size_t c = 0; c < ds.classes; ++c) f << ",score_" << c;
    f << '\n';
    for (std::size_t i = 0; i < r.predictions.size(); ++i) {
      const auto& p = r.predictions[i];
      const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
      f << i << ',' << *ds.samples[i].label << ',' << best;
      for (double v : p) f << ',' << v;
      f << '\n';
    }
    return;
  }
  const std::size_t d = ds.channels;
  f << "index,step";
  for (std::size_t c = 1; c <= d; ++c) f << ",pred_c" << c;
  for (std::size_t c = 1; c <= d; ++c) f << ",target_c" << c;
  f << '\n';
  for (std::size_t i = 0; i < r.predictions.size(); ++i) {
    for (std::size_t h = 0; h < ds.horizon; ++h) {
      f << i << ',' << h;
      for (std::size_t c = 0; c < d; ++c) f << ',' << r.predictions[i][h * d + c];
      for (std::size_t c = 0; c < d; ++c) f << ',' << ds.samples[i].target[h * d + c];
      f << '\n';
    }
  }
}

int dispatch(Command command, const RunConfig& cfg, std::ostream& out, std::ostream& err, bool verbose) {
  cfg.validate();
  const fs::path dir(cfg.out);
  const PreparedData data = prepare_data(cfg);
  print_warnings(data.split.warnings, err);
  const model::Task task = cfg.model.task;

  switch (command) {
    case Command::kTrain: {
      fs::create_directories(dir);
      {
        std::ofstream f(dir / "resolved.ini");
        write_run_config(cfg, f);
      }
      model::ExitModel m = build_model(cfg, data.terminal);
      const TrainOutcome o = train_model(m, cfg, data, verbose ? &err : nullptr);
      model::save_checkpoint(m, (dir / "checkpoint.txt").string());
      o.report.write((dir / "report.jsonl").string());
      if (o.report.diverged) err << "warning: training diverged; the best snapshot was restored\n";
      out << "train epochs=" << o.report.epochs.size() << " best_epoch=" << o.report.best_epoch
          << " tau=[" << format_double(m.bounds().tau_start) << ", " << format_double(m.bounds().tau_end)
          << "] stop=\"" << o.report.stop_reason << "\"\n";
      out << "test " << metric_line(o.test, task) << '\n';
      return kExitOk;
    }
    case Command::kEval: {
      const model::ExitModel m = restore(cfg);
      out << "test " << metric_line(train::evaluate(m, data.split.test.samples, cfg.train.threads), task)
          << '\n';
      return kExitOk;
    }
    case Command::kPredict: {
      const model::ExitModel m = restore(cfg);
      const auto r = train::evaluate(m, data.split.test.samples, cfg.train.threads);
      const std::string path = (dir / "predictions.csv").string();
      write_predictions(path, r, data.split.test);
      out << "predictions " << r.predictions.size() << " -> " << path << '\n';
      return kExitOk;
    }
    case Command::kGradCheck: {
      if (data.split.train.empty()) throw DataError("gradcheck needs a training sample");
      const model::ExitModel m = build_model(cfg, data.terminal);
      const auto rep = train::grad_check(m, data.split.train.samples.front(), 1e-5, cfg.train.c_kr);
      out << std::setprecision(3);
      for (const auto& g : rep.groups) {
        out << std::left << std::setw(10) << g.name << " direct=" << g.direct_error
            << " adjoint=" << g.adjoint_error << " gap=" << g.mode_gap << '\n';
      }
      const bool ok = rep.passed(kGradCheckTolerance);
      out << "max_error=" << rep.max_error() << " max_mode_gap=" << rep.max_mode_gap() << ' '
          << (ok ? "PASS" : "FAIL") << '\n';
      return ok ? kExitOk : kExitRuntime;
    }
    case Command::kAblate: {
      const auto rows = ablate(cfg, data);
      fs::create_directories(dir);
      std::ofstream f(dir / "ablation.csv");
      f << "mode,best_val_loss,test_metric,tau_start,tau_end\n";
      const char* metric = task == model::Task::kClassification ? "test_accuracy" : "test_mse";
      out << std::left << std::setw(15) << "mode" << std::setw(15) << "best_val_loss" << std::setw(15)
          << metric << std::setw(11) << "tau_start" << "tau_end\n";
      for (const auto& r : rows) {
        out << std::left << std::setw(15) << model::mode_label(r.mode) << std::setw(15) << r.best_val_loss
            << std::setw(15) << r.test_metric << std::setw(11) << r.bounds.tau_start << r.bounds.tau_end
            << '\n';
        f << model::mode_label(r.mode) << ',' << format_double(r.best_val_loss) << ','
          << format_double(r.test_metric) << ',' << format_double(r.bounds.tau_start) << ','
          << format_double(r.bounds.tau_end) << '\n';
      }
      return kExitOk;
    }
  }
  return kExitConfig;
}

}  // namespace

int run(Command command, const RunConfig& cfg, std::ostream& out, std::ostream& err, bool verbose) {
  try {
    return dispatch(command, cfg, out, err, verbose);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace exitcde::cli
