#include "exitcde/model/exit_model.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "exitcde/errors.hpp"
#include "exitcde/model/pipeline.hpp"

namespace exitcde::model {

double bound_gap(double terminal) { return 1e-3 * terminal; }

IntegrationBounds clamp_bounds(IntegrationBounds b, double terminal, Mode mode) {
  const double gap = bound_gap(terminal);
  if (mode == Mode::kFixedExit) return {0.0, terminal};
  if (mode == Mode::kTerminalExit) b.tau_start = 0.0;
  b.tau_start = std::min(std::max(b.tau_start, 0.0), terminal - gap);
  if (b.tau_end <= b.tau_start + gap) b.tau_end = b.tau_start + gap;
  return b;
}

ExitModel::ExitModel(Architecture arch, solve::SolverConfig solver, double terminal, Mode mode)
    : arch_(std::move(arch)), solver_(solver), terminal_(terminal), mode_(mode) {
  arch_.validate();
  solver_.validate();
  if (!(terminal_ > 0.0) || !std::isfinite(terminal_)) {
    throw ConfigError("terminal time must be positive and finite");
  }
  fields_ = build_fields(arch_);
  bounds_ = clamp_bounds({0.0, terminal_}, terminal_, mode_);
}

void ExitModel::initialize(std::uint64_t seed) {
  seed_ = seed;
  params_ = field::ParameterSet{};
  for (const auto* spec : fields_.all()) field::init_params(*spec, seed, params_);
  bounds_ = clamp_bounds({0.0, terminal_}, terminal_, mode_);
}

const IntegrationBounds& ExitModel::set_bounds(IntegrationBounds b) {
  bounds_ = clamp_bounds(b, terminal_, mode_);
  return bounds_;
}

void ExitModel::set_mode(Mode m) {
  mode_ = m;
  bounds_ = clamp_bounds(bounds_, terminal_, mode_);
}

interp::SplineOptions ExitModel::spline_options() const {
  interp::SplineOptions o;
  o.append_time = arch_.append_time;
  o.observation_intensity = arch_.observation_intensity;
  return o;
}

interp::SplinePath ExitModel::path_for(const interp::TimeSeriesSample& sample) const {
  if (sample.channels != arch_.input_channels) {
    throw ShapeError("sample has " + std::to_string(sample.channels) + " channels, model expects " +
                     std::to_string(arch_.input_channels));
  }
  return interp::fit_spline(sample, spline_options());
}

std::vector<double> ExitModel::readout_times(const interp::SplinePath& path) const {
  const auto& knots = path.knots();
  const std::size_t n = std::min(knots.size(), arch_.readouts);
  return {knots.end() - static_cast<std::ptrdiff_t>(n), knots.end()};
}

std::vector<std::vector<double>> ExitModel::encode(const interp::SplinePath& path,
                                                   const std::vector<double>& readout_times) const {
  for (std::size_t i = 0; i < readout_times.size(); ++i) {
    if (i > 0 && !(readout_times[i] > readout_times[i - 1])) {
      throw Error("readout times must be strictly increasing");
    }
    if (!std::binary_search(path.knots().begin(), path.knots().end(), readout_times[i])) {
      throw Error("readout time " + std::to_string(readout_times[i]) + " is not a knot");
    }
  }
  field::PlainBackend backend;
  field::BoundField<field::PlainBackend> e0(fields_.e0, params_, backend);
  EncoderField<field::PlainBackend> k(fields_, params_, backend, path);
  const auto traj = solve::integrate(k, e0(path.eval(path.start())), path.start(), path.end(),
                                     solver_, path.knots());
  std::vector<std::vector<double>> out;
  for (double t : readout_times) out.push_back(traj.states[detail::grid_index(traj.times, t)]);
  return out;
}

std::pair<std::vector<double>, std::vector<double>> ExitModel::init_latent_states(
    const std::vector<std::vector<double>>& readouts, const interp::SplinePath& path,
    std::vector<std::string>* warnings) const {
  for (const auto& r : readouts) {
    if (r.size() != arch_.encoder_dim) throw ShapeError("readout width differs from encoder_dim");
  }
  auto init = init_states(*this, params_, field::PlainBackend{},
                          std::span<const std::vector<double>>(readouts), path, bounds_.tau_start,
                          warnings);
  return {std::move(init.z0), std::move(init.y0)};
}

std::vector<double> ExitModel::combined_dynamics(std::span<const double> state, double t) const {
  CombinedField<field::PlainBackend> field(fields_, params_, field::PlainBackend{});
  return field(t, std::vector<double>(state.begin(), state.end()));
}

Prediction ExitModel::forward(const interp::TimeSeriesSample& sample) const {
  const auto path = path_for(sample);
  auto tr = run_forward(*this, params_, field::PlainBackend{}, path, bounds_);
  Prediction p;
  if (arch_.task == Task::kForecasting) {
    p.output = diff::NdArray(diff::Shape{arch_.horizon, arch_.output_dim / arch_.horizon},
                             std::move(tr.output));
  } else {
    p.output = diff::NdArray::vector(std::move(tr.output));
  }
  p.warnings = std::move(tr.warnings);
  return p;
}

std::vector<double> separated_latent(const ExitModel& model, const interp::TimeSeriesSample& sample) {
  if (model.solver().method == solve::Method::kDopri5) {
    throw ConfigError("the separated formulation needs a fixed-step method");
  }
  const auto path = model.path_for(sample);
  field::PlainBackend backend;
  const auto tr = run_forward(model, model.params(), backend, path, model.bounds());
  const auto& fs = model.fields();
  const auto& b = model.bounds();

  field::BoundField<field::PlainBackend> f(fs.f, model.params(), backend);
  field::BoundField<field::PlainBackend> g(fs.g, model.params(), backend);
  std::vector<std::vector<double>> stages;
  auto decoder = [&](double t, const std::vector<double>& y) {
    stages.push_back(f(backend.append_scalar(y, t)));
    return stages.back();
  };
  solve::integrate(decoder, tr.y0, b.tau_start, b.tau_end, model.solver());

  std::size_t next = 0;
  auto main = [&](double, const std::vector<double>& z) {
    return g.apply_matrix(z, stages.at(next++));
  };
  return solve::integrate(main, tr.z0, b.tau_start, b.tau_end, model.solver()).final_state();
}

namespace {

constexpr const char* kMagic = "exitcde-checkpoint 1";

std::string hex(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
  return std::string(buf, r.ptr);
}

double unhex(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v, std::chars_format::hex);
  if (r.ec != std::errc() || r.ptr != end) throw Error("checkpoint: bad number '" + s + "' in " + what);
  return v;
}

}  // namespace

void save_checkpoint(const ExitModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open checkpoint '" + path + "' for writing");
  out << kMagic << "\n";
  for (const auto& [k, v] : architecture_entries(model.architecture())) out << "model." << k << " " << v << "\n";
  for (const auto& [k, v] : solver_entries(model.solver())) out << "solver." << k << " " << v << "\n";
  out << "mode " << mode_name(model.mode()) << "\n";
  out << "seed " << model.seed() << "\n";
  out << "terminal " << hex(model.terminal()) << "\n";
  out << "tau_start " << hex(model.bounds().tau_start) << "\n";
  out << "tau_end " << hex(model.bounds().tau_end) << "\n";
  for (const auto& [name, a] : model.params().arrays()) {
    out << "param " << name << " " << a.shape().rank();
    for (std::size_t d = 0; d < a.shape().rank(); ++d) out << " " << a.shape()[d];
    for (double v : a.values()) out << " " << hex(v);
    out << "\n";
  }
  out << "end\n";
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

ExitModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw Error("'" + path + "' is not a checkpoint");

  KeyValues arch_kv, solver_kv, meta;
  std::vector<std::string> param_lines;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    const auto sp = line.find(' ');
    const std::string key = line.substr(0, sp);
    const std::string value = sp == std::string::npos ? "" : line.substr(sp + 1);
    if (key == "param") {
      param_lines.push_back(value);
    } else if (key.rfind("model.", 0) == 0) {
      arch_kv[key.substr(6)] = value;
    } else if (key.rfind("solver.", 0) == 0) {
      solver_kv[key.substr(7)] = value;
    } else {
      meta[key] = value;
    }
  }
  if (!ended) throw Error("checkpoint '" + path + "' is truncated");
  for (const char* k : {"mode", "seed", "terminal", "tau_start", "tau_end"}) {
    if (!meta.count(k)) throw Error(std::string("checkpoint is missing '") + k + "'");
  }

  ExitModel model(architecture_from(arch_kv), solver_from(solver_kv), unhex(meta["terminal"], "terminal"),
                  parse_mode(meta["mode"]));
  model.initialize(parse_size(meta["seed"], "seed"));
  std::size_t loaded = 0;
  for (const auto& pl : param_lines) {
    std::istringstream ss(pl);
    std::string name;
    std::size_t rank = 0;
    ss >> name >> rank;
    if (!model.params().contains(name)) throw Error("checkpoint parameter '" + name + "' is unknown");
    diff::NdArray& dst = model.params().get(name);
    if (rank != dst.shape().rank()) throw Error("checkpoint parameter '" + name + "' has the wrong rank");
    for (std::size_t d = 0; d < rank; ++d) {
      std::size_t dim = 0;
      ss >> dim;
      if (dim != dst.shape()[d]) throw Error("checkpoint parameter '" + name + "' has the wrong shape");
    }
    for (double& v : dst.values()) {
      std::string tok;
      if (!(ss >> tok)) throw Error("checkpoint parameter '" + name + "' is short");
      v = unhex(tok, name);
    }
    ++loaded;
  }
  if (loaded != model.params().size()) throw Error("checkpoint does not cover every parameter");
  model.set_bounds({unhex(meta["tau_start"], "tau_start"), unhex(meta["tau_end"], "tau_end")});
  return model;
}

}  // namespace exitcde::model
