// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "exitcde/cli/run.hpp"
#include "exitcde/field/mlp.hpp"
#include "exitcde/interp/spline.hpp"
#include "exitcde/model/exit_model.hpp"
#include "exitcde/solve/solver.hpp"
#include "exitcde/train/grad_check.hpp"
#include "exitcde/train/metrics.hpp"
#include "oracles.hpp"

using namespace exitcde;
using Vec = std::vector<double>;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kTauTol = 1e-4;
constexpr double kAdjointTol = 1e-4;
constexpr double kEulerOrder = 0.9;
constexpr double kRk4Order = 3.8;
constexpr double kDopriFactor = 50.0;
constexpr double kKnotTol = 1e-12;
constexpr double kSmoothTol = 1e-9;
constexpr double kNodeTol = 1e-8;
constexpr double kMinAccuracy = 0.95;
constexpr std::size_t kMaxEpochs = 200;
constexpr double kLearnBudgetS = 600.0;
constexpr double kAblationSlack = 1.02;
constexpr std::size_t kAblationSeeds = 5;
constexpr std::size_t kToyMaxParams = 1000;

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (budget_s > 0.0 && secs > budget_s) {
    o.pass = false;
    o.detail += " over budget";
  }
  if (!o.pass) ++failures;
  char head[64];
  std::snprintf(head, sizeof head, "%s %d ", o.pass ? "PASS" : "FAIL", id);
  char tail[64];
  if (budget_s > 0.0) {
    std::snprintf(tail, sizeof tail, " (%.1f s, budget %.0f s)", secs, budget_s);
  } else {
    std::snprintf(tail, sizeof tail, " (%.1f s)", secs);
  }
  std::cout << head << title << ": " << o.detail << tail << std::endl;
}

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

fs::path preset(const std::string& name) { return fs::path(EXITCDE_CONFIG_DIR) / name; }

cli::RunConfig load(const std::string& name) {
  cli::RunConfig cfg = cli::load_run_config(preset(name).string());
  cfg.train.threads = 1;
  return cfg;
}

// ---- 1, 2: gradients on the toy model -------------------------------------

struct ToyCheck {
  double tau_error = 0.0;
  double param_gap = 0.0;
  std::size_t params = 0;
};

const ToyCheck& toy_check() {
  static const ToyCheck result = [] {
    const cli::RunConfig cfg = load("toy.ini");
    const cli::PreparedData data = cli::prepare_data(cfg);
    model::ExitModel m = cli::build_model(cfg, data.terminal);
    ToyCheck r;
    r.params = m.params().scalar_count();
    const double T = data.terminal;
    const std::vector<model::IntegrationBounds> bounds{{0.0, T}, {0.2 * T, 0.8 * T}, {0.35 * T, 1.1 * T}};
    for (std::size_t i = 0; i < bounds.size(); ++i) {
      m.set_bounds(bounds[i]);
      const auto& sample = data.split.train.samples.at(i);
      const auto rep = train::grad_check(m, sample, 1e-5, 0.0);
      for (const auto& g : rep.groups) {
        if (g.name == "tau_start" || g.name == "tau_end") {
          r.tau_error = std::max({r.tau_error, g.direct_error, g.adjoint_error});
        } else {
          r.param_gap = std::max(r.param_gap, g.mode_gap);
        }
      }
    }
    return r;
  }();
  return result;
}

Outcome criterion_tau() {
  const ToyCheck& r = toy_check();
  const bool small = r.params <= kToyMaxParams;
  return {small && r.tau_error <= kTauTol,
          "max relative error " + fmt(r.tau_error) + " (tol " + fmt(kTauTol) + "), " + std::to_string(r.params) +
              " parameters"};
}

Outcome criterion_adjoint() {
  const ToyCheck& r = toy_check();
  return {r.param_gap <= kAdjointTol, "max relative gap " + fmt(r.param_gap) + " (tol " + fmt(kAdjointTol) + ")"};
}

// ---- 3: solver orders ------------------------------------------------------

Outcome criterion_orders() {
  using solve::Method;
  const auto growth = [](double, const Vec& z) { return z; };
  auto error = [&](Method m, double step) {
    solve::SolverConfig c;
    c.method = m;
    c.step = step;
    return std::abs(solve::integrate(growth, Vec{1.0}, 0.0, 1.0, c).final_state()[0] - std::numbers::e);
  };
  auto order = [&](Method m) {
    double worst = 1e9;
    for (double s : {1.0 / 8, 1.0 / 16, 1.0 / 32}) worst = std::min(worst, std::log2(error(m, s) / error(m, s / 2)));
    return worst;
  };
  const double euler = order(Method::kEuler), rk4 = order(Method::kRk4);

  solve::SolverConfig c;
  c.method = Method::kDopri5;
  c.rtol = 1e-6;
  c.atol = 1e-9;
  const double e_exp = std::abs(solve::integrate(growth, Vec{1.0}, 0.0, 1.0, c).final_state()[0] - std::numbers::e);
  const auto rot = solve::integrate([](double, const Vec& z) { return Vec{z[1], -z[0]}; }, Vec{1.0, 0.0}, 0.0,
                                    2 * std::numbers::pi, c)
                       .final_state();
  const double e_rot = std::hypot(rot[0] - 1.0, rot[1]);
  const double dopri_rel = std::max(e_exp / std::numbers::e, e_rot);
  const bool ok = euler >= kEulerOrder && rk4 >= kRk4Order && dopri_rel <= kDopriFactor * c.rtol;
  return {ok, "euler order " + fmt(euler) + ", rk4 order " + fmt(rk4) + ", dopri5 error " + fmt(dopri_rel) +
                  " <= " + fmt(kDopriFactor * c.rtol)};
}

// ---- 4: spline -------------------------------------------------------------

Outcome criterion_spline() {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> gap(0.2, 1.4), val(-3.0, 3.0);
  Vec t{0.0}, v;
  for (int i = 1; i < 15; ++i) t.push_back(t.back() + gap(rng));
  for (std::size_t i = 0; i < t.size(); ++i) v.push_back(val(rng));
  interp::SplineOptions o;
  o.append_time = false;
  const auto path = interp::fit_spline(oracle::sample(t, v, 1), o);

  double knot = 0.0, c1 = 0.0, c2 = 0.0, oracle_gap = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) knot = std::max(knot, std::abs(path.eval(t[i])[0] - v[i]));
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    const double lo = std::nextafter(t[i], -1e9), hi = std::nextafter(t[i], 1e9);
    c1 = std::max(c1, std::abs(path.derivative(lo)[0] - path.derivative(hi)[0]));
    c2 = std::max(c2, std::abs(path.second_derivative(lo)[0] - path.second_derivative(hi)[0]));
  }
  for (int i = 0; i <= 400; ++i) {
    const double q = std::min(t.back(), t.back() * i / 400.0);
    oracle_gap = std::max(oracle_gap, std::abs(path.eval(q)[0] - oracle::natural_spline(t, v, q)));
  }
  const double natural =
      std::max(std::abs(path.second_derivative(t.front())[0]), std::abs(path.second_derivative(t.back())[0]));

  Vec affine;
  for (double x : t) affine.push_back(2.5 * x - 1.0);
  const auto line = interp::fit_spline(oracle::sample(t, affine, 1), o);
  double affine_err = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const double q = t.back() * i / 400.0;
    affine_err = std::max(affine_err, std::abs(line.eval(std::min(q, t.back()))[0] - (2.5 * std::min(q, t.back()) - 1.0)));
  }
  const bool ok = knot <= kKnotTol && c1 <= kSmoothTol && c2 <= kSmoothTol && natural <= kSmoothTol &&
                  affine_err <= kKnotTol && oracle_gap <= kKnotTol;
  return {ok, "knots " + fmt(knot) + ", C1 " + fmt(c1) + ", C2 " + fmt(c2) + ", X''(ends) " + fmt(natural) +
                  ", affine " + fmt(affine_err) + ", vs oracle " + fmt(oracle_gap)};
}

// ---- 5: NODE reduction -----------------------------------------------------

Outcome criterion_node() {
  solve::SolverConfig rk4;
  rk4.method = solve::Method::kRk4;
  rk4.step = 0.05;

  // Encoder CDE driven by X(t) = t against the NODE of k.
  model::Architecture a;
  a.input_channels = 1;
  a.append_time = false;
  a.encoder_dim = 4;
  a.latent_dim = 3;
  a.hidden_dim = 3;
  a.readouts = 6;
  a.k_layers = {{8, field::Activation::kTanh}};
  a.g_layers = {};
  a.g_final = field::Activation::kIdentity;
  model::ExitModel m(a, rk4, 5.0);
  m.initialize(3);
  interp::TimeSeriesSample s;
  s.channels = 1;
  for (int i = 0; i <= 5; ++i) {
    s.times.push_back(i);
    s.values.push_back(i);
  }
  const auto path = m.path_for(s);
  const auto reads = m.encode(path, m.readout_times(path));
  const Vec e0 = field::eval_field(m.fields().e0, m.params(), path.eval(0.0)).values();
  const auto node = solve::integrate(
      [&](double, const Vec& e) { return field::eval_field(m.fields().k, m.params(), e).values(); }, e0, 0.0, 5.0,
      rk4, path.knots());
  double enc_gap = 0.0;
  for (std::size_t i = 0; i < reads.size(); ++i) {
    const auto it = std::find(node.times.begin(), node.times.end(), static_cast<double>(i));
    const Vec& ref = node.states[static_cast<std::size_t>(it - node.times.begin())];
    for (std::size_t j = 0; j < ref.size(); ++j) enc_gap = std::max(enc_gap, std::abs(reads[i][j] - ref[j]));
  }

  // Main CDE with g = I: z - z0 follows the decoder NODE of f.
  for (double& w : m.params().get(field::weight_name(m.fields().g, 0)).values()) w = 0.0;
  m.params().get(field::bias_name(m.fields().g, 0)) = diff::NdArray(diff::Shape{9}, Vec{1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Vec z0{0.4, -0.2, 1.0}, y0{0.1, 0.7, -0.5};
  Vec x0 = z0;
  x0.insert(x0.end(), y0.begin(), y0.end());
  const auto main = solve::integrate([&](double t, const Vec& x) { return m.combined_dynamics(x, t); }, x0, 0.0, 5.0, rk4);
  const auto fnode = solve::integrate(
      [&](double t, const Vec& y) {
        Vec in = y;
        in.push_back(t);
        return field::eval_field(m.fields().f, m.params(), in).values();
      },
      y0, 0.0, 5.0, rk4);
  double main_gap = 0.0;
  for (std::size_t i = 0; i < main.states.size(); ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      main_gap = std::max(main_gap, std::abs((main.states[i][j] - z0[j]) - (fnode.states[i][j] - y0[j])));
    }
  }
  const double gap = std::max(enc_gap, main_gap);
  return {gap <= kNodeTol, "encoder " + fmt(enc_gap) + ", main " + fmt(main_gap) + " (tol " + fmt(kNodeTol) + ")"};
}

// ---- 6, 8: end-to-end learning --------------------------------------------

struct LearnRun {
  double accuracy = 0.0;
  std::size_t epochs = 0;
  std::size_t sizes[3] = {0, 0, 0};
  bool feasible = true;
  double seconds = 0.0;
  model::IntegrationBounds bounds;
  double terminal = 0.0;
};

const LearnRun& learn_run() {
  static const LearnRun result = [] {
    const auto t0 = Clock::now();
    const cli::RunConfig cfg = load("two_freq_sine.ini");
    const cli::PreparedData data = cli::prepare_data(cfg);
    model::ExitModel m = cli::build_model(cfg, data.terminal);
    const cli::TrainOutcome o = cli::train_model(m, cfg, data);
    LearnRun r;
    r.accuracy = o.test.accuracy;
    r.epochs = o.report.epochs.size();
    r.sizes[0] = data.split.train.size();
    r.sizes[1] = data.split.val.size();
    r.sizes[2] = data.split.test.size();
    for (const auto& e : o.report.epochs) r.feasible &= e.tau_start >= 0.0 && e.tau_start < e.tau_end;
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    r.bounds = m.bounds();
    r.terminal = data.terminal;
    return r;
  }();
  return result;
}

Outcome criterion_learning() {
  const LearnRun& r = learn_run();
  const bool sizes = r.sizes[0] == 200 && r.sizes[1] == 50 && r.sizes[2] == 50;
  const bool ok = sizes && r.accuracy >= kMinAccuracy && r.epochs <= kMaxEpochs && r.feasible &&
                  r.seconds <= kLearnBudgetS;
  return {ok, "test accuracy " + fmt(r.accuracy) + " (min " + fmt(kMinAccuracy) + ") after " +
                  std::to_string(r.epochs) + " epochs, split " + std::to_string(r.sizes[0]) + "/" +
                  std::to_string(r.sizes[1]) + "/" + std::to_string(r.sizes[2]) +
                  (r.feasible ? ", bounds feasible every epoch" : ", infeasible bounds seen")};
}

// ---- 7: ablation -----------------------------------------------------------

struct Ablation {
  double fixed = 0.0, terminal = 0.0, exit = 0.0;
  std::vector<model::IntegrationBounds> exit_bounds;
  double horizon_T = 0.0;
};

const Ablation& ablation() {
  static const Ablation result = [] {
    Ablation a;
    for (std::uint64_t seed = 0; seed < kAblationSeeds; ++seed) {
      cli::RunConfig cfg = load("ar_forecasting.ini");
      cli::Overrides o;
      o.seed = seed;
      cli::apply_overrides(cfg, o);
      const cli::PreparedData data = cli::prepare_data(cfg);
      a.horizon_T = data.terminal;
      for (const auto& row : cli::ablate(cfg, data)) {
        const double v = row.best_val_loss / kAblationSeeds;
        if (row.mode == model::Mode::kFixedExit) a.fixed += v;
        if (row.mode == model::Mode::kTerminalExit) a.terminal += v;
        if (row.mode == model::Mode::kExit) {
          a.exit += v;
          a.exit_bounds.push_back(row.bounds);
        }
      }
    }
    return a;
  }();
  return result;
}

Outcome criterion_ablation() {
  const Ablation& a = ablation();
  const bool exit_ok = a.exit <= kAblationSlack * a.fixed;
  const double lo = std::min(a.exit, a.fixed) / kAblationSlack, hi = std::max(a.exit, a.fixed) * kAblationSlack;
  const bool terminal_ok = a.terminal >= lo && a.terminal <= hi;
  return {exit_ok && terminal_ok, "mean best validation loss over " + std::to_string(kAblationSeeds) +
                                      " seeds: Fixed-EXIT " + fmt(a.fixed) + ", Terminal-EXIT " + fmt(a.terminal) +
                                      ", EXIT " + fmt(a.exit) + " (slack " + fmt(kAblationSlack) + ")"};
}

// ---- 8: bounds move --------------------------------------------------------

Outcome criterion_bounds() {
  const LearnRun& r = learn_run();
  const Ablation& a = ablation();
  auto moved = [](const model::IntegrationBounds& b, double T) {
    const double gap = model::bound_gap(T);
    return b.tau_start > gap || std::abs(b.tau_end - T) > gap;
  };
  std::size_t count = moved(r.bounds, r.terminal) ? 1 : 0;
  for (const auto& b : a.exit_bounds) count += moved(b, a.horizon_T) ? 1 : 0;
  return {count > 0, "two_freq_sine tau=[" + fmt(r.bounds.tau_start) + ", " + fmt(r.bounds.tau_end) + "] of T=" +
                         fmt(r.terminal) + "; " + std::to_string(count) + " of " +
                         std::to_string(1 + a.exit_bounds.size()) + " runs moved by more than the gap"};
}

// ---- 9: determinism and persistence ---------------------------------------

Outcome criterion_determinism() {
  cli::RunConfig cfg = load("toy.ini");
  cfg.solver.method = solve::Method::kRk4;
  cfg.solver.step = 0.25;
  cfg.data.terminal = 4.9;
  cfg.train.max_epochs = 8;
  const cli::PreparedData data = cli::prepare_data(cfg);
  std::string reports[2];
  model::ExitModel first = cli::build_model(cfg, data.terminal);
  for (int i = 0; i < 2; ++i) {
    model::ExitModel m = cli::build_model(cfg, data.terminal);
    std::ostringstream os;
    cli::train_model(m, cfg, data).report.write(os);
    reports[i] = os.str();
    if (i == 0) first = m;
  }
  const bool same_report = reports[0] == reports[1] && !reports[0].empty();

  const fs::path file = fs::temp_directory_path() / "exitcde_acceptance_checkpoint.txt";
  model::save_checkpoint(first, file.string());
  const model::ExitModel back = model::load_checkpoint(file.string());
  fs::remove(file);
  std::size_t mismatches = 0, compared = 0;
  for (const auto* part : {&data.split.train, &data.split.test}) {
    for (const auto& s : part->samples) {
      const Vec a = first.forward(s).output.values(), b = back.forward(s).output.values();
      ++compared;
      if (std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0 || a.size() != b.size()) ++mismatches;
    }
  }
  const bool persisted = mismatches == 0 && back.params() == first.params() && back.bounds() == first.bounds();
  return {same_report && persisted, std::string(same_report ? "identical" : "different") + " reports; " +
                                        std::to_string(compared - mismatches) + "/" + std::to_string(compared) +
                                        " predictions bit-identical after checkpoint reload"};
}

}  // namespace

int main() {
  report(1, "tau gradients vs re-solve finite differences", 60, criterion_tau);
  report(2, "adjoint vs direct parameter gradients", 60, criterion_adjoint);
  report(3, "solver convergence orders", 10, criterion_orders);
  report(4, "spline properties", 5, criterion_spline);
  report(5, "NODE reduction", 5, criterion_node);
  report(6, "end-to-end learning on two_freq_sine", kLearnBudgetS, criterion_learning);
  report(7, "ablation directionality on ar_forecasting", 0, criterion_ablation);
  report(8, "learned bounds move", 0, criterion_bounds);
  report(9, "determinism and checkpoint round trip", 0, criterion_determinism);
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
