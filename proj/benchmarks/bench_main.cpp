#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "exitcde/cli/run.hpp"
#include "exitcde/interp/spline.hpp"
#include "exitcde/solve/solver.hpp"
#include "exitcde/train/gradients.hpp"

using namespace exitcde;

namespace {

struct Fixture {
  cli::PreparedData data;
  model::ExitModel model;
};

// Toy preset data and an initialized model, built once per process.
const Fixture& toy() {
  static const Fixture f = [] {
    const cli::RunConfig cfg = cli::load_run_config(std::string(EXITCDE_CONFIG_DIR) + "/toy.ini");
    cli::PreparedData d = cli::prepare_data(cfg);
    model::ExitModel m = cli::build_model(cfg, d.terminal);
    return Fixture{std::move(d), std::move(m)};
  }();
  return f;
}

void BM_SplineFit(benchmark::State& state) {
  const auto& sample = toy().data.split.train.samples.front();
  for (auto _ : state) benchmark::DoNotOptimize(interp::fit_spline(sample));
}
BENCHMARK(BM_SplineFit);

void BM_SplineEval(benchmark::State& state) {
  const auto path = interp::fit_spline(toy().data.split.train.samples.front());
  std::vector<double> out(path.channels());
  const double span = path.end() - path.start();
  double t = 0.0;
  for (auto _ : state) {
    path.eval(path.start() + std::fmod(t, span), out);
    benchmark::DoNotOptimize(out.data());
    t += 0.0137;
  }
}
BENCHMARK(BM_SplineEval);

void BM_Rk4Rotation(benchmark::State& state) {
  solve::SolverConfig cfg;
  cfg.method = solve::Method::kRk4;
  cfg.step = 10.0 / static_cast<double>(state.range(0));
  auto field = [](double, const std::vector<double>& z) { return std::vector<double>{-z[1], z[0]}; };
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve::integrate(field, std::vector<double>{1.0, 0.0}, 0.0, 10.0, cfg));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Rk4Rotation)->Arg(100)->Arg(1000);

void BM_Forward(benchmark::State& state) {
  const auto& f = toy();
  const auto& sample = f.data.split.train.samples.front();
  for (auto _ : state) benchmark::DoNotOptimize(f.model.forward(sample));
}
BENCHMARK(BM_Forward);

void BM_SampleGradient(benchmark::State& state) {
  const auto& f = toy();
  const auto& sample = f.data.split.train.samples.front();
  const auto mode = static_cast<train::GradientMode>(state.range(0));
  state.SetLabel(train::gradient_mode_name(mode));
  for (auto _ : state) benchmark::DoNotOptimize(train::sample_gradient(f.model, sample, 1e-3, mode));
}
BENCHMARK(BM_SampleGradient)
    ->Arg(static_cast<int>(train::GradientMode::kDirect))
    ->Arg(static_cast<int>(train::GradientMode::kAdjoint));

}  // namespace

BENCHMARK_MAIN();
