#include "exitcde/train/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "exitcde/errors.hpp"
#include "exitcde/train/gradients.hpp"

namespace exitcde::train {

double GradCheckReport::max_error() const {
  double m = 0.0;
  for (const auto& g : groups) m = std::max({m, g.direct_error, g.adjoint_error});
  return m;
}

double GradCheckReport::max_mode_gap() const {
  double m = 0.0;
  for (const auto& g : groups) m = std::max(m, g.mode_gap);
  return m;
}

namespace {

struct Accum {
  double direct = 0.0, adjoint = 0.0, gap = 0.0, scale = 0.0;
  void add(double fd, double d, double a) {
    direct = std::max(direct, std::abs(d - fd));
    adjoint = std::max(adjoint, std::abs(a - fd));
    gap = std::max(gap, std::abs(a - d));
    scale = std::max(scale, std::abs(fd));
  }
  GradCheckGroup finish(std::string name, double floor) const {
    const double s = std::max(scale, floor);
    return {std::move(name), direct / s, adjoint / s, gap / s, scale};
  }
};

}  // namespace

GradCheckReport grad_check(const model::ExitModel& model, const interp::TimeSeriesSample& sample,
                           double eps, double c_kr, double floor) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw ConfigError("grad_check eps must lie in (0, 1e-2]");
  const auto direct = sample_gradient(model, sample, c_kr, GradientMode::kDirect);
  const auto adjoint = sample_gradient(model, sample, c_kr, GradientMode::kAdjoint);

  model::ExitModel probe = model;
  GradCheckReport report;
  for (const auto* spec : model.fields().all()) {
    Accum acc;
    for (const auto& name : model.params().names_in(spec->name)) {
      auto& p = probe.params().get(name);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double keep = p[i];
        p[i] = keep + eps;
        const double up = sample_loss(probe, sample, c_kr).total;
        p[i] = keep - eps;
        const double down = sample_loss(probe, sample, c_kr).total;
        p[i] = keep;
        acc.add((up - down) / (2.0 * eps), direct.grads.get(name)[i], adjoint.grads.get(name)[i]);
      }
    }
    report.groups.push_back(acc.finish(spec->name, floor));
  }

  const auto b = model.bounds();
  auto task_at = [&](model::IntegrationBounds nb) {
    probe.set_bounds(nb);
    const double l = sample_loss(probe, sample, c_kr).task;
    probe.set_bounds(b);
    return l;
  };
  // Central stencil when both sides are feasible, otherwise the second-order
  // forward stencil.
  auto bound_fd = [&](double at, bool central, const auto& loss) {
    if (central) return (loss(at + eps) - loss(at - eps)) / (2.0 * eps);
    return (-3.0 * loss(at) + 4.0 * loss(at + eps) - loss(at + 2.0 * eps)) / (2.0 * eps);
  };
  if (model.mode() == model::Mode::kExit) {
    Accum acc;
    const double fd = bound_fd(b.tau_start, b.tau_start - eps >= 0.0,
                               [&](double v) { return task_at({v, b.tau_end}); });
    acc.add(fd, direct.d_tau_start, adjoint.d_tau_start);
    report.groups.push_back(acc.finish("tau_start", floor));
  }
  if (model.mode() != model::Mode::kFixedExit) {
    Accum acc;
    const double fd = bound_fd(b.tau_end, b.tau_end - eps >= b.tau_start + model::bound_gap(model.terminal()),
                               [&](double v) { return task_at({b.tau_start, v}); });
    acc.add(fd, direct.d_tau_end, adjoint.d_tau_end);
    report.groups.push_back(acc.finish("tau_end", floor));
  }
  return report;
}

}  // namespace exitcde::train
