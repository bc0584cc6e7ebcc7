#include "exitcde/train/gradients.hpp"

#include <optional>

#include "exitcde/errors.hpp"
#include "exitcde/model/pipeline.hpp"
#include "exitcde/train/loss.hpp"

namespace exitcde::train {

const char* gradient_mode_name(GradientMode m) {
  return m == GradientMode::kDirect ? "direct" : "adjoint";
}

GradientMode parse_gradient_mode(const std::string& name) {
  if (name == "direct") return GradientMode::kDirect;
  if (name == "adjoint") return GradientMode::kAdjoint;
  throw ConfigError("unknown gradient mode '" + name + "' (expected direct or adjoint)");
}

namespace {

using field::PlainBackend;
using field::TapeBackend;
using Vec = std::vector<double>;

const diff::NdArray kOne = diff::NdArray::scalar(1.0);

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double c, std::span<const double> x, Vec& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += c * x[i];
}

double plain_kinetic(const solve::Trajectory<Vec>& enc, const solve::Trajectory<Vec>& main) {
  return kinetic_penalty(enc.slopes) + kinetic_penalty(main.slopes);
}

// Task-loss derivatives with respect to both bounds, from the adjoints of the
// combined state at either end and the adjoint of X(tau_start).
void tau_gradients(const model::ExitModel& m, const interp::SplinePath& path, const Vec& x_start,
                   const Vec& a_start, const Vec& x_end, const Vec& a_end, const Vec& g_x,
                   SampleGradient& out) {
  const auto& fs = m.fields();
  const std::size_t h = fs.g.rows;
  PlainBackend b;
  field::BoundField<PlainBackend> g(fs.g, m.params(), b);
  field::BoundField<PlainBackend> f(fs.f, m.params(), b);
  struct Terms {
    Vec g_out, f_out;
  };
  auto terms = [&](const Vec& x, double t) {
    const Vec z(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(h));
    const Vec y(x.begin() + static_cast<std::ptrdiff_t>(h), x.end());
    return Terms{g(z), f(b.append_scalar(y, t))};
  };
  const auto& bounds = m.bounds();

  const auto e = terms(x_end, bounds.tau_end);
  const std::span<const double> ae(a_end);
  out.d_tau_end = tau_end_gradient(ae.first(h), e.g_out, e.f_out) + dot(ae.subspan(h), e.f_out);

  const auto s = terms(x_start, bounds.tau_start);
  const std::span<const double> as(a_start);
  out.d_tau_start = tau_start_gradient(as.first(h), s.g_out, s.f_out) - dot(as.subspan(h), s.f_out);
  if (bounds.tau_start >= path.start() && bounds.tau_start <= path.end()) {
    out.d_tau_start += dot(g_x, path.derivative(bounds.tau_start));
  }
}

SampleGradient direct_gradient(const model::ExitModel& m, const interp::TimeSeriesSample& sample,
                               double c_kr) {
  const auto path = m.path_for(sample);
  diff::Tape tape;
  const TapeBackend b{&tape};
  const auto tr = model::run_forward(m, m.params(), b, path, m.bounds());

  SampleGradient out;
  const diff::Var task = task_loss(tr.output, sample, m.architecture().task);
  diff::Var total = task;
  out.loss.task = task.value()[0];
  out.loss.prediction = tr.output.value().values();
  if (c_kr > 0.0) {
    const diff::Var kin = diff::add(kinetic_penalty(tr.encoder.slopes), kinetic_penalty(tr.main.slopes));
    out.loss.kinetic = kin.value()[0];
    total = diff::add(task, diff::scale(kin, c_kr));
  } else {
    double acc = 0.0;
    for (const auto* traj : {&tr.encoder, &tr.main}) {
      double part = 0.0;
      for (const auto& s : traj->slopes) {
        for (double v : s.value().values()) part += v * v;
      }
      acc += traj->slopes.empty() ? 0.0 : part / static_cast<double>(traj->slopes.size());
    }
    out.loss.kinetic = acc;
  }
  out.loss.total = total.value()[0];

  const auto g_total = tape.backward(total, kOne);
  out.grads = m.params().zeros_like();
  for (auto& [name, arr] : out.grads.arrays()) arr = g_total[name];

  std::optional<diff::Gradients> g_task_only;
  if (c_kr > 0.0) g_task_only = tape.backward(task, kOne);
  const diff::Gradients& gk = g_task_only ? *g_task_only : g_total;
  tau_gradients(m, path, tr.main.states.front().value().values(), gk.of(tr.main.states.front()).values(),
                tr.main.final_state().value().values(), gk.of(tr.main.final_state()).values(),
                gk.of(tr.x_start).values(), out);
  return out;
}

// f, a^T df/dz and a^T df/dtheta of one field evaluation recorded on a fresh
// tape; `names` fixes the order of the parameter block.
template <class Build>
solve::VjpEval tape_vjp(const std::vector<std::string>& names, std::span<const double> z,
                        std::span<const double> a, Build&& build) {
  diff::Tape tape;
  const TapeBackend b{&tape};
  const diff::Var x = b.constant(z);
  const diff::Var y = build(b, x);
  solve::VjpEval r;
  r.f = y.value().values();
  const auto grads = tape.backward(diff::dot(y, b.constant(a)), kOne);
  r.a_dz = grads.of(x).values();
  for (const auto& n : names) {
    const auto& v = grads[n].values();
    r.a_dtheta.insert(r.a_dtheta.end(), v.begin(), v.end());
  }
  return r;
}

struct SweepResult {
  Vec a_start;
  Vec grads;
};

// Backward adjoint over a recorded forward grid. At every grid point the
// optional jump is added to the adjoint, then the kinetic term at each step
// start contributes 2 w J^T F.
template <class Jump>
SweepResult backward_sweep(const solve::VjpDynamics& dyn, std::size_t n_params,
                           const solve::Trajectory<Vec>& fwd, Vec a, double kinetic_weight,
                           const solve::SolverConfig& cfg, solve::AdjointPolicy policy, Jump&& jump) {
  const std::size_t last = fwd.times.size() - 1;
  Vec z = fwd.states.back();
  Vec grads(n_params, 0.0);
  for (std::size_t j = last;; --j) {
    if (policy == solve::AdjointPolicy::kStoredTrajectory) z = fwd.states[j];
    jump(j, a);
    if (j < last && kinetic_weight > 0.0) {
      Vec seed = fwd.slopes[j];
      for (double& v : seed) v *= 2.0 * kinetic_weight;
      const auto e = dyn(fwd.times[j], z, seed);
      axpy(1.0, e.a_dz, a);
      axpy(1.0, e.a_dtheta, grads);
    }
    if (j == 0) break;
    const auto r = solve::integrate_adjoint(dyn, n_params, z, a, fwd.times[j], fwd.times[j - 1], cfg);
    z = r.z_start;
    a = r.a_start;
    axpy(1.0, r.grad_params, grads);
  }
  return {std::move(a), std::move(grads)};
}

std::vector<std::string> concat_names(const field::ParameterSet& p, std::initializer_list<const char*> fields) {
  std::vector<std::string> out;
  for (const char* f : fields) {
    auto n = p.names_in(f);
    out.insert(out.end(), n.begin(), n.end());
  }
  return out;
}

void scatter_add(field::ParameterSet& dst, const std::vector<std::string>& names, const Vec& flat) {
  std::size_t off = 0;
  for (const auto& n : names) {
    for (double& v : dst.get(n).values()) v += flat[off++];
  }
}

void add_named(field::ParameterSet& dst, const diff::Gradients& g, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    auto& d = dst.get(n).values();
    const auto& s = g[n].values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  }
}

SampleGradient adjoint_gradient(const model::ExitModel& m, const interp::TimeSeriesSample& sample,
                                double c_kr, solve::AdjointPolicy policy) {
  const auto& fs = m.fields();
  const auto& params = m.params();
  const auto& arch = m.architecture();
  const std::size_t h = arch.hidden_dim;
  const auto path = m.path_for(sample);
  const auto fwd = model::run_forward(m, params, PlainBackend{}, path, m.bounds());

  SampleGradient out;
  out.grads = params.zeros_like();
  out.loss.prediction = fwd.output;
  out.loss.task = task_loss(fwd.output, sample, arch.task);
  out.loss.kinetic = plain_kinetic(fwd.encoder, fwd.main);
  out.loss.total = out.loss.task + c_kr * out.loss.kinetic;

  // Output head and task loss.
  Vec a_end(h + arch.latent_dim, 0.0);
  {
    diff::Tape tape;
    const TapeBackend b{&tape};
    const Vec& x_end = fwd.main.final_state();
    const diff::Var z_end = b.constant(std::span<const double>(x_end).first(h));
    field::BoundField<TapeBackend> head(fs.output, params, b);
    const auto g = tape.backward(task_loss(head(z_end), sample, arch.task), kOne);
    add_named(out.grads, g, params.names_in("output"));
    const auto az = g.of(z_end).values();
    std::copy(az.begin(), az.end(), a_end.begin());
  }

  // Main combined system.
  const auto main_names = concat_names(params, {"g", "f"});
  std::size_t main_params = 0;
  for (const auto& n : main_names) main_params += params.get(n).size();
  const solve::VjpDynamics main_dyn = [&](double t, std::span<const double> z, std::span<const double> a) {
    return tape_vjp(main_names, z, a, [&](const TapeBackend& b, const diff::Var& x) {
      model::CombinedField<TapeBackend> field(fs, params, b);
      return field(t, x);
    });
  };
  const auto no_jump = [](std::size_t, Vec&) {};
  const double main_w = fwd.main.slopes.empty() ? 0.0 : c_kr / static_cast<double>(fwd.main.slopes.size());
  const auto main = backward_sweep(main_dyn, main_params, fwd.main, a_end, main_w, m.solver(), policy, no_jump);
  scatter_add(out.grads, main_names, main.grads);
  Vec a_start_task = main.a_start;
  if (main_w > 0.0) {
    a_start_task = backward_sweep(main_dyn, main_params, fwd.main, a_end, 0.0, m.solver(), policy, no_jump).a_start;
  }

  // Mappers: readouts -> Y0 and X(tau_start) -> z0.
  std::vector<Vec> readout_seeds(fwd.readouts.size());
  Vec g_x;
  {
    diff::Tape tape;
    const TapeBackend b{&tape};
    std::vector<diff::Var> r;
    for (const auto& e : fwd.readouts) r.push_back(b.constant(e));
    const auto init = model::init_states(m, params, b, std::span<const diff::Var>(r), path,
                                         m.bounds().tau_start, nullptr);
    const std::span<const double> as(main.a_start);
    const diff::Var s = diff::add(diff::dot(init.z0, b.constant(as.first(h))),
                                  diff::dot(init.y0, b.constant(as.subspan(h))));
    const auto g = tape.backward(s, kOne);
    add_named(out.grads, g, params.names_in("phi_z"));
    add_named(out.grads, g, params.names_in("phi_Y"));
    for (std::size_t i = 0; i < r.size(); ++i) readout_seeds[i] = g.of(r[i]).values();
    const auto gt = tape.backward(diff::dot(init.z0, b.constant(std::span<const double>(a_start_task).first(h))), kOne);
    g_x = gt.of(init.x_start).values();
  }
  tau_gradients(m, path, fwd.main.states.front(), a_start_task, fwd.main.final_state(), a_end, g_x, out);

  // Encoder, with readout adjoints injected at their grid points.
  std::vector<int> seed_at(fwd.encoder.times.size(), -1);
  for (std::size_t i = 0; i < fwd.readout_times.size(); ++i) {
    seed_at[model::detail::grid_index(fwd.encoder.times, fwd.readout_times[i])] = static_cast<int>(i);
  }
  const auto k_names = params.names_in("k");
  std::size_t k_params = 0;
  for (const auto& n : k_names) k_params += params.get(n).size();
  const solve::VjpDynamics enc_dyn = [&](double t, std::span<const double> z, std::span<const double> a) {
    return tape_vjp(k_names, z, a, [&](const TapeBackend& b, const diff::Var& x) {
      model::EncoderField<TapeBackend> k(fs, params, b, path);
      return k(t, x);
    });
  };
  const double enc_w =
      fwd.encoder.slopes.empty() ? 0.0 : c_kr / static_cast<double>(fwd.encoder.slopes.size());
  const auto enc = backward_sweep(
      enc_dyn, k_params, fwd.encoder, Vec(arch.encoder_dim, 0.0), enc_w, m.solver(), policy,
      [&](std::size_t j, Vec& a) {
        if (seed_at[j] >= 0) axpy(1.0, readout_seeds[static_cast<std::size_t>(seed_at[j])], a);
      });
  scatter_add(out.grads, k_names, enc.grads);

  // e(0) = linear map of X(0).
  {
    diff::Tape tape;
    const TapeBackend b{&tape};
    field::BoundField<TapeBackend> e0(fs.e0, params, b);
    const diff::Var e = e0(b.constant(path.eval(path.start())));
    add_named(out.grads, tape.backward(diff::dot(e, b.constant(enc.a_start)), kOne), params.names_in("e0"));
  }
  return out;
}

}  // namespace

SampleLoss sample_loss(const model::ExitModel& m, const interp::TimeSeriesSample& sample, double c_kr) {
  const auto path = m.path_for(sample);
  const auto tr = model::run_forward(m, m.params(), PlainBackend{}, path, m.bounds());
  SampleLoss out;
  out.prediction = tr.output;
  out.task = task_loss(tr.output, sample, m.architecture().task);
  out.kinetic = plain_kinetic(tr.encoder, tr.main);
  out.total = out.task + c_kr * out.kinetic;
  return out;
}

SampleGradient sample_gradient(const model::ExitModel& m, const interp::TimeSeriesSample& sample,
                               double c_kr, GradientMode mode, solve::AdjointPolicy policy) {
  if (c_kr < 0.0) throw ConfigError("c_kr must be non-negative");
  if (mode == GradientMode::kDirect) return direct_gradient(m, sample, c_kr);
  return adjoint_gradient(m, sample, c_kr, policy);
}

}  // namespace exitcde::train
