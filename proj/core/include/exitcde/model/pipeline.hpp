#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "exitcde/errors.hpp"
#include "exitcde/field/backend.hpp"
#include "exitcde/model/exit_model.hpp"
#include "exitcde/solve/solver.hpp"

// Forward computation of the model, generic over an evaluation backend so the
// same code yields plain predictions and taped graphs.
namespace exitcde::model {

// de/dt = k(e) dX/dt.
template <class Backend>
class EncoderField {
 public:
  using Value = typename Backend::Value;

  EncoderField(const FieldSpecs& fs, const field::ParameterSet& params, const Backend& backend,
               const interp::SplinePath& path)
      : k_(fs.k, params, backend), backend_(backend), path_(&path), dx_(path.channels()) {}

  Value operator()(double t, const Value& e) {
    path_->derivative(t, dx_);
    return k_.apply_matrix(e, backend_.constant(dx_));
  }

 private:
  field::BoundField<Backend> k_;
  Backend backend_;
  const interp::SplinePath* path_;
  std::vector<double> dx_;
};

// d[z;Y]/dt = [g(z) f(Y,t); f(Y,t)] with one shared evaluation of f.
template <class Backend>
class CombinedField {
 public:
  using Value = typename Backend::Value;

  CombinedField(const FieldSpecs& fs, const field::ParameterSet& params, const Backend& backend)
      : g_(fs.g, params, backend),
        f_(fs.f, params, backend),
        backend_(backend),
        hidden_(fs.g.rows),
        latent_(fs.g.cols) {}

  Value operator()(double t, const Value& x) const {
    const auto n = Backend::values(x).size();
    if (n != hidden_ + latent_) {
      throw ShapeError("combined state has " + std::to_string(n) + " entries, expected " +
                       std::to_string(hidden_) + " + " + std::to_string(latent_));
    }
    const Value z = backend_.slice(x, 0, hidden_);
    const Value y = backend_.slice(x, hidden_, latent_);
    const Value fy = f_(backend_.append_scalar(y, t));
    const std::array<Value, 2> parts{g_.apply_matrix(z, fy), fy};
    return backend_.concat(parts);
  }

  std::size_t hidden() const { return hidden_; }
  std::size_t latent() const { return latent_; }

 private:
  field::BoundField<Backend> g_;
  field::BoundField<Backend> f_;
  Backend backend_;
  std::size_t hidden_, latent_;
};

// Every intermediate of one forward pass.
template <class Backend>
struct ForwardTrace {
  using Value = typename Backend::Value;

  std::vector<double> readout_times;
  solve::Trajectory<Value> encoder;
  std::vector<Value> readouts;
  Value x_start;  // X(tau_start), the phi_z input
  Value z0;
  Value y0;
  solve::Trajectory<Value> main;
  Value output;
  std::vector<std::string> warnings;
};

namespace detail {

template <class F>
auto tagged(const char* stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StiffnessError& e) {
    throw StiffnessError(std::string(stage) + ": " + e.what(), e.t());
  } catch (const IntegrationError& e) {
    throw IntegrationError(std::string(stage) + ": " + e.what(), e.t());
  } catch (const DomainError& e) {
    throw DomainError(std::string(stage) + ": " + e.what(), e.t(), e.lower(), e.upper());
  } catch (const ShapeError& e) {
    throw ShapeError(std::string(stage) + ": " + e.what());
  }
}

// Index of `t` in an ascending grid that contains it exactly.
inline std::size_t grid_index(const std::vector<double>& times, double t) {
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end() || *it != t) {
    throw Error("readout time " + std::to_string(t) + " is not on the encoder grid");
  }
  return static_cast<std::size_t>(it - times.begin());
}

}  // namespace detail

// X(tau_start) with tau_start clamped into the path domain.
inline std::vector<double> path_at_start(const interp::SplinePath& path, double tau_start,
                                         std::vector<std::string>* warnings) {
  double q = tau_start;
  if (q > path.end() || q < path.start()) {
    q = std::clamp(q, path.start(), path.end());
    if (warnings) {
      warnings->push_back("tau_start " + std::to_string(tau_start) +
                          " lies outside the path domain; X queried at " + std::to_string(q));
    }
  }
  return path.eval(q);
}

template <class Backend>
struct LatentInit {
  typename Backend::Value x_start;
  typename Backend::Value z0;
  typename Backend::Value y0;
};

// Y0 = phi_Y(readouts, zero-padded in front to the configured count) and
// z0 = phi_z(X(tau_start)).
template <class Backend>
LatentInit<Backend> init_states(const ExitModel& model, const field::ParameterSet& params,
                                const Backend& backend,
                                std::span<const typename Backend::Value> readouts,
                                const interp::SplinePath& path, double tau_start,
                                std::vector<std::string>* warnings) {
  using Value = typename Backend::Value;
  const Architecture& arch = model.architecture();
  if (readouts.size() > arch.readouts) {
    throw ShapeError("got " + std::to_string(readouts.size()) + " readouts, phi_Y takes at most " +
                     std::to_string(arch.readouts));
  }
  std::vector<Value> parts;
  const std::size_t missing = arch.readouts - readouts.size();
  if (missing > 0) {
    parts.push_back(backend.constant(std::vector<double>(missing * arch.encoder_dim, 0.0)));
  }
  parts.insert(parts.end(), readouts.begin(), readouts.end());
  LatentInit<Backend> out;
  field::BoundField<Backend> phi_y(model.fields().phi_y, params, backend);
  out.y0 = phi_y(backend.concat(parts));
  out.x_start = backend.constant(path_at_start(path, tau_start, warnings));
  field::BoundField<Backend> phi_z(model.fields().phi_z, params, backend);
  out.z0 = phi_z(out.x_start);
  return out;
}

template <class Backend>
ForwardTrace<Backend> run_forward(const ExitModel& model, const field::ParameterSet& params,
                                  const Backend& backend, const interp::SplinePath& path,
                                  const IntegrationBounds& bounds) {
  using Value = typename Backend::Value;
  const FieldSpecs& fs = model.fields();
  const Architecture& arch = model.architecture();
  ForwardTrace<Backend> tr;

  // Encoder over the whole observation window, readouts at the last knots.
  tr.readout_times = model.readout_times(path);
  tr.encoder = detail::tagged("encoder", [&] {
    field::BoundField<Backend> e0(fs.e0, params, backend);
    const Value e_init = e0(backend.constant(path.eval(path.start())));
    EncoderField<Backend> k(fs, params, backend, path);
    return solve::integrate(k, e_init, path.start(), path.end(), model.solver(), path.knots());
  });
  for (double t : tr.readout_times) {
    tr.readouts.push_back(tr.encoder.states[detail::grid_index(tr.encoder.times, t)]);
  }

  detail::tagged("init_latent_states", [&] {
    auto init = init_states(model, params, backend, std::span<const Value>(tr.readouts), path,
                            bounds.tau_start, &tr.warnings);
    tr.x_start = std::move(init.x_start);
    tr.z0 = std::move(init.z0);
    tr.y0 = std::move(init.y0);
    return 0;
  });

  tr.main = detail::tagged("main", [&] {
    CombinedField<Backend> field(fs, params, backend);
    const std::array<Value, 2> x0{tr.z0, tr.y0};
    return solve::integrate(field, backend.concat(x0), bounds.tau_start, bounds.tau_end,
                            model.solver());
  });

  detail::tagged("output_head", [&] {
    field::BoundField<Backend> head(fs.output, params, backend);
    tr.output = head(backend.slice(tr.main.final_state(), 0, arch.hidden_dim));
    return 0;
  });
  return tr;
}

}  // namespace exitcde::model
