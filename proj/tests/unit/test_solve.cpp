#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "exitcde/diff/tape.hpp"
#include "exitcde/errors.hpp"
#include "exitcde/solve/adjoint.hpp"
#include "exitcde/solve/solver.hpp"

using namespace exitcde;
using namespace exitcde::solve;
using Vec = std::vector<double>;

namespace {

SolverConfig fixed(Method m, double step) {
  SolverConfig c;
  c.method = m;
  c.step = step;
  return c;
}

SolverConfig adaptive(double rtol, double atol) {
  SolverConfig c;
  c.method = Method::kDopri5;
  c.rtol = rtol;
  c.atol = atol;
  return c;
}

const auto growth = [](double, const Vec& z) { return z; };

double growth_error(Method m, double step) {
  return std::abs(integrate(growth, Vec{1.0}, 0.0, 1.0, fixed(m, step)).final_state()[0] - std::exp(1.0));
}

double observed_order(Method m) {
  double worst = std::numeric_limits<double>::infinity();
  for (double s : {1.0 / 8, 1.0 / 16, 1.0 / 32}) {
    worst = std::min(worst, std::log2(growth_error(m, s) / growth_error(m, s / 2)));
  }
  return worst;
}

// Two-layer tanh field f(z) = W2 tanh(W1 z + b1) with a flat parameter vector.
struct TwoLayer {
  std::size_t n = 3, h = 5;
  Vec theta;

  std::size_t size() const { return h * n + h + n * h; }

  static diff::Var apply(diff::Var z, diff::Var w1, diff::Var b1, diff::Var w2) {
    return diff::matmul(w2, diff::tanh(diff::add(diff::matmul(w1, z), b1)));
  }

  struct Bound {
    diff::Var w1, b1, w2;
  };

  Bound bind(diff::Tape& t, std::span<const double> p) const {
    auto slice = [&](std::size_t off, diff::Shape s) {
      return diff::NdArray(s, Vec(p.begin() + off, p.begin() + off + s.size()));
    };
    return {t.parameter("w1", slice(0, diff::Shape{h, n})), t.parameter("b1", slice(h * n, diff::Shape{h})),
            t.parameter("w2", slice(h * n + h, diff::Shape{n, h}))};
  }

  Vec flat_grad(const diff::Gradients& g) const {
    Vec out;
    for (const char* name : {"w1", "b1", "w2"}) {
      const auto& a = g[name];
      out.insert(out.end(), a.values().begin(), a.values().end());
    }
    return out;
  }

  VjpEval vjp(std::span<const double> z, std::span<const double> a) const {
    diff::Tape t;
    const Bound b = bind(t, theta);
    const diff::Var zv = t.constant(diff::NdArray::vector(Vec(z.begin(), z.end())));
    const diff::Var f = apply(zv, b.w1, b.b1, b.w2);
    const diff::Gradients g = t.backward(f, diff::NdArray::vector(Vec(a.begin(), a.end())));
    return {f.value().values(), g.of(zv).values(), flat_grad(g)};
  }
};

}  // namespace

TEST(Euler, SingleStep) {
  const Vec z = euler_step([](double, const Vec&) { return Vec{2.0, -1.0}; }, Vec{1.0, 1.0}, 0.0, 0.1);
  EXPECT_NEAR(z[0], 1.2, 1e-15);
  EXPECT_NEAR(z[1], 0.9, 1e-15);
}

TEST(Euler, ZeroFieldKeepsState) {
  const Vec z0{0.3, -4.0};
  EXPECT_EQ(euler_step([](double, const Vec&) { return Vec{0.0, 0.0}; }, z0, 0.0, 0.1), z0);
}

TEST(Euler, CompoundGrowth) {
  const auto tr = integrate(growth, Vec{1.0}, 0.0, 1.0, fixed(Method::kEuler, 0.1));
  EXPECT_EQ(tr.times.size(), 11u);
  EXPECT_NEAR(tr.final_state()[0], std::pow(1.1, 10), 1e-12);
  EXPECT_NEAR(tr.final_state()[0], 2.59374246, 1e-8);
}

TEST(Rk4, ConstantFieldIsExact) {
  const Vec z = rk4_step([](double, const Vec&) { return Vec{3.0, -0.5}; }, Vec{1.0, 2.0}, 0.0, 0.25);
  EXPECT_NEAR(z[0], 1.75, 1e-15);
  EXPECT_NEAR(z[1], 1.875, 1e-15);
}

TEST(Rk4, ExponentialStep) {
  const double z = rk4_step(growth, Vec{1.0}, 0.0, 0.1)[0];
  EXPECT_NEAR(z, 1.0 + 0.1 + 0.01 / 2 + 0.001 / 6 + 0.0001 / 24, 1e-15);
  // One step reproduces the quartic Taylor polynomial; local error is h^5/120 + O(h^6).
  EXPECT_NEAR(z, 1.10517091808, 0.1 * 0.1 * 0.1 * 0.1 * 0.1 / 120 * 1.03);
}

TEST(Rk4, HalvingStepShrinksErrorSixteenfold) {
  const double ratio = growth_error(Method::kRk4, 0.1) / growth_error(Method::kRk4, 0.05);
  EXPECT_NEAR(ratio, 16.0, 1.0);
}

TEST(Orders, EulerFirstRk4Fourth) {
  EXPECT_GE(observed_order(Method::kEuler), 0.9);
  EXPECT_GE(observed_order(Method::kRk4), 3.8);
}

TEST(Dopri5, ExponentialDecay) {
  const double rtol = 1e-6;
  const auto tr = integrate([](double, const Vec& z) { return Vec{-z[0]}; }, Vec{1.0}, 0.0, 1.0,
                            adaptive(rtol, 1e-9));
  const double err = std::abs(tr.final_state()[0] - std::exp(-1.0));
  EXPECT_LT(err, 1e-5);
  EXPECT_LE(err, 50 * rtol);
}

TEST(Dopri5, Rotation) {
  const double rtol = 1e-6;
  const auto tr = integrate([](double, const Vec& z) { return Vec{z[1], -z[0]}; }, Vec{1.0, 0.0}, 0.0,
                            std::numbers::pi, adaptive(rtol, 1e-9));
  EXPECT_NEAR(tr.final_state()[0], -1.0, 1e-4);
  EXPECT_NEAR(tr.final_state()[1], 0.0, 1e-4);
  EXPECT_LE(std::hypot(tr.final_state()[0] + 1.0, tr.final_state()[1]), 50 * rtol);
}

TEST(Dopri5, LandsExactlyOnBreakpoints) {
  const Vec stops{0.3, 0.71, 1.5};
  const auto tr = integrate(growth, Vec{1.0}, 0.0, 2.0, adaptive(1e-6, 1e-9), stops);
  for (double b : stops) {
    EXPECT_NE(std::find(tr.times.begin(), tr.times.end(), b), tr.times.end()) << b;
  }
  EXPECT_EQ(tr.times.front(), 0.0);
  EXPECT_EQ(tr.times.back(), 2.0);
}

TEST(Dopri5, BlowUpIsReported) {
  SolverConfig c = adaptive(1e-8, 1e-10);
  c.max_steps = 10000;
  EXPECT_THROW(integrate([](double, const Vec& z) { return Vec{z[0] * z[0]}; }, Vec{1.0}, 0.0, 2.0, c),
               IntegrationError);
}

TEST(Integrate, TrajectoryShape) {
  const auto tr = integrate(growth, Vec{1.0}, 0.5, 1.25, fixed(Method::kRk4, 0.1));
  EXPECT_EQ(tr.times.size(), tr.states.size());
  EXPECT_EQ(tr.slopes.size() + 1, tr.states.size());
  EXPECT_EQ(tr.times.front(), 0.5);
  EXPECT_EQ(tr.times.back(), 1.25);
}

TEST(Integrate, EmptyIntervalIsForbidden) {
  EXPECT_THROW(integrate(growth, Vec{1.0}, 1.0, 1.0, fixed(Method::kRk4, 0.1)), IntegrationError);
}

TEST(Integrate, ReversedConstantIntegral) {
  const auto c = [](double, const Vec&) { return Vec{2.5}; };
  for (Method m : {Method::kEuler, Method::kRk4}) {
    EXPECT_NEAR(integrate(c, Vec{1.0}, 1.0, 0.0, fixed(m, 0.1)).final_state()[0], -1.5, 1e-14);
  }
  EXPECT_NEAR(integrate(c, Vec{1.0}, 1.0, 0.0, adaptive(1e-6, 1e-9)).final_state()[0], -1.5, 1e-12);
}

TEST(Integrate, StepBudgetReportsReachedTime) {
  SolverConfig c = fixed(Method::kRk4, 0.01);
  c.max_steps = 10;
  try {
    integrate(growth, Vec{1.0}, 0.0, 1.0, c);
    FAIL() << "expected IntegrationError";
  } catch (const IntegrationError& e) {
    EXPECT_NEAR(e.t(), 0.1, 1e-12);
  }
}

TEST(Integrate, NonFiniteFieldCarriesTime) {
  const auto bad = [](double t, const Vec& z) { return Vec{t > 0.45 ? std::nan("") : z[0]}; };
  try {
    integrate(bad, Vec{1.0}, 0.0, 1.0, fixed(Method::kEuler, 0.1));
    FAIL() << "expected IntegrationError";
  } catch (const IntegrationError& e) {
    EXPECT_NEAR(e.t(), 0.5, 1e-12);
  }
}

TEST(Integrate, InvalidConfigIsRejected) {
  EXPECT_THROW(integrate(growth, Vec{1.0}, 0.0, 1.0, fixed(Method::kRk4, 0.0)), ConfigError);
  EXPECT_THROW(integrate(growth, Vec{1.0}, 0.0, 1.0, adaptive(-1.0, 1e-9)), ConfigError);
}

TEST(FixedGrid, BreakpointsBecomeGridPoints) {
  const Vec knots{0.25, 0.6, 0.61};
  const Vec g = fixed_grid(0.0, 1.0, 0.2, knots);
  for (double k : knots) EXPECT_NE(std::find(g.begin(), g.end(), k), g.end()) << k;
  for (std::size_t i = 0; i + 1 < g.size(); ++i) EXPECT_LE(g[i + 1] - g[i], 0.2 + 1e-15);
}

TEST(FixedGrid, FullStepsFromTheStartThenRemainder) {
  const Vec g = fixed_grid(0.0, 1.05, 0.25);
  ASSERT_EQ(g.size(), 6u);
  EXPECT_EQ(g[4], 1.0);
  EXPECT_EQ(g[5], 1.05);
  EXPECT_EQ(fixed_grid(0.0, 1.0, 0.25).size(), 5u);
}

TEST(FixedGrid, SolutionIsContinuousInTheEndpoint) {
  const auto at = [](double t1) {
    return integrate(growth, Vec{1.0}, 0.0, t1, fixed(Method::kRk4, 0.25)).final_state()[0];
  };
  EXPECT_NEAR(at(1.0 + 1e-9), at(1.0 - 1e-9), 1e-8);
}

TEST(Reversal, LinearFieldReturnsToStart) {
  const auto lin = [](double, const Vec& z) { return Vec{0.3 * z[0] - z[1], z[0] + 0.1 * z[1]}; };
  const SolverConfig c = fixed(Method::kRk4, 0.01);
  const Vec z1 = integrate(lin, Vec{1.0, -0.5}, 0.0, 2.0, c).final_state();
  const Vec z0 = integrate(lin, z1, 2.0, 0.0, c).final_state();
  EXPECT_NEAR(z0[0], 1.0, 1e-6);
  EXPECT_NEAR(z0[1], -0.5, 1e-6);
}

TEST(Adjoint, FrozenDynamicsPassSeedThrough) {
  const VjpDynamics zero = [](double, std::span<const double> z, std::span<const double>) {
    return VjpEval{Vec(z.size(), 0.0), Vec(z.size(), 0.0), Vec(2, 0.0)};
  };
  const Vec seed{0.4, -1.2};
  const auto r = integrate_adjoint(zero, 2, Vec{1.0, 2.0}, seed, 1.0, 0.0, fixed(Method::kRk4, 0.1));
  EXPECT_EQ(r.a_start, seed);
  EXPECT_EQ(r.grad_params, (Vec{0.0, 0.0}));
}

TEST(Adjoint, ScalarGrowthRate) {
  const double theta = 0.7;
  const VjpDynamics f = [&](double, std::span<const double> z, std::span<const double> a) {
    return VjpEval{Vec{theta * z[0]}, Vec{a[0] * theta}, Vec{a[0] * z[0]}};
  };
  const SolverConfig c = adaptive(1e-10, 1e-12);
  const Vec z1 = integrate([&](double, const Vec& z) { return Vec{theta * z[0]}; }, Vec{1.0}, 0.0, 1.0, c)
                     .final_state();
  const auto r = integrate_adjoint(f, 1, z1, Vec{1.0}, 1.0, 0.0, c);
  EXPECT_NEAR(r.grad_params[0], std::exp(0.7), 1e-7);
  EXPECT_NEAR(r.grad_params[0], 2.01375, 1e-5);
  EXPECT_NEAR(r.a_start[0], std::exp(0.7), 1e-7);
  EXPECT_NEAR(r.z_start[0], 1.0, 1e-8);

  const double eps = 1e-6;
  auto end = [&](double th) {
    return integrate([&](double, const Vec& z) { return Vec{th * z[0]}; }, Vec{1.0}, 0.0, 1.0, c)
        .final_state()[0];
  };
  EXPECT_NEAR(r.grad_params[0], (end(theta + eps) - end(theta - eps)) / (2 * eps), 1e-6);
}

TEST(Adjoint, MatchesBackpropThroughSolver) {
  TwoLayer field;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  field.theta.resize(field.size());
  for (double& v : field.theta) v = u(rng);
  const Vec z0{0.5, -0.3, 0.9};
  const Vec w{1.0, -2.0, 0.5};  // L = w . z(T)
  const SolverConfig c = fixed(Method::kRk4, 0.01);

  diff::Tape tape;
  const auto b = field.bind(tape, field.theta);
  const diff::Var z0v = tape.constant(diff::NdArray::vector(z0));
  const auto traj = integrate(
      [&](double, const diff::Var& z) { return field.apply(z, b.w1, b.b1, b.w2); }, z0v, 0.0, 1.5, c);
  const diff::Gradients g = tape.backward(traj.final_state(), diff::NdArray::vector(w));
  const Vec direct = field.flat_grad(g);

  const VjpDynamics dyn = [&](double, std::span<const double> z, std::span<const double> a) {
    return field.vjp(z, a);
  };
  const Vec z_end = traj.final_state().value().values();
  for (AdjointPolicy policy : {AdjointPolicy::kRecompute, AdjointPolicy::kStoredTrajectory}) {
    Trajectory<Vec> stored;
    stored.times = traj.times;
    for (const auto& s : traj.states) stored.states.push_back(s.value().values());
    const auto r = integrate_adjoint(dyn, field.size(), z_end, w, 1.5, 0.0, c, {}, policy, &stored);
    double err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < direct.size(); ++i) {
      err = std::max(err, std::abs(direct[i] - r.grad_params[i]));
      scale = std::max(scale, std::abs(direct[i]));
    }
    EXPECT_LE(err / scale, 1e-4);
    const Vec dz0 = g.of(z0v).values();
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(r.a_start[i], dz0[i], 1e-4 * scale);
  }
}
