#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "exitcde/diff/finite_diff.hpp"
#include "exitcde/errors.hpp"
#include "exitcde/field/backend.hpp"
#include "exitcde/field/mlp.hpp"

using namespace exitcde;
using namespace exitcde::field;
using Vec = std::vector<double>;

namespace {

FieldSpec cde_g(std::size_t in, std::vector<std::size_t> hidden, std::size_t rows, std::size_t cols) {
  FieldSpec s;
  s.role = Role::kCdeG;
  s.name = "g";
  s.input_width = in;
  for (std::size_t w : hidden) s.layers.push_back({w, Activation::kRelu});
  s.layers.push_back({rows * cols, Activation::kTanh});
  s.rows = rows;
  s.cols = cols;
  return s;
}

FieldSpec mlp(Role role, std::size_t in, std::vector<LayerSpec> layers) {
  FieldSpec s;
  s.role = role;
  s.name = role_name(role);
  s.input_width = in;
  s.layers = std::move(layers);
  return s;
}

Vec random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST(EvalField, ZeroFinalLayerGivesZeroMatrix) {
  const FieldSpec g = cde_g(3, {8}, 3, 2);
  ParameterSet p;
  init_params(g, 1, p);
  for (double& w : p.get(weight_name(g, 1)).values()) w = 0.0;
  for (std::uint64_t s : {2u, 3u, 4u}) {
    const auto out = eval_field(g, p, random_vec(3, s));
    EXPECT_EQ(out.shape(), (diff::Shape{3, 2}));
    for (double v : out.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(EvalField, CharacterTrajectoriesCdeShape) {
  const FieldSpec g = cde_g(40, {90, 90}, 40, 4);
  EXPECT_NO_THROW(g.validate());
  EXPECT_EQ(g.layers.back().width, 160u);
  ParameterSet p;
  init_params(g, 0, p);
  const auto out = eval_field(g, p, random_vec(40, 1));
  EXPECT_EQ(out.shape(), (diff::Shape{40, 4}));
  EXPECT_EQ(out.size(), 160u);
}

TEST(EvalField, IdentityLayerCopiesInput) {
  const FieldSpec s = mlp(Role::kOutputHead, 3, {{3, Activation::kIdentity}});
  ParameterSet p;
  p.set(weight_name(s, 0), diff::NdArray::identity(3));
  p.set(bias_name(s, 0), diff::NdArray(diff::Shape{3}));
  const Vec v{0.5, -7.0, 3.25};
  EXPECT_EQ(eval_field(s, p, v).values(), v);
}

TEST(EvalField, WidthMismatchNamesLayer) {
  const FieldSpec s = mlp(Role::kOdeF, 4, {{5, Activation::kTanh}, {3, Activation::kIdentity}});
  ParameterSet p;
  init_params(s, 0, p);
  try {
    eval_field(s, p, Vec{1.0, 2.0});
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos) << e.what();
  }
}

TEST(EvalField, ReshapeRoundTrip) {
  const FieldSpec g = cde_g(2, {4}, 3, 2);
  ParameterSet p;
  init_params(g, 5, p);
  const Vec in{0.1, -0.4};
  const auto m = eval_field(g, p, in);
  PlainBackend b;
  BoundField<PlainBackend> f(g, p, b);
  EXPECT_EQ(m.values(), f(in));
}

TEST(CdeDynamics, ZeroDerivativeFreezes) {
  const FieldSpec g = cde_g(3, {6}, 3, 2);
  ParameterSet p;
  init_params(g, 2, p);
  for (double v : cde_dynamics(g, p, random_vec(3, 9), Vec{0.0, 0.0})) EXPECT_EQ(v, 0.0);
}

TEST(CdeDynamics, UnitScalarPathIsAutonomousOde) {
  const FieldSpec g = cde_g(3, {6}, 3, 1);
  ParameterSet p;
  init_params(g, 4, p);
  const Vec z = random_vec(3, 10);
  EXPECT_EQ(cde_dynamics(g, p, z, Vec{1.0}), eval_field(g, p, z).values());
}

TEST(CdeDynamics, MatchesIndependentMatVec) {
  const FieldSpec g = cde_g(4, {7}, 4, 3);
  ParameterSet p;
  init_params(g, 6, p);
  const Vec z = random_vec(4, 11), v = random_vec(3, 12);
  const auto m = eval_field(g, p, z);
  const Vec got = cde_dynamics(g, p, z, v);
  for (std::size_t r = 0; r < 4; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < 3; ++c) acc += m.values()[r * 3 + c] * v[c];
    EXPECT_NEAR(got[r], acc, 1e-14);
  }
}

TEST(CdeDynamics, DimensionMismatch) {
  const FieldSpec g = cde_g(3, {6}, 3, 2);
  ParameterSet p;
  init_params(g, 2, p);
  EXPECT_THROW(cde_dynamics(g, p, Vec(3, 0.0), Vec(3, 0.0)), ShapeError);
}

TEST(Init, SameSeedSameParameters) {
  const FieldSpec g = cde_g(5, {9, 9}, 5, 2);
  ParameterSet a, b, c;
  init_params(g, 42, a);
  init_params(g, 42, b);
  init_params(g, 43, c);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == c);
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    for (double v : a.get(bias_name(g, i)).values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Init, FanInBound) {
  const FieldSpec s = mlp(Role::kMapperPhiZ, 100, {{50, Activation::kIdentity}});
  ParameterSet p;
  init_params(s, 3, p);
  for (double v : p.get(weight_name(s, 0)).values()) EXPECT_LE(std::abs(v), 0.1);
}

TEST(Init, SampleMeanNearZero) {
  const FieldSpec s = mlp(Role::kMapperPhiY, 100, {{100, Activation::kIdentity}});
  ParameterSet p;
  init_params(s, 17, p);
  const auto& w = p.get(weight_name(s, 0)).values();
  ASSERT_EQ(w.size(), 10000u);
  double mean = 0.0;
  for (double v : w) mean += v;
  mean /= static_cast<double>(w.size());
  const double sigma = 0.1 / std::sqrt(3.0) / std::sqrt(static_cast<double>(w.size()));
  EXPECT_LE(std::abs(mean), 3 * sigma);
}

TEST(Validate, LipschitzPolicyRejectsByDefault) {
  for (Activation a : {Activation::kSigmoid, Activation::kElu}) {
    FieldSpec s = mlp(Role::kCdeK, 3, {{4, a}, {6, Activation::kTanh}});
    s.rows = 3;
    s.cols = 2;
    try {
      s.validate();
      FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos);
    }
    s.allowed_hidden.push_back(a);
    EXPECT_NO_THROW(s.validate());
  }
  FieldSpec ok = mlp(Role::kOdeF, 3, {{4, Activation::kTanh}, {4, Activation::kRelu}, {2, Activation::kIdentity}});
  EXPECT_NO_THROW(ok.validate());
}

TEST(Validate, CdeFinalWidthMustMatchReshape) {
  FieldSpec g = cde_g(3, {6}, 3, 2);
  g.layers.back().width = 5;
  EXPECT_THROW(g.validate(), ConfigError);
  g.layers.back().width = 6;
  g.rows = 0;
  EXPECT_THROW(g.validate(), ConfigError);
}

TEST(Activation, GlyphsAndNames) {
  EXPECT_EQ(parse_activation("rho"), Activation::kRelu);
  EXPECT_EQ(parse_activation("xi"), Activation::kTanh);
  EXPECT_EQ(parse_activation("sigma"), Activation::kSigmoid);
  EXPECT_EQ(parse_activation("epsilon"), Activation::kElu);
  EXPECT_EQ(parse_activation("fc"), Activation::kIdentity);
  for (Activation a : {Activation::kIdentity, Activation::kTanh, Activation::kRelu, Activation::kSigmoid,
                       Activation::kElu}) {
    EXPECT_EQ(parse_activation(activation_name(a)), a);
  }
  EXPECT_THROW(parse_activation("gelu"), ConfigError);
}

TEST(Backends, TapeMatchesPlain) {
  FieldSpec f = mlp(Role::kOdeF, 4,
                    {{6, Activation::kTanh}, {6, Activation::kSigmoid}, {5, Activation::kElu}, {3, Activation::kIdentity}});
  ParameterSet p;
  init_params(f, 8, p);
  const Vec in = random_vec(4, 3);
  diff::Tape tape;
  TapeBackend tb{&tape};
  BoundField<TapeBackend> bf(f, p, tb);
  const auto out = bf(tb.constant(in));
  const Vec plain = eval_field(f, p, in).values();
  for (std::size_t i = 0; i < plain.size(); ++i) EXPECT_NEAR(out.value().values()[i], plain[i], 1e-15);
}

TEST(Backends, ParameterGradientsMatchFiniteDifferences) {
  FieldSpec g = cde_g(3, {5}, 3, 2);
  g.layers.front().activation = Activation::kTanh;
  ParameterSet p;
  init_params(g, 12, p);
  const Vec z = random_vec(3, 13), v = random_vec(2, 14), w = random_vec(3, 15);

  diff::Tape tape;
  TapeBackend tb{&tape};
  BoundField<TapeBackend> bf(g, p, tb);
  const auto out = bf.apply_matrix(tb.constant(z), tb.constant(v));
  const diff::Gradients grads = tape.backward(out, diff::NdArray::vector(w));

  for (const auto& [name, value] : p.arrays()) {
    const diff::NdArray fd = diff::finite_difference_grad(
        [&, n = name](const diff::NdArray& q) {
          ParameterSet pq = p;
          pq.set(n, q);
          const Vec o = cde_dynamics(g, pq, z, v);
          double s = 0.0;
          for (std::size_t i = 0; i < o.size(); ++i) s += w[i] * o[i];
          return s;
        },
        value, 1e-6);
    const auto& an = grads[name];
    double err = 0.0, scale = 1e-8;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      err = std::max(err, std::abs(an.values()[i] - fd.values()[i]));
      scale = std::max(scale, std::abs(fd.values()[i]));
    }
    EXPECT_LE(err / scale, 1e-5) << name;
  }
}
