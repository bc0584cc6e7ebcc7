#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "exitcde/diff/finite_diff.hpp"
#include "exitcde/diff/ndarray.hpp"
#include "exitcde/diff/tape.hpp"
#include "exitcde/errors.hpp"

using namespace exitcde;
using namespace exitcde::diff;

namespace {

NdArray random_array(Shape s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  NdArray a(s);
  for (double& v : a.values()) v = u(rng);
  return a;
}

// Max relative difference of backward() against central differences for a
// scalar function of a single parameter.
double primitive_error(const std::function<Var(Tape&, Var)>& f, const NdArray& p) {
  Tape tape;
  const Var x = tape.parameter("x", p);
  const Var out = f(tape, x);
  const NdArray g = tape.backward(out, NdArray::scalar(1.0))["x"];
  const NdArray fd = finite_difference_grad(
      [&](const NdArray& q) {
        Tape t;
        return f(t, t.parameter("x", q)).value()[0];
      },
      p, 1e-6);
  double err = 0.0, scale = 1e-8;
  for (std::size_t i = 0; i < g.size(); ++i) {
    err = std::max(err, std::abs(g[i] - fd[i]));
    scale = std::max(scale, std::abs(fd[i]));
  }
  return err / scale;
}

}  // namespace

TEST(NdArray, ShapeProductMatchesData) {
  const NdArray a(Shape{2, 3}, 1.5);
  EXPECT_EQ(a.size(), 6u);
  EXPECT_EQ(a.shape().size(), 6u);
  EXPECT_THROW(NdArray(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(NdArray, ReshapePreservesValues) {
  const NdArray a(Shape{2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  const NdArray b = a.reshaped(Shape{3, 2});
  EXPECT_EQ(b.values(), a.values());
  EXPECT_THROW(a.reshaped(Shape{4, 2}), ShapeError);
}

TEST(Ops, AddElementwise) {
  Tape t;
  const Var r = add(t.constant(NdArray::vector({1, 2})), t.constant(NdArray::vector({3, 4})));
  EXPECT_EQ(r.value().values(), (std::vector<double>{4, 6}));
}

TEST(Ops, AddBroadcastsLeadingBatchAxis) {
  Tape t;
  const Var a = t.constant(NdArray(Shape{2, 2}, std::vector<double>{1, 2, 3, 4}));
  const Var r = add(a, t.constant(NdArray::vector({10, 20})));
  EXPECT_EQ(r.value().values(), (std::vector<double>{11, 22, 13, 24}));
}

TEST(Ops, MatmulIdentityIsNoOp) {
  Tape t;
  const NdArray v = NdArray::vector({0.3, -1.7, 2.2});
  const Var r = matmul(t.constant(NdArray::identity(3)), t.constant(v));
  EXPECT_EQ(r.value(), v);
}

TEST(Ops, TanhAtZeroHasUnitSlope) {
  Tape t;
  const Var x = t.parameter("x", NdArray::vector({0.0}));
  const Var y = tanh(x);
  EXPECT_EQ(y.value()[0], 0.0);
  EXPECT_DOUBLE_EQ(t.backward(y, NdArray::vector({1.0}))["x"][0], 1.0);
}

TEST(Ops, ShapeMismatchNamesBothShapes) {
  Tape t;
  try {
    add(t.constant(NdArray::vector({1, 2, 3})), t.constant(NdArray::vector({1, 2})));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2]"), std::string::npos) << msg;
  }
  EXPECT_THROW(matmul(t.constant(NdArray(Shape{2, 3})), t.constant(NdArray::vector({1, 2}))), ShapeError);
  EXPECT_THROW(reshape(t.constant(NdArray::vector({1, 2, 3})), Shape{2, 2}), ShapeError);
}

TEST(Backward, ProductRule) {
  Tape t;
  const Var w = t.parameter("w", NdArray::scalar(2.0));
  const Var x = t.parameter("x", NdArray::scalar(3.0));
  const Var y = mul(w, x);
  const Gradients g = t.backward(y, NdArray::scalar(1.0));
  EXPECT_DOUBLE_EQ(g["w"][0], 3.0);
  EXPECT_DOUBLE_EQ(g["x"][0], 2.0);
}

TEST(Backward, UnreachableLeafGetsZeros) {
  Tape t;
  const Var p = t.parameter("p", NdArray::vector({1.0, 2.0}));
  const Var w = t.parameter("w", NdArray::scalar(2.0));
  const Var y = scale(w, 3.0);
  const Gradients g = t.backward(y, NdArray::scalar(1.0));
  EXPECT_EQ(g["p"], NdArray(p.shape(), 0.0));
}

TEST(Backward, TanhChainMatchesClosedFormAndFiniteDifference) {
  const double w0 = 0.5, x0 = 1.0;
  Tape t;
  const Var w = t.parameter("w", NdArray::scalar(w0));
  const Var x = t.constant(NdArray::scalar(x0));
  const Var y = tanh(mul(w, x));
  const double g = t.backward(y, NdArray::scalar(1.0))["w"][0];
  const double th = std::tanh(0.5);
  EXPECT_NEAR(g, x0 * (1.0 - th * th), 1e-15);
  const NdArray fd = finite_difference_grad([&](const NdArray& p) { return std::tanh(p[0] * x0); },
                                            NdArray::scalar(w0), 1e-5);
  EXPECT_NEAR(g, fd[0], 1e-9);
}

TEST(Backward, EmptyTapeIsAnError) {
  Tape t;
  try {
    t.backward(NdArray::scalar(1.0));
    FAIL() << "expected Error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no recorded computation"), std::string::npos);
  }
}

TEST(Backward, SeedShapeMustMatchOutput) {
  Tape t;
  const Var x = t.parameter("x", NdArray::vector({1, 2}));
  const Var y = tanh(x);
  EXPECT_THROW(t.backward(y, NdArray::scalar(1.0)), ShapeError);
}

TEST(Backward, DuplicateParameterNameIsRejected) {
  Tape t;
  t.parameter("w", NdArray::scalar(1.0));
  EXPECT_THROW(t.parameter("w", NdArray::scalar(2.0)), Error);
}

TEST(Backward, ConstantAdjointsAreAvailable) {
  Tape t;
  const Var c = t.constant(NdArray::vector({1.0, -2.0}));
  const Var y = sum_squares(c);
  EXPECT_EQ(t.backward(y, NdArray::scalar(1.0)).of(c).values(), (std::vector<double>{2.0, -4.0}));
}

TEST(Backward, LinearInSeed) {
  Tape t;
  const Var x = t.parameter("x", NdArray::vector({0.3, -0.8, 1.1}));
  const Var w = t.parameter("w", NdArray(Shape{2, 3}, std::vector<double>{1, 2, 3, -1, 0.5, 0.25}));
  const Var y = tanh(matmul(w, x));
  const NdArray a = NdArray::vector({0.7, -1.3});
  const NdArray b = NdArray::vector({2.0, 0.4});
  const NdArray ab = NdArray::vector({2.7, -0.9});
  const auto ga = t.backward(y, a), gb = t.backward(y, b), gab = t.backward(y, ab);
  for (const char* name : {"x", "w"}) {
    for (std::size_t i = 0; i < gab[name].size(); ++i) {
      EXPECT_NEAR(gab[name][i], ga[name][i] + gb[name][i], 1e-14);
    }
  }
}

TEST(Tape, ReplayReproducesRecordedValuesBitExactly) {
  std::mt19937_64 rng(3);
  Tape t;
  const Var w = t.parameter("w", random_array(Shape{4, 3}, rng));
  const Var x = t.constant(random_array(Shape{3}, rng));
  const Var h = sigmoid(matmul(w, x));
  const Var y = sum_squares(elu(h - t.constant(random_array(Shape{4}, rng))));
  const std::vector<NdArray> replayed = t.replay();
  ASSERT_EQ(replayed.size(), t.size());
  EXPECT_EQ(replayed[h.index()], h.value());
  EXPECT_EQ(replayed[y.index()], y.value());
  EXPECT_EQ(replayed.back(), y.value());
}

TEST(Tape, TwoIdenticalPassesAreBitIdentical) {
  auto run = [] {
    std::mt19937_64 rng(11);
    Tape t;
    const Var w = t.parameter("w", random_array(Shape{5, 5}, rng));
    Var z = t.constant(random_array(Shape{5}, rng));
    for (int i = 0; i < 10; ++i) z = tanh(matmul(w, z));
    return std::make_pair(z.value(), t.backward(z, NdArray(Shape{5}, 1.0))["w"]);
  };
  EXPECT_EQ(run(), run());
}

TEST(Primitives, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(42);
  const NdArray m = random_array(Shape{3, 4}, rng);
  const NdArray v4 = random_array(Shape{4}, rng);
  const NdArray v3 = random_array(Shape{3}, rng);
  const std::vector<std::pair<const char*, std::function<Var(Tape&, Var)>>> cases{
      {"add", [&](Tape& t, Var x) { return sum_squares(add(x, t.constant(v4))); }},
      {"sub", [&](Tape& t, Var x) { return sum_squares(sub(t.constant(v4), x)); }},
      {"mul", [&](Tape& t, Var x) { return sum(mul(x, mul(x, t.constant(v4)))); }},
      {"scale", [&](Tape&, Var x) { return sum_squares(scale(x, -1.7)); }},
      {"matmul", [&](Tape& t, Var x) { return dot(matmul(t.constant(m), x), t.constant(v3)); }},
      {"tanh", [&](Tape&, Var x) { return sum(tanh(x)); }},
      {"relu", [&](Tape& t, Var x) { return dot(relu(x), t.constant(v4)); }},
      {"sigmoid", [&](Tape&, Var x) { return sum(sigmoid(x)); }},
      {"elu", [&](Tape& t, Var x) { return dot(elu(x), t.constant(v4)); }},
      {"concat",
       [&](Tape& t, Var x) {
         std::array<Var, 2> parts{x, t.constant(v3)};
         return sum_squares(concat(parts));
       }},
      {"slice", [&](Tape&, Var x) { return sum_squares(slice(x, 1, 2)); }},
      {"reshape",
       [&](Tape& t, Var x) {
         return dot(matmul(reshape(x, Shape{2, 2}), t.constant(NdArray::vector({1.0, -2.0}))),
                    t.constant(NdArray::vector({0.5, 1.5})));
       }},
      {"transpose",
       [&](Tape& t, Var x) {
         return sum(matmul(transpose(reshape(x, Shape{2, 2})), t.constant(NdArray::vector({1.0, 3.0}))));
       }},
      {"mean", [&](Tape&, Var x) { return mean(tanh(x)); }},
      {"lincomb",
       [&](Tape& t, Var x) {
         std::array<Var, 2> terms{x, t.constant(v4)};
         std::array<double, 2> c{0.3, -2.0};
         return sum_squares(lincomb(terms, c));
       }},
      {"softmax_cross_entropy", [&](Tape&, Var x) { return softmax_cross_entropy(x, 2); }},
  };
  for (const auto& [name, f] : cases) {
    NdArray p = random_array(Shape{4}, rng);
    for (double& v : p.values()) {
      if (std::abs(v) < 1e-3) v = 0.5;  // away from the relu and elu kinks
    }
    EXPECT_LE(primitive_error(f, p), 1e-5) << name;
  }
}

TEST(FiniteDiff, SquareAtThree) {
  const NdArray g = finite_difference_grad([](const NdArray& p) { return p[0] * p[0]; },
                                           NdArray::scalar(3.0), 1e-5);
  EXPECT_NEAR(g[0], 6.0, 1e-6);
}

TEST(FiniteDiff, ConstantGivesZero) {
  const NdArray g = finite_difference_grad([](const NdArray&) { return 4.2; },
                                           NdArray::vector({1.0, 2.0, 3.0}), 1e-5);
  EXPECT_EQ(g, NdArray(Shape{3}, 0.0));
}

TEST(FiniteDiff, MatchesBackwardOnTanhSum) {
  const NdArray p = NdArray::vector({0.1, -0.2});
  const NdArray fd = finite_difference_grad(
      [](const NdArray& q) { return std::tanh(q[0]) + std::tanh(q[1]); }, p, 1e-5);
  Tape t;
  const Var x = t.parameter("x", p);
  const NdArray g = t.backward(sum(tanh(x)), NdArray::scalar(1.0))["x"];
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(fd[i], g[i], 1e-6 * std::abs(g[i]));
}

TEST(FiniteDiff, RejectsBadStepAndNonFiniteValues) {
  const auto f = [](const NdArray& p) { return p[0]; };
  EXPECT_THROW(finite_difference_grad(f, NdArray::scalar(1.0), 0.0), Error);
  EXPECT_THROW(finite_difference_grad(f, NdArray::scalar(1.0), 0.1), Error);
  EXPECT_THROW(finite_difference_grad([](const NdArray& p) { return std::log(p[0]); },
                                      NdArray::scalar(0.0), 1e-5),
               Error);
}
