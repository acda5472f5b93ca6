// tests/test_tensor_ops.cpp
//
// Copyright 2026  The mhfa-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "mhfa/gradcheck.hpp"
#include "mhfa/gradsuite.hpp"
#include "mhfa/ops.hpp"
#include "oracles.hpp"

using namespace mhfa;

namespace {

Param rand_param(const std::string& name, Shape s, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  return make_param(name, detail::normal_tensor(rng, std::move(s), sd));
}

Tensor rand_tensor(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return detail::normal_tensor(rng, std::move(s));
}

/// Scalar probe <f(x), r> so every output entry contributes.
Var probe(Var y, std::uint64_t seed) {
  return sum_all(mul(y, y.graph().constant(rand_tensor(y.shape(), seed))));
}

}  // namespace

TEST(Tensor, ShapeAndStorage) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Tensor v = Tensor::vector({1, 2, 3});
  EXPECT_EQ(v.rank(), 1u);
  EXPECT_EQ(v.rows(), 1u);
  EXPECT_EQ(v.cols(), 3u);
}

TEST(Tensor, BinaryRecordRoundTrip) {
  const Tensor t = rand_tensor({3, 4}, 1);
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 8u * (1 + 2 + 12));
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 2u);  // rank, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 3u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 4u);
  std::stringstream in(bytes);
  EXPECT_EQ(read_tensor(in), t);
}

TEST(Tensor, TruncatedRecordIsAnIoError) {
  std::stringstream ss;
  write_tensor(ss, Tensor({2, 2}, 1.0));
  std::stringstream in(ss.str().substr(0, 20));
  EXPECT_THROW(read_tensor(in), IoError);
}

TEST(Matmul, IdentityAndHandComputed) {
  Graph g;
  const Tensor x = rand_tensor({2, 3}, 2);
  EXPECT_EQ(matmul(g.constant(Tensor::identity(2)), g.constant(x)).value(), x);
  const Tensor r = matmul(g.constant(Tensor::matrix({{1, 2}, {3, 4}})),
                          g.constant(Tensor::matrix({{1}, {1}})))
                       .value();
  EXPECT_EQ(r, Tensor::matrix({{3}, {7}}));
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  Graph g;
  try {
    matmul(g.constant(Tensor({2, 3})), g.constant(Tensor({2, 3})));
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] vs [2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Param a = rand_param("a", {5, 4}, 3), b = rand_param("b", {4, 3}, 4);
  auto r = grad_check([&](Graph& g) { return probe(matmul(g.param(a), g.param(b)), 5); }, {a, b});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Softmax, AnalyticExamples) {
  Graph g;
  const Tensor c = softmax(g.constant(Tensor::vector({2.5, 2.5, 2.5})), 0).value();
  for (double v : c.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  const Tensor d = softmax(g.constant(Tensor::vector({0.0, std::log(3.0)})), 0).value();
  EXPECT_NEAR(d[0], 0.25, 1e-15);
  EXPECT_NEAR(d[1], 0.75, 1e-15);
}

TEST(Softmax, NonFiniteInputIsANumericError) {
  Graph g;
  EXPECT_THROW(softmax(g.constant(Tensor::vector({0.0, NAN})), 0), NumericError);
  EXPECT_THROW(softmax(g.constant(Tensor::vector({0.0, INFINITY})), 0), NumericError);
}

TEST(Softmax, SlicesSumToOneAndAreNonNegative) {
  Graph g;
  const Tensor x = rand_tensor({7, 4}, 6);
  for (std::size_t axis : {0u, 1u}) {
    const Tensor y = softmax(g.constant(x), axis).value();
    const std::size_t lanes = axis == 0 ? 4 : 7, len = axis == 0 ? 7 : 4;
    for (std::size_t l = 0; l < lanes; ++l) {
      double s = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double v = axis == 0 ? y(k, l) : y(l, k);
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  Param x = rand_param("x", {7, 4}, 7);
  for (std::size_t axis : {0u, 1u}) {
    auto r = grad_check([&](Graph& g) { return probe(softmax(g.param(x), axis), 8); }, {x});
    EXPECT_LT(r.max_rel_error, 1e-6) << "axis " << axis;
  }
}

TEST(WeightedLayerSum, SelectionZeroAndRagged) {
  Graph g;
  std::vector<Var> zs;
  for (std::uint64_t l = 0; l < 4; ++l) zs.push_back(g.constant(rand_tensor({5, 4}, 10 + l)));
  const Tensor sel = weighted_layer_sum(zs, g.constant(Tensor::vector({0, 0, 1, 0}))).value();
  EXPECT_EQ(sel, zs[2].value());
  const Tensor zero = weighted_layer_sum(zs, g.constant(Tensor({4}))).value();
  EXPECT_EQ(zero, Tensor({5, 4}));
  std::vector<Var> ragged = zs;
  ragged[1] = g.constant(Tensor({5, 3}));
  EXPECT_THROW(weighted_layer_sum(ragged, g.constant(Tensor({4}))), ShapeError);
  EXPECT_THROW(weighted_layer_sum(zs, g.constant(Tensor({3}))), ShapeError);
}

TEST(WeightedLayerSum, GradientInWeightsAndLayers) {
  std::vector<Param> layers;
  for (std::uint64_t l = 0; l < 4; ++l) layers.push_back(rand_param("z", {5, 4}, 20 + l));
  Param w = rand_param("w", {4}, 30);
  auto f = [&](Graph& g) {
    std::vector<Var> zs;
    for (auto& p : layers) zs.push_back(g.param(p));
    return probe(weighted_layer_sum(zs, g.param(w)), 31);
  };
  EXPECT_LT(grad_check(f, {w}).max_rel_error, 1e-6);
  EXPECT_LT(grad_check(f, layers).max_rel_error, 1e-6);
}

// Every remaining differentiable primitive, one at a time.
TEST(Ops, EveryPrimitivePassesFiniteDifferences) {
  Param x = rand_param("x", {4, 5}, 40);
  Param y = rand_param("y", {4, 5}, 41);
  Param row = rand_param("row", {5}, 42);
  Param pos = make_param("pos", Tensor({4, 5}, 0.3));
  for (std::size_t i = 0; i < 20; ++i) pos->value[i] += 0.05 * static_cast<double>(i);
  struct Case {
    const char* name;
    std::function<Var(Graph&)> f;
    std::vector<Param> ps;
  };
  const std::vector<Case> cases = {
      {"add", [&](Graph& g) { return probe(add(g.param(x), g.param(y)), 1); }, {x, y}},
      {"sub", [&](Graph& g) { return probe(sub(g.param(x), g.param(y)), 2); }, {x, y}},
      {"mul", [&](Graph& g) { return probe(mul(g.param(x), g.param(y)), 3); }, {x, y}},
      {"scale", [&](Graph& g) { return probe(scale(g.param(x), -1.7), 4); }, {x}},
      {"transpose", [&](Graph& g) { return probe(transpose(g.param(x)), 5); }, {x}},
      {"add_row", [&](Graph& g) { return probe(add_row(g.param(x), g.param(row)), 6); }, {x, row}},
      {"mul_row", [&](Graph& g) { return probe(mul_row(g.param(x), g.param(row)), 7); }, {x, row}},
      {"gelu", [&](Graph& g) { return probe(gelu(g.param(x)), 8); }, {x}},
      {"tanh", [&](Graph& g) { return probe(tanh(g.param(x)), 9); }, {x}},
      {"square", [&](Graph& g) { return probe(square(g.param(x)), 10); }, {x}},
      {"sqrt_clamped", [&](Graph& g) { return probe(sqrt_clamped(g.param(pos), 1e-9), 11); }, {pos}},
      {"layer_norm", [&](Graph& g) { return probe(layer_norm_rows(g.param(x)), 12); }, {x}},
      {"l2_rows", [&](Graph& g) { return probe(l2_normalize_rows(g.param(x)), 13); }, {x}},
      {"l2_cols", [&](Graph& g) { return probe(l2_normalize_cols(g.param(x)), 14); }, {x}},
      {"slice", [&](Graph& g) { return probe(slice_cols(g.param(x), 1, 3), 15); }, {x}},
      {"concat_cols",
       [&](Graph& g) { return probe(concat_cols({g.param(x), g.param(y)}), 16); },
       {x, y}},
      {"concat_rows",
       [&](Graph& g) { return probe(concat_rows({g.param(x), g.param(y)}), 17); },
       {x, y}},
      {"reshape", [&](Graph& g) { return probe(reshape(g.param(x), {2, 10}), 18); }, {x}},
      {"mean_rows", [&](Graph& g) { return probe(mean_rows(g.param(x)), 19); }, {x}},
      {"sum_all", [&](Graph& g) { return sum_all(square(g.param(x))); }, {x}},
      {"squared_distance",
       [&](Graph& g) { return squared_distance(g.param(x), rand_tensor({4, 5}, 20)); },
       {x}},
  };
  for (const auto& c : cases)
    EXPECT_LT(grad_check(c.f, c.ps).max_rel_error, 1e-6) << c.name;
}

TEST(Ops, SqrtClampUsesFloorBelowIt) {
  Graph g;
  const Tensor y = sqrt_clamped(g.constant(Tensor::vector({-1.0, 0.0, 4.0})), 1e-9).value();
  EXPECT_DOUBLE_EQ(y[0], std::sqrt(1e-9));
  EXPECT_DOUBLE_EQ(y[1], std::sqrt(1e-9));
  EXPECT_DOUBLE_EQ(y[2], 2.0);
}

TEST(Ops, ZeroNormIsANumericError) {
  Graph g;
  EXPECT_THROW(l2_normalize_rows(g.constant(Tensor({2, 3}))), NumericError);
}

TEST(Autograd, BackwardOfSumEqualsSumOfBackwards) {
  Param x = rand_param("x", {3, 3}, 50);
  auto f1 = [&](Graph& g) { return probe(gelu(g.param(x)), 51); };
  auto f2 = [&](Graph& g) { return probe(softmax(g.param(x), 1), 52); };
  Tensor g1, g2, g12;
  {
    Graph g;
    g.backward(f1(g));
    g1 = x->grad;
    x->zero_grad();
  }
  {
    Graph g;
    g.backward(f2(g));
    g2 = x->grad;
    x->zero_grad();
  }
  {
    Graph g;
    g.backward(add(f1(g), f2(g)));
    g12 = x->grad;
    x->zero_grad();
  }
  for (std::size_t i = 0; i < g12.size(); ++i) EXPECT_NEAR(g12[i], g1[i] + g2[i], 1e-14);
}

TEST(Autograd, FrozenParameterGetsNoGradient) {
  Param w = rand_param("w", {3, 3}, 60);
  w->trainable = false;
  Param x = rand_param("x", {2, 3}, 61);
  Graph g;
  g.backward(probe(matmul(g.param(x), g.param(w)), 62));
  EXPECT_FALSE(w->has_grad());
  EXPECT_TRUE(x->has_grad());
}

TEST(Autograd, SharedParameterAccumulatesBothUses) {
  Param x = make_param("x", Tensor::vector({1.0, 2.0}));
  Graph g;
  g.backward(sum_all(mul(g.param(x), g.param(x))));  // d/dx sum x^2 = 2x
  EXPECT_DOUBLE_EQ(x->grad[0], 2.0);
  EXPECT_DOUBLE_EQ(x->grad[1], 4.0);
}

TEST(GradCheck, QuadraticIsExact) {
  Param x = make_param("x", Tensor::vector({1.0, 2.0}));
  auto r = grad_check([&](Graph& g) { return sum_all(square(g.param(x))); }, {x});
  EXPECT_LT(r.max_rel_error, 1e-8);
  EXPECT_EQ(r.n_checked, 2u);
}

TEST(GradCheck, CorruptedGradientIsCaught) {
  Param x = make_param("x", Tensor::vector({1.0, 2.0}));
  auto r = grad_check([&](Graph& g) { return sum_all(square(g.param(x))); }, {x}, 1e-5, true);
  EXPECT_GT(r.max_rel_error, 0.1);
}

TEST(GradCheck, StepOutsideRangeAndNonFiniteLoss) {
  Param x = make_param("x", Tensor::vector({1.0}));
  auto f = [&](Graph& g) { return sum_all(g.param(x)); };
  EXPECT_THROW(grad_check(f, {x}, 1e-2), ContractError);
  EXPECT_THROW(grad_check(f, {x}, 1e-8), ContractError);
  Param bad = make_param("bad", Tensor::vector({NAN}));
  EXPECT_THROW(grad_check([&](Graph& g) { return sum_all(g.param(bad)); }, {bad}), NumericError);
}

TEST(GradSuite, ListsExactlyTheSixComponentsAndPasses) {
  const auto suite = run_grad_suite();
  std::vector<std::string> names;
  for (const auto& e : suite) {
    names.push_back(e.component);
    EXPECT_LT(e.result.max_rel_error, kGradTolerance) << e.component;
  }
  EXPECT_EQ(names, (std::vector<std::string>{"tensor-core", "topattn", "wavg", "mhfa", "aam", "reg"}));
  EXPECT_GT(run_grad_suite(true).front().result.max_rel_error, kGradTolerance);
}
