// tests/test_objective_optim.cpp
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

#include "mhfa/gradsuite.hpp"
#include "mhfa/objective.hpp"
#include "mhfa/optim.hpp"
#include "oracles.hpp"

using namespace mhfa;

namespace {

EncoderConfig enc_config(std::size_t layers) {
  EncoderConfig c;
  c.input_dim = 4;
  c.n_layers = layers;
  c.model_dim = 4;
  c.n_attn_heads = 1;
  c.ffn_dim = 4;
  return c;
}

/// Loss of constant cosines through margin, scale and cross-entropy.
double aam_of_cosines(const Tensor& cos, const std::vector<std::size_t>& labels, double m,
                      double s) {
  Graph g;
  return cross_entropy(scale(angular_margin(g.constant(cos), labels, m), s), labels).value()[0];
}

}  // namespace

TEST(Aam, MatchesStraightLineOracle) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    const Tensor x = detail::normal_tensor(rng, {4, 8});
    const Tensor w = detail::normal_tensor(rng, {8, 5});
    const std::vector<std::size_t> labels{0, 3, 4, 3};
    Graph g;
    Var e = l2_normalize_rows(g.constant(x));
    const double got = aam_loss(AamConfig{0.2, 30.0, 5}, e, g.constant(w), labels).value()[0];
    const double want = oracle::aam(oracle::to_mat(e.value()), oracle::to_mat(w), labels, 0.2, 30.0);
    EXPECT_NEAR(got, want, 1e-10 * std::max(1.0, want));
  }
}

TEST(Aam, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  Param x = make_param("x", detail::normal_tensor(rng, {4, 8}));
  Param w = make_param("w", detail::normal_tensor(rng, {8, 5}));
  // Moderate scale keeps every gradient entry well above central-difference noise.
  const AamConfig cfg{0.2, 5.0, 5};
  auto f = [&](Graph& g) {
    return aam_loss(cfg, l2_normalize_rows(g.param(x)), g.param(w), {1, 0, 2, 4});
  };
  EXPECT_LT(grad_check(f, {x, w}).max_rel_error, 1e-4);
}

TEST(Aam, NoMarginUnitScaleIsPlainCrossEntropy) {
  std::mt19937_64 rng(4);
  Graph g;
  Var e = l2_normalize_rows(g.constant(detail::normal_tensor(rng, {3, 6})));
  Var w = g.constant(detail::normal_tensor(rng, {6, 4}));
  const std::vector<std::size_t> labels{2, 0, 3};
  const double got = aam_loss(AamConfig{0.0, 1.0, 4}, e, w, labels).value()[0];
  const Tensor cos = matmul(e, l2_normalize_cols(w)).value();
  double want = 0.0;
  for (std::size_t b = 0; b < 3; ++b) {
    double z = 0.0;
    for (std::size_t c = 0; c < 4; ++c) z += std::exp(cos(b, c));
    want += std::log(z) - cos(b, labels[b]);
  }
  EXPECT_NEAR(got, want / 3.0, 1e-12);
}

TEST(Aam, SingleClassHasZeroLoss) {
  for (double m : {0.0, 0.2, 0.5}) {
    Graph g;
    Var e = l2_normalize_rows(g.constant(Tensor::matrix({{1, 2, 3}, {-1, 0, 2}})));
    EXPECT_NEAR(aam_loss(AamConfig{m, 30.0, 1}, e, g.constant(Tensor({3, 1}, 1.0)), {0, 0})
                    .value()[0],
                0.0, 1e-15);
  }
}

TEST(Aam, LabelOutOfRangeAndShapeMismatch) {
  Graph g;
  Var e = l2_normalize_rows(g.constant(Tensor::matrix({{1, 2}})));
  EXPECT_THROW(aam_loss(AamConfig{}, e, g.constant(Tensor({2, 3}, 1.0)), {3}), LabelError);
  EXPECT_THROW(aam_loss(AamConfig{}, e, g.constant(Tensor({3, 3}, 1.0)), {0}), ShapeError);
  EXPECT_THROW(aam_loss(AamConfig{2.0, 30.0, 3}, e, g.constant(Tensor({2, 3}, 1.0)), {0}),
               ConfigError);
}

TEST(Aam, NonIncreasingInTheTargetCosine) {
  double prev = INFINITY;
  for (int i = 0; i <= 200; ++i) {
    const double c = -1.0 + 2.0 * i / 200.0;
    const double l = aam_of_cosines(Tensor::matrix({{c, 0.3, -0.2, 0.1}}), {0}, 0.2, 30.0);
    EXPECT_LE(l, prev + 1e-12) << "cos " << c;
    prev = l;
  }
}

TEST(Aam, MarginNeverLowersTheLossOfAWinningTarget) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor cos({2, 5});
    for (double& v : cos.storage()) v = u(rng);
    std::vector<std::size_t> labels;
    for (std::size_t b = 0; b < 2; ++b) {
      std::size_t arg = 0;
      for (std::size_t c = 1; c < 5; ++c)
        if (cos(b, c) > cos(b, arg)) arg = c;
      labels.push_back(arg);
    }
    EXPECT_GE(aam_of_cosines(cos, labels, 0.2, 30.0), aam_of_cosines(cos, labels, 0.0, 30.0));
  }
}

TEST(Aam, SaturatedTargetLogitIsFlat) {
  // theta + m past pi: the target logit pins at -s with zero slope.
  Param c = make_param("c", Tensor::matrix({{-0.995, 0.1}}));
  Graph g;
  Var l = angular_margin(g.param(c), {0}, 0.2);
  EXPECT_DOUBLE_EQ(l.value()(0, 0), -1.0);
  g.backward(sum_all(l));
  EXPECT_EQ(c->grad(0, 0), 0.0);
}

TEST(Reg, ZeroAtSnapshotNineForOneOffsetOfThree) {
  EncoderParams p(enc_config(2));
  const PretrainedSnapshot snap(p);
  {
    Graph g;
    EXPECT_EQ(reg_loss(g, snap, p).value()[0], 0.0);
  }
  p.layer_params(2)[3]->value[5] += 3.0;
  Graph g;
  EXPECT_DOUBLE_EQ(reg_loss(g, snap, p).value()[0], 9.0);
}

TEST(Reg, GradientIsTwiceTheOffset) {
  EncoderParams p(enc_config(2));
  const PretrainedSnapshot snap(p);
  std::mt19937_64 rng(7);
  detail::jitter(p.trainable(), rng, 0.3);
  Graph g;
  g.backward(reg_loss(g, snap, p));
  for (const Param& q : p.trainable())
    for (std::size_t i = 0; i < q->value.size(); ++i)
      EXPECT_NEAR(q->grad[i], 2.0 * (q->value[i] - snap.at(q->name)[i]), 1e-10);
  EXPECT_FALSE(p.frontend()->has_grad());
}

TEST(Reg, EqualsSummedLayerDrift) {
  EncoderParams p(enc_config(3));
  const PretrainedSnapshot snap(p);
  std::mt19937_64 rng(8);
  detail::jitter(p.trainable(), rng, 0.2);
  double drift = 0.0;
  for (double d : layer_drift(p, snap)) drift += d;
  Graph g;
  EXPECT_NEAR(reg_loss(g, snap, p).value()[0], drift, 1e-12);
  EXPECT_THROW(reg_loss(g, snap, EncoderParams(enc_config(2))), ConfigError);
}

TEST(Total, Arithmetic) {
  Graph g;
  Var spk = g.constant(Tensor::vector({1.0})), reg = g.constant(Tensor::vector({2.0}));
  EXPECT_DOUBLE_EQ(total_loss(spk, reg, 1e-4).value()[0], 1.0002);
  EXPECT_EQ(total_loss(spk, reg, 0.0).value()[0], 1.0);
  EXPECT_EQ(total_loss(g.constant(Tensor::vector({0.0})), reg, 1.0).value()[0], 2.0);
  EXPECT_THROW(total_loss(spk, reg, -1.0), ConfigError);
  EXPECT_THROW(total_loss(g.constant(Tensor::vector({NAN})), reg, 1.0), NumericError);
}

TEST(Llrd, EqualRatesWhenXiIsOne) {
  const EncoderParams enc(enc_config(12));
  LlrdConfig c;
  c.lr_encoder = 2e-5;
  c.xi = 1.0;
  const auto groups = build_groups(enc, {}, c);
  ASSERT_EQ(groups.size(), 13u);
  for (std::size_t l = 0; l < 12; ++l) {
    EXPECT_EQ(groups[l].id, "encoder.layer" + std::to_string(l + 1));
    EXPECT_EQ(groups[l].lr, 2e-5);
  }
  EXPECT_EQ(groups[12].id, "backend");
}

TEST(Llrd, GeometricRatesAndRatiosAcrossEpochs) {
  const EncoderParams enc(enc_config(12));
  for (double xi : {0.5, 1.5}) {
    LlrdConfig c;
    c.lr_encoder = 2e-5;
    c.xi = xi;
    auto groups = build_groups(enc, {}, c);
    EXPECT_NEAR(groups[11].lr, 2e-5 * std::pow(xi, 11), 1e-20);
    for (int epoch = 0; epoch < 5; ++epoch) {
      for (std::size_t l = 0; l + 1 < 12; ++l) {
        EXPECT_NEAR(groups[l + 1].lr / groups[l].lr, xi, 4e-16 * xi);
        if (xi > 1) EXPECT_GT(groups[l + 1].lr, groups[l].lr);
        else EXPECT_LT(groups[l + 1].lr, groups[l].lr);
      }
      epoch_tick(groups, c);
    }
  }
}

TEST(Llrd, FreezeLeavesOnlyTheBackend) {
  const EncoderParams enc(enc_config(3));
  LlrdConfig c;
  c.freeze_encoder = true;
  Param b = make_param("b", Tensor({2}));
  const auto groups = build_groups(enc, {b}, c);
  ASSERT_EQ(groups.size(), 1u);
  EXPECT_EQ(groups[0].params, std::vector<Param>{b});
}

TEST(Llrd, SharedParameterAcrossGroupsIsRejected) {
  const EncoderParams enc(enc_config(2));
  EXPECT_THROW(build_groups(enc, {enc.layer_params(1)[0]}, LlrdConfig{}), ConsistencyError);
}

TEST(Llrd, EpochDecay) {
  LlrdConfig c;
  std::vector<ParamGroup> groups{ParamGroup{"backend", {}, 1e-3, 1e-3, 0}};
  epoch_tick(groups, c);
  EXPECT_NEAR(groups[0].lr, 9.5e-4, 1e-18);
  for (int k = 2; k <= 30; ++k) {
    epoch_tick(groups, c);
    EXPECT_EQ(groups[0].lr, 1e-3 * std::pow(0.95, k));
  }
  c.epoch_decay = 1.0;
  std::vector<ParamGroup> flat{ParamGroup{"backend", {}, 1e-3, 1e-3, 0}};
  for (int k = 0; k < 4; ++k) epoch_tick(flat, c);
  EXPECT_EQ(flat[0].lr, 1e-3);
}

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
  Param p = make_param("p", Tensor::vector({1.0, -2.0}));
  std::vector<ParamGroup> groups{ParamGroup{"g", {p}, 1e-2, 1e-2, 0}};
  Adam adam;
  for (int i = 0; i < 3; ++i) {
    p->grad = Tensor::zeros(p->value.shape());
    adam.step(groups);
  }
  EXPECT_EQ(p->value, Tensor::vector({1.0, -2.0}));
}

TEST(Adam, FirstStepMovesAgainstTheGradientByTheRate) {
  Param p = make_param("p", Tensor::vector({0.5}));
  std::vector<ParamGroup> groups{ParamGroup{"g", {p}, 1e-3, 1e-3, 0}};
  p->grad = Tensor::vector({3.7});
  Adam adam;
  adam.step(groups);
  EXPECT_NEAR(p->value[0], 0.5 - 1e-3, 1e-10);
  EXPECT_FALSE(p->has_grad());
}

TEST(Adam, DisplacementScalesWithTheGroupRate) {
  Param a = make_param("a", Tensor::vector({0.0, 0.0}));
  Param b = make_param("b", Tensor::vector({0.0, 0.0}));
  std::vector<ParamGroup> groups{ParamGroup{"a", {a}, 1e-3, 1e-3, 0},
                                 ParamGroup{"b", {b}, 2e-3, 2e-3, 0}};
  a->grad = Tensor::vector({0.4, -1.3});
  b->grad = a->grad;
  Adam().step(groups);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(b->value[i] / a->value[i], 2.0, 1e-12);
}

TEST(Adam, MissingGradientIsAConsistencyError) {
  Param p = make_param("p", Tensor::vector({1.0}));
  std::vector<ParamGroup> groups{ParamGroup{"g", {p}, 1e-3, 1e-3, 0}};
  EXPECT_THROW(Adam().step(groups), ConsistencyError);
}

TEST(Adam, GlobalNormClipping) {
  Param p = make_param("p", Tensor::vector({0.0, 0.0}));
  std::vector<ParamGroup> groups{ParamGroup{"g", {p}, 1.0, 1.0, 0}};
  p->grad = Tensor::vector({30.0, 40.0});
  Adam adam;
  adam.step(groups, 5.0);
  EXPECT_DOUBLE_EQ(adam.last_grad_norm(), 50.0);
  // Adam normalizes the step, so clipping shows only in the moments.
  EXPECT_NEAR(adam.find_state(*p)->m[0], 0.1 * 3.0, 1e-12);
}

TEST(Adam, FrozenTensorsAreBitIdenticalAfterTraining) {
  EncoderParams enc(enc_config(2));
  LlrdConfig c;
  c.freeze_encoder = true;
  Param head = make_param("head", Tensor::identity(4));
  auto groups = build_groups(enc, {head}, c);
  const EncoderParams before = enc.deep_copy();
  Adam adam;
  for (int s = 0; s < 3; ++s) {
    Graph g;
    auto stack = encode(g, enc, Tensor({3, 4}, 0.5));
    g.backward(sum_all(square(matmul(stack.back(), g.param(head)))));
    adam.step(groups);
    for (const Param& q : enc.all()) q->zero_grad();
  }
  const auto a = enc.all(), b = before.all();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value);
}
