// tests/test_pooling.cpp
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

#include <algorithm>
#include <numeric>
#include <random>

#include "mhfa/gradsuite.hpp"
#include "mhfa/optim.hpp"
#include "mhfa/pooling.hpp"
#include "oracles.hpp"

using namespace mhfa;

namespace {

LayerStack random_stack(std::size_t n_layers, std::size_t T, std::size_t F, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LayerStack s;
  for (std::size_t l = 0; l < n_layers; ++l) s.layers.push_back(detail::normal_tensor(rng, {T, F}));
  return s;
}

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

double norm(const std::vector<double>& v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

const BackendDims kDims{4, 6, 3, 2, 5};

}  // namespace

TEST(Mhfa, MatchesStraightLineOracle) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Backend b(BackendKind::mhfa, kDims, ConstraintMode::none, seed);
    std::mt19937_64 rng(seed + 100);
    detail::jitter(b.parameters(), rng, 0.5);
    const LayerStack s = random_stack(4, 7, 6, seed);
    std::vector<oracle::Mat> stack;
    for (const Tensor& z : s.layers) stack.push_back(oracle::to_mat(z));
    const auto& p = b.mhfa();
    const auto want = oracle::mhfa(stack, vec(p.w_k->value), vec(p.w_v->value),
                                   oracle::to_mat(p.s_k->value), oracle::to_mat(p.s_v->value),
                                   oracle::to_mat(p.q->value), oracle::to_mat(p.w_emb->value));
    const auto got = vec(b.embed(s).vector);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Mhfa, AttentionColumnsAreDistributions) {
  Backend b(BackendKind::mhfa, kDims, ConstraintMode::none, 4);
  const Tensor a = mhfa_attention(b.mhfa(), random_stack(4, 9, 6, 4));
  ASSERT_EQ(a.rows(), 9u);
  ASSERT_EQ(a.cols(), 2u);
  for (std::size_t h = 0; h < 2; ++h) {
    double s = 0.0;
    for (std::size_t t = 0; t < 9; ++t) {
      EXPECT_GE(a(t, h), 0.0);
      s += a(t, h);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Mhfa, ConstantKeysGiveUniformAttentionAndMeanValue) {
  BackendDims d = kDims;
  d.heads = 1;
  Backend b(BackendKind::mhfa, d, ConstraintMode::none, 5);
  const auto& p = b.mhfa();
  p.s_k->value = Tensor::zeros(p.s_k->value.shape());
  const LayerStack s = random_stack(4, 6, 6, 5);
  const Tensor a = mhfa_attention(p, s);
  for (double v : a.data()) EXPECT_NEAR(v, 1.0 / 6.0, 1e-15);
  // With W_emb = I (E = D) the embedding is the normalized frame-mean of V.
  d.embed_dim = d.compress_dim;
  Backend b2(BackendKind::mhfa, d, ConstraintMode::none, 5);
  b2.mhfa().s_k->value = Tensor::zeros(b2.mhfa().s_k->value.shape());
  b2.mhfa().w_emb->value = Tensor::identity(d.compress_dim);
  Graph g;
  std::vector<Var> zs;
  for (const Tensor& z : s.layers) zs.push_back(g.constant(z));
  const Tensor v =
      matmul(weighted_layer_sum(zs, g.constant(b2.mhfa().w_v->value)), g.constant(b2.mhfa().s_v->value))
          .value();
  std::vector<double> mean(d.compress_dim, 0.0);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t j = 0; j < d.compress_dim; ++j) mean[j] += v(t, j) / 6.0;
  const auto want = oracle::normalize(mean);
  const auto got = vec(b2.embed(s).vector);
  for (std::size_t j = 0; j < want.size(); ++j) EXPECT_NEAR(got[j], want[j], 1e-12);
}

TEST(Mhfa, SingleFrameAttendsFully) {
  Backend b(BackendKind::mhfa, kDims, ConstraintMode::none, 6);
  const Tensor a = mhfa_attention(b.mhfa(), random_stack(4, 1, 6, 6));
  for (double v : a.data()) EXPECT_EQ(v, 1.0);
}

TEST(Mhfa, StackErrors) {
  Backend b(BackendKind::mhfa, kDims, ConstraintMode::none, 7);
  EXPECT_THROW(b.embed(random_stack(3, 5, 6, 7)), ShapeError);
  EXPECT_THROW(b.embed(random_stack(4, 5, 5, 7)), ShapeError);
  EXPECT_THROW(b.embed(LayerStack{}), Error);
}

TEST(Backends, EmbeddingsAreUnitNorm) {
  for (BackendKind k : {BackendKind::mhfa, BackendKind::wavg, BackendKind::topattn}) {
    Backend b(k, kDims, ConstraintMode::none, 8);
    for (std::uint64_t s = 0; s < 5; ++s)
      EXPECT_NEAR(b.embed(random_stack(4, 5 + s, 6, s)).norm(), 1.0, 1e-9) << to_string(k);
  }
}

TEST(Backends, FramePermutationInvariance) {
  for (BackendKind k : {BackendKind::mhfa, BackendKind::wavg, BackendKind::topattn}) {
    Backend b(k, kDims, ConstraintMode::none, 9);
    const LayerStack s = random_stack(4, 8, 6, 9);
    std::vector<std::size_t> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(9));
    LayerStack p = s;
    for (std::size_t l = 0; l < 4; ++l)
      for (std::size_t t = 0; t < 8; ++t)
        for (std::size_t j = 0; j < 6; ++j) p.layers[l](t, j) = s.layers[l](perm[t], j);
    const auto a = vec(b.embed(s).vector), c = vec(b.embed(p).vector);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], c[i], 1e-12) << to_string(k);
  }
}

TEST(Wavg, OneHotWeightsSelectALayer) {
  BackendDims d = kDims;
  d.embed_dim = d.feature_dim;
  Backend b(BackendKind::wavg, d, ConstraintMode::none, 10);
  b.wavg().w->value = Tensor::vector({0, 0, 1, 0});
  b.wavg().w_emb->value = Tensor::identity(6);
  const LayerStack s = random_stack(4, 5, 6, 10);
  std::vector<double> mean(6, 0.0);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t j = 0; j < 6; ++j) mean[j] += s.layers[2](t, j) / 5.0;
  const auto want = oracle::normalize(mean);
  const auto got = vec(b.embed(s).vector);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(got[j], want[j], 1e-12);
}

TEST(TopAttn, IdenticalFramesGiveMeanAndFlooredStd) {
  BackendDims d = kDims;
  d.embed_dim = 2 * d.feature_dim;
  Backend b(BackendKind::topattn, d, ConstraintMode::none, 11);
  b.topattn().w_emb->value = Tensor::identity(12);
  LayerStack s = random_stack(4, 4, 6, 11);
  for (std::size_t t = 1; t < 4; ++t)
    for (std::size_t j = 0; j < 6; ++j) s.layers[3](t, j) = s.layers[3](0, j);
  std::vector<double> want;
  for (std::size_t j = 0; j < 6; ++j) want.push_back(s.layers[3](0, j));
  for (std::size_t j = 0; j < 6; ++j) want.push_back(std::sqrt(1e-9));
  want = oracle::normalize(want);
  const auto got = vec(b.embed(s).vector);
  for (std::size_t j = 0; j < 12; ++j) EXPECT_NEAR(got[j], want[j], 1e-9);
}

TEST(TopAttn, ReadsOnlyTheTopLayer) {
  Backend b(BackendKind::topattn, kDims, ConstraintMode::none, 12);
  LayerStack s = random_stack(4, 5, 6, 12);
  const auto a = vec(b.embed(s).vector);
  s.layers[0] = s.layers[1] = s.layers[2] = Tensor({5, 6});
  EXPECT_EQ(vec(b.embed(s).vector), a);
}

TEST(Constraints, TiedTensorsAreOneObject) {
  const Backend sw(BackendKind::mhfa, kDims, ConstraintMode::shared_weights, 1);
  EXPECT_EQ(sw.mhfa().w_k.get(), sw.mhfa().w_v.get());
  EXPECT_NE(sw.mhfa().s_k.get(), sw.mhfa().s_v.get());
  const Backend sl(BackendKind::mhfa, kDims, ConstraintMode::shared_linear, 1);
  EXPECT_EQ(sl.mhfa().s_k.get(), sl.mhfa().s_v.get());
  EXPECT_NE(sl.mhfa().w_k.get(), sl.mhfa().w_v.get());
  const Backend sb(BackendKind::mhfa, kDims, ConstraintMode::shared_both, 1);
  EXPECT_EQ(sb.mhfa().w_k.get(), sb.mhfa().w_v.get());
  EXPECT_EQ(sb.mhfa().s_k.get(), sb.mhfa().s_v.get());
}

TEST(Constraints, SharedWeightsStayEqualAfterAnUpdate) {
  Backend b(BackendKind::mhfa, kDims, ConstraintMode::shared_weights, 2);
  Graph g;
  std::vector<Var> zs;
  for (const Tensor& z : random_stack(4, 5, 6, 2).layers) zs.push_back(g.constant(z));
  g.backward(sum_all(mul(b.forward(g, zs), g.constant(Tensor({1, 5}, 1.0)))));
  std::vector<ParamGroup> groups{ParamGroup{"backend", b.parameters(), 1e-2, 1e-2, 0}};
  const Tensor before = b.mhfa().w_k->value;
  Adam().step(groups);
  EXPECT_NE(b.mhfa().w_k->value, before);
  EXPECT_EQ(b.mhfa().w_k->value, b.mhfa().w_v->value);
}

TEST(Constraints, IndependentWeightsMoveIndependently) {
  const Backend b(BackendKind::mhfa, kDims, ConstraintMode::none, 3);
  const Tensor wv = b.mhfa().w_v->value;
  b.mhfa().w_k->value[0] += 1.0;
  EXPECT_EQ(b.mhfa().w_v->value, wv);
}

TEST(Backends, ParameterCountsFollowTheDimensions) {
  const BackendDims d{5, 32, 16, 8, 32};
  const std::size_t L1 = 5, F = 32, D = 16, H = 8, E = 32;
  EXPECT_EQ(Backend(BackendKind::mhfa, d, ConstraintMode::none, 1).parameter_count(),
            2 * L1 + 2 * F * D + D * H + H * D * E);
  EXPECT_EQ(Backend(BackendKind::mhfa, d, ConstraintMode::shared_both, 1).parameter_count(),
            L1 + F * D + D * H + H * D * E);
  EXPECT_EQ(Backend(BackendKind::wavg, d, ConstraintMode::none, 1).parameter_count(), L1 + F * E);
  const std::size_t hid = topattn_hidden(F);
  EXPECT_EQ(Backend(BackendKind::topattn, d, ConstraintMode::none, 1).parameter_count(),
            F * hid + hid + hid + 2 * F * E);
  // Going from 1 head to 8 adds 7 query columns and 7 D-wide projection blocks.
  BackendDims one = d;
  one.heads = 1;
  EXPECT_EQ(Backend(BackendKind::mhfa, d, ConstraintMode::none, 1).parameter_count() -
                Backend(BackendKind::mhfa, one, ConstraintMode::none, 1).parameter_count(),
            D * 7 + 7 * D * E);
}

TEST(Report, UniformAtInitAndAnalyticExample) {
  Backend b(BackendKind::mhfa, kDims, ConstraintMode::none, 4);
  const auto r = layer_weight_report(b);
  for (double v : r.key) EXPECT_NEAR(v, 0.25, 1e-15);
  for (double v : r.value) EXPECT_NEAR(v, 0.25, 1e-15);
  BackendDims two = kDims;
  two.n_layers = 2;
  Backend w(BackendKind::wavg, two, ConstraintMode::none, 4);
  w.wavg().w->value = Tensor::vector({0.0, std::log(3.0)});
  const auto rw = layer_weight_report(w);
  EXPECT_TRUE(rw.key.empty());
  EXPECT_NEAR(rw.value[0], 0.25, 1e-15);
  EXPECT_NEAR(rw.value[1], 0.75, 1e-15);
  EXPECT_THROW(layer_weight_report(Backend(BackendKind::topattn, kDims, ConstraintMode::none, 4)),
               ConfigError);
}

TEST(Report, RandomWeightsSumToOne) {
  Backend b(BackendKind::mhfa, kDims, ConstraintMode::none, 5);
  std::mt19937_64 rng(5);
  detail::jitter(b.parameters(), rng, 2.0);
  const auto r = layer_weight_report(b);
  EXPECT_NEAR(std::accumulate(r.key.begin(), r.key.end(), 0.0), 1.0, 1e-12);
  EXPECT_NEAR(std::accumulate(r.value.begin(), r.value.end(), 0.0), 1.0, 1e-12);
}

TEST(Backends, NamesRoundTrip) {
  for (BackendKind k : {BackendKind::mhfa, BackendKind::wavg, BackendKind::topattn})
    EXPECT_EQ(parse_backend(to_string(k)), k);
  for (ConstraintMode m : {ConstraintMode::none, ConstraintMode::shared_weights,
                           ConstraintMode::shared_linear, ConstraintMode::shared_both})
    EXPECT_EQ(parse_constraint(to_string(m)), m);
  EXPECT_THROW(parse_backend("xvector"), ConfigError);
}
