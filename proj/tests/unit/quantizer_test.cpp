// Copyright 2026 The vqlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <random>

#include "../oracles/ema_oracle.hpp"
#include "test_util.hpp"
#include "vqlab/error.hpp"
#include "vqlab/quantizer.hpp"

namespace vqlab {
namespace {

Codebook trainable(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Codebook cb;
  cb.entries = testing::uniform_tensor({n, d}, rng);
  cb.frozen = false;
  return cb;
}

TokenMap tokens_of(std::vector<std::int32_t> idx, std::size_t n) {
  TokenMap tm;
  tm.height = idx.size();
  tm.width = 1;
  tm.codebook_size = n;
  tm.distances.assign(idx.size(), 0.0f);
  tm.indices = std::move(idx);
  return tm;
}

TEST(QuantizationLoss, ZeroWhenEqual) {
  std::mt19937_64 rng(1);
  const Tensor z = testing::uniform_tensor({5, 3}, rng);
  for (Variant v : {Variant::kGD, Variant::kFC, Variant::kEMA, Variant::kLC})
    EXPECT_EQ(quantization_loss(v, z, z.clone(), 1.0f, 0.33f).item(), 0.0f);
}

TEST(QuantizationLoss, DefaultCoefficients) {
  const Tensor z_pre({1}, std::vector<float>{0.0f});
  const Tensor z_q({1}, std::vector<float>{1.0f});
  EXPECT_NEAR(quantization_loss(Variant::kGD, z_pre, z_q, 1.0f, 0.33f).item(), 1.33f, 1e-6f);
  EXPECT_NEAR(quantization_loss(Variant::kEMA, z_pre, z_q, 1.0f, 0.33f).item(), 1.0f, 1e-6f);
  EXPECT_THROW(quantization_loss(Variant::kGD, z_pre, Tensor({2}), 1, 1), ShapeError);
}

TEST(QuantizationLoss, GradientRouting) {
  std::mt19937_64 rng(2);
  for (Variant v : {Variant::kGD, Variant::kEMA}) {
    Tensor z = testing::uniform_tensor({4, 3}, rng);
    Tensor table = testing::uniform_tensor({6, 3}, rng);
    z.set_requires_grad(true);
    table.set_requires_grad(true);
    TapeScope scope;
    const std::vector<std::int32_t> idx = {0, 5, 2, 2};
    scope.tape().backward(
        quantization_loss(v, z, gather_rows(table, idx), 1.0f, 0.33f));
    EXPECT_TRUE(z.has_grad());
    if (v == Variant::kEMA) {
      EXPECT_FALSE(table.has_grad());
    } else {
      ASSERT_TRUE(table.has_grad());
      double norm = 0.0;
      for (float g : table.grad()) norm += std::abs(g);
      EXPECT_GT(norm, 0.0);
    }
  }
}

TEST(Ema, UnassignedEntryUnchanged) {
  Codebook cb = trainable(4, 2, 3);
  EmaStats st = EmaStats::start(cb);
  const std::vector<float> before(cb.entries.data().begin(), cb.entries.data().end());
  Matrix z(2, 2, {1, 2, 3, 4});
  ema_update(st, cb, tokens_of({1, 1}, 4), z);
  for (std::size_t i : {0u, 2u, 3u})
    for (std::size_t j = 0; j < 2; ++j)
      EXPECT_EQ(cb.entries.data()[i * 2 + j], before[i * 2 + j]);
}

TEST(Ema, ZeroDecayReplacesEntry) {
  Codebook cb = trainable(3, 2, 4);
  EmaStats st = EmaStats::start(cb, 0.0);
  Matrix z(1, 2, {0.25f, -7.5f});
  ema_update(st, cb, tokens_of({2}, 3), z);
  EXPECT_EQ(cb.entries.data()[4], 0.25f);
  EXPECT_EQ(cb.entries.data()[5], -7.5f);
}

TEST(Ema, MatchesClosedFormOverScriptedSteps) {
  std::mt19937_64 rng(5);
  const std::size_t n = 5, d = 3;
  Codebook cb = trainable(n, d, 6);
  std::vector<std::vector<double>> e0(n);
  for (std::size_t i = 0; i < n; ++i)
    e0[i].assign(cb.entries.data().begin() + long(i * d),
                 cb.entries.data().begin() + long((i + 1) * d));
  EmaStats st = EmaStats::start(cb, 0.99);
  std::vector<oracle::EmaHistory> hist(n);
  const std::vector<std::vector<std::int32_t>> script = {
      {0, 0, 1}, {0, 2, 2, 2}, {1}, {0, 1, 2, 3}, {3, 3}};
  for (const auto& step : script) {
    Matrix z(step.size(), d, testing::uniform_values(step.size() * d, rng));
    std::vector<double> cnt(n, 0.0);
    std::vector<std::vector<double>> sums(n, std::vector<double>(d, 0.0));
    for (std::size_t t = 0; t < step.size(); ++t) {
      cnt[std::size_t(step[t])] += 1;
      for (std::size_t j = 0; j < d; ++j) sums[std::size_t(step[t])][j] += z(t, j);
    }
    for (std::size_t i = 0; i < n; ++i)
      if (cnt[i] > 0) {
        hist[i].n.push_back(cnt[i]);
        hist[i].s.push_back(sums[i]);
      }
    ema_update(st, cb, tokens_of(step, n), z);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        EXPECT_NEAR(cb.entries.data()[i * d + j],
                    st.sums[i * d + j] / std::max(st.counts[i], st.eps), 1e-6);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto want = oracle::ema_closed_form(e0[i], hist[i], 0.99, 1e-5);
    for (std::size_t j = 0; j < d; ++j)
      EXPECT_NEAR(cb.entries.data()[i * d + j], want[j], 1e-6) << "entry " << i;
  }
  // Entry 4 was never assigned.
  EXPECT_EQ(std::vector<float>(cb.entries.data().begin() + 12, cb.entries.data().end()),
            std::vector<float>(e0[4].begin(), e0[4].end()));
}

TEST(Ema, Errors) {
  Codebook cb = trainable(3, 2, 7);
  EmaStats st = EmaStats::start(cb);
  Matrix z(1, 2, 0.0f);
  EXPECT_THROW(ema_update(st, cb, tokens_of({3}, 3), z), std::out_of_range);
  EXPECT_THROW(ema_update(st, cb, tokens_of({0, 1}, 3), z), ShapeError);
  cb.frozen = true;
  EXPECT_THROW(ema_update(st, cb, tokens_of({0}, 3), z), std::logic_error);
  EXPECT_THROW(EmaStats::start(cb, 1.0), std::invalid_argument);
}

TEST(Utilization, Rates) {
  std::vector<TokenMap> maps = {tokens_of(std::vector<std::int32_t>(50, 0), 100)};
  EXPECT_DOUBLE_EQ(utilization_sets(maps, 100).rate(), 0.01);
  std::vector<std::int32_t> all(100);
  for (int i = 0; i < 100; ++i) all[std::size_t(i)] = i;
  maps = {tokens_of(all, 100)};
  const Utilization u = utilization_sets(maps, 100);
  EXPECT_DOUBLE_EQ(u.rate(), 1.0);
  EXPECT_EQ(u.total(), 100u);
  maps.push_back(tokens_of({7, 7, 7}, 100));
  EXPECT_EQ(utilization_sets(maps, 100).total(), 103u);
  EXPECT_EQ(utilization_sets(maps, 100).counts[7], 4u);
  maps.push_back(tokens_of({100}, 100));
  EXPECT_THROW(utilization_sets(maps, 100), std::out_of_range);
}

TEST(UsageCounter, MergeAndReset) {
  UsageCounter a(4), b(4);
  a.add(std::vector<std::int32_t>{0, 1});
  b.add(std::vector<std::int32_t>{1, 3});
  a.merge(b);
  EXPECT_EQ(a.snapshot().counts, (std::vector<std::uint64_t>{1, 2, 0, 1}));
  EXPECT_EQ(a.snapshot().active(), 3u);
  a.reset();
  EXPECT_EQ(a.snapshot().active(), 0u);
  EXPECT_THROW(a.merge(UsageCounter(5)), ShapeError);
}

QuantizerState lc_state(std::uint64_t seed) {
  QuantizerState q;
  q.variant = Variant::kLC;
  q.codebook = init_random(32, 6, seed);
  q.codebook.frozen = true;
  q.projector = make_projector(6, 3, seed);
  return q;
}

TEST(QuantizerState, Validation) {
  QuantizerState q = lc_state(1);
  EXPECT_NO_THROW(q.validate());
  q.codebook.frozen = false;
  EXPECT_THROW(q.validate(), ConfigError);
  q = lc_state(1);
  q.projector.reset();
  EXPECT_THROW(q.validate(), ConfigError);
  q.projector_ablated = true;
  EXPECT_NO_THROW(q.validate());
  q = lc_state(1);
  q.variant = Variant::kEMA;
  q.codebook.frozen = false;
  q.projector.reset();
  EXPECT_THROW(q.validate(), ConfigError);
  q.ema = EmaStats::start(q.codebook);
  EXPECT_NO_THROW(q.validate());
  q.alpha = 0.0f;
  EXPECT_THROW(q.validate(), ConfigError);
}

TEST(QuantizerState, LcRoutesGradientToProjectorOnly) {
  std::mt19937_64 rng(3);
  const QuantizerState q = lc_state(2);
  Tensor z = testing::uniform_tensor({20, 3}, rng, -0.3f, 0.3f);
  z.set_requires_grad(true);
  const std::uint64_t before = q.codebook.checksum();
  TapeScope scope;
  const QuantizeOutput out = q.apply(z);
  EXPECT_EQ(out.tokens.indices,
            quantize(z, project(q.codebook, *q.projector)).indices);
  scope.tape().backward(quantization_loss(q.variant, z, out.z_q, q.alpha, q.beta));
  EXPECT_FALSE(q.codebook.entries.has_grad());
  EXPECT_TRUE(q.projector->weight.has_grad());
  EXPECT_TRUE(q.projector->bias.has_grad());
  EXPECT_EQ(q.codebook.checksum(), before);
  EXPECT_EQ(q.parameters().size(), 2u);
}

TEST(QuantizerState, NormalizedSearchUsesCosineGeometry) {
  std::mt19937_64 rng(4);
  QuantizerState q;
  q.variant = Variant::kFC;
  q.codebook = trainable(64, 4, 9);
  q.codebook.entries.set_requires_grad(true);
  q.normalize = true;
  const Tensor z = testing::uniform_tensor({30, 4}, rng);
  NoGradGuard ng;
  const QuantizeOutput out = q.apply(z);
  EXPECT_EQ(out.tokens.indices, quantize(z, q.codebook.entries, Metric::kCosine).indices);
}

TEST(Variant, NamesRoundTrip) {
  for (Variant v : {Variant::kGD, Variant::kFC, Variant::kEMA, Variant::kLC})
    EXPECT_EQ(parse_variant(variant_name(v)), v);
  EXPECT_THROW(parse_variant("RQ"), ConfigError);
}

}  // namespace
}  // namespace vqlab
