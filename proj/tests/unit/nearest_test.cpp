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

#include "../oracles/nearest_oracle.hpp"
#include "test_util.hpp"
#include "vqlab/error.hpp"
#include "vqlab/kernels.hpp"
#include "vqlab/nearest.hpp"

namespace vqlab {
namespace {

using oracle::SearchInstance;

MatrixView features_of(const SearchInstance& in) {
  return {in.features.data(), in.t, in.d};
}
MatrixView codebook_of(const SearchInstance& in) {
  return {in.codebook.data(), in.n, in.d};
}

TEST(Quantize, ExactRowMatch) {
  std::mt19937_64 rng(1);
  Matrix cb(6, 4, testing::uniform_values(24, rng));
  Matrix z(1, 4, std::vector<float>(cb.row(3), cb.row(3) + 4));
  for (Metric m : {Metric::kL2, Metric::kCosine}) {
    const TokenMap tm = quantize(z, cb, m);
    EXPECT_EQ(tm.indices[0], 3);
    EXPECT_NEAR(tm.distances[0], 0.0f, 1e-7f);
  }
}

TEST(Quantize, TieGoesToLowestIndex) {
  Matrix cb(3, 2, {0, 1, 1, 0, 1, 0});
  Matrix z(1, 2, {0, 0});
  EXPECT_EQ(quantize(z, cb).indices[0], 0);
  Matrix dup(4, 2, {5, 5, 1, 1, 1, 1, -1, -1});
  Matrix z2(2, 2, {1, 1, 0, 0});
  const TokenMap tm = quantize(z2, dup);
  EXPECT_EQ(tm.indices[0], 1);
  EXPECT_EQ(tm.indices[1], 1);
}

TEST(Quantize, MatchesBruteForceOnLargeRandomCase) {
  std::mt19937_64 rng(7);
  SearchInstance in;
  in.t = 1000;
  in.n = 4096;
  in.d = 8;
  in.features = testing::uniform_values(in.t * in.d, rng);
  in.codebook = testing::uniform_values(in.n * in.d, rng);
  const TokenMap tm = quantize(features_of(in), codebook_of(in));
  EXPECT_EQ(tm.indices, oracle::brute_argmin(in, false));
  EXPECT_EQ(tm.codebook_size, 4096u);
}

TEST(Quantize, MatchesBruteForceOnMixedInstances) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const SearchInstance in = oracle::random_instance(rng, 300, 2048, 32);
    for (bool cosine : {false, true}) {
      const Metric m = cosine ? Metric::kCosine : Metric::kL2;
      const auto expected = oracle::brute_argmin(in, cosine);
      ASSERT_EQ(quantize(features_of(in), codebook_of(in), m).indices, expected)
          << in.kind << " t=" << in.t << " n=" << in.n << " d=" << in.d
          << " cosine=" << cosine;
      ASSERT_EQ(quantize_reference(features_of(in), codebook_of(in), m).indices,
                expected)
          << in.kind;
    }
  }
}

TEST(Quantize, DistancesAreExactForChosenEntry) {
  std::mt19937_64 rng(3);
  const SearchInstance in = oracle::random_instance(rng, 200, 500, 16);
  const TokenMap tm = quantize(features_of(in), codebook_of(in));
  for (std::size_t r = 0; r < in.t; ++r) {
    const double want = oracle::brute_distance(
        &in.features[r * in.d], &in.codebook[std::size_t(tm.indices[r]) * in.d],
        in.d, false);
    EXPECT_EQ(tm.distances[r], static_cast<float>(want));
    EXPECT_GE(tm.distances[r], 0.0f);
  }
}

TEST(Quantize, CosineIgnoresPositiveRowScale) {
  std::mt19937_64 rng(5);
  Matrix cb(512, 16, testing::uniform_values(512 * 16, rng));
  Matrix z(200, 16, testing::uniform_values(200 * 16, rng));
  const TokenMap base = quantize(z, cb, Metric::kCosine);
  std::uniform_real_distribution<float> factor(0.01f, 100.0f);
  for (std::size_t r = 0; r < z.rows; ++r) {
    const float f = factor(rng);
    for (std::size_t p = 0; p < z.cols; ++p) z(r, p) *= f;
  }
  const TokenMap scaled = quantize(z, cb, Metric::kCosine);
  EXPECT_EQ(base.indices, scaled.indices);
  for (float d : scaled.distances) {
    EXPECT_GE(d, 0.0f);
    EXPECT_LE(d, 2.0f);
  }
}

TEST(Quantize, IndependentOfThreadCount) {
  std::mt19937_64 rng(9);
  Matrix cb(3000, 8, testing::uniform_values(24000, rng));
  Matrix z(777, 8, testing::uniform_values(777 * 8, rng));
  const int saved = kernels::max_threads();
  kernels::set_threads(1);
  const TokenMap one = quantize(z, cb);
  kernels::set_threads(4);
  const TokenMap four = quantize(z, cb);
  kernels::set_threads(saved);
  EXPECT_EQ(one.indices, four.indices);
  EXPECT_EQ(one.distances, four.distances);
}

TEST(Quantize, Errors) {
  Matrix cb(4, 3, 0.5f);
  Matrix bad(2, 2, 0.0f);
  EXPECT_THROW(quantize(bad, cb), ShapeError);
  EXPECT_THROW(quantize(bad, Matrix(0, 2)), ShapeError);
  Matrix nan(1, 3, std::numeric_limits<float>::quiet_NaN());
  EXPECT_THROW(quantize(nan, cb), NumericError);
  EXPECT_EQ(quantize(Matrix(0, 3), cb).size(), 0u);
}

TEST(Knn, FirstColumnIsQuantize) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const SearchInstance in = oracle::random_instance(rng, 100, 600, 12);
    const std::size_t m = 1 + rng() % std::min<std::size_t>(in.n, 40);
    for (Metric metric : {Metric::kL2, Metric::kCosine}) {
      const KnnResult nn = knn(features_of(in), codebook_of(in), m, metric);
      const TokenMap tm = quantize(features_of(in), codebook_of(in), metric);
      for (std::size_t r = 0; r < in.t; ++r) {
        ASSERT_EQ(nn.index(r, 0), tm.indices[r]) << in.kind;
        for (std::size_t c = 1; c < m; ++c)
          ASSERT_LE(nn.distance(r, c - 1), nn.distance(r, c));
      }
    }
  }
}

TEST(Knn, MOneEqualsQuantize) {
  std::mt19937_64 rng(17);
  Matrix cb(256, 8, testing::uniform_values(2048, rng));
  Matrix z(64, 8, testing::uniform_values(512, rng));
  EXPECT_EQ(knn(z, cb, 1).indices, quantize(z, cb).indices);
}

TEST(Knn, FullOrderingMatchesSortOracle) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 50; ++trial) {
    SearchInstance in = oracle::random_instance(rng, 50, 4, 6);
    in.n = 4;
    in.codebook.resize(4 * in.d);
    for (auto& v : in.codebook) v = std::uniform_real_distribution<float>(-1, 1)(rng);
    for (bool cosine : {false, true}) {
      const Metric m = cosine ? Metric::kCosine : Metric::kL2;
      EXPECT_EQ(knn(features_of(in), codebook_of(in), 4, m).indices,
                oracle::brute_sorted(in, 4, cosine));
      EXPECT_EQ(knn_reference(features_of(in), codebook_of(in), 4, m).indices,
                oracle::brute_sorted(in, 4, cosine));
    }
  }
}

TEST(Knn, MatchesSortOracleOnMixedInstances) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const SearchInstance in = oracle::random_instance(rng, 100, 1000, 16);
    const std::size_t m = 1 + rng() % std::min<std::size_t>(in.n, 33);
    EXPECT_EQ(knn(features_of(in), codebook_of(in), m).indices,
              oracle::brute_sorted(in, m, false))
        << in.kind;
  }
}

TEST(Knn, RejectsOutOfRangeM) {
  Matrix cb(4, 2, 1.0f);
  Matrix z(1, 2, 0.0f);
  EXPECT_THROW(knn(z, cb, 5), std::invalid_argument);
  EXPECT_THROW(knn(z, cb, 0), std::invalid_argument);
  EXPECT_THROW(knn_reference(z, cb, 5), std::invalid_argument);
}

TEST(Metric, ParseRoundTrip) {
  EXPECT_EQ(parse_metric(metric_name(Metric::kL2)), Metric::kL2);
  EXPECT_EQ(parse_metric(metric_name(Metric::kCosine)), Metric::kCosine);
  EXPECT_THROW(parse_metric("manhattan"), ConfigError);
}

}  // namespace
}  // namespace vqlab
