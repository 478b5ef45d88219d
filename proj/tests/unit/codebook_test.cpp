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

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "../oracles/op_oracles.hpp"
#include "test_util.hpp"
#include "vqlab/binary_io.hpp"
#include "vqlab/codebook.hpp"
#include "vqlab/error.hpp"

namespace vqlab {
namespace {

FeatureSet random_features(std::size_t p, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FeatureSet fs;
  fs.rows = Matrix(p, d, testing::uniform_values(p * d, rng));
  fs.dataset_id = "unit";
  return fs;
}

std::multiset<std::vector<float>> rows_of(std::span<const float> v, std::size_t d) {
  std::multiset<std::vector<float>> out;
  for (std::size_t i = 0; i < v.size(); i += d) out.emplace(v.begin() + i, v.begin() + i + d);
  return out;
}

TEST(InitRandom, SeededAndBounded) {
  const Codebook a = init_random(64, 8, 3), b = init_random(64, 8, 3);
  EXPECT_EQ(a.checksum(), b.checksum());
  EXPECT_NE(a.checksum(), init_random(64, 8, 4).checksum());
  for (float v : a.entries.data()) {
    EXPECT_GE(v, -1.0f / 64);
    EXPECT_LE(v, 1.0f / 64);
  }
  const Codebook one = init_random(1, 5, 0);
  for (float v : one.entries.data()) EXPECT_LE(std::abs(v), 1.0f);
  EXPECT_EQ(a.init_strategy, InitStrategy::kRandomInit);
  EXPECT_THROW(init_random(0, 4, 0), ShapeError);
}

TEST(InitRandomSelection, PermutationAndDeterminism) {
  const FeatureSet fs = random_features(40, 3, 1);
  const Codebook all = init_random_selection(fs, 40, 7);
  EXPECT_EQ(rows_of(all.entries.data(), 3), rows_of(fs.rows.values, 3));
  const Codebook part = init_random_selection(fs, 10, 7);
  EXPECT_EQ(part.checksum(), init_random_selection(fs, 10, 7).checksum());
  EXPECT_EQ(part.source_dataset, "unit");
  EXPECT_THROW(init_random_selection(fs, 41, 7), std::invalid_argument);
}

TEST(InitKMeans, DistinctPointsReproduced) {
  const FeatureSet fs = random_features(16, 4, 2);
  const Codebook cb = init_kmeans(fs, 16, 5);
  EXPECT_EQ(rows_of(cb.entries.data(), 4), rows_of(fs.rows.values, 4));
  EXPECT_EQ(cb.init_strategy, InitStrategy::kKMeans);
  EXPECT_EQ(cb.checksum(), init_kmeans(fs, 16, 5).checksum());
  KMeansInitOptions mb;
  mb.minibatch = true;
  mb.batch = 64;
  mb.steps = 20;
  const FeatureSet big = random_features(2000, 4, 3);
  EXPECT_EQ(init_kmeans(big, 32, 1, mb).checksum(), init_kmeans(big, 32, 1, mb).checksum());
  KMeansInitOptions capped;
  capped.max_points = 500;
  EXPECT_EQ(init_kmeans(big, 32, 1, capped).size(), 32u);
}

TEST(Project, IdentityAndBiasOnly) {
  const Codebook cb = init_random(10, 3, 1);
  Projector p = make_projector(3, 3, 0);
  std::fill(p.weight.mutable_data().begin(), p.weight.mutable_data().end(), 0.0f);
  for (int i = 0; i < 3; ++i) p.weight.mutable_data()[i * 3 + i] = 1.0f;
  std::fill(p.bias.mutable_data().begin(), p.bias.mutable_data().end(), 0.0f);
  Tensor out = project(cb, p);
  EXPECT_TRUE(std::equal(out.data().begin(), out.data().end(), cb.entries.data().begin()));

  Projector bias_only = make_projector(3, 2, 4);
  std::fill(bias_only.weight.mutable_data().begin(), bias_only.weight.mutable_data().end(), 0.0f);
  out = project(cb, bias_only);
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(out.at(r, c), bias_only.bias.data()[c]);
  EXPECT_THROW(project(cb, make_projector(4, 2, 0)), ShapeError);
}

TEST(Project, IsLinearWithoutBias) {
  std::mt19937_64 rng(8);
  const Projector p = make_projector(5, 3, 2, false);
  const Tensor b1 = testing::uniform_tensor({7, 5}, rng), b2 = testing::uniform_tensor({7, 5}, rng);
  const float a = 0.7f, b = -1.3f;
  Codebook mix, c1, c2;
  mix.entries = a * b1 + b * b2;
  c1.entries = b1;
  c2.entries = b2;
  const Tensor lhs = project(mix, p);
  const Tensor rhs = a * project(c1, p) + b * project(c2, p);
  for (std::size_t i = 0; i < lhs.numel(); ++i)
    EXPECT_NEAR(lhs.data()[i], rhs.data()[i], 1e-5);
}

TEST(Project, GradientsReachProjectorOnly) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Codebook cb = init_random_selection(random_features(30, 4, trial), 6, trial);
    Projector p = make_projector(4, 3, trial);
    const Tensor w_out = testing::uniform_tensor({6, 3}, rng);
    TapeScope scope;
    scope.tape().backward(sum(project(cb, p) * w_out));
    EXPECT_FALSE(cb.entries.has_grad());
    ASSERT_TRUE(p.weight.has_grad());
    ASSERT_TRUE(p.bias.has_grad());

    // Double-precision central differences of sum((B W + 1 b^T) * G).
    const oracle::Vec B = oracle::to_vec(cb.entries), G = oracle::to_vec(w_out),
                      W = oracle::to_vec(p.weight), bias = oracle::to_vec(p.bias);
    auto loss = [&](const oracle::Vec& w, const oracle::Vec& bv) {
      double acc = 0.0;
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
          double v = bv[j];
          for (std::size_t k = 0; k < 4; ++k) v += B[i * 4 + k] * w[k * 3 + j];
          acc += v * G[i * 3 + j];
        }
      return acc;
    };
    const auto num_w = oracle::central_differences(
        [&](const oracle::Vec& w) { return loss(w, bias); }, W, 1e-3);
    const auto num_b = oracle::central_differences(
        [&](const oracle::Vec& bv) { return loss(W, bv); }, bias, 1e-3);
    EXPECT_LT(oracle::max_rel_error(oracle::Vec(p.weight.grad().begin(), p.weight.grad().end()), num_w), 1e-4);
    EXPECT_LT(oracle::max_rel_error(oracle::Vec(p.bias.grad().begin(), p.bias.grad().end()), num_b), 1e-4);
  }
}

TEST(CodebookFile, RoundTripIsBitExact) {
  testing::TempDir dir("codebook");
  Codebook cb = init_kmeans(random_features(200, 6, 4), 20, 99);
  cb.frozen = true;
  cb.source_dataset = "synthetic-A ünicode";
  save_codebook(cb, dir / "cb.vqcb");
  const Codebook back = load_codebook(dir / "cb.vqcb");
  EXPECT_EQ(back.checksum(), cb.checksum());
  EXPECT_TRUE(std::equal(back.entries.data().begin(), back.entries.data().end(),
                         cb.entries.data().begin()));
  EXPECT_EQ(back.frozen, true);
  EXPECT_EQ(back.init_strategy, InitStrategy::kKMeans);
  EXPECT_EQ(back.source_dataset, cb.source_dataset);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.entries.shape(), cb.entries.shape());
}

TEST(CodebookFile, LayoutIsLittleEndian) {
  Codebook cb = init_random(2, 1, 0);
  cb.seed = 0x0102030405060708ULL;
  cb.source_dataset = "ab";
  const auto bytes = encode_codebook(cb);
  ASSERT_EQ(bytes.size(), 4u + 2 + 2 + 4 + 4 + 1 + 8 + 4 + 2 + 2 * 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "VQCB");
  EXPECT_EQ(bytes[4], 1);  // version
  EXPECT_EQ(bytes[6], 1);  // frozen flag
  EXPECT_EQ(bytes[8], 2);  // N
  EXPECT_EQ(bytes[12], 1);  // D
  EXPECT_EQ(bytes[17], 0x08);  // seed low byte first
  EXPECT_EQ(bytes[24], 0x01);
}

TEST(CodebookFile, RejectsCorruptInput) {
  testing::TempDir dir("codebook_bad");
  const Codebook cb = init_random(8, 4, 1);
  auto bytes = encode_codebook(cb);
  for (std::size_t cut : {std::size_t(0), std::size_t(3), std::size_t(20), bytes.size() - 1}) {
    std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + long(cut));
    EXPECT_THROW(decode_codebook(part), FormatError) << "cut " << cut;
  }
  auto wrong_version = bytes;
  wrong_version[4] = 9;
  EXPECT_THROW(decode_codebook(wrong_version), FormatError);
  auto wrong_magic = bytes;
  wrong_magic[0] = 'X';
  EXPECT_THROW(decode_codebook(wrong_magic), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_codebook(trailing), FormatError);
  EXPECT_THROW(load_codebook(dir / "missing.vqcb"), std::runtime_error);
}

TEST(Strategy, NamesRoundTrip) {
  for (auto s : {InitStrategy::kRandomInit, InitStrategy::kRandomSelection, InitStrategy::kKMeans})
    EXPECT_EQ(parse_strategy(strategy_name(s)), s);
  EXPECT_THROW(parse_strategy("zeros"), ConfigError);
}

}  // namespace
}  // namespace vqlab
