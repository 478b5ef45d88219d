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
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vqlab/clustering.hpp"
#include "vqlab/tensor.hpp"

namespace vqlab {

enum class InitStrategy { kRandomInit, kRandomSelection, kKMeans };

std::string strategy_name(InitStrategy s);
InitStrategy parse_strategy(const std::string& name);

struct Codebook {
  //! N x D. A leaf that requires grad only when trained by gradient descent.
  Tensor entries;
  bool frozen = true;
  InitStrategy init_strategy = InitStrategy::kRandomInit;
  std::string source_dataset;
  std::uint64_t seed = 0;

  std::size_t size() const { return entries.rows(); }
  std::size_t dim() const { return entries.cols(); }
  std::uint64_t checksum() const;
  void validate() const;
  //! Deep copy; the clone has no tape history.
  Codebook clone() const;
};

//! Affine map from codebook space (D) to quantization space (D').
struct Projector {
  Tensor weight;  // D x D'
  Tensor bias;    // D', absent when use_bias is false
  bool use_bias = true;

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
  std::vector<Tensor> parameters() const;
  void validate() const;
};

//! Uniform fan-in initialisation U(-1/sqrt(D), 1/sqrt(D)) for weight and bias.
Projector make_projector(std::size_t in_dim, std::size_t out_dim,
                         std::uint64_t seed, bool use_bias = true);

//! Entries i.i.d. uniform in [-1/N, 1/N].
Codebook init_random(std::size_t n, std::size_t d, std::uint64_t seed);

//! N distinct feature rows sampled without replacement.
Codebook init_random_selection(const FeatureSet& features, std::size_t n,
                               std::uint64_t seed);

struct KMeansInitOptions {
  bool minibatch = false;
  int max_iters = 100;
  double tol = 1e-4;
  std::size_t batch = 4096;
  int steps = 300;
  //! Cluster a seeded random subset of at most this many rows; 0 keeps all.
  std::size_t max_points = 0;
};

Codebook init_kmeans(const FeatureSet& features, std::size_t n,
                     std::uint64_t seed, const KMeansInitOptions& opts = {});

//! Rowwise entries * W + bias, recorded on the active tape. Frozen entries
//! never receive a gradient.
Tensor project(const Codebook& codebook, const Projector& projector);

std::vector<std::uint8_t> encode_codebook(const Codebook& cb);
Codebook decode_codebook(std::span<const std::uint8_t> bytes);
void save_codebook(const Codebook& cb, const std::filesystem::path& path);
Codebook load_codebook(const std::filesystem::path& path);

}  // namespace vqlab
