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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vqlab/codebook.hpp"
#include "vqlab/nearest.hpp"
#include "vqlab/tensor.hpp"

namespace vqlab {

//! GD: trainable codebook, gradient updates. FC: as GD with features
//! projected to a low dimension inside the encoder. EMA: codebook tracks
//! moving averages of assigned features. LC: frozen codebook seen through
//! a trainable projector.
enum class Variant { kGD, kFC, kEMA, kLC };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct EmaStats {
  std::vector<double> counts;  // N running cluster sizes
  std::vector<double> sums;    // N x D running feature sums
  double gamma = 0.99;
  double eps = 1e-5;

  //! Zero counts and sums chosen so that sums / max(counts, eps) is the
  //! current codebook.
  static EmaStats start(const Codebook& codebook, double gamma = 0.99,
                        double eps = 1e-5);
};

//! Moves every assigned entry to sums_i / max(counts_i, eps) after the
//! decayed update. Entries without tokens this step keep their value and
//! their statistics.
void ema_update(EmaStats& stats, Codebook& codebook, const TokenMap& tokens,
                MatrixView features);

//! alpha * mse(sg(z_q), z_pre) + beta * mse(sg(z_pre), z_q); the EMA
//! variant keeps only the first term.
Tensor quantization_loss(Variant variant, const Tensor& z_pre, const Tensor& z_q,
                         float alpha, float beta);

struct Utilization {
  std::vector<std::uint64_t> counts;
  std::vector<bool> used;

  std::size_t active() const;
  double rate() const;
  std::uint64_t total() const;
};

//! Per-entry token counts; an entry is used when it appears at least once.
Utilization utilization_sets(std::span<const TokenMap> token_maps, std::size_t n);

//! Streaming form of utilization_sets.
class UsageCounter {
 public:
  explicit UsageCounter(std::size_t n) : counts_(n, 0) {}
  void add(const TokenMap& tokens);
  void add(std::span<const std::int32_t> indices);
  void merge(const UsageCounter& other);
  void reset() { std::fill(counts_.begin(), counts_.end(), 0); }
  Utilization snapshot() const;
  std::size_t size() const { return counts_.size(); }

 private:
  std::vector<std::uint64_t> counts_;
};

struct QuantizeOutput {
  Tensor features;   // features as searched, on the tape
  Tensor z_q;        // selected effective entries, on the tape
  TokenMap tokens;
  Tensor effective;  // codebook searched, after projection/normalisation
};

struct QuantizerState {
  Variant variant = Variant::kLC;
  Codebook codebook;
  std::optional<Projector> projector;
  std::optional<EmaStats> ema;
  Metric metric = Metric::kL2;
  float alpha = 1.0f;
  float beta = 0.33f;
  //! l2-normalise features and entries before search (FC option).
  bool normalize = false;
  //! Ablation only: an LC-style frozen codebook searched without projector.
  bool projector_ablated = false;

  void validate() const;
  //! Width of the vectors that are searched.
  std::size_t code_dim() const;
  //! Entries as searched: projected for LC, normalised when requested.
  Tensor effective_codebook() const;
  //! Features as searched (normalised when requested).
  Tensor prepare_features(const Tensor& z) const;
  //! Nearest-entry selection with the selected rows gathered on the tape.
  QuantizeOutput apply(const Tensor& z) const;
  //! As apply, with the selection supplied instead of searched.
  QuantizeOutput apply_with_tokens(const Tensor& z, const TokenMap& tokens) const;
  //! Leaves updated by gradient descent: projector and/or codebook entries.
  std::vector<Tensor> parameters() const;
};

}  // namespace vqlab
