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
#include <optional>
#include <string>
#include <vector>

#include "vqlab/codebook.hpp"
#include "vqlab/data.hpp"
#include "vqlab/model.hpp"
#include "vqlab/trainer.hpp"

namespace vqlab {

//! How the quantizer's codebook is built.
struct CodebookConfig {
  std::size_t size = 4096;
  //! Used for LC and for ablations; GD, FC and EMA default to random-init.
  InitStrategy init = InitStrategy::kKMeans;
  FeatureSource source = FeatureSource::kPixelPatch;
  std::string feature_file;  // for imported-file
  bool minibatch = false;
  int kmeans_iters = 20;
  std::size_t max_points = 65536;
  Metric metric = Metric::kL2;
  bool normalize = false;
  //! LC without projector: frozen entries searched directly.
  bool projector = true;
  //! GD codebook seen through a projector (trainable + projector ablation).
  bool gd_projector = false;
  double ema_gamma = 0.99;

  void validate() const;
  std::string to_json() const;
  static CodebookConfig from_json(const std::string& text);
};

//! Patch features of the training images from the configured source.
FeatureSet codebook_features(const CodebookConfig& cb, const ModelConfig& model,
                             const Dataset& train);

QuantizerState build_quantizer(const ModelConfig& model, const CodebookConfig& cb,
                               const Dataset& train);
//! As build_quantizer with the LC codebook taken from `features`.
QuantizerState build_quantizer_from(const ModelConfig& model, const CodebookConfig& cb,
                                    const FeatureSet& features);

}  // namespace vqlab
