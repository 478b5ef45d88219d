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
//
// Small models and datasets shared by the model, trainer and experiment
// tests.
#pragma once

#include "vqlab/data.hpp"
#include "vqlab/experiments.hpp"
#include "vqlab/model.hpp"

namespace vqlab::testing {

inline ModelConfig small_model_config(Variant v, std::uint64_t seed = 1) {
  ModelConfig cfg;
  cfg.image_size = 8;
  cfg.patch_size = 4;
  cfg.enc_hidden = {16};
  cfg.feature_dim = 12;
  cfg.code_dim = 4;
  cfg.variant = v;
  cfg.seed = seed;
  return cfg;
}

inline Dataset small_dataset(std::size_t count = 24, std::uint64_t seed = 3) {
  return gen_synthetic(SyntheticStyle::kMixed, count, 8, seed);
}

inline Autoencoder small_model(Variant v, std::uint64_t seed = 1, std::size_t n = 16,
                               const Dataset& data = small_dataset()) {
  const ModelConfig cfg = small_model_config(v, seed);
  CodebookConfig cb;
  cb.size = n;
  cb.kmeans_iters = 5;
  return Autoencoder(cfg, build_quantizer(cfg, cb, data));
}

}  // namespace vqlab::testing
