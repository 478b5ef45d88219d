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

#include "vqlab/clustering.hpp"
#include "vqlab/data.hpp"

namespace vqlab {

struct TinyEncoderOptions {
  std::size_t patch = 4;
  std::size_t hidden = 128;
  std::size_t width = 32;  // bottleneck
  std::size_t steps = 2000;
  std::size_t batch = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

//! Bottleneck activations of a small continuous patch autoencoder trained
//! on the dataset's own patches, one row per patch in token order.
FeatureSet extract_tiny_encoder_features(const Dataset& ds,
                                         const TinyEncoderOptions& opts = {});

}  // namespace vqlab
