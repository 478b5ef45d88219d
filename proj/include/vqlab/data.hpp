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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vqlab/clustering.hpp"

namespace vqlab {

//! Row-major H x W x C image with values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> pixels;

  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
};

//! Square images of one size stored back to back.
struct Dataset {
  std::string name;
  std::uint64_t seed = 0;
  std::string split = "train";
  std::size_t size = 0;
  std::size_t channels = 3;
  std::vector<float> pixels;

  std::size_t image_numel() const { return size * size * channels; }
  std::size_t count() const {
    return image_numel() == 0 ? 0 : pixels.size() / image_numel();
  }
  std::span<const float> image(std::size_t i) const {
    return {pixels.data() + i * image_numel(), image_numel()};
  }
  Image image_copy(std::size_t i) const;
  void add(const Image& img);
  Dataset subset(std::span<const std::size_t> indices) const;
  //! Throws on mixed shapes or values outside [0, 1].
  void validate() const;
};

enum class SyntheticStyle { kBlobs, kStripes, kChecker, kMixed };

std::string style_name(SyntheticStyle s);
SyntheticStyle parse_style(const std::string& name);

//! Relative frequency of blobs, stripes and checker images for kMixed.
using StyleMix = std::array<double, 3>;

Dataset gen_synthetic(SyntheticStyle style, std::size_t count, std::size_t size,
                      std::uint64_t seed, std::size_t channels = 3,
                      StyleMix mix = {1.0, 1.0, 1.0});

struct DatasetSplit {
  Dataset train;
  Dataset eval;
};

//! Seeded shuffle, then the first eval_fraction (at least one image when
//! count > 1) goes to eval.
DatasetSplit split_dataset(const Dataset& ds, double eval_fraction,
                           std::uint64_t seed);

Dataset concat(const Dataset& a, const Dataset& b);

//! Binary Netpbm: P6 for three channels, P5 for one; 8-bit only.
Image load_ppm(const std::filesystem::path& path);
Image decode_ppm(std::span<const std::uint8_t> bytes);
void save_ppm(const Image& img, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_ppm(const Image& img);

//! "VQTF" file: version, rows, cols, source tag, little-endian f32 rows.
void save_feature_file(const FeatureSet& fs, const std::filesystem::path& path);
FeatureSet load_feature_file(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_feature_file(const FeatureSet& fs);
FeatureSet decode_feature_file(std::span<const std::uint8_t> bytes);

//! Copies patch (py, px) of a size x size x channels image as a flat
//! patch x patch x channels row.
void extract_patch(std::span<const float> image, std::size_t size,
                   std::size_t channels, std::size_t patch, std::size_t py,
                   std::size_t px, float* out);
//! Inverse of extract_patch.
void place_patch(std::span<float> image, std::size_t size, std::size_t channels,
                 std::size_t patch, std::size_t py, std::size_t px,
                 const float* in);

//! One row per non-overlapping patch, images in order and patches row-major,
//! each row minus its own mean.
FeatureSet extract_pixel_patch_features(const Dataset& ds, std::size_t patch);

//! Recipe for a synthetic dataset, stored as manifest JSON.
struct DatasetSpec {
  std::string name = "synthetic";
  std::uint64_t seed = 1;
  std::size_t count = 5000;
  std::size_t size = 32;
  std::size_t channels = 3;
  SyntheticStyle style = SyntheticStyle::kMixed;
  StyleMix mix = {1.0, 1.0, 1.0};

  Dataset generate() const;
  std::string to_json() const;
  static DatasetSpec from_json(const std::string& text);
};

void save_manifest(const DatasetSpec& spec, const std::filesystem::path& path);
DatasetSpec load_manifest(const std::filesystem::path& path);

}  // namespace vqlab
