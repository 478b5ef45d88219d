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

#include "vqlab/data.hpp"

namespace vqlab {

inline constexpr double kPsnrCap = 99.0;
inline constexpr std::size_t kSsimWindow = 8;

//! Borrowed H x W x C image with values nominally in [0, 1].
struct ImageView {
  const float* data = nullptr;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  ImageView() = default;
  ImageView(const float* d, std::size_t h, std::size_t w, std::size_t c)
      : data(d), height(h), width(w), channels(c) {}
  ImageView(const Image& img)  // NOLINT: implicit view
      : data(img.pixels.data()), height(img.height), width(img.width),
        channels(img.channels) {}
  std::size_t numel() const { return height * width * channels; }
};

double mse(ImageView a, ImageView b);

//! 10 log10(1 / mse), or kPsnrCap when mse is zero.
double psnr(ImageView a, ImageView b);
double psnr_from_mse(double mse);

//! Mean SSIM of the channel-mean grayscale images over all 8x8 windows at
//! stride 1 with uniform weights and constants (0.01)^2, (0.03)^2.
double ssim(ImageView a, ImageView b);

struct QualityReport {
  std::vector<double> mse;
  std::vector<double> psnr;
  std::vector<double> ssim;
  // Means of the per-image values.
  double mean_mse = 0.0;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;

  std::size_t count() const { return mse.size(); }
};

//! Compares image i of reference with image i of reconstruction.
QualityReport evaluate_quality(const Dataset& reference,
                               const Dataset& reconstruction);

//! Rows "index,count,active" with active = 1 when count >= 1.
std::string code_activity_csv(std::span<const std::uint64_t> counts);
void export_code_activity(std::span<const std::uint64_t> counts,
                          const std::filesystem::path& path);

//! Float formatted with 6 significant digits, as used in every CSV.
std::string format_number(double v);

}  // namespace vqlab
