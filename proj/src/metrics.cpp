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
#include "vqlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "vqlab/binary_io.hpp"
#include "vqlab/error.hpp"

namespace vqlab {

namespace {

void check_pair(ImageView a, ImageView b, const char* what) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw ShapeError(std::string(what) + ": image shapes differ (" +
                     std::to_string(a.height) + "x" + std::to_string(a.width) + "x" +
                     std::to_string(a.channels) + " vs " + std::to_string(b.height) +
                     "x" + std::to_string(b.width) + "x" + std::to_string(b.channels) +
                     ")");
  if (a.numel() == 0) throw ShapeError(std::string(what) + ": empty image");
}

std::vector<double> grayscale(ImageView img) {
  std::vector<double> g(img.height * img.width);
  for (std::size_t p = 0; p < g.size(); ++p) {
    double s = 0.0;
    for (std::size_t c = 0; c < img.channels; ++c) s += img.data[p * img.channels + c];
    g[p] = s / double(img.channels);
  }
  return g;
}

// (H+1) x (W+1) inclusive prefix sums.
std::vector<double> summed_area(const std::vector<double>& v, std::size_t h,
                                std::size_t w) {
  std::vector<double> s((h + 1) * (w + 1), 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    double row = 0.0;
    for (std::size_t x = 0; x < w; ++x) {
      row += v[y * w + x];
      s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
    }
  }
  return s;
}

double box(const std::vector<double>& s, std::size_t w, std::size_t y, std::size_t x,
           std::size_t k) {
  const std::size_t stride = w + 1;
  return s[(y + k) * stride + x + k] - s[y * stride + x + k] - s[(y + k) * stride + x] +
         s[y * stride + x];
}

}  // namespace

double mse(ImageView a, ImageView b) {
  check_pair(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double e = double(a.data[i]) - double(b.data[i]);
    s += e * e;
  }
  return s / double(a.numel());
}

double psnr_from_mse(double m) {
  if (!(m >= 0.0)) throw NumericError("psnr: mse is negative or NaN");
  if (m == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double psnr(ImageView a, ImageView b) { return psnr_from_mse(mse(a, b)); }

double ssim(ImageView a, ImageView b) {
  check_pair(a, b, "ssim");
  const std::size_t h = a.height, w = a.width, k = kSsimWindow;
  if (h < k || w < k)
    throw ShapeError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                     " is smaller than the 8x8 window");
  const auto ga = grayscale(a), gb = grayscale(b);
  std::vector<double> aa(ga.size()), bb(ga.size()), ab(ga.size());
  for (std::size_t i = 0; i < ga.size(); ++i) {
    aa[i] = ga[i] * ga[i];
    bb[i] = gb[i] * gb[i];
    ab[i] = ga[i] * gb[i];
  }
  const auto sa = summed_area(ga, h, w), sb = summed_area(gb, h, w);
  const auto saa = summed_area(aa, h, w), sbb = summed_area(bb, h, w),
             sab = summed_area(ab, h, w);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const double inv = 1.0 / double(k * k);
  double total = 0.0;
  for (std::size_t y = 0; y + k <= h; ++y)
    for (std::size_t x = 0; x + k <= w; ++x) {
      const double ma = box(sa, w, y, x, k) * inv, mb = box(sb, w, y, x, k) * inv;
      const double va = std::max(0.0, box(saa, w, y, x, k) * inv - ma * ma);
      const double vb = std::max(0.0, box(sbb, w, y, x, k) * inv - mb * mb);
      const double cov = box(sab, w, y, x, k) * inv - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  const double mean = total / double((h - k + 1) * (w - k + 1));
  return std::clamp(mean, -1.0, 1.0);
}

QualityReport evaluate_quality(const Dataset& reference, const Dataset& reconstruction) {
  if (reference.size != reconstruction.size ||
      reference.channels != reconstruction.channels ||
      reference.count() != reconstruction.count())
    throw ShapeError("evaluate_quality: datasets differ in shape or count");
  QualityReport r;
  const std::size_t n = reference.count(), s = reference.size, c = reference.channels;
  r.mse.resize(n);
  r.psnr.resize(n);
  r.ssim.resize(n);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(n); ++i) {
    const ImageView a(reference.image(std::size_t(i)).data(), s, s, c);
    const ImageView b(reconstruction.image(std::size_t(i)).data(), s, s, c);
    r.mse[std::size_t(i)] = mse(a, b);
    r.psnr[std::size_t(i)] = psnr_from_mse(r.mse[std::size_t(i)]);
    r.ssim[std::size_t(i)] = ssim(a, b);
  }
  for (std::size_t i = 0; i < n; ++i) {
    r.mean_mse += r.mse[i];
    r.mean_psnr += r.psnr[i];
    r.mean_ssim += r.ssim[i];
  }
  if (n > 0) {
    r.mean_mse /= double(n);
    r.mean_psnr /= double(n);
    r.mean_ssim /= double(n);
  }
  return r;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string code_activity_csv(std::span<const std::uint64_t> counts) {
  std::string out = "index,count,active\n";
  for (std::size_t i = 0; i < counts.size(); ++i)
    out += std::to_string(i) + "," + std::to_string(counts[i]) + "," +
           (counts[i] >= 1 ? "1" : "0") + "\n";
  return out;
}

void export_code_activity(std::span<const std::uint64_t> counts,
                          const std::filesystem::path& path) {
  io::write_text(path, code_activity_csv(counts));
}

}  // namespace vqlab
