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

#include <cstdio>

#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include "test_util.hpp"
#include "vqlab/binary_io.hpp"
#include "vqlab/codebook.hpp"
#include "vqlab/data.hpp"
#include "vqlab/error.hpp"
#include "vqlab/nearest.hpp"

namespace vqlab {
namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) {
  return {s.begin(), s.end()};
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  for (auto style : {SyntheticStyle::kBlobs, SyntheticStyle::kStripes,
                     SyntheticStyle::kChecker, SyntheticStyle::kMixed}) {
    const Dataset a = gen_synthetic(style, 20, 32, 42);
    const Dataset b = gen_synthetic(style, 20, 32, 42);
    EXPECT_EQ(a.pixels, b.pixels) << style_name(style);
    EXPECT_EQ(a.count(), 20u);
  }
}

TEST(Synthetic, ValuesInUnitRange) {
  for (std::size_t ch : {1u, 3u}) {
    const Dataset ds = gen_synthetic(SyntheticStyle::kMixed, 200, 16, 3, ch);
    EXPECT_NO_THROW(ds.validate());
    for (float v : ds.pixels) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST(Synthetic, DifferentSeedsDiffer) {
  const Dataset a = gen_synthetic(SyntheticStyle::kMixed, 10, 32, 1);
  const Dataset b = gen_synthetic(SyntheticStyle::kMixed, 10, 32, 2);
  EXPECT_NE(a.pixels, b.pixels);
}

TEST(Synthetic, ImagesAreNotConstant) {
  const Dataset ds = gen_synthetic(SyntheticStyle::kMixed, 50, 32, 9);
  for (std::size_t i = 0; i < ds.count(); ++i) {
    const auto img = ds.image(i);
    const auto [lo, hi] = std::minmax_element(img.begin(), img.end());
    EXPECT_GT(*hi - *lo, 0.02f) << i;
  }
}

TEST(Synthetic, RejectsBadArguments) {
  EXPECT_THROW(gen_synthetic(SyntheticStyle::kBlobs, 0, 32, 1), std::invalid_argument);
  EXPECT_THROW(gen_synthetic(SyntheticStyle::kMixed, 4, 32, 1, 3, {0, 0, 0}),
               std::invalid_argument);
  EXPECT_THROW(parse_style("plaid"), ConfigError);
  EXPECT_EQ(parse_style(style_name(SyntheticStyle::kChecker)), SyntheticStyle::kChecker);
}

TEST(Synthetic, MixWeightsSelectStyles) {
  // A stripes-only mix must match the stripes generator image for image.
  const Dataset mixed = gen_synthetic(SyntheticStyle::kMixed, 5, 16, 8, 3, {0, 1, 0});
  EXPECT_GT(mixed.count(), 0u);
  const Dataset checker = gen_synthetic(SyntheticStyle::kMixed, 30, 16, 8, 3, {0, 0, 1});
  // Checkerboards contain exactly two colours.
  for (std::size_t i = 0; i < checker.count(); ++i) {
    std::set<std::array<float, 3>> colors;
    const auto img = checker.image(i);
    for (std::size_t p = 0; p < 16 * 16; ++p)
      colors.insert({img[3 * p], img[3 * p + 1], img[3 * p + 2]});
    EXPECT_LE(colors.size(), 2u);
  }
}

TEST(Split, PartitionsImages) {
  const Dataset ds = gen_synthetic(SyntheticStyle::kMixed, 100, 8, 5);
  const DatasetSplit s = split_dataset(ds, 0.1, 7);
  EXPECT_EQ(s.train.count(), 90u);
  EXPECT_EQ(s.eval.count(), 10u);
  EXPECT_EQ(s.eval.split, "eval");
  std::multiset<std::vector<float>> all, parts;
  for (std::size_t i = 0; i < ds.count(); ++i)
    all.insert({ds.image(i).begin(), ds.image(i).end()});
  for (const Dataset* d : {&s.train, &s.eval})
    for (std::size_t i = 0; i < d->count(); ++i)
      parts.insert({d->image(i).begin(), d->image(i).end()});
  EXPECT_EQ(all, parts);
  EXPECT_EQ(split_dataset(ds, 0.1, 7).eval.pixels, s.eval.pixels);
  EXPECT_THROW(split_dataset(ds, 1.0, 7), std::invalid_argument);
}

TEST(Ppm, RoundTripWithinQuantization) {
  testing::TempDir dir("ppm");
  const Dataset ds = gen_synthetic(SyntheticStyle::kMixed, 3, 32, 11);
  for (std::size_t i = 0; i < ds.count(); ++i) {
    const Image img = ds.image_copy(i);
    save_ppm(img, dir / "img.ppm");
    const Image back = load_ppm(dir / "img.ppm");
    ASSERT_EQ(back.width, 32u);
    ASSERT_EQ(back.channels, 3u);
    for (std::size_t k = 0; k < img.pixels.size(); ++k)
      ASSERT_LE(std::abs(back.pixels[k] - img.pixels[k]), 1.0f / 255.0f);
  }
  Image gray{4, 3, 1, std::vector<float>(12, 0.25f)};
  const Image g2 = decode_ppm(encode_ppm(gray));
  EXPECT_EQ(g2.channels, 1u);
  EXPECT_EQ(g2.width, 3u);
  EXPECT_EQ(g2.height, 4u);
  EXPECT_NEAR(g2.pixels[5], 0.25f, 1.0f / 255.0f);
}

TEST(Ppm, HandWrittenFixture) {
  std::string text = "P6\n# fixture\n2 2\n255\n";
  const unsigned char px[] = {255, 0, 0, 0, 255, 0, 0, 0, 255, 51, 102, 153};
  text.append(reinterpret_cast<const char*>(px), sizeof(px));
  const Image img = decode_ppm(bytes_of(text));
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.height, 2u);
  EXPECT_FLOAT_EQ(img.at(0, 0, 0), 1.0f);
  EXPECT_FLOAT_EQ(img.at(0, 1, 1), 1.0f);
  EXPECT_FLOAT_EQ(img.at(1, 0, 2), 1.0f);
  EXPECT_FLOAT_EQ(img.at(1, 1, 0), 0.2f);
  EXPECT_FLOAT_EQ(img.at(1, 1, 1), 0.4f);
  EXPECT_FLOAT_EQ(img.at(1, 1, 2), 0.6f);
  EXPECT_FLOAT_EQ(img.at(0, 0, 1), 0.0f);
}

TEST(Ppm, RejectsAsciiAndMalformed) {
  EXPECT_THROW(decode_ppm(bytes_of("P3\n1 1\n255\n1 2 3\n")), FormatError);
  try {
    decode_ppm(bytes_of("P3\n1 1\n255\n1 2 3\n"));
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("P3"), std::string::npos);
  }
  EXPECT_THROW(decode_ppm(bytes_of("P6\n2 2\n255\nabc")), FormatError);
  EXPECT_THROW(decode_ppm(bytes_of("P6\n2 x\n255\n")), FormatError);
  EXPECT_THROW(decode_ppm(bytes_of("P6\n1 1\n65535\n")), FormatError);
  EXPECT_THROW(decode_ppm(bytes_of("P6\n1 1")), FormatError);
  EXPECT_THROW(decode_ppm(bytes_of("JPEG")), FormatError);
}

FeatureSet random_features(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FeatureSet fs;
  fs.source = FeatureSource::kImported;
  fs.rows = Matrix(rows, cols, testing::uniform_values(rows * cols, rng));
  return fs;
}

TEST(FeatureFile, BitExactRoundTrip) {
  testing::TempDir dir("vqtf");
  FeatureSet fs = random_features(123, 7, 1);
  fs.rows.values[5] = -0.0f;
  fs.rows.values[6] = std::numeric_limits<float>::denorm_min();
  save_feature_file(fs, dir / "clip_feats.vqtf");
  const FeatureSet back = load_feature_file(dir / "clip_feats.vqtf");
  EXPECT_EQ(back.rows.rows, 123u);
  EXPECT_EQ(back.rows.cols, 7u);
  EXPECT_EQ(std::memcmp(back.rows.values.data(), fs.rows.values.data(),
                        fs.rows.values.size() * 4),
            0);
  EXPECT_EQ(back.source, FeatureSource::kImported);
  EXPECT_EQ(back.dataset_id, "clip_feats");
}

TEST(FeatureFile, LittleEndianLayout) {
  FeatureSet fs;
  fs.source = FeatureSource::kImported;
  fs.rows = Matrix(1, 2, {1.0f, -2.0f});
  const auto b = encode_feature_file(fs);
  const std::string tag = "imported-file";
  std::vector<std::uint8_t> want = {'V', 'Q', 'T', 'F', 1, 0,  // version
                                    1, 0, 0, 0, 0, 0, 0, 0,    // rows
                                    2, 0, 0, 0,                // cols
                                    std::uint8_t(tag.size()), 0, 0, 0};
  want.insert(want.end(), tag.begin(), tag.end());
  for (std::uint8_t x : {0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0}) want.push_back(x);
  EXPECT_EQ(b, want);
}

TEST(FeatureFile, RejectsCorruption) {
  const auto good = encode_feature_file(random_features(4, 3, 2));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_feature_file(bad_magic), FormatError);
  auto bad_version = good;
  bad_version[4] = 9;
  EXPECT_THROW(decode_feature_file(bad_version), FormatError);
  auto huge = good;
  for (int i = 6; i < 14; ++i) huge[i] = 0xff;
  EXPECT_THROW(decode_feature_file(huge), FormatError);
  auto truncated = good;
  truncated.pop_back();
  EXPECT_THROW(decode_feature_file(truncated), FormatError);
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(decode_feature_file(trailing), FormatError);
}

TEST(FeatureFile, ImportedRowsSeedKMeans) {
  testing::TempDir dir("vqtf_km");
  save_feature_file(random_features(10000, 8, 3), dir / "ext.vqtf");
  const FeatureSet fs = load_feature_file(dir / "ext.vqtf");
  KMeansInitOptions opts;
  opts.max_iters = 20;
  const Codebook cb = init_kmeans(fs, 256, 4, opts);
  EXPECT_EQ(cb.size(), 256u);
  EXPECT_EQ(cb.dim(), 8u);
  EXPECT_NO_THROW(cb.validate());
}

TEST(PatchFeatures, RowCounts) {
  const Dataset one = gen_synthetic(SyntheticStyle::kMixed, 1, 32, 1);
  EXPECT_EQ(extract_pixel_patch_features(one, 4).count(), 64u);
  EXPECT_EQ(extract_pixel_patch_features(one, 4).dim(), 48u);
  const Dataset hundred = gen_synthetic(SyntheticStyle::kMixed, 100, 32, 1);
  EXPECT_EQ(extract_pixel_patch_features(hundred, 4).count(), 6400u);
  EXPECT_THROW(extract_pixel_patch_features(one, 5), ShapeError);
}

TEST(PatchFeatures, ConstantImageGivesZeroRows) {
  Dataset ds;
  ds.size = 8;
  ds.add(Image{8, 8, 3, std::vector<float>(192, 0.37f)});
  const FeatureSet fs = extract_pixel_patch_features(ds, 4);
  for (float v : fs.rows.values) EXPECT_EQ(v, 0.0f);
}

TEST(PatchFeatures, RowsAreCenteredPatchesInScanOrder) {
  const Dataset ds = gen_synthetic(SyntheticStyle::kBlobs, 2, 8, 6);
  const FeatureSet fs = extract_pixel_patch_features(ds, 4);
  // Independent re-derivation: patch (py, px) of image i at row i*4 + py*2 + px.
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t py = 0; py < 2; ++py)
      for (std::size_t px = 0; px < 2; ++px) {
        std::vector<double> patch;
        for (std::size_t dy = 0; dy < 4; ++dy)
          for (std::size_t dx = 0; dx < 4; ++dx)
            for (std::size_t c = 0; c < 3; ++c)
              patch.push_back(ds.image(i)[((py * 4 + dy) * 8 + px * 4 + dx) * 3 + c]);
        double mean = 0;
        for (double v : patch) mean += v;
        mean /= double(patch.size());
        const float* row = fs.rows.row(i * 4 + py * 2 + px);
        for (std::size_t k = 0; k < patch.size(); ++k)
          ASSERT_NEAR(row[k], patch[k] - mean, 1e-6);
      }
}

TEST(PatchFeatures, ExtractPlaceRoundTrip) {
  const Dataset ds = gen_synthetic(SyntheticStyle::kMixed, 1, 16, 2);
  std::vector<float> rebuilt(ds.image_numel(), -1.0f);
  std::vector<float> buf(4 * 4 * 3);
  for (std::size_t py = 0; py < 4; ++py)
    for (std::size_t px = 0; px < 4; ++px) {
      extract_patch(ds.image(0), 16, 3, 4, py, px, buf.data());
      place_patch(rebuilt, 16, 3, 4, py, px, buf.data());
    }
  EXPECT_TRUE(std::equal(rebuilt.begin(), rebuilt.end(), ds.image(0).begin()));
}

TEST(PatchFeatures, CommutesWithConcatenation) {
  const Dataset a = gen_synthetic(SyntheticStyle::kStripes, 7, 16, 1);
  const Dataset b = gen_synthetic(SyntheticStyle::kChecker, 5, 16, 2);
  const FeatureSet fa = extract_pixel_patch_features(a, 4);
  const FeatureSet fb = extract_pixel_patch_features(b, 4);
  const FeatureSet fab = extract_pixel_patch_features(concat(a, b), 4);
  std::vector<float> joined = fa.rows.values;
  joined.insert(joined.end(), fb.rows.values.begin(), fb.rows.values.end());
  EXPECT_EQ(fab.rows.values, joined);
  EXPECT_EQ(fab.count(), fa.count() + fb.count());
}

// Pixel patches of the mixed dataset must support a full 1,024-entry
// clustering that halves the error of randomly selected centres.
TEST(PatchFeatures, MixedDatasetIsRichEnoughForLargeCodebooks) {
  const Dataset ds = gen_synthetic(SyntheticStyle::kMixed, 5000, 32, 1);
  const FeatureSet fs = extract_pixel_patch_features(ds, 4);
  KMeansInitOptions opts;
  opts.max_iters = 15;
  opts.max_points = 65536;
  const Codebook km = init_kmeans(fs, 1024, 5, opts);
  const Codebook rs = init_random_selection(fs, 1024, 5);
  const TokenMap tk = quantize(fs.rows, km.entries);
  const TokenMap tr = quantize(fs.rows, rs.entries);
  std::set<std::int32_t> used(tk.indices.begin(), tk.indices.end());
  double ik = 0, ir = 0;
  for (float d : tk.distances) ik += d;
  for (float d : tr.distances) ir += d;
  EXPECT_GE(used.size(), 1024u);
  EXPECT_LE(ik, 0.5 * ir) << "kmeans " << ik << " random " << ir;
  std::printf("k-means / random-selection inertia ratio %.3f\n", ik / ir);
}

TEST(Manifest, RoundTripAndStrictKeys) {
  testing::TempDir dir("manifest");
  DatasetSpec spec;
  spec.name = "faces-analog";
  spec.seed = 99;
  spec.count = 64;
  spec.size = 16;
  spec.style = SyntheticStyle::kMixed;
  spec.mix = {0.7, 0.2, 0.1};
  save_manifest(spec, dir / "m.json");
  const DatasetSpec back = load_manifest(dir / "m.json");
  EXPECT_EQ(back.name, spec.name);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.count, 64u);
  EXPECT_EQ(back.mix, spec.mix);
  EXPECT_EQ(back.generate().pixels, spec.generate().pixels);
  EXPECT_EQ(back.generate().name, "faces-analog");
  EXPECT_THROW(DatasetSpec::from_json(R"({"name":"x","colour":1})"), ConfigError);
  EXPECT_THROW(DatasetSpec::from_json(R"({"count":"many"})"), ConfigError);
  EXPECT_THROW(DatasetSpec::from_json(R"({"count":0})"), ConfigError);
  EXPECT_THROW(DatasetSpec::from_json("{"), ConfigError);
}

}  // namespace
}  // namespace vqlab
