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
#include "vqlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "vqlab/binary_io.hpp"
#include "vqlab/error.hpp"
#include "vqlab/random.hpp"

namespace vqlab {

namespace {

using Color = std::array<float, 3>;

constexpr std::size_t kPaletteSize = 12;
constexpr float kColorJitter = 0.02f;
constexpr double kStripePeriods[] = {4.0, 6.0, 8.0, 12.0, 16.0};
constexpr double kStripeSharpness[] = {0.75, 4.0};
constexpr std::size_t kStripeAngles = 8;

// Colours are drawn from a per-dataset palette with a small jitter, so the
// same hues recur across images as they do in natural photographs.
struct Palette {
  std::vector<Color> colors;

  explicit Palette(Rng rng) : colors(kPaletteSize) {
    for (auto& c : colors)
      c = {rng.uniform(0.0f, 1.0f), rng.uniform(0.0f, 1.0f), rng.uniform(0.0f, 1.0f)};
  }

  Color draw(Rng& rng) const {
    Color c = colors[rng.below(colors.size())];
    for (auto& v : c)
      v = std::clamp(v + kColorJitter * static_cast<float>(rng.normal()), 0.0f, 1.0f);
    return c;
  }
};

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// Smooth background with a few Gaussian bumps of colour.
void draw_blobs(Rng& rng, const Palette& pal, std::size_t s, std::size_t ch, float* out) {
  const Color bg = pal.draw(rng);
  const double gx = rng.uniform(-0.3f, 0.3f), gy = rng.uniform(-0.3f, 0.3f);
  const std::size_t n = 2 + rng.below(4);
  struct Blob {
    double cx, cy, inv2s2;
    Color c;
  };
  std::vector<Blob> blobs(n);
  for (auto& b : blobs) {
    b.cx = rng.uniform() * double(s);
    b.cy = rng.uniform() * double(s);
    const double sigma = double(s) * (0.08 + 0.25 * rng.uniform());
    b.inv2s2 = 1.0 / (2.0 * sigma * sigma);
    b.c = pal.draw(rng);
  }
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      const double u = double(x) / double(s) - 0.5, v = double(y) / double(s) - 0.5;
      double px[3];
      for (std::size_t c = 0; c < 3; ++c) px[c] = bg[c] + gx * u + gy * v;
      for (const auto& b : blobs) {
        const double dx = double(x) + 0.5 - b.cx, dy = double(y) + 0.5 - b.cy;
        const double w = std::exp(-(dx * dx + dy * dy) * b.inv2s2);
        for (std::size_t c = 0; c < 3; ++c) px[c] = px[c] * (1.0 - w) + b.c[c] * w;
      }
      for (std::size_t c = 0; c < ch; ++c)
        out[(y * s + x) * ch + c] = clamp01(ch == 1 ? (px[0] + px[1] + px[2]) / 3.0 : px[c]);
    }
}

// Oriented sinusoidal bands between two colours, soft or nearly hard.
void draw_stripes(Rng& rng, const Palette& pal, std::size_t s, std::size_t ch, float* out) {
  const Color a = pal.draw(rng), b = pal.draw(rng);
  const double theta = double(rng.below(kStripeAngles)) * std::numbers::pi / kStripeAngles;
  const double period = kStripePeriods[rng.below(std::size(kStripePeriods))];
  const double phase = double(rng.below(4)) * 0.5 * std::numbers::pi;
  const double sharp = kStripeSharpness[rng.below(std::size(kStripeSharpness))];
  const double cx = std::cos(theta), sy = std::sin(theta);
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      const double proj = (double(x) * cx + double(y) * sy) / period;
      const double t = std::clamp(
          0.5 + sharp * 0.5 * std::sin(2.0 * std::numbers::pi * proj + phase), 0.0, 1.0);
      double px[3];
      for (std::size_t c = 0; c < 3; ++c) px[c] = a[c] * t + b[c] * (1.0 - t);
      for (std::size_t c = 0; c < ch; ++c)
        out[(y * s + x) * ch + c] = clamp01(ch == 1 ? (px[0] + px[1] + px[2]) / 3.0 : px[c]);
    }
}

// Axis-aligned checkerboard with random cell size and offset.
void draw_checker(Rng& rng, const Palette& pal, std::size_t s, std::size_t ch, float* out) {
  const Color a = pal.draw(rng), b = pal.draw(rng);
  const std::size_t cell = 2 + rng.below(7);
  const std::size_t ox = rng.below(cell), oy = rng.below(cell);
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      const bool on = (((x + ox) / cell) + ((y + oy) / cell)) % 2 == 0;
      const Color& col = on ? a : b;
      for (std::size_t c = 0; c < ch; ++c)
        out[(y * s + x) * ch + c] =
            ch == 1 ? clamp01((double(col[0]) + col[1] + col[2]) / 3.0) : col[c];
    }
}

SyntheticStyle pick_style(Rng& rng, const StyleMix& mix) {
  const double total = mix[0] + mix[1] + mix[2];
  const double r = rng.uniform() * total;
  if (r < mix[0]) return SyntheticStyle::kBlobs;
  if (r < mix[0] + mix[1]) return SyntheticStyle::kStripes;
  return SyntheticStyle::kChecker;
}

// Netpbm header token reader: skips whitespace and '#' comments.
std::string next_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#')
    tok.push_back(static_cast<char>(bytes[pos++]));
  if (tok.empty()) throw FormatError("ppm: truncated header");
  return tok;
}

std::size_t header_number(const std::string& tok, const char* what) {
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), ::isdigit) || tok.size() > 9)
    throw FormatError(std::string("ppm: malformed ") + what + " \"" + tok + "\"");
  return std::stoul(tok);
}

}  // namespace

Image Dataset::image_copy(std::size_t i) const {
  Image img;
  img.height = img.width = size;
  img.channels = channels;
  const auto src = image(i);
  img.pixels.assign(src.begin(), src.end());
  return img;
}

void Dataset::add(const Image& img) {
  if (img.height != img.width)
    throw ShapeError("dataset: images must be square");
  if (pixels.empty() && size == 0) {
    size = img.height;
    channels = img.channels;
  }
  if (img.height != size || img.channels != channels)
    throw ShapeError("dataset: image shape differs from the dataset");
  pixels.insert(pixels.end(), img.pixels.begin(), img.pixels.end());
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out = *this;
  out.pixels.clear();
  out.pixels.reserve(indices.size() * image_numel());
  for (std::size_t i : indices) {
    if (i >= count()) throw std::out_of_range("dataset: image index out of range");
    const auto img = image(i);
    out.pixels.insert(out.pixels.end(), img.begin(), img.end());
  }
  return out;
}

void Dataset::validate() const {
  if (size == 0 || channels == 0) throw ShapeError("dataset: zero image size");
  if (pixels.size() % image_numel() != 0)
    throw ShapeError("dataset: pixel count is not a whole number of images");
  for (float v : pixels)
    if (!(v >= 0.0f && v <= 1.0f))
      throw NumericError("dataset: pixel value outside [0, 1]");
}

std::string style_name(SyntheticStyle s) {
  switch (s) {
    case SyntheticStyle::kBlobs: return "blobs";
    case SyntheticStyle::kStripes: return "stripes";
    case SyntheticStyle::kChecker: return "checker";
    case SyntheticStyle::kMixed: return "mixed";
  }
  return "mixed";
}

SyntheticStyle parse_style(const std::string& name) {
  if (name == "blobs") return SyntheticStyle::kBlobs;
  if (name == "stripes") return SyntheticStyle::kStripes;
  if (name == "checker") return SyntheticStyle::kChecker;
  if (name == "mixed") return SyntheticStyle::kMixed;
  throw ConfigError("style: expected blobs, stripes, checker or mixed, got \"" +
                    name + "\"");
}

Dataset gen_synthetic(SyntheticStyle style, std::size_t count, std::size_t size,
                      std::uint64_t seed, std::size_t channels, StyleMix mix) {
  if (count == 0) throw std::invalid_argument("gen_synthetic: count must be >= 1");
  if (size == 0) throw std::invalid_argument("gen_synthetic: size must be >= 1");
  if (channels != 1 && channels != 3)
    throw std::invalid_argument("gen_synthetic: channels must be 1 or 3");
  if (style == SyntheticStyle::kMixed &&
      (std::any_of(mix.begin(), mix.end(), [](double w) { return !(w >= 0.0); }) ||
       mix[0] + mix[1] + mix[2] <= 0.0))
    throw std::invalid_argument("gen_synthetic: mix weights must be >= 0, not all 0");
  Dataset ds;
  ds.name = "synthetic-" + style_name(style);
  ds.seed = seed;
  ds.size = size;
  ds.channels = channels;
  ds.pixels.resize(count * ds.image_numel());
  Rng rng(seed);
  const Palette pal(rng.split(0x9a1e77e));
  for (std::size_t i = 0; i < count; ++i) {
    const SyntheticStyle s = style == SyntheticStyle::kMixed ? pick_style(rng, mix) : style;
    float* out = ds.pixels.data() + i * ds.image_numel();
    switch (s) {
      case SyntheticStyle::kBlobs: draw_blobs(rng, pal, size, channels, out); break;
      case SyntheticStyle::kStripes: draw_stripes(rng, pal, size, channels, out); break;
      default: draw_checker(rng, pal, size, channels, out); break;
    }
  }
  return ds;
}

DatasetSplit split_dataset(const Dataset& ds, double eval_fraction, std::uint64_t seed) {
  if (!(eval_fraction >= 0.0 && eval_fraction < 1.0))
    throw std::invalid_argument("split: eval fraction must lie in [0, 1)");
  const std::size_t n = ds.count();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::size_t n_eval = static_cast<std::size_t>(std::floor(double(n) * eval_fraction));
  if (eval_fraction > 0.0 && n > 1) n_eval = std::max<std::size_t>(n_eval, 1);
  std::vector<std::size_t> eval_idx(order.begin(), order.begin() + long(n_eval));
  std::vector<std::size_t> train_idx(order.begin() + long(n_eval), order.end());
  std::sort(eval_idx.begin(), eval_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  DatasetSplit out{ds.subset(train_idx), ds.subset(eval_idx)};
  out.train.split = "train";
  out.eval.split = "eval";
  return out;
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.size != b.size || a.channels != b.channels)
    throw ShapeError("concat: datasets have different image shapes");
  Dataset out = a;
  out.name = a.name + "+" + b.name;
  out.pixels.insert(out.pixels.end(), b.pixels.begin(), b.pixels.end());
  return out;
}

Image decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  if (magic == "P3" || magic == "P2")
    throw FormatError("ppm: ASCII variant " + magic + " is not supported (binary P6/P5 only)");
  if (magic != "P6" && magic != "P5") throw FormatError("ppm: bad magic \"" + magic + "\"");
  Image img;
  img.channels = magic == "P6" ? 3 : 1;
  img.width = header_number(next_token(bytes, pos), "width");
  img.height = header_number(next_token(bytes, pos), "height");
  const std::size_t maxval = header_number(next_token(bytes, pos), "maxval");
  if (img.width == 0 || img.height == 0) throw FormatError("ppm: zero dimension");
  if (maxval == 0 || maxval > 255)
    throw FormatError("ppm: maxval " + std::to_string(maxval) + " unsupported (8-bit only)");
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw FormatError("ppm: missing whitespace after header");
  ++pos;
  const std::size_t need = img.width * img.height * img.channels;
  if (bytes.size() - pos < need)
    throw FormatError("ppm: truncated payload (" + std::to_string(bytes.size() - pos) +
                      " of " + std::to_string(need) + " bytes)");
  img.pixels.resize(need);
  for (std::size_t i = 0; i < need; ++i)
    img.pixels[i] = float(bytes[pos + i]) / float(maxval);
  return img;
}

Image load_ppm(const std::filesystem::path& path) { return decode_ppm(io::read_file(path)); }

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw ShapeError("ppm: only 1 or 3 channels can be written");
  if (img.pixels.size() != img.width * img.height * img.channels)
    throw ShapeError("ppm: pixel buffer does not match dimensions");
  const std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.pixels.size());
  for (float v : img.pixels)
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  return out;
}

void save_ppm(const Image& img, const std::filesystem::path& path) {
  io::write_file(path, encode_ppm(img));
}

std::vector<std::uint8_t> encode_feature_file(const FeatureSet& fs) {
  io::Writer w;
  w.magic("VQTF");
  w.u16(1);
  w.u64(fs.count());
  w.u32(static_cast<std::uint32_t>(fs.dim()));
  w.str(source_name(fs.source));
  w.f32s(fs.rows.values);
  return w.take();
}

FeatureSet decode_feature_file(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes, "feature file");
  r.expect_magic("VQTF");
  const std::uint16_t version = r.u16();
  if (version != 1)
    throw FormatError("feature file: version " + std::to_string(version) +
                      " unsupported (expected 1)");
  const std::uint64_t rows = r.u64();
  const std::uint32_t cols = r.u32();
  const std::string tag = r.str();
  if (cols == 0 || rows == 0) throw FormatError("feature file: empty matrix");
  if (rows > (std::uint64_t(1) << 40) / cols)
    throw FormatError("feature file: shape " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " overflows");
  FeatureSet fs;
  try {
    fs.source = parse_source(tag);
  } catch (const ConfigError&) {
    throw FormatError("feature file: unknown source tag \"" + tag + "\"");
  }
  fs.rows = Matrix(rows, cols, r.f32s(rows * cols));
  r.expect_end();
  return fs;
}

void save_feature_file(const FeatureSet& fs, const std::filesystem::path& path) {
  io::write_file(path, encode_feature_file(fs));
}

FeatureSet load_feature_file(const std::filesystem::path& path) {
  FeatureSet fs = decode_feature_file(io::read_file(path));
  fs.dataset_id = path.stem().string();
  return fs;
}

void extract_patch(std::span<const float> image, std::size_t size,
                   std::size_t channels, std::size_t patch, std::size_t py,
                   std::size_t px, float* out) {
  for (std::size_t dy = 0; dy < patch; ++dy) {
    const float* src = image.data() + ((py * patch + dy) * size + px * patch) * channels;
    std::copy_n(src, patch * channels, out + dy * patch * channels);
  }
}

void place_patch(std::span<float> image, std::size_t size, std::size_t channels,
                 std::size_t patch, std::size_t py, std::size_t px, const float* in) {
  for (std::size_t dy = 0; dy < patch; ++dy) {
    float* dst = image.data() + ((py * patch + dy) * size + px * patch) * channels;
    std::copy_n(in + dy * patch * channels, patch * channels, dst);
  }
}

FeatureSet extract_pixel_patch_features(const Dataset& ds, std::size_t patch) {
  if (patch == 0 || ds.size % patch != 0)
    throw ShapeError("pixel patches: image size " + std::to_string(ds.size) +
                     " is not divisible by patch " + std::to_string(patch));
  const std::size_t grid = ds.size / patch, width = patch * patch * ds.channels;
  FeatureSet fs;
  fs.source = FeatureSource::kPixelPatch;
  fs.dataset_id = ds.name;
  fs.seed = ds.seed;
  fs.rows = Matrix(ds.count() * grid * grid, width);
  std::size_t row = 0;
  for (std::size_t i = 0; i < ds.count(); ++i)
    for (std::size_t py = 0; py < grid; ++py)
      for (std::size_t px = 0; px < grid; ++px, ++row) {
        float* out = fs.rows.row(row);
        extract_patch(ds.image(i), ds.size, ds.channels, patch, py, px, out);
        double mean = 0.0;
        for (std::size_t j = 0; j < width; ++j) mean += out[j];
        mean /= double(width);
        for (std::size_t j = 0; j < width; ++j)
          out[j] = static_cast<float>(double(out[j]) - mean);
      }
  return fs;
}

Dataset DatasetSpec::generate() const {
  Dataset ds = gen_synthetic(style, count, size, seed, channels, mix);
  ds.name = name;
  return ds;
}

std::string DatasetSpec::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["seed"] = seed;
  j["count"] = count;
  j["size"] = size;
  j["channels"] = channels;
  j["style"] = style_name(style);
  j["mix"] = {{"blobs", mix[0]}, {"stripes", mix[1]}, {"checker", mix[2]}};
  return j.dump(2) + "\n";
}

DatasetSpec DatasetSpec::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("manifest: expected a JSON object");
  static const std::set<std::string> known = {"name", "seed", "count", "size",
                                              "channels", "style", "mix"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("manifest: unknown field \"" + key + "\"");
  DatasetSpec s;
  try {
    if (j.contains("name")) s.name = j.at("name").get<std::string>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("count")) s.count = j.at("count").get<std::size_t>();
    if (j.contains("size")) s.size = j.at("size").get<std::size_t>();
    if (j.contains("channels")) s.channels = j.at("channels").get<std::size_t>();
    if (j.contains("style")) s.style = parse_style(j.at("style").get<std::string>());
    if (j.contains("mix")) {
      const auto& m = j.at("mix");
      for (const auto& [key, _] : m.items())
        if (key != "blobs" && key != "stripes" && key != "checker")
          throw ConfigError("manifest: unknown field \"mix." + key + "\"");
      s.mix = {m.value("blobs", 0.0), m.value("stripes", 0.0), m.value("checker", 0.0)};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest: wrong type: ") + e.what());
  }
  if (s.count == 0) throw ConfigError("manifest: field \"count\" must be >= 1");
  if (s.size == 0) throw ConfigError("manifest: field \"size\" must be >= 1");
  if (s.channels != 1 && s.channels != 3)
    throw ConfigError("manifest: field \"channels\" must be 1 or 3");
  return s;
}

void save_manifest(const DatasetSpec& spec, const std::filesystem::path& path) {
  io::write_text(path, spec.to_json());
}

DatasetSpec load_manifest(const std::filesystem::path& path) {
  return DatasetSpec::from_json(io::read_text(path));
}

}  // namespace vqlab
