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
#include "vqlab/features.hpp"

#include <algorithm>

#include "vqlab/error.hpp"
#include "vqlab/model.hpp"
#include "vqlab/random.hpp"
#include "vqlab/trainer.hpp"

namespace vqlab {

namespace {

constexpr float kSlope = 0.1f;
constexpr std::size_t kEncodeChunk = 8192;

}  // namespace

FeatureSet extract_tiny_encoder_features(const Dataset& ds,
                                         const TinyEncoderOptions& opts) {
  if (opts.patch == 0 || ds.size % opts.patch != 0)
    throw ShapeError("tiny encoder: image size " + std::to_string(ds.size) +
                     " is not divisible by patch " + std::to_string(opts.patch));
  if (opts.width == 0 || opts.hidden == 0 || opts.batch == 0)
    throw std::invalid_argument("tiny encoder: widths and batch must be >= 1");
  const std::size_t g = ds.size / opts.patch, per = g * g;
  const std::size_t pd = opts.patch * opts.patch * ds.channels;
  const std::size_t rows = ds.count() * per;

  // Raw patches, not centred: the encoder sees what the model sees.
  Matrix patches(rows, pd);
  for (std::size_t i = 0; i < ds.count(); ++i)
    for (std::size_t py = 0; py < g; ++py)
      for (std::size_t px = 0; px < g; ++px)
        extract_patch(ds.image(i), ds.size, ds.channels, opts.patch, py, px,
                      patches.row((i * g + py) * g + px));

  Rng rng(opts.seed);
  const std::vector<Linear> net = {
      make_linear(pd, opts.hidden, kSlope, rng), make_linear(opts.hidden, opts.width, kSlope, rng),
      make_linear(opts.width, opts.hidden, kSlope, rng), make_linear(opts.hidden, pd, kSlope, rng)};
  auto encode = [&](const Tensor& x) {
    return net[1].forward(leaky_relu(net[0].forward(x), kSlope));
  };
  std::vector<NamedTensor> params;
  for (std::size_t i = 0; i < net.size(); ++i) {
    params.push_back({"tiny." + std::to_string(i) + ".weight", net[i].weight});
    params.push_back({"tiny." + std::to_string(i) + ".bias", net[i].bias});
  }
  AdamState adam;
  std::vector<float> batch(opts.batch * pd);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    for (std::size_t b = 0; b < opts.batch; ++b)
      std::copy_n(patches.row(rng.below(rows)), pd, batch.data() + b * pd);
    TapeScope scope;
    const Tensor x = Tensor::matrix(opts.batch, pd, batch);
    const Tensor h = leaky_relu(net[2].forward(encode(x)), kSlope);
    const Tensor loss = mse(sigmoid(net[3].forward(h)), x);
    scope.tape().backward(loss);
    adam_step(params, adam, opts.lr, 0.9, 0.999, 1e-8);
    for (auto& p : params) p.tensor.zero_grad();
  }

  FeatureSet fs;
  fs.source = FeatureSource::kTinyEncoder;
  fs.dataset_id = ds.name;
  fs.seed = opts.seed;
  fs.rows = Matrix(rows, opts.width);
  NoGradGuard guard;
  for (std::size_t start = 0; start < rows; start += kEncodeChunk) {
    const std::size_t n = std::min(kEncodeChunk, rows - start);
    const Tensor x = Tensor::matrix(
        n, pd, std::vector<float>(patches.row(start), patches.row(start) + n * pd));
    const Tensor z = encode(x);
    std::copy(z.data().begin(), z.data().end(), fs.rows.row(start));
  }
  return fs;
}

}  // namespace vqlab
