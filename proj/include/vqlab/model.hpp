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
#include "vqlab/quantizer.hpp"
#include "vqlab/random.hpp"
#include "vqlab/tensor.hpp"

namespace vqlab {

struct ModelConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 4;
  std::size_t channels = 3;
  std::vector<std::size_t> enc_hidden = {128};
  std::size_t feature_dim = 64;  // encoder width for GD and EMA
  std::size_t code_dim = 8;      // encoder width for FC and LC
  Variant variant = Variant::kLC;
  float alpha = 1.0f;
  float beta = 0.33f;
  float leaky_slope = 0.1f;
  std::uint64_t seed = 0;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t tokens_per_image() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  //! Default codebook width for the variant; the encoder always produces
  //! the width its quantizer searches.
  std::size_t latent_dim() const;
  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // out

  Tensor forward(const Tensor& x) const { return add_rowwise(matmul(x, weight), bias); }
};

//! Kaiming-uniform weights for a leaky_relu layer, zero bias.
Linear make_linear(std::size_t in, std::size_t out, float slope, Rng& rng);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct ForwardResult {
  Tensor loss;
  double recon_loss = 0.0;
  double quant_loss = 0.0;
  TokenMap tokens;
  Tensor z;      // encoder output before quantization
  Tensor x_hat;  // reconstruction in token layout
};

//! Patch-MLP encoder, quantizer, patch-MLP decoder.
//!
//! Images enter as (B * tokens) x patch_dim matrices in token layout: image
//! major, then patch rows, then patch columns, each row laid out (dy, dx, c).
class Autoencoder {
 public:
  Autoencoder() = default;
  Autoencoder(ModelConfig cfg, QuantizerState quantizer);

  const ModelConfig& config() const { return cfg_; }
  const QuantizerState& quantizer() const { return quant_; }
  QuantizerState& quantizer() { return quant_; }
  const std::vector<Linear>& encoder_layers() const { return encoder_; }
  const std::vector<Linear>& decoder_layers() const { return decoder_; }

  Tensor patchify(const Dataset& ds, std::span<const std::size_t> images) const;
  //! Writes token-layout rows back into whole images.
  Dataset unpatchify(const Tensor& tokens, const Dataset& like) const;

  Tensor encode(const Tensor& patches) const;
  Tensor decode(const Tensor& codes) const;

  //! Full loss mse(x_hat, x) + quantization loss. The decoder sees
  //! straight_through(z, z_q). When `fixed` is given its indices are used
  //! instead of the nearest entries.
  ForwardResult forward_loss(const Tensor& patches, const TokenMap* fixed = nullptr) const;

  //! Quantized reconstruction without gradient tracking.
  Tensor reconstruct(const Tensor& patches) const;
  //! Reconstruction from the given token indices.
  Tensor reconstruct_from(const TokenMap& tokens) const;

  //! Leaves updated by the optimizer, in checkpoint order.
  std::vector<NamedTensor> parameters() const;
  //! Deep copy whose tensors share nothing with this model.
  Autoencoder clone() const;

 private:
  ModelConfig cfg_;
  std::vector<Linear> encoder_;
  std::vector<Linear> decoder_;
  QuantizerState quant_;
};

std::vector<std::uint8_t> encode_checkpoint(const Autoencoder& model);
Autoencoder decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Autoencoder& model, const std::filesystem::path& path);
Autoencoder load_checkpoint(const std::filesystem::path& path);

}  // namespace vqlab
