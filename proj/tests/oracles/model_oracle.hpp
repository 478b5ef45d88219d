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
// Double-precision transcription of the autoencoder loss with the token
// indices frozen, written from the model's parameter values only. The
// stop-gradient operands are fixed at the base point, so central
// differences of this function give the gradient the tape should produce.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqlab/model.hpp"

namespace vqlab::oracle {

class DoubleSurrogate {
 public:
  DoubleSurrogate(const Autoencoder& m, const Tensor& x, const TokenMap& tokens)
      : variant_(m.quantizer().variant),
        alpha_(m.quantizer().alpha),
        beta_(m.quantizer().beta),
        slope_(m.config().leaky_slope),
        rows_(x.rows()),
        tokens_(tokens.indices) {
    const QuantizerState& q = m.quantizer();
    if (q.normalize) throw std::invalid_argument("DoubleSurrogate: normalized search not covered");
    auto take = [&](const std::string& name, const Tensor& t) {
      values_[name].assign(t.data().begin(), t.data().end());
      cols_[name] = t.dim() == 2 ? t.cols() : t.numel();
    };
    for (std::size_t i = 0; i < m.encoder_layers().size(); ++i) {
      take("encoder." + std::to_string(i) + ".weight", m.encoder_layers()[i].weight);
      take("encoder." + std::to_string(i) + ".bias", m.encoder_layers()[i].bias);
    }
    for (std::size_t i = 0; i < m.decoder_layers().size(); ++i) {
      take("decoder." + std::to_string(i) + ".weight", m.decoder_layers()[i].weight);
      take("decoder." + std::to_string(i) + ".bias", m.decoder_layers()[i].bias);
    }
    enc_ = m.encoder_layers().size();
    dec_ = m.decoder_layers().size();
    take("codebook.entries", q.codebook.entries);
    projector_ = q.projector.has_value();
    if (projector_) {
      take("projector.weight", q.projector->weight);
      projector_bias_ = q.projector->use_bias;
      if (projector_bias_) take("projector.bias", q.projector->bias);
    }
    take("input", x);
    // Stop-gradient operands at the base point.
    frozen_z_ = encode(nullptr);
    const auto eff = effective();
    frozen_zq_ = gather(eff);
  }

  std::vector<double>& value(const std::string& name) { return values_.at(name); }

  double loss(std::vector<bool>* branches = nullptr) const {
    const auto z = encode(branches);
    const auto zq = gather(effective());
    std::vector<double> dec_in(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) dec_in[i] = z[i] + (frozen_zq_[i] - frozen_z_[i]);
    const auto x_hat = decode(dec_in, branches);
    double loss = mean_sq(x_hat, values_.at("input"));
    loss += alpha_ * mean_sq(frozen_zq_, z);
    if (variant_ != Variant::kEMA) loss += beta_ * mean_sq(frozen_z_, zq);
    return loss;
  }

  std::vector<bool> branches() const {
    std::vector<bool> b;
    loss(&b);
    return b;
  }

 private:
  static double mean_sq(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / double(a.size());
  }

  // rows x in times in x out plus bias.
  std::vector<double> affine(const std::vector<double>& h, std::size_t rows,
                             const std::string& w, const std::string& b) const {
    const auto& W = values_.at(w);
    const std::size_t out = cols_.at(w), in = W.size() / out;
    std::vector<double> y(rows * out, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < out; ++o) {
        double acc = b.empty() ? 0.0 : values_.at(b)[o];
        for (std::size_t i = 0; i < in; ++i) acc += h[r * in + i] * W[i * out + o];
        y[r * out + o] = acc;
      }
    return y;
  }

  void leaky(std::vector<double>& h, std::vector<bool>* branches) const {
    for (double& v : h) {
      if (branches) branches->push_back(v >= 0.0);
      if (v < 0.0) v *= slope_;
    }
  }

  std::vector<double> encode(std::vector<bool>* branches) const {
    std::vector<double> h = values_.at("input");
    for (std::size_t i = 0; i < enc_; ++i) {
      const std::string l = "encoder." + std::to_string(i);
      h = affine(h, rows_, l + ".weight", l + ".bias");
      if (i + 1 < enc_) leaky(h, branches);
    }
    return h;
  }

  std::vector<double> decode(std::vector<double> h, std::vector<bool>* branches) const {
    for (std::size_t i = 0; i < dec_; ++i) {
      const std::string l = "decoder." + std::to_string(i);
      h = affine(h, rows_, l + ".weight", l + ".bias");
      if (i + 1 < dec_) {
        leaky(h, branches);
      } else {
        for (double& v : h) v = 1.0 / (1.0 + std::exp(-v));
      }
    }
    return h;
  }

  std::vector<double> effective() const {
    const auto& e = values_.at("codebook.entries");
    if (!projector_) return e;
    const std::size_t n = e.size() / cols_.at("codebook.entries");
    return affine(e, n, "projector.weight", projector_bias_ ? "projector.bias" : "");
  }

  std::vector<double> gather(const std::vector<double>& eff) const {
    const std::size_t w = frozen_z_.size() / rows_;
    std::vector<double> out(rows_ * w);
    for (std::size_t r = 0; r < rows_; ++r)
      std::copy_n(eff.begin() + long(std::size_t(tokens_[r]) * w), w, out.begin() + long(r * w));
    return out;
  }

  Variant variant_;
  double alpha_, beta_, slope_;
  std::size_t rows_, enc_ = 0, dec_ = 0;
  bool projector_ = false, projector_bias_ = false;
  std::vector<std::int32_t> tokens_;
  std::map<std::string, std::vector<double>> values_;
  std::map<std::string, std::size_t> cols_;
  std::vector<double> frozen_z_, frozen_zq_;
};

struct SurrogateCheck {
  double max_rel_error = 0.0;  // normwise over the compared entries
  std::size_t compared = 0;
  std::size_t skipped = 0;     // a leaky_relu input changed sign in the stencil
};

// Central differences of the double surrogate at step h for the given
// entries of parameter `name`, against the analytic gradient `grad`.
inline SurrogateCheck check_surrogate(DoubleSurrogate& s, const std::string& name,
                                      std::span<const float> grad,
                                      const std::vector<std::size_t>& entries,
                                      double h = 1e-6) {
  SurrogateCheck out;
  const std::vector<bool> base = s.branches();
  double scale = 0.0, worst = 0.0;
  for (std::size_t k : entries) {
    double& v = s.value(name)[k];
    const double saved = v;
    v = saved + h;
    std::vector<bool> bp;
    const double lp = s.loss(&bp);
    v = saved - h;
    std::vector<bool> bm;
    const double lm = s.loss(&bm);
    v = saved;
    if (bp != base || bm != base) {
      ++out.skipped;
      continue;
    }
    const double numeric = (lp - lm) / (2.0 * h);
    const double analytic = grad.empty() ? 0.0 : grad[k];
    scale = std::max({scale, std::abs(numeric), std::abs(analytic)});
    worst = std::max(worst, std::abs(numeric - analytic));
    ++out.compared;
  }
  out.max_rel_error = scale == 0.0 ? worst : worst / scale;
  return out;
}

}  // namespace vqlab::oracle
