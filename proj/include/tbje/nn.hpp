/* Copyright 2026 The TBJE Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "tbje/rng.hpp"
#include "tbje/tensor.hpp"

namespace tbje {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

/// Train/eval switch threaded through every forward pass.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;

  /// Generator for dropout masks, or nullptr in eval mode.
  Rng* dropout_rng() const { return training ? rng : nullptr; }
};

/// Row-wise affine map x W + b, with W stored as [in x out].
struct Linear {
  Tensor weight;
  Tensor bias;

  /// Xavier-uniform weight, zero bias.
  static Linear init(std::size_t in, std::size_t out, Rng& rng);

  std::size_t in_width() const { return weight.rows(); }
  std::size_t out_width() const { return weight.cols(); }

  Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".weight", weight);
    fn(prefix + ".bias", bias);
  }
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  static LayerNormParams init(std::size_t width);

  Tensor operator()(const Tensor& x, double eps) const { return layer_norm(x, gain, bias, eps); }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".gain", gain);
    fn(prefix + ".bias", bias);
  }
};

/// Multi-head attention parameters.
///
/// The per-head projections W_i^Q, W_i^K, W_i^C (each width x width/heads) are
/// stored side by side: head i owns columns [i*d, (i+1)*d) of `query`, `key`
/// and `context`, where d = width / heads.
struct MhaParams {
  std::size_t width = 0;
  std::size_t heads = 1;
  Linear query;
  Linear key;
  Linear context;
  Linear output;

  static MhaParams init(std::size_t width, std::size_t heads, Rng& rng);

  std::size_t head_width() const { return width / heads; }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    query.visit(prefix + ".query", fn);
    key.visit(prefix + ".key", fn);
    context.visit(prefix + ".context", fn);
    output.visit(prefix + ".output", fn);
  }
};

/// Position-wise feed-forward network, width -> ff_width -> width with ReLU.
struct MlpParams {
  Linear hidden;
  Linear output;

  static MlpParams init(std::size_t width, std::size_t ff_width, Rng& rng);

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    hidden.visit(prefix + ".hidden", fn);
    output.visit(prefix + ".output", fn);
  }
};

/// softmax(Q K^T / sqrt(d)) C where d is the column count of Q.
///
/// `key_mask` flags valid rows of K/C (empty = all valid); masked keys get
/// exactly zero weight. Throws ContractError when every key is masked.
Tensor attention(const Tensor& query, const Tensor& key, const Tensor& context,
                 const Mask& key_mask = {});

/// The [N_q x N_k] weight matrix used by attention().
Tensor attention_weights(const Tensor& query, const Tensor& key, const Mask& key_mask = {});

/// Concat(head_1, ..., head_h) W_o with head_i = Attention(Q W_i^Q, K W_i^K, C W_i^C).
Tensor multi_head_attention(const Tensor& query, const Tensor& key, const Tensor& context,
                            const MhaParams& params, const Mask& key_mask = {});

Tensor mlp(const Tensor& x, const MlpParams& params);

/// LayerNorm(x + Dropout(f(x))). The sub-function must preserve the shape of x.
Tensor sublayer(const Tensor& x, const std::function<Tensor(const Tensor&)>& f,
                const LayerNormParams& norm, double dropout_p, const ForwardContext& ctx,
                double eps);

/// Sinusoidal encoding: PE[p, 2i] = sin(p / 10000^(2i/k)), PE[p, 2i+1] = cos(same).
Tensor positional_encoding(std::size_t length, std::size_t width);

}  // namespace tbje
