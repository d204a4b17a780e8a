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

#include "tbje/nn.hpp"

#include <cmath>

#include "tbje/error.hpp"

namespace tbje {

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(in * out);
  for (auto& v : w) v = rng.uniform(-limit, limit);
  Linear l{Tensor(Shape{in, out}, std::move(w)), Tensor::zeros(Shape{out})};
  l.weight.set_requires_grad(true);
  l.bias.set_requires_grad(true);
  return l;
}

LayerNormParams LayerNormParams::init(std::size_t width) {
  LayerNormParams p{Tensor::full(Shape{width}, 1.0), Tensor::zeros(Shape{width})};
  p.gain.set_requires_grad(true);
  p.bias.set_requires_grad(true);
  return p;
}

MhaParams MhaParams::init(std::size_t width, std::size_t heads, Rng& rng) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention width " + std::to_string(width) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  MhaParams p;
  p.width = width;
  p.heads = heads;
  p.query = Linear::init(width, width, rng);
  p.key = Linear::init(width, width, rng);
  p.context = Linear::init(width, width, rng);
  p.output = Linear::init(width, width, rng);
  return p;
}

MlpParams MlpParams::init(std::size_t width, std::size_t ff_width, Rng& rng) {
  if (ff_width == 0) throw ConfigError("MLP inner width must be positive");
  return {Linear::init(width, ff_width, rng), Linear::init(ff_width, width, rng)};
}

Tensor attention_weights(const Tensor& query, const Tensor& key, const Mask& key_mask) {
  if (query.cols() != key.cols()) {
    throw DimensionError("attention: query " + shape_string(query.shape()) + " and key " +
                         shape_string(key.shape()) + " differ in width");
  }
  if (!key_mask.empty()) {
    if (key_mask.size() != key.rows()) {
      throw DimensionError("attention: mask of length " + std::to_string(key_mask.size()) +
                           " for " + std::to_string(key.rows()) + " keys");
    }
    bool any = false;
    for (auto m : key_mask) any = any || m;
    if (!any) throw ContractError("attention: every key is masked");
  }
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(query.cols()));
  auto scores = scale(matmul(query, transpose(key)), inv_scale);
  return softmax(mask_columns(scores, key_mask), 1);
}

Tensor attention(const Tensor& query, const Tensor& key, const Tensor& context,
                 const Mask& key_mask) {
  if (key.rows() != context.rows()) {
    throw DimensionError("attention: key " + shape_string(key.shape()) + " and context " +
                         shape_string(context.shape()) + " differ in rows");
  }
  return matmul(attention_weights(query, key, key_mask), context);
}

Tensor multi_head_attention(const Tensor& query, const Tensor& key, const Tensor& context,
                            const MhaParams& params, const Mask& key_mask) {
  for (const Tensor* t : {&query, &key, &context}) {
    if (t->cols() != params.width) {
      throw DimensionError("multi_head_attention: input " + shape_string(t->shape()) +
                           " does not match width " + std::to_string(params.width));
    }
  }
  const auto q = params.query(query);
  const auto k = params.key(key);
  const auto c = params.context(context);
  const std::size_t d = params.head_width();
  std::vector<Tensor> heads;
  heads.reserve(params.heads);
  for (std::size_t h = 0; h < params.heads; ++h) {
    heads.push_back(attention(slice_last(q, h * d, (h + 1) * d), slice_last(k, h * d, (h + 1) * d),
                              slice_last(c, h * d, (h + 1) * d), key_mask));
  }
  auto joined = params.heads == 1 ? heads[0] : concat(heads, 1);
  return params.output(joined);
}

Tensor mlp(const Tensor& x, const MlpParams& params) {
  return params.output(relu(params.hidden(x)));
}

Tensor sublayer(const Tensor& x, const std::function<Tensor(const Tensor&)>& f,
                const LayerNormParams& norm, double dropout_p, const ForwardContext& ctx,
                double eps) {
  auto y = f(x);
  if (y.shape() != x.shape()) {
    throw ContractError("sublayer: function changed shape " + shape_string(x.shape()) + " -> " +
                        shape_string(y.shape()));
  }
  y = dropout(y, dropout_p, ctx.dropout_rng());
  return norm(add(x, y), eps);
}

Tensor positional_encoding(std::size_t length, std::size_t width) {
  if (length == 0 || width == 0) throw ContractError("positional_encoding: empty shape");
  std::vector<double> pe(length * width);
  for (std::size_t p = 0; p < length; ++p) {
    for (std::size_t j = 0; j < width; ++j) {
      const double i2 = static_cast<double>(j - j % 2);
      const double angle =
          static_cast<double>(p) / std::pow(10000.0, i2 / static_cast<double>(width));
      pe[p * width + j] = j % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor(Shape{length, width}, std::move(pe));
}

}  // namespace tbje
