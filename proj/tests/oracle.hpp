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

// Straight-line reference evaluations of the encoder formulas on plain
// nested vectors. Deliberately shares no code with the Tensor op path: only
// parameter values are read from the model.

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "tbje/model.hpp"

namespace tbje::oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat from(const Tensor& t) {
  const std::size_t r = t.rank() == 1 ? 1 : t.rows();
  const std::size_t c = t.cols();
  Mat m(r, Vec(c));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m[i][j] = t[i * c + j];
  return m;
}

inline Vec vec(const Tensor& t) { return Vec(t.data().begin(), t.data().end()); }

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.size(), Vec(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < b.size(); ++p) s += a[i][p] * b[p][j];
      out[i][j] = s;
    }
  return out;
}

inline Mat plus(const Mat& a, const Mat& b) {
  Mat out = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) out[i][j] += b[i][j];
  return out;
}

inline Mat affine(const Mat& x, const Linear& l) {
  const Mat w = from(l.weight);
  const Vec b = vec(l.bias);
  Mat out(x.size(), Vec(b.size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      double s = b[j];
      for (std::size_t p = 0; p < w.size(); ++p) s += x[i][p] * w[p][j];
      out[i][j] = s;
    }
  return out;
}

inline Mat layer_norm(const Mat& x, const LayerNormParams& p, double eps) {
  const Vec g = vec(p.gain), b = vec(p.bias);
  Mat out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(x[i].size());
    double mu = 0.0;
    for (double v : x[i]) mu += v;
    mu /= n;
    double var = 0.0;
    for (double v : x[i]) var += (v - mu) * (v - mu);
    var /= n;
    for (std::size_t j = 0; j < x[i].size(); ++j)
      out[i][j] = g[j] * (x[i][j] - mu) / std::sqrt(var + eps) + b[j];
  }
  return out;
}

// Row-wise softmax over the columns flagged valid.
inline Mat softmax_rows(const Mat& s, const Mask& mask) {
  Mat out = s;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < s[i].size(); ++j)
      if (mask.empty() || mask[j]) mx = std::max(mx, s[i][j]);
    double z = 0.0;
    for (std::size_t j = 0; j < s[i].size(); ++j) {
      out[i][j] = (mask.empty() || mask[j]) ? std::exp(s[i][j] - mx) : 0.0;
      z += out[i][j];
    }
    for (auto& v : out[i]) v /= z;
  }
  return out;
}

// softmax(Q K^T / sqrt(d)) C
inline Mat attention(const Mat& q, const Mat& k, const Mat& c, const Mask& mask) {
  const double d = static_cast<double>(q[0].size());
  Mat s(q.size(), Vec(k.size()));
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < k.size(); ++j) {
      double dot = 0.0;
      for (std::size_t t = 0; t < q[i].size(); ++t) dot += q[i][t] * k[j][t];
      s[i][j] = dot / std::sqrt(d);
    }
  return matmul(softmax_rows(s, mask), c);
}

// Each head computed separately from its own column block of the projections.
inline Mat multi_head_attention(const Mat& q, const Mat& k, const Mat& c, const MhaParams& p,
                                const Mask& mask) {
  const std::size_t d = p.width / p.heads;
  auto head_proj = [&](const Mat& x, const Linear& l, std::size_t h) {
    const Mat w = from(l.weight);
    const Vec b = vec(l.bias);
    Mat out(x.size(), Vec(d));
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double s = b[h * d + j];
        for (std::size_t t = 0; t < x[i].size(); ++t) s += x[i][t] * w[t][h * d + j];
        out[i][j] = s;
      }
    return out;
  };
  Mat joined(q.size());
  for (std::size_t h = 0; h < p.heads; ++h) {
    const Mat head =
        attention(head_proj(q, p.query, h), head_proj(k, p.key, h), head_proj(c, p.context, h), mask);
    for (std::size_t i = 0; i < q.size(); ++i)
      joined[i].insert(joined[i].end(), head[i].begin(), head[i].end());
  }
  return affine(joined, p.output);
}

inline Mat mlp(const Mat& x, const MlpParams& p) {
  Mat h = affine(x, p.hidden);
  for (auto& row : h)
    for (auto& v : row) v = std::max(v, 0.0);
  return affine(h, p.output);
}

// m_i = sum_j a_ij M_j, a_i = softmax_j(v_i . (W_m M_j + b))
inline Mat glimpse(const Mat& m, const GlimpseParams& p, const Mask& mask) {
  const Mat e = affine(m, p.embed);
  const Mat v = from(p.vectors);
  Mat out(v.size(), Vec(m[0].size(), 0.0));
  for (std::size_t i = 0; i < v.size(); ++i) {
    Vec score(m.size());
    for (std::size_t j = 0; j < m.size(); ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < v[i].size(); ++t) s += v[i][t] * e[j][t];
      score[j] = s;
    }
    const Vec a = softmax_rows(Mat{score}, mask)[0];
    for (std::size_t j = 0; j < m.size(); ++j)
      for (std::size_t t = 0; t < m[j].size(); ++t) out[i][t] += a[j] * m[j][t];
  }
  return out;
}

// Eval-mode block: attention sublayer, MLP sublayer, optional glimpse sublayer.
inline Mat block(const EncoderBlock& b, const Mat& x, const Mask& x_mask, const Mat& keys,
                 const Mask& key_mask, double eps) {
  Mat h = layer_norm(plus(x, multi_head_attention(x, keys, keys, b.attention, key_mask)),
                     b.attention_norm, eps);
  h = layer_norm(plus(h, mlp(h, b.mlp)), b.mlp_norm, eps);
  if (b.glimpse) h = layer_norm(plus(h, glimpse(h, *b.glimpse, x_mask)), *b.glimpse_norm, eps);
  return h;
}

inline Mat project(const ModalityEncoder& e, const ModalityInput& in) {
  Mat x = affine(from(in.features), e.input);
  if (e.config.positional_encoding) {
    for (std::size_t p = 0; p < x.size(); ++p)
      for (std::size_t j = 0; j < x[p].size(); ++j) {
        const double i2 = static_cast<double>(j - j % 2);
        const double angle = static_cast<double>(p) / std::pow(10000.0, i2 / x[p].size());
        x[p][j] += j % 2 == 0 ? std::sin(angle) : std::cos(angle);
      }
  }
  return x;
}

/// Unrolled lockstep encoding, eval mode. Returns every block state.
inline std::map<Modality, std::vector<Mat>> encode(const TbjeModel& model,
                                                   const ExampleInputs& inputs) {
  const auto& cfg = model.config;
  std::map<Modality, std::vector<Mat>> states;
  for (const auto& e : model.encoders)
    states[e.config.modality].push_back(project(e, inputs.at(e.config.modality)));
  const Mask& pmask = inputs.at(cfg.primary).mask;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    const Mat x_b = states[cfg.primary][b];
    for (const auto& e : model.encoders) {
      const auto m = e.config.modality;
      const Mat y = states[m][b];
      const Mask& ymask = inputs.at(m).mask;
      const bool primary = m == cfg.primary;
      states[m].push_back(block(e.blocks[b], y, ymask, primary ? y : x_b,
                                primary ? ymask : pmask, cfg.layer_norm_eps));
    }
  }
  return states;
}

/// Eval-mode logits.
inline Vec logits(const TbjeModel& model, const ExampleInputs& inputs) {
  const auto states = encode(model, inputs);
  Vec s(model.config.width, 0.0);
  for (const auto& e : model.encoders) {
    const auto m = e.config.modality;
    const Mat pooled = glimpse(states.at(m).back(), e.pool, inputs.at(m).mask);
    for (std::size_t j = 0; j < s.size(); ++j) s[j] += pooled[0][j];
  }
  const Mat normed = layer_norm(Mat{s}, model.classifier_norm, model.config.layer_norm_eps);
  return affine(normed, model.classifier)[0];
}

inline double max_abs_diff(const Mat& a, const Tensor& t) {
  double worst = 0.0;
  const std::size_t c = t.cols();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) worst = std::max(worst, std::abs(a[i][j] - t[i * c + j]));
  return worst;
}

}  // namespace tbje::oracle
