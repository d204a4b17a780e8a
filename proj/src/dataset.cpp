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

#include "tbje/dataset.hpp"

#include <algorithm>

#include "tbje/error.hpp"

namespace tbje {

std::string_view modality_tag(Modality m) {
  switch (m) {
    case Modality::linguistic: return "L";
    case Modality::acoustic: return "A";
    case Modality::visual: return "V";
  }
  return "?";
}

Modality parse_modality(std::string_view tag) {
  if (tag == "L") return Modality::linguistic;
  if (tag == "A") return Modality::acoustic;
  if (tag == "V") return Modality::visual;
  throw ConfigError("unknown modality '" + std::string(tag) + "' (expected L, A or V)");
}

std::string_view task_name(Task t) {
  switch (t) {
    case Task::sentiment2: return "sentiment-2";
    case Task::sentiment7: return "sentiment-7";
    case Task::emotions6: return "emotions-6";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  if (name == "sentiment-2") return Task::sentiment2;
  if (name == "sentiment-7") return Task::sentiment7;
  if (name == "emotions-6") return Task::emotions6;
  throw ConfigError("unknown task '" + std::string(name) +
                    "' (expected sentiment-2, sentiment-7 or emotions-6)");
}

std::size_t task_classes(Task t) {
  switch (t) {
    case Task::sentiment2: return 2;
    case Task::sentiment7: return 7;
    case Task::emotions6: return kEmotionCount;
  }
  return 0;
}

ModalityInput ModalityBatch::example(std::size_t index) const {
  const std::size_t n = length(), w = width();
  auto all = features.data();
  std::vector<double> rows(all.begin() + index * n * w, all.begin() + (index + 1) * n * w);
  Mask m(mask.begin() + index * n, mask.begin() + (index + 1) * n);
  return {Tensor(Shape{n, w}, std::move(rows)), std::move(m)};
}

ModalityBatch ModalityBatch::select(std::span<const std::size_t> indices) const {
  const std::size_t n = length(), w = width();
  if (indices.empty()) throw ContractError("select: no indices");
  std::vector<double> values;
  std::vector<std::uint8_t> m;
  values.reserve(indices.size() * n * w);
  m.reserve(indices.size() * n);
  auto all = features.data();
  for (auto i : indices) {
    if (i >= batch_size()) throw ContractError("select: index out of range");
    values.insert(values.end(), all.begin() + i * n * w, all.begin() + (i + 1) * n * w);
    m.insert(m.end(), mask.begin() + i * n, mask.begin() + (i + 1) * n);
  }
  return {modality, Tensor(Shape{indices.size(), n, w}, std::move(values)), std::move(m)};
}

void ModalityBatch::validate() const {
  if (features.rank() != 3) {
    throw DimensionError(std::string(modality_tag(modality)) + " features must be rank 3, got " +
                         shape_string(features.shape()));
  }
  const std::size_t b = batch_size(), n = length(), w = width();
  if (mask.size() != b * n) {
    throw DimensionError(std::string(modality_tag(modality)) + " mask has " +
                         std::to_string(mask.size()) + " flags, expected " +
                         std::to_string(b * n));
  }
  auto v = features.data();
  for (std::size_t e = 0; e < b; ++e) {
    bool any = false;
    for (std::size_t r = 0; r < n; ++r) {
      const bool valid = mask[e * n + r] != 0;
      any = any || valid;
      if (valid) continue;
      for (std::size_t j = 0; j < w; ++j) {
        if (v[(e * n + r) * w + j] != 0.0) {
          throw ContractError(std::string(modality_tag(modality)) +
                              ": padded rows must hold zeros");
        }
      }
    }
    if (!any) {
      throw ContractError(std::string(modality_tag(modality)) + ": example " +
                          std::to_string(e) + " has no valid rows");
    }
  }
}

ModalityBatch ModalityBatch::stack(Modality m, std::span<const ModalityInput> examples) {
  if (examples.empty()) throw ContractError("stack: no examples");
  const auto& first = examples.front().features;
  const std::size_t n = first.rows(), w = first.cols();
  std::vector<double> values;
  std::vector<std::uint8_t> mask;
  for (const auto& ex : examples) {
    if (ex.features.shape() != first.shape()) {
      throw DimensionError("stack: example shape " + shape_string(ex.features.shape()) +
                           " differs from " + shape_string(first.shape()));
    }
    values.insert(values.end(), ex.features.data().begin(), ex.features.data().end());
    if (ex.mask.empty()) {
      mask.insert(mask.end(), n, 1);
    } else {
      if (ex.mask.size() != n) throw DimensionError("stack: mask length mismatch");
      mask.insert(mask.end(), ex.mask.begin(), ex.mask.end());
    }
  }
  return {m, Tensor(Shape{examples.size(), n, w}, std::move(values)), std::move(mask)};
}

Labels Labels::select(std::span<const std::size_t> indices) const {
  Labels out;
  for (auto i : indices) {
    if (i >= size()) throw ContractError("labels: index out of range");
    out.sentiment.push_back(sentiment[i]);
    out.emotions.push_back(emotions[i]);
  }
  return out;
}

Tensor Labels::to_tensor() const {
  std::vector<double> v;
  v.reserve(size() * (1 + kEmotionCount));
  for (std::size_t i = 0; i < size(); ++i) {
    v.push_back(sentiment[i]);
    for (auto e : emotions[i]) v.push_back(e);
  }
  return Tensor(Shape{size(), 1 + kEmotionCount}, std::move(v));
}

Labels Labels::from_tensor(const Tensor& t) {
  if (t.rank() != 2 || t.cols() != 1 + kEmotionCount) {
    throw DimensionError("labels tensor must be [n x 7], got " + shape_string(t.shape()));
  }
  Labels out;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const double s = t.at(i, 0);
    if (!(s >= -3.0 && s <= 3.0)) throw ContractError("sentiment label outside [-3, 3]");
    out.sentiment.push_back(s);
    std::array<std::uint8_t, kEmotionCount> e{};
    for (std::size_t j = 0; j < kEmotionCount; ++j) {
      const double f = t.at(i, 1 + j);
      if (f != 0.0 && f != 1.0) throw ContractError("emotion flags must be 0 or 1");
      e[j] = static_cast<std::uint8_t>(f);
    }
    out.emotions.push_back(e);
  }
  return out;
}

Split Split::select(std::span<const std::size_t> indices) const {
  Split out;
  for (auto i : indices) out.ids.push_back(ids.at(i));
  for (const auto& [m, batch] : modalities) out.modalities.emplace(m, batch.select(indices));
  out.labels = labels.select(indices);
  return out;
}

std::map<Modality, ModalityInput> Split::example(std::size_t index) const {
  std::map<Modality, ModalityInput> out;
  for (const auto& [m, batch] : modalities) out.emplace(m, batch.example(index));
  return out;
}

void Split::validate() const {
  if (labels.size() != size()) {
    throw ContractError("split has " + std::to_string(size()) + " ids but " +
                        std::to_string(labels.size()) + " labels");
  }
  for (const auto& [m, batch] : modalities) {
    batch.validate();
    if (batch.batch_size() != size()) {
      throw ContractError(std::string(modality_tag(m)) + " holds " +
                          std::to_string(batch.batch_size()) + " examples, expected " +
                          std::to_string(size()));
    }
  }
}

}  // namespace tbje
