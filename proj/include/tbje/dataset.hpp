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

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tbje/tensor.hpp"

namespace tbje {

enum class Modality : std::uint8_t { linguistic, acoustic, visual };

/// "L", "A" or "V".
std::string_view modality_tag(Modality m);
Modality parse_modality(std::string_view tag);

enum class Task : std::uint8_t { sentiment2, sentiment7, emotions6 };

/// "sentiment-2", "sentiment-7", "emotions-6".
std::string_view task_name(Task t);
Task parse_task(std::string_view name);
std::size_t task_classes(Task t);

inline constexpr std::size_t kEmotionCount = 6;
inline constexpr std::array<std::string_view, kEmotionCount> kEmotionNames = {
    "happy", "sad", "angry", "fear", "disgust", "surprise"};

/// One example's features for one modality.
struct ModalityInput {
  Tensor features;  // [N x width]
  Mask mask;        // length N
};

/// Padded fixed-length sequences of one modality for a set of examples.
struct ModalityBatch {
  Modality modality = Modality::linguistic;
  Tensor features;                  // [batch x N x width]
  std::vector<std::uint8_t> mask;   // batch * N flags, row-major

  std::size_t batch_size() const { return features.extent(0); }
  std::size_t length() const { return features.extent(1); }
  std::size_t width() const { return features.extent(2); }

  ModalityInput example(std::size_t index) const;
  ModalityBatch select(std::span<const std::size_t> indices) const;
  /// Checks shape/mask agreement, zero padding and at least one valid row.
  void validate() const;

  static ModalityBatch stack(Modality m, std::span<const ModalityInput> examples);
};

/// Raw labels: sentiment in [-3, 3] and six 0/1 emotion flags per example.
struct Labels {
  std::vector<double> sentiment;
  std::vector<std::array<std::uint8_t, kEmotionCount>> emotions;

  std::size_t size() const { return sentiment.size(); }
  Labels select(std::span<const std::size_t> indices) const;
  /// [n x 7] tensor: sentiment followed by the emotion flags.
  Tensor to_tensor() const;
  static Labels from_tensor(const Tensor& t);
};

/// One split of a dataset: ids, per-modality batches, labels.
struct Split {
  std::vector<std::string> ids;
  std::map<Modality, ModalityBatch> modalities;
  Labels labels;

  std::size_t size() const { return ids.size(); }
  Split select(std::span<const std::size_t> indices) const;
  std::map<Modality, ModalityInput> example(std::size_t index) const;
  void validate() const;
};

}  // namespace tbje
