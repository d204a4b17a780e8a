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
#include <cstdint>
#include <span>

#include "tbje/dataset.hpp"

namespace tbje {

/// Binary confusion tallies with class 1 as the positive class.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  std::size_t positive_support() const { return tp + fn; }
  std::size_t negative_support() const { return tn + fp; }
  /// F1 of the positive class, or of the negative class with roles swapped;
  /// 0 when precision + recall = 0.
  double positive_f1() const;
  double negative_f1() const;
};

ConfusionCounts confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> gold);

/// Exact-match fraction. Throws ContractError on empty or unequal inputs.
double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> gold);

/// Row-major [n x classes] 0/1 flags; mean over classes of per-class binary accuracy.
double multilabel_accuracy(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> gold,
                           std::size_t classes);

/// F1 of `positive` for binary labels.
double f1_unweighted(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> gold,
                     std::uint8_t positive = 1);

/// Support-weighted mean of the positive- and negative-class F1.
double f1_weighted(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> gold);

/// Round half away from zero, then shift [-3, 3] to 0..6.
std::size_t sentiment_bin7(double raw);
/// 0 when raw < boundary, else 1.
std::size_t sentiment_bin2(double raw, double boundary = 0.0);
/// Class index of a raw sentiment label for a sentiment task.
std::size_t sentiment_class(double raw, Task task, double boundary = 0.0);

}  // namespace tbje
