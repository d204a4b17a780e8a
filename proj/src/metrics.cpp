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

#include "tbje/metrics.hpp"

#include <cmath>
#include <string>

#include "tbje/error.hpp"

namespace tbje {

namespace {

void check_pair(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ContractError(std::string(what) + ": " + std::to_string(a) + " predictions for " +
                        std::to_string(b) + " labels");
  }
  if (a == 0) throw ContractError(std::string(what) + ": empty input");
}

double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return tp == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
}

}  // namespace

double ConfusionCounts::positive_f1() const { return f1(tp, fp, fn); }
double ConfusionCounts::negative_f1() const { return f1(tn, fn, fp); }

ConfusionCounts confusion(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> gold) {
  check_pair(predicted.size(), gold.size(), "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i] > 1 || gold[i] > 1) throw ContractError("confusion: labels must be 0 or 1");
    if (gold[i]) (predicted[i] ? c.tp : c.fn)++;
    else (predicted[i] ? c.fp : c.tn)++;
  }
  return c;
}

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> gold) {
  check_pair(predicted.size(), gold.size(), "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += predicted[i] == gold[i];
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

double multilabel_accuracy(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> gold,
                           std::size_t classes) {
  check_pair(predicted.size(), gold.size(), "multilabel_accuracy");
  if (classes == 0 || gold.size() % classes != 0) {
    throw ContractError("multilabel_accuracy: " + std::to_string(gold.size()) +
                        " flags do not split into rows of " + std::to_string(classes));
  }
  const std::size_t n = gold.size() / classes;
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += predicted[i * classes + c] == gold[i * classes + c];
    total += static_cast<double>(hits) / static_cast<double>(n);
  }
  return total / static_cast<double>(classes);
}

double f1_unweighted(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> gold,
                     std::uint8_t positive) {
  if (positive > 1) throw ContractError("f1_unweighted: positive class must be 0 or 1");
  const auto c = confusion(predicted, gold);
  return positive == 1 ? c.positive_f1() : c.negative_f1();
}

double f1_weighted(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> gold) {
  const auto c = confusion(predicted, gold);
  const auto total = static_cast<double>(c.total());
  return static_cast<double>(c.positive_support()) / total * c.positive_f1() +
         static_cast<double>(c.negative_support()) / total * c.negative_f1();
}

std::size_t sentiment_bin7(double raw) {
  if (!(raw >= -3.0 && raw <= 3.0)) throw ContractError("sentiment label " + std::to_string(raw) + " outside [-3, 3]");
  return static_cast<std::size_t>(std::round(raw) + 3.0);
}

std::size_t sentiment_bin2(double raw, double boundary) {
  if (!(raw >= -3.0 && raw <= 3.0)) throw ContractError("sentiment label " + std::to_string(raw) + " outside [-3, 3]");
  return raw < boundary ? 0 : 1;
}

std::size_t sentiment_class(double raw, Task task, double boundary) {
  switch (task) {
    case Task::sentiment2: return sentiment_bin2(raw, boundary);
    case Task::sentiment7: return sentiment_bin7(raw);
    case Task::emotions6: break;
  }
  throw ContractError("sentiment_class: emotions task has no sentiment class");
}

}  // namespace tbje
