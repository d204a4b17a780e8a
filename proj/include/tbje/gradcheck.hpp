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
#include <functional>
#include <string>
#include <vector>

#include "tbje/nn.hpp"
#include "tbje/tensor.hpp"

namespace tbje {

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error. Central differences carry an
  /// absolute rounding error near eps*|loss|/step, so exactly-zero gradients
  /// (e.g. attention key biases) would otherwise read as O(1e-3) failures.
  double floor = 1e-6;
  /// Coordinates checked per tensor; 0 checks every coordinate.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
};

struct ParameterCheck {
  std::string name;
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<ParameterCheck> parameters;
  double max_relative_error = 0.0;
  double seconds = 0.0;
  bool passed() const;
};

double relative_error(double analytic, double numeric, double floor);

/// Compares reverse-mode gradients of `loss` against central differences for
/// every tensor in `params`. `loss` must be deterministic and return a scalar.
GradcheckReport gradcheck(const ParameterList& params, const std::function<Tensor()>& loss,
                          const GradcheckOptions& options = {});

}  // namespace tbje
