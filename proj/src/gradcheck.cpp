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

#include "tbje/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "tbje/error.hpp"
#include "tbje/rng.hpp"

namespace tbje {

bool GradcheckReport::passed() const {
  return std::all_of(parameters.begin(), parameters.end(), [](const auto& p) { return p.passed; });
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradcheckReport gradcheck(const ParameterList& params, const std::function<Tensor()>& loss,
                          const GradcheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<Tensor> handles;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.set_requires_grad(true);
    t.zero_grad();
    handles.push_back(t);
  }
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor l = loss();
    if (l.numel() != 1) throw DimensionError("gradcheck: loss must be a scalar, got " + shape_string(l.shape()));
    backward(l);
  }
  auto evaluate = [&] { return loss().item(); };

  GradcheckReport report;
  Rng rng(options.seed);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& t = handles[k];
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coordinates != 0 && coords.size() > options.max_coordinates) {
      Rng local = rng.split(k);
      local.shuffle(std::span<std::size_t>(coords));
      coords.resize(options.max_coordinates);
    }
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto data = t.mutable_data();
    ParameterCheck check{params[k].name, coords.size(), 0.0, true};
    for (std::size_t i : coords) {
      const double orig = data[i];
      data[i] = orig + options.step;
      const double up = evaluate();
      data[i] = orig - options.step;
      const double down = evaluate();
      data[i] = orig;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      check.max_relative_error =
          std::max(check.max_relative_error, relative_error(a, numeric, options.floor));
    }
    check.passed = check.max_relative_error < options.tolerance;
    report.max_relative_error = std::max(report.max_relative_error, check.max_relative_error);
    report.parameters.push_back(std::move(check));
  }
  for (auto& t : handles) t.set_requires_grad(false);
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace tbje
