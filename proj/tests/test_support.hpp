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

// Test-only oracles: finite differences and random fixtures. Nothing here
// calls into the autodiff backward path it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "tbje/rng.hpp"
#include "tbje/tensor.hpp"

namespace tbje::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

inline double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

/// Evaluates `loss` with no tape active.
inline double eval_loss(const std::function<Tensor()>& loss) { return loss().item(); }

/// Central differences for every coordinate of `x` (or a random subset of
/// `max_coords` of them), compared against the gradient left in `x` by a
/// preceding backward(). Returns the max relative error.
inline double max_fd_error(Tensor x, const std::function<Tensor()>& loss, double h = 1e-5,
                           std::size_t max_coords = 0, std::uint64_t seed = 7) {
  std::vector<std::size_t> coords(x.numel());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  if (max_coords != 0 && coords.size() > max_coords) {
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(coords));
    coords.resize(max_coords);
  }
  const auto analytic = std::vector<double>(x.grad().begin(), x.grad().end());
  double worst = 0.0;
  auto data = x.mutable_data();
  for (auto i : coords) {
    const double orig = data[i];
    data[i] = orig + h;
    const double up = eval_loss(loss);
    data[i] = orig - h;
    const double down = eval_loss(loss);
    data[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.empty() ? 0.0 : analytic[i];
    worst = std::max(worst, rel_err(a, numeric));
  }
  return worst;
}

/// Runs loss() on a fresh tape, back-propagates, then checks every input.
inline double gradcheck(std::vector<Tensor> inputs, const std::function<Tensor()>& loss,
                        double h = 1e-5) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    backward(loss());
  }
  double worst = 0.0;
  for (auto& t : inputs) worst = std::max(worst, max_fd_error(t, loss, h));
  return worst;
}

}  // namespace tbje::testing
