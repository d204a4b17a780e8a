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

#include <vector>

#include "test_support.hpp"
#include "tbje/model.hpp"

namespace tbje::testing {

struct ToyModality {
  Modality modality;
  std::size_t input_width;
  std::size_t length;
  bool positional = false;
};

inline EncoderConfig toy_config(std::vector<ToyModality> mods, std::size_t blocks = 1,
                                std::size_t width = 8, std::size_t heads = 2,
                                Task task = Task::sentiment7) {
  EncoderConfig c;
  c.blocks = blocks;
  c.width = width;
  c.heads = heads;
  c.ff_width = 2 * width;
  c.task = task;
  c.primary = mods.front().modality;
  for (const auto& m : mods) c.modalities.push_back({m.modality, m.input_width, m.length, 0, m.positional});
  return c;
}

/// Random features with a random number of valid leading rows (>= 1) per
/// modality; padded rows are zero.
inline ExampleInputs random_inputs(const EncoderConfig& c, Rng& rng, bool full = false) {
  ExampleInputs out;
  for (const auto& m : c.modalities) {
    const std::size_t valid = full ? m.length : 1 + rng.below(m.length);
    auto f = random_tensor(Shape{m.length, m.input_width}, rng);
    auto d = f.mutable_data();
    Mask mask(m.length, 0);
    for (std::size_t r = 0; r < m.length; ++r) {
      mask[r] = r < valid;
      if (r >= valid)
        for (std::size_t j = 0; j < m.input_width; ++j) d[r * m.input_width + j] = 0.0;
    }
    out[m.modality] = {f, mask};
  }
  return out;
}

}  // namespace tbje::testing
