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

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tbje/bundle.hpp"
#include "tbje/features.hpp"
#include "tbje/model.hpp"
#include "tbje/training.hpp"

namespace tbje {

/// Everything a run needs besides paths. Text form is JSON:
///
///   { "seed": 0,
///     "encoder":  { "modalities": ["L", "A"], "primary": "L", "blocks": 6, ... },
///     "train":    { "lr": 1e-4, "batch_size": 32, ... },
///     "features": { "lengths": {"L": 50, "A": 40, "V": 40}, "mel": {...} } }
///
/// A file may give any subset of keys; the rest keep their defaults. Unknown
/// keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;

  // Encoder settings that do not depend on the data.
  std::vector<Modality> modalities = {Modality::linguistic, Modality::acoustic};
  std::vector<Modality> positional_encoding = {Modality::linguistic};
  EncoderConfig encoder;  // modality list left empty

  TrainConfig train;

  std::map<Modality, std::size_t> lengths = {
      {Modality::linguistic, 50}, {Modality::acoustic, 40}, {Modality::visual, 40}};
  std::size_t embedding_width = kEmbeddingWidth;
  MelConfig mel;

  /// Canonical JSON with every key.
  std::string to_text() const;
  static RunConfig from_text(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  /// `key=value` with a dotted key path, e.g. "train.lr=1e-3" or
  /// "encoder.modalities=L,A,V". Values are parsed as JSON when possible,
  /// otherwise taken as strings; comma lists fill array-valued keys.
  void apply_override(const std::string& assignment);

  /// Full encoder config for a bundle: the selected modalities in order,
  /// with widths from the bundle and padded lengths from the bundle.
  EncoderConfig encoder_for(const BundleManifest& manifest) const;

  void validate() const;
};

}  // namespace tbje
