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
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tbje/dataset.hpp"
#include "tbje/features.hpp"
#include "tbje/model.hpp"

namespace tbje {

inline constexpr std::uint32_t kBundleVersion = 1;
inline constexpr std::string_view kBundleFormat = "tbje-bundle";

struct ModalitySpec {
  Modality modality = Modality::linguistic;
  std::size_t width = 0;
  std::size_t length = 0;
};

struct VocabularyInfo {
  std::string file = "vocab.txt";
  std::uint64_t hash = 0;
  std::size_t size = 0;
  std::vector<std::string> missing;  // train tokens without a pretrained vector
};

struct AcousticInfo {
  MelConfig mel;
  double train_max = 0.0;  // normalisation ceiling over the train split
  std::vector<std::string> padded_ids;  // waveforms shorter than one window
};

struct BundleManifest {
  std::uint32_t version = kBundleVersion;
  std::string source;  // "synthetic" or "extracted"
  std::vector<ModalitySpec> modalities;
  std::map<std::string, std::size_t> splits;  // name -> example count
  std::optional<VocabularyInfo> vocabulary;
  std::optional<AcousticInfo> acoustic;
  std::vector<std::string> empty_transcripts;  // ids whose text tokenized to nothing

  const ModalitySpec& modality(Modality m) const;
  bool has(Modality m) const;
  /// Canonical JSON text (sorted keys, two-space indent, trailing newline).
  std::string to_text() const;
  static BundleManifest from_text(const std::string& text);
};

/// Padded per-split tensors plus the manifest describing them.
struct DatasetBundle {
  BundleManifest manifest;
  std::map<std::string, Split> splits;
  std::string vocabulary_text;  // contents of the vocabulary file, if any

  const Split& split(const std::string& name) const;
  std::uint64_t vocabulary_hash() const;
  /// Checks every split against the manifest.
  void validate() const;
};

/// Writes manifest.json, the vocabulary file and one directory per split
/// holding ids.txt, labels.tbjt, <M>.features.tbjt and <M>.mask.tbjt.
void write_bundle(const std::filesystem::path& dir, const DatasetBundle& bundle);
DatasetBundle read_bundle(const std::filesystem::path& dir);

/// Encoder config whose modality list matches the bundle (in the order
/// given), starting from `base` for everything else.
EncoderConfig config_for_bundle(const EncoderConfig& base, const BundleManifest& manifest);
/// Throws ConfigError naming the first disagreement between a model config
/// and a bundle.
void check_bundle_compatible(const EncoderConfig& config, const BundleManifest& manifest);

struct SyntheticSpec {
  std::vector<ModalitySpec> modalities = {{Modality::linguistic, 12, 6},
                                          {Modality::acoustic, 8, 8},
                                          {Modality::visual, 6, 5}};
  std::map<std::string, std::size_t> splits = {{"train", 32}, {"valid", 16}, {"test", 16}};
  double noise = 0.3;
  std::uint64_t seed = 0;
};

/// Separable-by-construction data: each example draws a sentiment class,
/// every modality carries that class's prototype vector plus noise on a
/// random number of valid rows, and the emotion flags are fixed functions of
/// the class. Any single modality determines every label.
DatasetBundle make_synthetic_bundle(const SyntheticSpec& spec);

}  // namespace tbje
