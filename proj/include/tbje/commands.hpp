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
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tbje/bundle.hpp"
#include "tbje/config.hpp"
#include "tbje/gradcheck.hpp"

namespace tbje {

// ---------------------------------------------------------------------------
// extract-features

/// Manifest CSV header names. `transcript`, `audio` and `visual` are
/// optional, but at least one must be present; paths are relative to the
/// manifest's directory.
inline constexpr std::array<std::string_view, 12> kManifestColumns = {
    "id",    "split", "transcript", "audio", "visual", "sentiment",
    "happy", "sad",   "angry",      "fear",  "disgust", "surprise"};

struct ManifestRow {
  std::string id;
  std::string split;
  std::map<Modality, std::filesystem::path> sources;
  double sentiment = 0.0;
  std::array<std::uint8_t, kEmotionCount> emotions{};
};

/// Parses the manifest and resolves paths. Throws IoError listing every
/// missing file at once.
std::vector<ManifestRow> read_manifest(const std::filesystem::path& csv);

struct ExtractOptions {
  std::filesystem::path manifest;
  std::filesystem::path out;
  std::optional<std::filesystem::path> embeddings;  // required with transcripts
  RunConfig config;
};

DatasetBundle extract_features(const ExtractOptions& options);
/// extract_features followed by write_bundle.
DatasetBundle cmd_extract_features(const ExtractOptions& options);

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::filesystem::path bundle;
  std::filesystem::path out;
  RunConfig config;
  bool resume = false;
  std::ostream* progress = nullptr;
};

struct MemberSummary {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double best_valid_accuracy = 0.0;
  bool early_stopped = false;
};

struct TrainSummary {
  std::string config_text;
  std::vector<MemberSummary> members;
  std::string to_text() const;
};

std::string member_stem(std::size_t index);

/// Writes member_<i>.tbjm (best-validation parameters), member_<i>.log.jsonl,
/// member_<i>.state.tbjs (after every epoch) and summary.json into `out`.
TrainSummary cmd_train(const TrainOptions& options);

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
  std::filesystem::path bundle;
  std::vector<std::filesystem::path> checkpoints;
  std::string split = "test";
  double sentiment_boundary = 0.0;
  std::optional<std::filesystem::path> report;
};

struct BinaryScores {
  double accuracy = 0.0;
  double f1_weighted = 0.0;
  double f1_unweighted = 0.0;
};

struct EvaluationReport {
  Task task = Task::sentiment7;
  std::string split;
  std::size_t examples = 0;
  std::size_t members = 0;
  double accuracy = 0.0;
  std::optional<BinaryScores> binary;                      // sentiment-2
  std::map<std::string, BinaryScores> emotions;            // emotions-6
  std::optional<BinaryScores> emotion_mean;                // emotions-6

  std::string to_text() const;
};

EvaluationReport evaluate_probabilities(const Tensor& probs, const Labels& labels, Task task,
                                        double boundary = 0.0);
EvaluationReport cmd_evaluate(const EvaluateOptions& options);

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckRunOptions {
  std::vector<Modality> modalities = {Modality::linguistic, Modality::acoustic};
  std::size_t blocks = 2;
  std::size_t width = 16;
  std::size_t heads = 2;
  std::size_t length = 4;
  std::size_t batch = 2;
  Task task = Task::sentiment7;
  std::uint64_t seed = 0;
  GradcheckOptions check;
};

GradcheckReport cmd_gradcheck(const GradcheckRunOptions& options);
std::string gradcheck_table(const GradcheckReport& report);

// ---------------------------------------------------------------------------
// sweep-blocks

struct SweepOptions {
  std::filesystem::path bundle;
  RunConfig config;
  std::vector<std::size_t> blocks = {1, 2, 4, 6};
  std::ostream* progress = nullptr;
};

struct SweepRow {
  std::size_t blocks = 0;
  std::size_t parameters = 0;
  std::size_t epochs = 0;
  double valid_accuracy = 0.0;
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();  // NaN without a test split
  double seconds = 0.0;
};

std::vector<SweepRow> cmd_sweep_blocks(const SweepOptions& options);
/// Tab-separated table with a header row.
std::string sweep_table(const std::vector<SweepRow>& rows);

// ---------------------------------------------------------------------------

/// Writes a synthetic bundle.
DatasetBundle cmd_synth(const std::filesystem::path& out, const SyntheticSpec& spec);

}  // namespace tbje
