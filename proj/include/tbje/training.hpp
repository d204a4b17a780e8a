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
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "tbje/dataset.hpp"
#include "tbje/model.hpp"

namespace tbje {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 32;
  double decay_factor = 0.2;
  std::size_t max_decays = 2;
  std::size_t patience = 3;
  std::size_t ensemble = 5;
  std::size_t max_epochs = 500;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double sentiment_boundary = 0.0;

  void validate() const;
};

/// Class targets of a sentiment task, or the [n x 6] flag tensor for emotions.
std::vector<std::size_t> class_targets(const Labels& labels, Task task, double boundary = 0.0);
Tensor emotion_targets(const Labels& labels);

/// Cross-entropy for sentiment tasks, mean sigmoid BCE over six flags for
/// emotions; averaged over the batch.
Tensor task_loss(const Tensor& logits, const Labels& labels, Task task, double boundary = 0.0);

/// Softmax rows for sentiment tasks, elementwise sigmoid for emotions.
Tensor probabilities(const Tensor& logits, Task task);

/// Accuracy of probabilities against labels: argmax for sentiment, mean
/// per-class accuracy at threshold 0.5 for emotions.
double score_accuracy(const Tensor& probs, const Labels& labels, Task task, double boundary = 0.0);

struct AdamState {
  std::vector<Tensor> first;   // aligned with the parameter list
  std::vector<Tensor> second;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ParameterList& params);
};

/// One bias-corrected Adam update using each parameter's accumulated grad.
/// Throws NumericError naming the first parameter with a non-finite grad,
/// before touching any parameter.
void adam_step(const ParameterList& params, AdamState& state, double lr, const TrainConfig& cfg);

enum class ScheduleEvent : std::uint8_t { improved, decayed, waited, stopped };
std::string_view schedule_event_name(ScheduleEvent e);

/// Plateau decay then early stop, driven by one validation score per epoch.
/// Improvement is a strict increase over the best score so far. A
/// non-improving epoch multiplies the rate by decay_factor while decays
/// remain; once they are used up, `patience` further non-improving epochs
/// stop training. Improvement resets that count.
class PlateauSchedule {
 public:
  PlateauSchedule() = default;
  explicit PlateauSchedule(const TrainConfig& cfg);

  ScheduleEvent observe(double score);

  double lr() const { return lr_; }
  double best() const { return best_; }
  std::size_t decays_used() const { return decays_used_; }
  std::size_t stale_epochs() const { return stale_; }
  bool stopped() const { return stopped_; }

  struct Snapshot {
    double lr, decay_factor, best;
    std::size_t max_decays, patience, decays_used, stale;
    bool stopped;
  };
  Snapshot snapshot() const;
  static PlateauSchedule restore(const Snapshot& s);

 private:
  double lr_ = 0.0;
  double decay_factor_ = 0.2;
  std::size_t max_decays_ = 2;
  std::size_t patience_ = 3;
  double best_ = -std::numeric_limits<double>::infinity();
  std::size_t decays_used_ = 0;
  std::size_t stale_ = 0;
  bool stopped_ = false;
};

struct EpochRecord {
  std::size_t epoch = 0;      // 1-based
  double lr = 0.0;            // rate used during the epoch
  double train_loss = 0.0;    // mean batch loss
  double valid_accuracy = 0.0;
  std::size_t decays_used = 0;
  ScheduleEvent event = ScheduleEvent::improved;

  /// One canonical JSON line without trailing newline.
  std::string to_json() const;
};

struct TrainState {
  TbjeModel model;   // current parameters
  TbjeModel best;    // parameters at the best validation score
  AdamState adam;
  PlateauSchedule schedule;
  std::size_t epochs_done = 0;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> log;

  bool finished(const TrainConfig& cfg) const {
    return schedule.stopped() || epochs_done >= cfg.max_epochs;
  }
};

TrainState initial_state(const TbjeModel& model, const TrainConfig& cfg, std::uint64_t seed);

std::string serialize_state(const TrainState& state);
TrainState deserialize_state(const std::string& bytes);
void save_state(const std::filesystem::path& path, const TrainState& state);
TrainState load_state(const std::filesystem::path& path);

/// Validation score for the model after `epoch` (1-based).
using ValidationFn = std::function<double(const TbjeModel&, std::size_t epoch)>;
/// Called after every epoch; returning false ends training after that epoch.
using EpochCallback = std::function<bool(const TrainState&)>;

/// Accuracy of the model on a split, eval mode.
double evaluate_accuracy(const TbjeModel& model, const Split& split, double boundary = 0.0);

/// Runs epochs from `state` until the schedule stops or max_epochs is reached.
/// Each epoch draws its shuffle and dropout masks from Rng(seed).split(epoch),
/// so resuming from a saved state reproduces an uninterrupted run.
void fit(TrainState& state, const Split& train, const TrainConfig& cfg, const ValidationFn& validate,
         const EpochCallback& on_epoch = {});

/// Convenience form validating on `valid`.
TrainState fit(const TbjeModel& model, const Split& train, const Split& valid, const TrainConfig& cfg,
               std::uint64_t seed, const EpochCallback& on_epoch = {});

/// Mean of the members' probabilities, [n x classes].
Tensor ensemble_predict(std::span<const TbjeModel> models, const Split& split);

}  // namespace tbje
