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

#include "tbje/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tbje/error.hpp"
#include "tbje/metrics.hpp"
#include "tbje/serialize.hpp"

namespace tbje {

using nlohmann::json;

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (!(lr >= 0) || !std::isfinite(lr)) fail("lr must be finite and >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(decay_factor > 0 && decay_factor <= 1)) fail("decay_factor must be in (0, 1]");
  if (patience < 1) fail("patience must be >= 1");
  if (ensemble < 1) fail("ensemble must be >= 1");
  if (max_epochs < 1) fail("max_epochs must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail("Adam betas must be in [0, 1)");
  if (!(adam_eps > 0)) fail("adam_eps must be positive");
  if (!(sentiment_boundary >= -3 && sentiment_boundary <= 3)) fail("sentiment_boundary must be in [-3, 3]");
}

// ---------------------------------------------------------------------------
// Losses and scoring

std::vector<std::size_t> class_targets(const Labels& labels, Task task, double boundary) {
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = sentiment_class(labels.sentiment[i], task, boundary);
  return out;
}

Tensor emotion_targets(const Labels& labels) {
  std::vector<double> v;
  v.reserve(labels.size() * kEmotionCount);
  for (const auto& row : labels.emotions)
    for (auto f : row) v.push_back(f);
  return Tensor(Shape{labels.size(), kEmotionCount}, std::move(v));
}

Tensor task_loss(const Tensor& logits, const Labels& labels, Task task, double boundary) {
  if (logits.rank() != 2 || logits.rows() != labels.size() || logits.cols() != task_classes(task)) {
    throw DimensionError("task_loss: logits " + shape_string(logits.shape()) + " for " +
                         std::to_string(labels.size()) + " labels of task " + std::string(task_name(task)));
  }
  if (task == Task::emotions6) return binary_cross_entropy_with_logits(logits, emotion_targets(labels));
  const auto targets = class_targets(labels, task, boundary);
  return cross_entropy(logits, targets);
}

Tensor probabilities(const Tensor& logits, Task task) {
  return task == Task::emotions6 ? sigmoid(logits) : softmax(logits, 1);
}

double score_accuracy(const Tensor& probs, const Labels& labels, Task task, double boundary) {
  const std::size_t n = labels.size(), c = task_classes(task);
  if (probs.rank() != 2 || probs.rows() != n || probs.cols() != c) {
    throw DimensionError("score_accuracy: probabilities " + shape_string(probs.shape()) + " for " +
                         std::to_string(n) + " labels");
  }
  if (task == Task::emotions6) {
    std::vector<std::uint8_t> pred(n * c), gold(n * c);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        pred[i * c + j] = probs.at(i, j) >= 0.5;
        gold[i * c + j] = labels.emotions[i][j];
      }
    return multilabel_accuracy(pred, gold, c);
  }
  std::vector<std::size_t> pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (probs.at(i, j) > probs.at(i, best)) best = j;
    pred[i] = best;
  }
  const auto gold = class_targets(labels, task, boundary);
  return accuracy(pred, gold);
}

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::zeros_like(const ParameterList& params) {
  AdamState s;
  for (const auto& p : params) {
    s.first.push_back(Tensor::zeros(p.tensor.shape()));
    s.second.push_back(Tensor::zeros(p.tensor.shape()));
  }
  return s;
}

void adam_step(const ParameterList& params, AdamState& state, double lr, const TrainConfig& cfg) {
  if (state.first.size() != params.size() || state.second.size() != params.size()) {
    throw ContractError("adam_step: optimizer state has " + std::to_string(state.first.size()) +
                        " slots for " + std::to_string(params.size()) + " parameters");
  }
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + p.name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor param = params[k].tensor;
    auto m = state.first[k].mutable_data();
    auto v = state.second[k].mutable_data();
    auto x = param.mutable_data();
    const bool has = param.has_grad();
    const auto g = has ? param.grad() : std::span<const double>{};
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double gi = has ? g[i] : 0.0;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Schedule

std::string_view schedule_event_name(ScheduleEvent e) {
  switch (e) {
    case ScheduleEvent::improved: return "improved";
    case ScheduleEvent::decayed: return "decayed";
    case ScheduleEvent::waited: return "waited";
    case ScheduleEvent::stopped: return "stopped";
  }
  return "?";
}

namespace {

ScheduleEvent parse_event(std::string_view s) {
  for (auto e : {ScheduleEvent::improved, ScheduleEvent::decayed, ScheduleEvent::waited, ScheduleEvent::stopped})
    if (schedule_event_name(e) == s) return e;
  throw IoError("unknown schedule event '" + std::string(s) + "'");
}

}  // namespace

PlateauSchedule::PlateauSchedule(const TrainConfig& cfg)
    : lr_(cfg.lr), decay_factor_(cfg.decay_factor), max_decays_(cfg.max_decays), patience_(cfg.patience) {}

ScheduleEvent PlateauSchedule::observe(double score) {
  if (stopped_) throw ContractError("schedule: observe after stop");
  if (score > best_) {
    best_ = score;
    stale_ = 0;
    return ScheduleEvent::improved;
  }
  if (decays_used_ < max_decays_) {
    lr_ *= decay_factor_;
    ++decays_used_;
    return ScheduleEvent::decayed;
  }
  if (++stale_ >= patience_) {
    stopped_ = true;
    return ScheduleEvent::stopped;
  }
  return ScheduleEvent::waited;
}

PlateauSchedule::Snapshot PlateauSchedule::snapshot() const {
  return {lr_, decay_factor_, best_, max_decays_, patience_, decays_used_, stale_, stopped_};
}

PlateauSchedule PlateauSchedule::restore(const Snapshot& s) {
  PlateauSchedule p;
  p.lr_ = s.lr;
  p.decay_factor_ = s.decay_factor;
  p.best_ = s.best;
  p.max_decays_ = s.max_decays;
  p.patience_ = s.patience;
  p.decays_used_ = s.decays_used;
  p.stale_ = s.stale;
  p.stopped_ = s.stopped;
  return p;
}

// ---------------------------------------------------------------------------
// State

std::string EpochRecord::to_json() const {
  json j = {{"epoch", epoch},
            {"lr", lr},
            {"train_loss", train_loss},
            {"valid_accuracy", valid_accuracy},
            {"decays_used", decays_used},
            {"event", std::string(schedule_event_name(event))}};
  return j.dump();
}

namespace {

EpochRecord record_from_json(const std::string& line) {
  const json j = json::parse(line);
  EpochRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.lr = j.at("lr").get<double>();
  r.train_loss = j.at("train_loss").get<double>();
  r.valid_accuracy = j.at("valid_accuracy").get<double>();
  r.decays_used = j.at("decays_used").get<std::size_t>();
  r.event = parse_event(j.at("event").get<std::string>());
  return r;
}

constexpr std::uint32_t kStateVersion = 1;

}  // namespace

TrainState initial_state(const TbjeModel& model, const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TrainState s;
  s.model = model.clone();
  s.best = model.clone();
  s.adam = AdamState::zeros_like(s.model.parameters());
  s.schedule = PlateauSchedule(cfg);
  s.seed = seed;
  return s;
}

std::string serialize_state(const TrainState& state) {
  std::ostringstream out(std::ios::binary);
  out.write("TBJS", 4);
  io::write_u32(out, kStateVersion);
  io::write_u64(out, state.seed);
  io::write_u64(out, state.epochs_done);
  io::write_string(out, serialize_model(state.model));
  io::write_string(out, serialize_model(state.best));
  io::write_u64(out, state.adam.step);
  io::write_u32(out, static_cast<std::uint32_t>(state.adam.first.size()));
  for (std::size_t k = 0; k < state.adam.first.size(); ++k) {
    write_tensor(out, state.adam.first[k]);
    write_tensor(out, state.adam.second[k]);
  }
  const auto s = state.schedule.snapshot();
  io::write_f64(out, s.lr);
  io::write_f64(out, s.decay_factor);
  io::write_f64(out, s.best);
  io::write_u64(out, s.max_decays);
  io::write_u64(out, s.patience);
  io::write_u64(out, s.decays_used);
  io::write_u64(out, s.stale);
  io::write_u8(out, s.stopped ? 1 : 0);
  io::write_u32(out, static_cast<std::uint32_t>(state.log.size()));
  for (const auto& r : state.log) io::write_string(out, r.to_json());
  return out.str();
}

TrainState deserialize_state(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  io::expect_magic(in, "TBJS", "training state");
  const auto version = io::read_u32(in);
  if (version != kStateVersion) throw IoError("training state: unsupported version " + std::to_string(version));
  TrainState s;
  s.seed = io::read_u64(in);
  s.epochs_done = io::read_u64(in);
  s.model = deserialize_model(io::read_string(in));
  s.best = deserialize_model(io::read_string(in));
  s.adam.step = io::read_u64(in);
  const auto slots = io::read_u32(in);
  const auto params = s.model.parameters();
  if (slots != params.size()) throw IoError("training state: optimizer slots do not match the model");
  for (std::uint32_t k = 0; k < slots; ++k) {
    s.adam.first.push_back(read_tensor(in));
    s.adam.second.push_back(read_tensor(in));
    if (s.adam.first.back().shape() != params[k].tensor.shape() ||
        s.adam.second.back().shape() != params[k].tensor.shape()) {
      throw IoError("training state: moment shape mismatch for " + params[k].name);
    }
  }
  PlateauSchedule::Snapshot snap{};
  snap.lr = io::read_f64(in);
  snap.decay_factor = io::read_f64(in);
  snap.best = io::read_f64(in);
  snap.max_decays = io::read_u64(in);
  snap.patience = io::read_u64(in);
  snap.decays_used = io::read_u64(in);
  snap.stale = io::read_u64(in);
  snap.stopped = io::read_u8(in) != 0;
  s.schedule = PlateauSchedule::restore(snap);
  const auto records = io::read_u32(in);
  for (std::uint32_t i = 0; i < records; ++i) s.log.push_back(record_from_json(io::read_string(in)));
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("training state: trailing bytes");
  return s;
}

void save_state(const std::filesystem::path& path, const TrainState& state) {
  io::write_file(path, serialize_state(state));
}

TrainState load_state(const std::filesystem::path& path) {
  try {
    return deserialize_state(io::read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Fit

double evaluate_accuracy(const TbjeModel& model, const Split& split, double boundary) {
  const Tensor logits = forward_batch(model, split, ForwardContext{});
  return score_accuracy(probabilities(logits, model.config.task), split.labels, model.config.task, boundary);
}

void fit(TrainState& state, const Split& train, const TrainConfig& cfg, const ValidationFn& validate,
         const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.size() == 0) throw ContractError("fit: empty training split");
  const Task task = state.model.config.task;
  const auto params = state.model.parameters();
  std::vector<std::size_t> order(train.size());

  while (!state.finished(cfg)) {
    const std::size_t epoch = state.epochs_done + 1;
    Rng epoch_rng = Rng(state.seed).split(epoch);
    Rng shuffle_rng = epoch_rng.split(0);
    Rng dropout_rng = epoch_rng.split(1);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    const double lr = state.schedule.lr();
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const Split batch = train.select(std::span<const std::size_t>(order).subspan(begin, end - begin));
      state.model.zero_grad();
      {
        Tape tape;
        TapeScope scope(tape);
        ForwardContext ctx{true, &dropout_rng};
        const Tensor loss = task_loss(forward_batch(state.model, batch, ctx), batch.labels, task,
                                      cfg.sentiment_boundary);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batches + 1));
        }
        backward(loss);
        loss_sum += value;
      }
      adam_step(params, state.adam, lr, cfg);
      ++batches;
    }

    const double score = validate(state.model, epoch);
    const ScheduleEvent event = state.schedule.observe(score);
    if (event == ScheduleEvent::improved) state.best = state.model.clone();
    state.epochs_done = epoch;
    state.log.push_back({epoch, lr, loss_sum / static_cast<double>(batches), score,
                         state.schedule.decays_used(), event});
    if (on_epoch && !on_epoch(state)) break;
  }
}

TrainState fit(const TbjeModel& model, const Split& train, const Split& valid, const TrainConfig& cfg,
               std::uint64_t seed, const EpochCallback& on_epoch) {
  if (valid.size() == 0) throw ContractError("fit: empty validation split");
  TrainState state = initial_state(model, cfg, seed);
  fit(
      state, train, cfg,
      [&](const TbjeModel& m, std::size_t) { return evaluate_accuracy(m, valid, cfg.sentiment_boundary); },
      on_epoch);
  return state;
}

Tensor ensemble_predict(std::span<const TbjeModel> models, const Split& split) {
  if (models.empty()) throw ContractError("ensemble_predict: no models");
  const std::string reference = models.front().config.to_text();
  for (std::size_t i = 1; i < models.size(); ++i) {
    if (models[i].config.to_text() != reference) {
      throw ConfigError("ensemble_predict: member " + std::to_string(i) + " has a different config");
    }
  }
  Tensor mean = probabilities(forward_batch(models.front(), split, {}), models.front().config.task).detach();
  if (models.size() == 1) return mean;
  auto acc = mean.mutable_data();
  for (std::size_t i = 1; i < models.size(); ++i) {
    const Tensor p = probabilities(forward_batch(models[i], split, {}), models[i].config.task);
    const auto d = p.data();
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += d[j];
  }
  const double n = static_cast<double>(models.size());
  for (auto& v : acc) v /= n;
  return mean;
}

}  // namespace tbje
