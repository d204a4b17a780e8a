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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "fixtures.hpp"
#include "schedule_cases.hpp"
#include "tbje/bundle.hpp"
#include "tbje/error.hpp"
#include "tbje/training.hpp"

namespace tbje {
namespace {

constexpr Modality L = Modality::linguistic;
constexpr Modality A = Modality::acoustic;
constexpr Modality V = Modality::visual;

Labels labels_for(std::vector<double> sentiment) {
  Labels l;
  l.sentiment = std::move(sentiment);
  l.emotions.assign(l.sentiment.size(), {});
  return l;
}

TEST(Loss, AnalyticValues) {
  auto uniform = Tensor::zeros(Shape{3, 7});
  EXPECT_NEAR(task_loss(uniform, labels_for({-3, 0, 2.2}), Task::sentiment7).item(), std::log(7.0), 1e-15);
  auto zeros = Tensor::zeros(Shape{2, 6});
  Labels emo = labels_for({0, 0});
  emo.emotions[0] = {1, 0, 1, 0, 0, 1};
  EXPECT_NEAR(task_loss(zeros, emo, Task::emotions6).item(), std::log(2.0), 1e-15);
  EXPECT_THROW(task_loss(uniform, labels_for({0, 0}), Task::sentiment7), DimensionError);
  EXPECT_THROW(task_loss(Tensor::zeros(Shape{1, 7}), labels_for({3.5}), Task::sentiment7), ContractError);
}

TEST(Loss, MatchesStraightLineEvaluation) {
  Rng rng(51);
  for (int trial = 0; trial < 20; ++trial) {
    auto logits = testing::random_tensor(Shape{4, 7}, rng, -4, 4);
    Labels l = labels_for({rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)});
    long double total = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      long double z = 0;
      for (std::size_t j = 0; j < 7; ++j) z += std::exp((long double)logits.at(i, j));
      const auto target = static_cast<std::size_t>(std::lround(l.sentiment[i]) + 3);
      total += std::log(z) - logits.at(i, target);
    }
    EXPECT_NEAR(task_loss(logits, l, Task::sentiment7).item(), double(total / 4), 1e-13);

    auto e = testing::random_tensor(Shape{3, 6}, rng, -4, 4);
    Labels el = labels_for({0, 0, 0});
    long double bce = 0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        el.emotions[i][j] = rng.below(2);
        const long double p = 1 / (1 + std::exp(-(long double)e.at(i, j)));
        bce -= el.emotions[i][j] ? std::log(p) : std::log(1 - p);
      }
    EXPECT_NEAR(task_loss(e, el, Task::emotions6).item(), double(bce / 18), 1e-13);

    auto b = testing::random_tensor(Shape{4, 2}, rng, -4, 4);
    long double ce2 = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      const std::size_t t = l.sentiment[i] < 0 ? 0 : 1;
      ce2 += std::log(std::exp((long double)b.at(i, 0)) + std::exp((long double)b.at(i, 1))) - b.at(i, t);
    }
    EXPECT_NEAR(task_loss(b, l, Task::sentiment2).item(), double(ce2 / 4), 1e-13);
  }
}

ParameterList scalar_param(double x, const char* name = "x") {
  Tensor t = Tensor::vector({x});
  t.set_requires_grad(true);
  return {{name, t}};
}

void set_grad(Tensor t, double g) {
  t.zero_grad();
  t.mutable_grad()[0] = g;
}

TEST(Adam, FirstStepMovesByLearningRate) {
  TrainConfig cfg;
  for (double g : {1e-3, 0.5, -7.0, 1e4}) {
    auto p = scalar_param(1.0);
    auto state = AdamState::zeros_like(p);
    set_grad(p[0].tensor, g);
    adam_step(p, state, 0.01, cfg);
    EXPECT_NEAR(p[0].tensor[0], 1.0 - 0.01 * g / (std::abs(g) + 1e-8), 1e-15);
  }
}

TEST(Adam, ZeroGradLeavesFreshParameterUnchanged) {
  TrainConfig cfg;
  auto p = scalar_param(2.5);
  auto state = AdamState::zeros_like(p);
  set_grad(p[0].tensor, 0.0);
  adam_step(p, state, 0.1, cfg);
  EXPECT_EQ(p[0].tensor[0], 2.5);
  EXPECT_EQ(state.first[0][0], 0.0);

  set_grad(p[0].tensor, 1.0);
  adam_step(p, state, 0.1, cfg);
  const double m = state.first[0][0], v = state.second[0][0];
  set_grad(p[0].tensor, 0.0);
  adam_step(p, state, 0.1, cfg);
  EXPECT_EQ(state.first[0][0], 0.9 * m);
  EXPECT_EQ(state.second[0][0], 0.999 * v);
}

TEST(Adam, QuadraticTrajectoryMatchesReference) {
  // x0 = 0, f = (x - 3)^2, lr 0.1; reference computed by hand-unrolled updates.
  const double expect[] = {0.09999999983333335, 0.19989729258521102, 0.29961847654925267,
                           0.3990864689442145,  0.4982205437727129,  0.5969363926185332,
                           0.6951462106969352,  0.7927588106102016,  0.8896797663766276,
                           0.9858115903830454};
  TrainConfig cfg;
  auto p = scalar_param(0.0);
  auto state = AdamState::zeros_like(p);
  for (double e : expect) {
    set_grad(p[0].tensor, 2.0 * (p[0].tensor[0] - 3.0));
    adam_step(p, state, 0.1, cfg);
    EXPECT_NEAR(p[0].tensor[0], e, 1e-15);
  }
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  TrainConfig cfg;
  auto a = scalar_param(1.0, "first");
  auto b = scalar_param(2.0, "second.weight");
  ParameterList both = {a[0], b[0]};
  auto state = AdamState::zeros_like(both);
  set_grad(a[0].tensor, 1.0);
  set_grad(b[0].tensor, std::nan(""));
  try {
    adam_step(both, state, 0.1, cfg);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("second.weight"), std::string::npos);
  }
  EXPECT_EQ(a[0].tensor[0], 1.0);
  EXPECT_EQ(state.step, 0u);
}

TEST(Schedule, FlatAccuracyDecaysTwiceThenStops) {
  TrainConfig cfg;
  PlateauSchedule s(cfg);
  std::vector<double> lrs;
  std::string events;
  while (!s.stopped()) {
    lrs.push_back(s.lr());
    events += testing::event_letter(static_cast<int>(s.observe(0.5)));
  }
  EXPECT_EQ(events, "IDDWWS");
  ASSERT_EQ(lrs.size(), 6u);
  EXPECT_EQ(lrs[0], 1e-4);
  EXPECT_EQ(lrs[2], 1e-4 * 0.2);
  EXPECT_NEAR(lrs[3], 4e-6, 1e-20);
  EXPECT_EQ(lrs[5], lrs[3]);
  EXPECT_THROW(s.observe(0.9), ContractError);
}

TEST(Schedule, ScriptedSequencesDirectly) {
  TrainConfig cfg;
  for (const auto& c : testing::schedule_cases()) {
    PlateauSchedule s(cfg);
    std::string got;
    for (double score : c.scores) {
      if (s.stopped()) break;
      got += testing::event_letter(static_cast<int>(s.observe(score)));
    }
    EXPECT_EQ(got, c.events);
    EXPECT_LE(s.decays_used(), 2u);
  }
}

struct TinyData {
  DatasetBundle bundle;
  EncoderConfig config;
};

TinyData tiny_data(std::vector<Modality> mods = {L}, std::size_t train = 8) {
  SyntheticSpec spec;
  std::vector<ModalitySpec> keep;
  for (auto m : mods)
    for (const auto& s : spec.modalities)
      if (s.modality == m) keep.push_back(s);
  spec.modalities = keep;
  spec.splits = {{"train", train}, {"valid", 4}};
  TinyData d{make_synthetic_bundle(spec), {}};
  EncoderConfig base;
  base.blocks = 1;
  base.width = 8;
  base.heads = 2;
  base.ff_width = 16;
  d.config = config_for_bundle(base, d.bundle.manifest);
  return d;
}

TEST(Fit, ScriptedValidationDrivesTransitions) {
  auto data = tiny_data();
  auto model = TbjeModel::create(data.config, 1);
  for (const auto& c : testing::schedule_cases()) {
    TrainConfig cfg;
    cfg.max_epochs = c.scores.size();
    auto state = initial_state(model, cfg, 3);
    std::size_t consumed = 0;
    fit(state, data.bundle.split("train"), cfg, [&](const TbjeModel&, std::size_t epoch) {
      EXPECT_EQ(epoch, consumed + 1);
      return c.scores[consumed++];
    });
    std::string got;
    double lr = cfg.lr;
    for (const auto& r : state.log) {
      got += testing::event_letter(static_cast<int>(r.event));
      EXPECT_EQ(r.lr, lr) << c.events << " epoch " << r.epoch;
      if (r.event == ScheduleEvent::decayed) lr *= cfg.decay_factor;
    }
    EXPECT_EQ(got, c.events);
    EXPECT_EQ(consumed, c.events.size());
    EXPECT_EQ(state.schedule.stopped(), c.events.back() == 'S');
  }
}

TEST(Fit, ZeroLearningRateKeepsParametersBitIdentical) {
  auto data = tiny_data({L, A});
  auto model = TbjeModel::create(data.config, 2);
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.max_epochs = 1;
  cfg.batch_size = 3;
  auto state = initial_state(model, cfg, 4);
  fit(state, data.bundle.split("train"), cfg, [](const TbjeModel&, std::size_t) { return 0.5; });
  EXPECT_EQ(state.adam.step, 3u);
  EXPECT_EQ(serialize_model(state.model), serialize_model(model));
}

TEST(Fit, ResumeReproducesUninterruptedRun) {
  auto data = tiny_data({L, A});
  auto model = TbjeModel::create(data.config, 5);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.batch_size = 3;
  cfg.max_epochs = 6;
  const auto& train = data.bundle.split("train");
  const auto& valid = data.bundle.split("valid");
  auto validate = [&](const TbjeModel& m, std::size_t) { return evaluate_accuracy(m, valid); };

  auto straight = initial_state(model, cfg, 9);
  fit(straight, train, cfg, validate);

  auto first = initial_state(model, cfg, 9);
  fit(first, train, cfg, validate, [](const TrainState& s) { return s.epochs_done < 3; });
  ASSERT_EQ(first.epochs_done, 3u);
  const auto path = std::filesystem::temp_directory_path() / "tbje_resume_test.tbjs";
  save_state(path, first);
  auto resumed = load_state(path);
  std::filesystem::remove(path);
  EXPECT_EQ(serialize_state(resumed), serialize_state(first));
  fit(resumed, train, cfg, validate);
  EXPECT_EQ(serialize_state(resumed), serialize_state(straight));
}

TEST(Fit, LossFallsOverFirstEpochsForEveryCombination) {
  for (const auto& mods : std::vector<std::vector<Modality>>{{L}, {A}, {V}, {L, A}, {L, A, V}}) {
    auto data = tiny_data(mods, 32);
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.batch_size = 8;
    cfg.max_epochs = 5;
    cfg.max_decays = 0;
    cfg.patience = 100;
    auto state = fit(TbjeModel::create(data.config, 6), data.bundle.split("train"), data.bundle.split("valid"),
                     cfg, 7);
    ASSERT_EQ(state.log.size(), 5u);
    EXPECT_LT(state.log.back().train_loss, state.log.front().train_loss) << mods.size();
  }
}

TEST(Fit, NonFiniteLossAborts) {
  auto data = tiny_data();
  auto model = TbjeModel::create(data.config, 1);
  for (auto& v : model.classifier.bias.mutable_data()) v = INFINITY;
  TrainConfig cfg;
  auto state = initial_state(model, cfg, 1);
  EXPECT_THROW(fit(state, data.bundle.split("train"), cfg, [](const TbjeModel&, std::size_t) { return 0.0; }),
               NumericError);
}

TEST(Ensemble, AveragesProbabilities) {
  auto data = tiny_data({L, A});
  const auto& split = data.bundle.split("valid");
  auto a = TbjeModel::create(data.config, 1);
  auto b = TbjeModel::create(data.config, 2);
  auto pa = probabilities(forward_batch(a, split, {}), Task::sentiment7);
  auto pb = probabilities(forward_batch(b, split, {}), Task::sentiment7);

  std::vector<TbjeModel> one = {a};
  auto single = ensemble_predict(one, split);
  for (std::size_t i = 0; i < pa.numel(); ++i) EXPECT_EQ(single[i], pa[i]);

  std::vector<TbjeModel> copies(5, a);
  auto same = ensemble_predict(copies, split);
  for (std::size_t i = 0; i < pa.numel(); ++i) EXPECT_NEAR(same[i], pa[i], 1e-15);

  std::vector<TbjeModel> pair = {a, b};
  auto mean = ensemble_predict(pair, split);
  for (std::size_t i = 0; i < pa.numel(); ++i) EXPECT_EQ(mean[i], (pa[i] + pb[i]) / 2);

  auto other = data.config;
  other.blocks = 2;
  std::vector<TbjeModel> mixed = {a, TbjeModel::create(other, 3)};
  EXPECT_THROW(ensemble_predict(mixed, split), ConfigError);
}

TEST(EpochRecord, CanonicalJsonLine) {
  EpochRecord r{2, 2e-5, 0.25, 0.5, 1, ScheduleEvent::decayed};
  EXPECT_EQ(r.to_json(),
            R"({"decays_used":1,"epoch":2,"event":"decayed","lr":2e-05,"train_loss":0.25,"valid_accuracy":0.5})");
}

}  // namespace
}  // namespace tbje
