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

#include "fixtures.hpp"
#include "oracle.hpp"
#include "tbje/error.hpp"
#include "tbje/gradcheck.hpp"
#include "tbje/model.hpp"

namespace tbje {
namespace {

using testing::random_inputs;
using testing::toy_config;

constexpr Modality L = Modality::linguistic;
constexpr Modality A = Modality::acoustic;
constexpr Modality V = Modality::visual;

EncoderConfig two_modality(std::size_t blocks = 2) {
  return toy_config({{L, 5, 4, true}, {A, 3, 6}}, blocks);
}

TEST(Glimpse, MatchesOracleAndIsConvex) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = GlimpseParams::init(6, 3, rng);
    auto m = testing::random_tensor(Shape{5, 6}, rng);
    Mask mask = {1, 1, static_cast<std::uint8_t>(trial % 2), 0, 1};
    auto got = glimpse(m, p, mask);
    EXPECT_LT(oracle::max_abs_diff(oracle::glimpse(oracle::from(m), p, mask), got), 1e-12);
    auto w = glimpse_weights(m, p, mask);
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 5; ++j) {
        if (!mask[j]) EXPECT_EQ(w.at(i, j), 0.0);
        s += w.at(i, j);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Glimpse, SingleRowReturnsThatRow) {
  Rng rng(12);
  auto p = GlimpseParams::init(4, 1, rng);
  auto m = testing::random_tensor(Shape{1, 4}, rng);
  auto out = glimpse(m, p, {});
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out[j], m[j], 1e-15);
}

TEST(Model, ParameterNamesAndShapes) {
  auto model = TbjeModel::create(two_modality(), 1);
  std::map<std::string, Shape> shapes;
  for (const auto& p : model.parameters()) shapes[p.name] = p.tensor.shape();
  EXPECT_EQ(shapes.at("L.input.weight"), (Shape{5, 8}));
  EXPECT_EQ(shapes.at("A.block1.glimpse.vectors"), (Shape{6, 16}));
  EXPECT_EQ(shapes.at("L.pool.vectors"), (Shape{1, 16}));
  EXPECT_EQ(shapes.at("classifier.output.weight"), (Shape{8, 7}));
  EXPECT_EQ(model.config.resolved_variant(), Variant::joint);
  auto mono = TbjeModel::create(toy_config({{L, 5, 4}}), 1);
  EXPECT_EQ(mono.config.resolved_variant(), Variant::monomodal);
  for (const auto& p : mono.parameters()) EXPECT_EQ(p.name.find("block0.glimpse"), std::string::npos);
}

TEST(Model, ForwardMatchesUnrolledOracle) {
  Rng rng(13);
  const std::vector<EncoderConfig> configs = {
      toy_config({{L, 5, 4, true}}, 2),
      two_modality(2),
      toy_config({{A, 3, 5}, {L, 4, 3, true}, {V, 2, 4}}, 2, 8, 2, Task::emotions6),
  };
  for (const auto& cfg : configs) {
    for (int trial = 0; trial < 5; ++trial) {
      auto model = TbjeModel::create(cfg, 100 + trial);
      auto inputs = random_inputs(cfg, rng);
      ForwardContext eval;
      auto enc = encode(inputs, model, eval);
      auto expect = oracle::encode(model, inputs);
      for (const auto& [m, states] : expect) {
        ASSERT_EQ(states.size(), enc.states.at(m).size());
        for (std::size_t b = 0; b < states.size(); ++b)
          EXPECT_LT(oracle::max_abs_diff(states[b], enc.states.at(m)[b]), 1e-10);
      }
      auto got = forward(model, inputs, eval);
      EXPECT_EQ(got.shape(), (Shape{1, task_classes(cfg.task)}));
      EXPECT_LT(oracle::max_abs_diff({oracle::logits(model, inputs)}, got), 1e-10);
    }
  }
}

TEST(Model, InformationFlowsFromPrimaryOnly) {
  Rng rng(14);
  auto cfg = toy_config({{L, 5, 4, true}, {A, 3, 6}, {V, 2, 3}}, 3);
  auto model = TbjeModel::create(cfg, 7);
  auto base = random_inputs(cfg, rng);
  ForwardContext eval;
  auto ref = encode(base, model, eval);

  auto perturbed = base;
  perturbed[A].features = testing::random_tensor(Shape{6, 3}, rng);
  auto other = encode(perturbed, model, eval);
  for (std::size_t b = 0; b < ref.states.at(L).size(); ++b)
    for (std::size_t i = 0; i < ref.states.at(L)[b].numel(); ++i)
      ASSERT_EQ(ref.states.at(L)[b][i], other.states.at(L)[b][i]);
  // The untouched secondary modality only sees the primary, so it is unchanged too.
  for (std::size_t i = 0; i < ref.final_state(V).numel(); ++i)
    ASSERT_EQ(ref.final_state(V)[i], other.final_state(V)[i]);

  perturbed = base;
  perturbed[L].features = testing::random_tensor(Shape{4, 5}, rng);
  other = encode(perturbed, model, eval);
  for (Modality m : {A, V}) {
    double diff = 0;
    for (std::size_t i = 0; i < ref.final_state(m).numel(); ++i)
      diff = std::max(diff, std::abs(ref.final_state(m)[i] - other.final_state(m)[i]));
    EXPECT_GT(diff, 1e-6) << modality_tag(m);
  }
}

TEST(Model, MonomodalIsPermutationEquivariant) {
  Rng rng(15);
  auto cfg = toy_config({{A, 3, 5}}, 2);
  auto model = TbjeModel::create(cfg, 8);
  auto inputs = random_inputs(cfg, rng, true);
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  auto permuted = inputs;
  auto src = inputs[A].features.data();
  auto dst = permuted[A].features.mutable_data();
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t j = 0; j < 3; ++j) dst[r * 3 + j] = src[perm[r] * 3 + j];
  ForwardContext eval;
  auto a = encode(inputs, model, eval).final_state(A);
  auto b = encode(permuted, model, eval).final_state(A);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(b.at(r, j), a.at(perm[r], j), 1e-12);
  auto la = forward(model, inputs, eval), lb = forward(model, permuted, eval);
  for (std::size_t i = 0; i < la.numel(); ++i) EXPECT_NEAR(la[i], lb[i], 1e-12);
}

TEST(Model, PaddingRowsDoNotAffectValidOutputs) {
  Rng rng(16);
  for (int trial = 0; trial < 5; ++trial) {
    auto small_cfg = toy_config({{L, 5, 4, true}, {A, 3, 5}}, 2);
    auto big_cfg = toy_config({{L, 5, 7, true}, {A, 3, 9}}, 2);
    auto small = TbjeModel::create(small_cfg, 20 + trial);
    auto big = TbjeModel::create(big_cfg, 99);
    // Copy parameters; glimpse vector tables keep their first rows.
    auto sp = small.parameters();
    auto bp = big.parameters();
    ASSERT_EQ(sp.size(), bp.size());
    for (std::size_t i = 0; i < sp.size(); ++i) {
      auto dst = bp[i].tensor.mutable_data();
      auto src = sp[i].tensor.data();
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[j];
    }
    auto inputs = random_inputs(small_cfg, rng);
    ExampleInputs grown;
    for (auto& [m, in] : inputs) {
      const std::size_t n = big_cfg.modality(m).length, w = in.features.cols();
      std::vector<double> f(n * w, 0.0);
      Mask mask(n, 0);
      for (std::size_t r = 0; r < in.features.rows(); ++r) {
        mask[r] = in.mask[r];
        for (std::size_t j = 0; j < w; ++j) f[r * w + j] = in.features.at(r, j);
      }
      for (std::size_t r = in.features.rows(); r < n; ++r)
        for (std::size_t j = 0; j < w; ++j) f[r * w + j] = rng.uniform(-5, 5);
      grown[m] = {Tensor(Shape{n, w}, f), mask};
    }
    ForwardContext eval;
    auto a = encode(inputs, small, eval), b = encode(grown, big, eval);
    for (const auto& [m, in] : inputs)
      for (std::size_t r = 0; r < in.mask.size(); ++r) {
        if (!in.mask[r]) continue;
        for (std::size_t j = 0; j < 8; ++j)
          EXPECT_NEAR(a.final_state(m).at(r, j), b.final_state(m).at(r, j), 1e-12);
      }
    auto la = forward(small, inputs, eval), lb = forward(big, grown, eval);
    for (std::size_t i = 0; i < la.numel(); ++i) EXPECT_NEAR(la[i], lb[i], 1e-12);
  }
}

TEST(Model, EndToEndGradient) {
  Rng rng(17);
  auto cfg = toy_config({{L, 3, 4, true}, {A, 2, 4}}, 2, 16, 2);
  auto model = TbjeModel::create(cfg, 5);
  Split split;
  std::map<Modality, std::vector<ModalityInput>> per;
  for (int e = 0; e < 2; ++e) {
    for (auto& [m, mi] : random_inputs(cfg, rng)) per[m].push_back(mi);
    split.ids.push_back("ex" + std::to_string(e));
    split.labels.sentiment.push_back(e * 2 - 1);
    split.labels.emotions.push_back({});
  }
  for (auto& [m, list] : per) split.modalities[m] = ModalityBatch::stack(m, list);
  std::vector<std::size_t> targets = {1, 5};
  ForwardContext eval;
  auto report = gradcheck(model.parameters(),
                          [&] { return cross_entropy(forward_batch(model, split, eval), targets); });
  for (const auto& p : report.parameters) EXPECT_TRUE(p.passed) << p.name << " " << p.max_relative_error;
}

TEST(Model, ZeroBlocksReturnsProjection) {
  Rng rng(19);
  auto cfg = toy_config({{L, 5, 4, true}, {A, 3, 5}}, 0);
  auto model = TbjeModel::create(cfg, 1);
  auto inputs = random_inputs(cfg, rng);
  auto enc = encode(inputs, model, {});
  for (const auto& e : model.encoders) {
    const auto m = e.config.modality;
    ASSERT_EQ(enc.states.at(m).size(), 1u);
    auto proj = project_input(e, inputs.at(m));
    for (std::size_t i = 0; i < proj.numel(); ++i) EXPECT_EQ(enc.final_state(m)[i], proj[i]);
  }
}

TEST(Glimpse, ZeroVectorsAveragePermutationInvariantly) {
  Rng rng(20);
  auto p = GlimpseParams::init(4, 2, rng);
  p.vectors.mutable_data();
  for (auto& v : p.vectors.mutable_data()) v = 0.0;
  auto m = testing::random_tensor(Shape{3, 4}, rng);
  auto swapped = Tensor::matrix({{m.at(2, 0), m.at(2, 1), m.at(2, 2), m.at(2, 3)},
                                 {m.at(0, 0), m.at(0, 1), m.at(0, 2), m.at(0, 3)},
                                 {m.at(1, 0), m.at(1, 1), m.at(1, 2), m.at(1, 3)}});
  auto a = glimpse(m, p, {}), b = glimpse(swapped, p, {});
  for (std::size_t j = 0; j < 4; ++j) {
    const double mean = (m.at(0, j) + m.at(1, j) + m.at(2, j)) / 3.0;
    EXPECT_NEAR(a.at(0, j), mean, 1e-14);
    EXPECT_NEAR(a.at(1, j), b.at(1, j), 1e-14);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(18);
  auto cfg = two_modality();
  auto model = TbjeModel::create(cfg, 3);
  model.vocabulary_hash = 0xfeedbeefULL;
  const auto path = std::filesystem::temp_directory_path() / "tbje_model_test.tbjm";
  save_model(path, model);
  auto loaded = load_model(path, cfg);
  EXPECT_EQ(serialize_model(loaded), serialize_model(model));
  EXPECT_EQ(loaded.vocabulary_hash, model.vocabulary_hash);
  EXPECT_EQ(loaded.config.to_text(), cfg.to_text());
  auto inputs = random_inputs(cfg, rng);
  auto a = forward(model, inputs, {}), b = forward(loaded, inputs, {});
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);

  auto wrong = cfg;
  wrong.width = 16;
  try {
    load_model(path, wrong);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("width"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

TEST(Config, TextRoundTripAndValidation) {
  auto cfg = full_size_encoder_config();
  EXPECT_EQ(EncoderConfig::from_text(cfg.to_text()).to_text(), cfg.to_text());
  auto bad = cfg;
  bad.heads = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(EncoderConfig::from_text(R"({"bogus": 1})"), ConfigError);
}

}  // namespace
}  // namespace tbje
