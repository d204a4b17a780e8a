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

#include <vector>

#include "metrics_oracle.hpp"
#include "tbje/error.hpp"
#include "tbje/metrics.hpp"
#include "tbje/rng.hpp"

namespace tbje {
namespace {

using Flags = std::vector<std::uint8_t>;
using Classes = std::vector<std::size_t>;

TEST(Accuracy, Examples) {
  Classes a = {0, 1, 2, 3, 4, 5, 6, 0, 1, 2};
  EXPECT_EQ(accuracy(a, a), 1.0);
  Classes b = {1, 2, 3, 4, 5, 6, 0, 1, 2, 3};
  EXPECT_EQ(accuracy(a, b), 0.0);
  Classes c = {0, 1, 2, 3, 4, 5, 0, 1, 2, 3};
  EXPECT_EQ(accuracy(a, c), 0.6);
  EXPECT_THROW(accuracy(Classes{}, Classes{}), ContractError);
  EXPECT_THROW(accuracy(Classes{1}, Classes{1, 2}), ContractError);
}

TEST(Accuracy, MultilabelAveragesPerClass) {
  // Class 0 right on 2/2, class 1 right on 1/2.
  EXPECT_EQ(multilabel_accuracy(Flags{1, 0, 0, 1}, Flags{1, 1, 0, 1}, 2), 0.75);
}

TEST(F1, Examples) {
  Flags gold = {1, 1, 1, 0, 0};
  EXPECT_EQ(f1_unweighted(gold, gold), 1.0);
  EXPECT_EQ(f1_weighted(gold, gold), 1.0);
  EXPECT_EQ(f1_unweighted(Flags{0, 0, 0, 0, 0}, gold), 0.0);
  // tp=2 fp=1 fn=1.
  EXPECT_DOUBLE_EQ(f1_unweighted(Flags{1, 1, 0, 1, 0}, gold), 2.0 / 3.0);
  Flags negatives(6, 0);
  EXPECT_EQ(f1_weighted(negatives, negatives), 1.0);
}

TEST(F1, WeightedHandExpanded) {
  Flags gold = {1, 1, 0, 0, 0, 0};
  Flags pred = {1, 0, 1, 0, 0, 0};
  // Positive: tp=1 fp=1 fn=1 -> 1/2. Negative: tp=3 fp=1 fn=1 -> 3/4.
  const double expect = (2 * 0.5 + 4 * 0.75) / 6;
  EXPECT_DOUBLE_EQ(f1_weighted(pred, gold), expect);
  EXPECT_NE(f1_weighted(pred, gold), f1_unweighted(pred, gold));
}

TEST(Metrics, MatchBruteForceOracle) {
  Rng rng(41);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 200;
    Flags p(n), g(n);
    const double bias = rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = rng.uniform() < bias;
      p[i] = rng.uniform() < 0.5 ? g[i] : static_cast<std::uint8_t>(rng.below(2));
    }
    testing::ConfusionOracle o(p, g);
    EXPECT_EQ(f1_unweighted(p, g), o.f1(1));
    EXPECT_EQ(f1_unweighted(p, g, 0), o.f1(0));
    EXPECT_EQ(f1_weighted(p, g), o.weighted_f1());
    Classes pc(p.begin(), p.end()), gc(g.begin(), g.end());
    EXPECT_EQ(accuracy(pc, gc), o.accuracy());

    // Consistent permutation leaves every metric unchanged.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    Flags pp(n), gp(n);
    for (std::size_t i = 0; i < n; ++i) pp[i] = p[order[i]], gp[i] = g[order[i]];
    EXPECT_EQ(f1_weighted(pp, gp), f1_weighted(p, g));
    EXPECT_EQ(f1_unweighted(pp, gp), f1_unweighted(p, g));

    Flags all_pos(n, 1);
    EXPECT_EQ(f1_weighted(p, all_pos), f1_unweighted(p, all_pos));
  }
}

TEST(SentimentBins, Examples) {
  EXPECT_EQ(sentiment_bin7(-3.0), 0u);
  EXPECT_EQ(sentiment_bin7(3.0), 6u);
  EXPECT_EQ(sentiment_bin7(0.0), 3u);
  EXPECT_EQ(sentiment_bin7(1.4), 4u);
  EXPECT_EQ(sentiment_bin7(0.5), 4u);
  EXPECT_EQ(sentiment_bin7(-0.5), 2u);
  EXPECT_EQ(sentiment_bin7(-2.5), 0u);
  EXPECT_EQ(sentiment_bin2(-0.1), 0u);
  EXPECT_EQ(sentiment_bin2(0.0), 1u);
  EXPECT_EQ(sentiment_bin2(0.3, 0.5), 0u);
  EXPECT_THROW(sentiment_bin7(3.01), ContractError);
  EXPECT_THROW(sentiment_bin2(-4), ContractError);
  EXPECT_THROW(sentiment_class(0, Task::emotions6), ContractError);
}

}  // namespace
}  // namespace tbje
