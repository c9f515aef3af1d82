// Copyright 2026 The GRAIL Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "grail/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "grail/error.hpp"

namespace grail {
namespace {

using Ids = std::vector<std::string>;

TEST(Metrics, RecallAtK) {
  EXPECT_EQ(recall_at_k(1, 1), 1);
  EXPECT_EQ(recall_at_k(5, 5), 1);
  EXPECT_EQ(recall_at_k(6, 5), 0);
  EXPECT_EQ(recall_at_k(std::nullopt, 10), 0);
}

TEST(Metrics, SetRecallIsSetBased) {
  const Ids gold{"a", "b", "c", "d"};
  EXPECT_DOUBLE_EQ(set_recall(Ids{"a", "a", "x", "c"}, gold), 0.5);
  EXPECT_DOUBLE_EQ(set_recall(Ids{}, gold), 0.0);
  EXPECT_DOUBLE_EQ(set_recall(gold, gold), 1.0);
  EXPECT_THROW(set_recall(gold, Ids{}), Error);
}

TEST(Metrics, EscapeDeltaByHand) {
  const std::vector<double> steered{1, 1}, target{1, 0};
  const std::vector<std::vector<double>> ctx{{0, 1}, {-1, 0}};
  // cos to target = cos to best context = 1/sqrt2
  EXPECT_NEAR(escape_delta(steered, target, ctx), 0.0, 1e-15);
  const std::vector<double> toward{2, 1};
  EXPECT_NEAR(escape_delta(toward, target, ctx), 2 / std::sqrt(5.0) - 1 / std::sqrt(5.0), 1e-15);
  EXPECT_THROW(escape_delta(steered, target, {}), Error);
}

TEST(Metrics, RankJumpCountsOnlyRescuedGold) {
  const Ids pool{"g1", "x", "g2", "g3", "g2"};
  const Ids gold{"g1", "g2", "g3", "g4"};
  const Ids baseline{"g1", "y"};
  const auto j = rank_jump(pool, gold, baseline, [](const std::string& id) {
    return id == "g2" ? std::size_t{40} : std::size_t{13};
  });
  EXPECT_EQ(j.rescued, (Ids{"g2", "g3"}));
  EXPECT_DOUBLE_EQ(*j.mean(), 26.5);
  const auto none = rank_jump(Ids{"g1"}, gold, baseline, [](const std::string&) { return 1u; });
  EXPECT_FALSE(none.mean().has_value());
  EXPECT_THROW(rank_jump(pool, gold, Ids{}, [](const std::string&) { return 1u; }), Error);
}

TEST(Metrics, NearestRankPercentileAndSummary) {
  std::vector<double> v;
  for (int i = 1; i <= 10; ++i) v.push_back(i);
  EXPECT_EQ(nearest_rank_percentile(v, 90), 9.0);
  EXPECT_EQ(nearest_rank_percentile(v, 91), 10.0);
  EXPECT_EQ(nearest_rank_percentile(v, 0), 1.0);
  const auto d = summarize(v);
  EXPECT_DOUBLE_EQ(d.mean, 5.5);
  EXPECT_NEAR(d.std, std::sqrt(8.25), 1e-12);
  EXPECT_EQ(d.count, 10u);
}

TEST(Metrics, NrmUsesZeroGoldSubsetOnly) {
  std::vector<NrmSample> s(3);
  s[0] = {{"g1"}, {"g1", "g2"}, {"g1", "g2"}, {"g1"}};  // base holds gold: skipped
  s[1] = {{"x"}, {"g1", "g2"}, {"g1", "g2"}, {"x"}};    // +1.0
  s[2] = {{"y"}, {"g3", "g4"}, {"y"}, {"g3"}};          // -0.5
  const auto r = nrm(s);
  EXPECT_EQ(r.noisy, 2u);
  EXPECT_DOUBLE_EQ(*r.value, 0.25);
  EXPECT_FALSE(nrm(std::span<const NrmSample>(s.data(), 1)).value.has_value());
}

TEST(Metrics, MicroMacroByHand) {
  const std::vector<GroupedValue> r{{"a", 1}, {"a", 0}, {"a", 1}, {"b", 0}};
  const auto agg = aggregate(r);
  EXPECT_DOUBLE_EQ(agg.micro, 0.5);
  EXPECT_DOUBLE_EQ(agg.macro, (2.0 / 3.0 + 0.0) / 2.0);
  EXPECT_EQ(agg.group_count.at("a"), 3u);
  const auto flat = aggregate(r, "none");
  EXPECT_DOUBLE_EQ(flat.macro, flat.micro);
  EXPECT_THROW(aggregate(r, "modality"), Error);
}

TEST(Metrics, AggregateIsPermutationInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<GroupedValue> r;
  for (int i = 0; i < 500; ++i) r.push_back({i % 3 ? "p" : "q", u(rng) * std::pow(10.0, i % 7)});
  const auto base = aggregate(r);
  for (int t = 0; t < 5; ++t) {
    std::shuffle(r.begin(), r.end(), rng);
    const auto again = aggregate(r);
    EXPECT_EQ(again.micro, base.micro);
    EXPECT_EQ(again.macro, base.macro);
  }
}

}  // namespace
}  // namespace grail
