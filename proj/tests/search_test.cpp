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


#include "grail/search.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "grail/error.hpp"
#include "test_util.hpp"

namespace grail {
namespace {

// Full scan: score every row in double, sort by (-score, id).
std::vector<std::string> brute_force(const CorpusIndex& c, const std::vector<double>& q,
                                     std::size_t k, const std::vector<std::string>& exclude = {}) {
  std::vector<std::pair<double, std::string>> all;
  for (std::size_t r = 0; r < c.size(); ++r) {
    if (std::count(exclude.begin(), exclude.end(), c.id(r))) continue;
    double s = 0.0;
    for (std::size_t k2 = 0; k2 < c.dim(); ++k2) s += double(c.row(r)[k2]) * q[k2];
    all.emplace_back(-s, c.id(r));
  }
  std::sort(all.begin(), all.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
  return out;
}

TEST(Search, TopKMatchesBruteForceAtEveryWorkerCount) {
  const CorpusIndex c = testing_util::random_corpus(2000, 16, 5);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> q(16);
    for (double& x : q) x = g(rng);
    const auto expect = brute_force(c, q, 25);
    for (std::size_t w : {1u, 3u, 4u, 8u}) {
      EXPECT_EQ(Searcher(c, w).top_k(q, 25).ids(), expect) << "workers " << w;
    }
  }
}

TEST(Search, TiesBreakByAscendingId) {
  const CorpusIndex c = testing_util::corpus_of({{1, 0}, {1, 0}, {1, 0}, {0, 1}}, {"c", "a", "b", "z"});
  const std::vector<double> q{1, 0};
  const auto hits = Searcher(c).top_k(q, 3);
  EXPECT_EQ(hits.ids(), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(hits.hits[0].rank, 1u);
  EXPECT_EQ(*Searcher(c).rank_of(q, "c"), 3u);
}

TEST(Search, ExclusionAndShortLists) {
  const CorpusIndex c = testing_util::corpus_of({{1, 0}, {0.9f, 0.1f}, {0, 1}}, {"a", "b", "c"});
  const std::vector<double> q{1, 0};
  const std::vector<std::string> ex{"a", "a"};
  const auto hits = Searcher(c).top_k(q, 10, ex);
  EXPECT_EQ(hits.ids(), (std::vector<std::string>{"b", "c"}));
  EXPECT_FALSE(Searcher(c).rank_of(q, "a", ex).has_value());
  EXPECT_EQ(*Searcher(c).rank_of(q, "b", ex), 1u);
  const std::vector<std::string> unknown{"nope"};
  EXPECT_THROW(Searcher(c).top_k(q, 1, unknown), Error);
  EXPECT_THROW(Searcher(c).top_k(q, 0), Error);
  const std::vector<double> bad{1, 0, 0};
  EXPECT_THROW(Searcher(c).top_k(bad, 1), Error);
}

TEST(Search, RankOfAgreesWithTopKPosition) {
  const CorpusIndex c = testing_util::random_corpus(300, 8, 2);
  std::vector<double> q(8, 0.3);
  const auto hits = Searcher(c).top_k(q, 300);
  for (const auto& h : hits.hits) EXPECT_EQ(*Searcher(c, 2).rank_of(q, h.id), h.rank);
}

}  // namespace
}  // namespace grail
