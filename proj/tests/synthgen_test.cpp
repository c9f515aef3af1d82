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


#include "grail/synthgen.hpp"

#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "grail/error.hpp"
#include "grail/io.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

namespace grail {
namespace {

using oracle::Vec;

SynthSpec small_spec() {
  SynthSpec s;
  s.dim = 32;
  s.compose_tasks = 30;
  s.aggregate_tasks = 30;
  s.distractors = 6;
  s.background = 150;
  return s;
}

std::size_t brute_rank(const CorpusIndex& c, const Vec& q, const std::string& target,
                       const std::string& skip) {
  const double t = oracle::dot(q, testing_util::widen(c.row(c.row_of(target))));
  std::size_t rank = 1;
  for (std::size_t r = 0; r < c.size(); ++r) {
    if (c.id(r) == skip || c.id(r) == target) continue;
    const double s = oracle::dot(q, testing_util::widen(c.row(r)));
    if (s > t || (s == t && c.id(r) < target)) ++rank;
  }
  return rank;
}

TEST(Synth, ShapeAndRouteMap) {
  const auto r = generate(small_spec());
  EXPECT_EQ(r.tasks.size(), 60u);
  EXPECT_EQ(r.certificates.size(), 60u);
  EXPECT_EQ(r.corpus.dim(), 32u);
  EXPECT_EQ(r.route_map.at(kComposeType), 1);
  EXPECT_EQ(r.route_map.at(kAggregateType), 0);
  std::set<std::string> qids;
  for (const auto& t : r.tasks) {
    EXPECT_TRUE(qids.insert(t.qid).second);
    ASSERT_TRUE(t.target.has_value());
    ASSERT_EQ(t.context.size(), 1u);
    EXPECT_NEAR(oracle::norm(t.query), 1.0, 1e-9);
    EXPECT_NO_THROW(validate_task(t, r.corpus));
  }
  for (std::size_t i = 0; i < r.corpus.size(); ++i) {
    EXPECT_NEAR(oracle::norm(testing_util::widen(r.corpus.row(i))), 1.0, 1e-5);
  }
}

TEST(Synth, SameSeedSameBytes) {
  testing_util::TempDir a("synth-a"), b("synth-b");
  const auto pa = write_synth(generate(small_spec()), a.path());
  const auto pb = write_synth(generate(small_spec()), b.path());
  for (auto [x, y] : {std::pair{pa.vectors, pb.vectors}, {pa.meta, pb.meta}, {pa.tasks, pb.tasks},
                      {pa.routes, pb.routes}, {pa.certificates, pb.certificates}}) {
    EXPECT_EQ(io::read_file(x), io::read_file(y)) << x;
  }
  auto other = small_spec();
  other.seed = 8;
  const auto c = generate(other);
  EXPECT_NE(c.tasks.front().query, generate(small_spec()).tasks.front().query);
}

TEST(Synth, CertificatesAgreeWithBruteForce) {
  const auto r = generate(small_spec());
  for (std::size_t i = 0; i < r.tasks.size(); ++i) {
    const auto& t = r.tasks[i];
    const auto& c = r.certificates[i];
    ASSERT_EQ(c.qid, t.qid);
    const std::string& ctx_id = t.context[0];
    const std::vector<Vec> ctx{testing_util::widen(r.corpus.row(r.corpus.row_of(ctx_id)))};
    const Vec add = oracle::additive(t.query, ctx, 0.05).h_req;
    const Vec h = oracle::context_summary(t.query, ctx);
    Vec sub = t.query;
    const double coef = oracle::dot(t.query, h) / oracle::dot(h, h);
    for (std::size_t k = 0; k < sub.size(); ++k) sub[k] -= coef * h[k];
    sub = oracle::layernorm(sub);
    EXPECT_EQ(c.rank_query, brute_rank(r.corpus, t.query, *t.target, ctx_id));
    EXPECT_EQ(c.rank_additive, brute_rank(r.corpus, add, *t.target, ctx_id));
    EXPECT_EQ(c.rank_subtractive, brute_rank(r.corpus, sub, *t.target, ctx_id));
    const bool expect = t.qtype == kComposeType
                            ? c.rank_subtractive == 1 && c.rank_additive > 1
                            : c.rank_additive == 1 && c.rank_subtractive > 1;
    EXPECT_EQ(c.certified, expect);
  }
}

TEST(Synth, DefaultGeometryCertifiesMostTasks) {
  auto s = small_spec();
  s.dim = 64;
  const auto r = generate(s);
  EXPECT_GE(r.certified(kComposeType), 20u);
  EXPECT_GE(r.certified(kAggregateType), 20u);
}

TEST(Synth, ValidationErrors) {
  const auto expect_invalid = [](SynthSpec s) {
    try {
      validate_spec(s);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
    }
  };
  auto s = small_spec();
  s.dim = 8;
  expect_invalid(s);
  s = small_spec();
  s.spread = 0.0;
  expect_invalid(s);
  s = small_spec();
  s.anchoring = 1.5;
  expect_invalid(s);
  s = small_spec();
  s.text_ratio = 0.5;
  expect_invalid(s);
  s = small_spec();
  s.compose_tasks = s.aggregate_tasks = 0;
  expect_invalid(s);
  s = small_spec();
  s.bridge = -1.0;
  expect_invalid(s);
  EXPECT_NO_THROW(validate_spec(small_spec()));
}

TEST(Synth, Options) {
  SynthSpec s;
  apply_synth_option(s, "dim", "48");
  apply_synth_option(s, "anchoring", "0.25");
  apply_synth_option(s, "seed", "99");
  EXPECT_EQ(s.dim, 48u);
  EXPECT_EQ(s.anchoring, 0.25);
  EXPECT_EQ(s.seed, 99u);
  EXPECT_THROW(apply_synth_option(s, "dims", "4"), Error);
  EXPECT_THROW(apply_synth_option(s, "dim", "4x"), Error);
  EXPECT_THROW(apply_synth_option(s, "dim", "-4"), Error);
}

}  // namespace
}  // namespace grail
