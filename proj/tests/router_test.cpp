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


#include "grail/router.hpp"

#include <random>

#include <gtest/gtest.h>

#include "grail/error.hpp"
#include "grail/io.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

namespace grail {
namespace {

// Two clusters split along the first coordinate.
void separable(std::size_t n, std::vector<std::vector<double>>& q, std::vector<int>& y) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 0.2);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = int(i % 2);
    std::vector<double> v(6);
    for (double& x : v) x = g(rng);
    v[0] += label ? 1.0 : -1.0;
    q.push_back(v);
    y.push_back(label);
  }
}

TEST(Router, LearnsSeparableLabels) {
  std::vector<std::vector<double>> q;
  std::vector<int> y;
  separable(200, q, y);
  const auto res = train_router(q, y);
  EXPECT_TRUE(res.params.frozen);
  EXPECT_EQ(res.report.train_count + res.report.holdout_count, 200u);
  EXPECT_EQ(res.report.holdout_count, 40u);
  EXPECT_GE(res.report.holdout_accuracy, 0.95);
  EXPECT_GE(res.report.holdout_f1, 0.95);
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_EQ(route(q[i], res.params), y[i]);
}

TEST(Router, TrainingIsDeterministic) {
  std::vector<std::vector<double>> q;
  std::vector<int> y;
  separable(60, q, y);
  const auto a = train_router(q, y), b = train_router(q, y);
  EXPECT_EQ(a.params.weights, b.params.weights);
  EXPECT_EQ(a.params.bias, b.params.bias);
}

TEST(Router, RejectsBadTrainingData) {
  std::vector<std::vector<double>> q{{1.0}, {2.0}};
  EXPECT_THROW(train_router(q, std::vector<int>{1, 1}), Error);
  EXPECT_THROW(train_router(q, std::vector<int>{0, 2}), Error);
  EXPECT_THROW(train_router(q, std::vector<int>{0}), Error);
}

TEST(Router, UnfrozenRouterRefusesToRoute) {
  RouterParams r;
  r.weights = {1.0};
  const std::vector<double> q{1.0};
  try {
    route(q, r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kContract);
  }
  r.frozen = true;
  EXPECT_EQ(route(q, r), 1);
  const std::vector<double> bad{1.0, 2.0};
  EXPECT_THROW(route(bad, r), Error);
}

TEST(Router, DispatchRunsExactlyOneSpecialist) {
  const auto gap = SteeringParams::create(4);
  const auto add = SteeringParams::create(4, 64, true, SteeringMode::kAdditive);
  DispatchCounters counters;
  std::mt19937_64 rng(2);
  const auto q = oracle::random_unit(rng, 4);
  const std::vector<std::vector<double>> ctx{oracle::random_unit(rng, 4)};
  const auto a = dispatch_request(q, ctx, 0, add, gap, &counters);
  const auto g = dispatch_request(q, ctx, 1, add, gap, &counters);
  EXPECT_EQ(a.mode, SteeringMode::kAdditive);
  EXPECT_EQ(g.mode, SteeringMode::kGap);
  EXPECT_EQ(a.h_req, additive_request(q, ctx).h_req);
  EXPECT_EQ(g.h_req, gap_request(q, ctx, gap).h_req);
  EXPECT_EQ(counters.additive.load(), 1u);
  EXPECT_EQ(counters.gap.load(), 1u);
}

TEST(Router, RouteMapParsing) {
  const auto m = parse_route_map("compose=1,aggregate=0");
  EXPECT_EQ(m.at("compose"), 1);
  EXPECT_EQ(m.at("aggregate"), 0);
  EXPECT_THROW(parse_route_map("compose=2"), Error);
  EXPECT_THROW(parse_route_map("=1"), Error);
  EXPECT_THROW(parse_route_map("compose"), Error);
}

TEST(Router, FileRoundTripsBitwise) {
  testing_util::TempDir dir("router");
  RouterParams r;
  r.weights = {0.5, -0.25, 1.0 / 3.0};
  r.bias = 0.125;
  r.frozen = true;
  save_router(r, dir / "a.bin");
  const auto back = load_router(dir / "a.bin");
  save_router(back, dir / "b.bin");
  EXPECT_EQ(io::read_file(dir / "a.bin"), io::read_file(dir / "b.bin"));
  EXPECT_EQ(back.bias, 0.125);
  EXPECT_TRUE(back.frozen);
  const std::string bytes = serialize_router(r);
  EXPECT_THROW(deserialize_router(bytes.substr(0, bytes.size() - 1)), Error);
  EXPECT_THROW(deserialize_router(bytes + "x"), Error);
  EXPECT_THROW(deserialize_router("{}"), Error);
}

}  // namespace
}  // namespace grail
