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


#include "grail/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "grail/error.hpp"
#include "grail/search.hpp"
#include "grail/synthgen.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

namespace grail {
namespace {

using oracle::Vec;

TEST(AdamW, TwoStepsByHand) {
  tape::Parameter w("w", 1, 1);
  w[0] = 1.0;
  std::vector<tape::Parameter*> params{&w};
  AdamState state;
  const AdamConfig cfg{0.1, 0.01, 0.9, 0.999, 1e-8};
  ASSERT_TRUE(adamw_step(params, {{"w", {0.5}}}, state, cfg));
  EXPECT_NEAR(w[0], 0.899000002, 1e-15);
  ASSERT_TRUE(adamw_step(params, {{"w", {-0.5}}}, state, cfg));
  EXPECT_NEAR(w[0], 0.9033641597874735, 1e-15);
  EXPECT_EQ(state.step, 2u);
}

TEST(AdamW, NonFiniteGradientSkipsStep) {
  tape::Parameter w("w", 1, 2);
  w[0] = 1.0;
  std::vector<tape::Parameter*> params{&w};
  AdamState state;
  EXPECT_FALSE(adamw_step(params, {{"w", {0.1, NAN}}}, state, {}));
  EXPECT_EQ(w[0], 1.0);
  EXPECT_EQ(state.skipped, 1u);
  EXPECT_EQ(state.step, 0u);
  EXPECT_THROW(adamw_step(params, {{"v", {0.1, 0.1}}}, state, {}), Error);
  EXPECT_THROW(adamw_step(params, {{"w", {0.1}}}, state, {}), Error);
}

// Random samples with distinct positives.
std::vector<TrainSample> random_samples(std::mt19937_64& rng, std::size_t n, std::size_t d,
                                        std::size_t distractors) {
  std::vector<TrainSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = out[i];
    s.qid = "s" + std::to_string(i);
    s.query = oracle::random_unit(rng, d);
    s.context = {oracle::random_unit(rng, d), oracle::random_unit(rng, d)};
    s.positive_id = "p" + std::to_string(i);
    s.positive = oracle::random_unit(rng, d);
    for (std::size_t j = 0; j < distractors; ++j) {
      s.distractor_ids.push_back(s.qid + "z" + std::to_string(j));
      s.distractors.push_back(oracle::random_unit(rng, d));
    }
  }
  return out;
}

TrainBatch batch_of(const std::vector<TrainSample>& s) {
  TrainBatch b;
  for (const auto& x : s) b.samples.push_back(&x);
  return b;
}

TEST(RetrievalLoss, MatchesScalarOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto samples = random_samples(rng, 4, 10, 3);
    const TrainBatch b = batch_of(samples);
    auto gap = SteeringParams::create(10, 6, trial % 2 == 0, SteeringMode::kGap, trial);
    perturb(gap, trial, 0.3);
    EXPECT_NEAR(retrieval_loss(b, gap), oracle::retrieval_loss(b, gap), 1e-10);
    EXPECT_NEAR(retrieval_loss_and_grad(b, gap, 2).loss, oracle::retrieval_loss(b, gap), 1e-10);
    const auto add = SteeringParams::create(10, 6, true, SteeringMode::kAdditive);
    EXPECT_NEAR(retrieval_loss(b, add), oracle::retrieval_loss(b, add), 1e-10);
  }
}

TEST(RetrievalLoss, SymmetricTwoScoreCaseIsLog2) {
  std::mt19937_64 rng(3);
  auto samples = random_samples(rng, 1, 8, 1);
  samples[0].distractors[0] = samples[0].positive;
  const auto p = SteeringParams::create(8);
  EXPECT_NEAR(retrieval_loss(batch_of(samples), p), std::log(2.0), 1e-12);
}

TEST(RetrievalLoss, RejectsRepeatedPositives) {
  std::mt19937_64 rng(3);
  auto samples = random_samples(rng, 2, 8, 1);
  samples[1].positive_id = samples[0].positive_id;
  try {
    retrieval_loss(batch_of(samples), SteeringParams::create(8));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kContract);
  }
}

TEST(RetrievalLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  const auto samples = random_samples(rng, 3, 6, 2);
  auto p = SteeringParams::create(6, 4, true, SteeringMode::kGap, 1);
  perturb(p, 9, 0.2);
  const auto report = check_steering_gradients(batch_of(samples), p, 1e-5);
  ASSERT_EQ(report.entries.size(), 6u);
  for (const auto& e : report.entries) EXPECT_LT(e.rel_error, 1e-7) << e.param;
}

TEST(RetrievalLoss, ParallelGradientIsWorkerIndependent) {
  std::mt19937_64 rng(5);
  const auto samples = random_samples(rng, 6, 6, 2);
  auto p = SteeringParams::create(6, 4, true, SteeringMode::kGap, 1);
  perturb(p, 2, 0.2);
  const auto a = retrieval_loss_and_grad(batch_of(samples), p, 1);
  const auto b = retrieval_loss_and_grad(batch_of(samples), p, 4);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grads, b.grads);
}

TEST(Batches, DeferRepeatedPositives) {
  std::mt19937_64 rng(3);
  auto samples = random_samples(rng, 5, 4, 0);
  samples[1].positive_id = samples[0].positive_id;
  samples[2].positive_id = samples[0].positive_id;
  const std::vector<std::size_t> order{0, 1, 2, 3, 4};
  const auto batches = make_batches(samples, order, 3);
  std::size_t total = 0;
  for (const auto& b : batches) {
    std::set<std::string> ids;
    for (const auto* s : b.samples) EXPECT_TRUE(ids.insert(s->positive_id).second);
    EXPECT_LE(b.samples.size(), 3u);
    total += b.samples.size();
  }
  EXPECT_EQ(total, 5u);
}

TEST(AlignmentLoss, MatchesScalarOracle) {
  std::mt19937_64 rng(23);
  for (auto strategy : {AlignmentStrategy::kCentroid, AlignmentStrategy::kQueryEvidence,
                        AlignmentStrategy::kExternalAnchor}) {
    std::vector<AlignmentChain> chains(4);
    for (std::size_t x = 0; x < chains.size(); ++x) {
      chains[x].query = oracle::random_unit(rng, 7);
      chains[x].anchor = oracle::random_unit(rng, 7);
      for (std::size_t j = 0; j < 2 + x % 2; ++j) {
        Vec e = oracle::random_unit(rng, 7);
        for (double& v : e) v *= 1.0 + double(j);
        chains[x].evidence.push_back(e);
        chains[x].modalities.push_back(Modality::kText);
      }
    }
    EXPECT_NEAR(alignment_loss(chains, strategy, 0.05), oracle::alignment_loss(chains, strategy, 0.05),
                1e-10)
        << alignment_strategy_name(strategy);
  }
}

TEST(AlignmentLoss, SymmetricTwoScoreCaseIsLog2) {
  std::vector<AlignmentChain> chains(2);
  chains[0].query = {1, 0};
  chains[0].evidence = {{0, 1}};
  chains[1].query = {1, 0};
  chains[1].evidence = {{0, -1}};
  for (auto& c : chains) c.modalities = {Modality::kText};
  EXPECT_NEAR(alignment_loss(chains, AlignmentStrategy::kQueryEvidence, 0.05), std::log(2.0), 1e-12);
}

TEST(AlignmentLoss, Errors) {
  std::vector<AlignmentChain> chains(1);
  chains[0].query = {1, 0};
  chains[0].evidence = {{0, 1}};
  chains[0].modalities = {Modality::kTable};
  EXPECT_THROW(alignment_loss(chains, AlignmentStrategy::kExternalAnchor, 0.05), Error);
  EXPECT_THROW(alignment_loss({}, AlignmentStrategy::kCentroid, 0.05), Error);
  const std::vector<AlignmentProjection> proj{{Modality::kText, tape::Parameter("proj_text", 2, 2)}};
  try {
    alignment_loss(chains, AlignmentStrategy::kQueryEvidence, 0.05, proj);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotFound);
  }
  EXPECT_EQ(parse_alignment_strategy("query_evidence"), AlignmentStrategy::kQueryEvidence);
  EXPECT_THROW(parse_alignment_strategy("cls"), Error);
}

SynthSpec small_spec() {
  SynthSpec s;
  s.dim = 32;
  s.compose_tasks = 40;
  s.aggregate_tasks = 40;
  s.distractors = 6;
  s.background = 200;
  return s;
}

TEST(Training, SteeringLowersLossAndIsDeterministic) {
  const SynthResult r = generate(small_spec());
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 16;
  auto a = SteeringParams::create(32);
  const auto ra = train_steering(r.corpus, r.tasks, cfg, a);
  ASSERT_EQ(ra.curve.size(), 15u);
  EXPECT_LT(ra.curve.back().mean_loss, ra.initial_loss);
  EXPECT_EQ(ra.gate_stats.size(), 2u);

  cfg.workers = 3;
  auto b = SteeringParams::create(32);
  const auto rb = train_steering(r.corpus, r.tasks, cfg, b);
  EXPECT_EQ(ra.curve.back().mean_loss, rb.curve.back().mean_loss);
  EXPECT_EQ(a.w_mix.data()[0], b.w_mix.data()[0]);
  EXPECT_EQ(std::vector<double>(a.mlp_w1.data().begin(), a.mlp_w1.data().end()),
            std::vector<double>(b.mlp_w1.data().begin(), b.mlp_w1.data().end()));
}

TEST(Training, AdditiveModeOnlyEvaluates) {
  const SynthResult r = generate(small_spec());
  TrainConfig cfg;
  cfg.epochs = 2;
  auto p = SteeringParams::create(32, 64, true, SteeringMode::kAdditive);
  const auto before = serialize_params(p);
  const auto res = train_steering(r.corpus, r.tasks, cfg, p);
  EXPECT_EQ(serialize_params(p), before);
  EXPECT_EQ(res.curve.size(), 2u);
  EXPECT_EQ(res.skipped_steps, 0u);
}

TEST(Training, AlignmentLowersLoss) {
  const SynthResult r = generate(small_spec());
  const auto chains = make_chains(r.corpus, r.tasks);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.learning_rate = 1e-3;
  const std::vector<Modality> mods{Modality::kText, Modality::kTable, Modality::kImage};
  const auto res = train_alignment(chains, AlignmentStrategy::kCentroid, cfg, mods);
  ASSERT_EQ(res.projections.size(), 3u);
  EXPECT_LT(res.epoch_loss.back(), res.initial_loss);
  EXPECT_EQ(res.projections[0].matrix.name(), "proj_text");
}

TEST(Training, HardDistractorsAvoidGold) {
  const SynthResult r = generate(small_spec());
  const Searcher searcher(r.corpus);
  const auto& inst = r.tasks;
  for (std::size_t i = 0; i < 10; ++i) {
    const auto z = mine_hard_distractors(searcher, inst[i], 4);
    EXPECT_EQ(z.size(), 4u);
    for (const auto& id : z) {
      EXPECT_EQ(std::count(inst[i].gold.begin(), inst[i].gold.end(), id), 0);
    }
    const auto raw = searcher.top_k(inst[i].query, 20, inst[i].gold).ids();
    EXPECT_EQ(z, std::vector<std::string>(raw.begin(), raw.begin() + 4));
  }
}

}  // namespace
}  // namespace grail
