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

#pragma once

// Contrastive training of the steering layers and of the per-modality
// alignment projections, plus a from-scratch AdamW.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grail/corpus.hpp"
#include "grail/search.hpp"
#include "grail/steering.hpp"
#include "grail/tape.hpp"

namespace grail {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  double learning_rate = 1e-4;
  double tau = 0.05;  // alignment temperature
  std::size_t hard_negatives = 4;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  std::size_t workers = 1;
};

// ---- optimizer ----

struct AdamConfig {
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  std::size_t skipped = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

/// One decoupled-weight-decay Adam update. Returns false, leaving params and
/// moments untouched, when any gradient component is non-finite.
bool adamw_step(std::span<tape::Parameter* const> params, const tape::GradientMap& grads,
                AdamState& state, const AdamConfig& config);

// ---- retrieval objective ----

struct TrainSample {
  std::string qid;
  std::string qtype;
  std::vector<double> query;
  std::vector<std::vector<double>> context;
  std::string positive_id;
  std::vector<double> positive;
  std::vector<std::string> distractor_ids;
  std::vector<std::vector<double>> distractors;
};

/// Samples are borrowed; positive ids must be pairwise distinct.
struct TrainBatch {
  std::vector<const TrainSample*> samples;
  std::size_t index = 0;
};

/// Top-`count` raw-query hits outside gold and context. Asking for more than
/// exist returns every candidate with a warning.
std::vector<std::string> mine_hard_distractors(const Searcher& searcher, const RetrievalTask& task,
                                               std::size_t count);

/// Builds training samples from completion tasks (target and context set).
std::vector<TrainSample> make_samples(const CorpusIndex& corpus,
                                      std::span<const RetrievalTask> tasks,
                                      std::size_t hard_negatives, std::size_t workers = 1);

/// Splits `order` into batches of at most `batch_size`, deferring a sample
/// to a later batch when its positive already occurs in the current one.
std::vector<TrainBatch> make_batches(std::span<const TrainSample> samples,
                                     std::span<const std::size_t> order, std::size_t batch_size);

/// Per-sample term: -log P / (P + N) with in-batch targets and the sample's
/// hard distractors as negatives, cosine scores, and the sample's tau.
tape::Var sample_retrieval_loss(tape::Tape& t, const TrainBatch& batch, std::size_t x,
                                const SteeringParams& params, const ParamVars* pv,
                                SteeredVars* steered = nullptr);

/// Mean of the per-sample terms on one tape.
tape::Var retrieval_loss_on_tape(tape::Tape& t, const TrainBatch& batch,
                                 const SteeringParams& params);

struct SampleStats {
  double g = 0.0;
  double w1 = 1.0;
  double w2 = 0.0;
  double tau = 0.0;
};

struct LossAndGrad {
  double loss = 0.0;
  tape::GradientMap grads;
  std::vector<SampleStats> stats;  // batch order
};

/// Per-sample tapes evaluated in parallel and reduced in sample order.
LossAndGrad retrieval_loss_and_grad(const TrainBatch& batch, const SteeringParams& params,
                                    std::size_t workers = 1);
double retrieval_loss(const TrainBatch& batch, const SteeringParams& params);

// ---- alignment objective ----

enum class AlignmentStrategy { kCentroid, kQueryEvidence, kExternalAnchor };

const char* alignment_strategy_name(AlignmentStrategy s) noexcept;
AlignmentStrategy parse_alignment_strategy(std::string_view name);

struct AlignmentChain {
  std::vector<double> query;
  std::optional<std::vector<double>> anchor;
  std::vector<Modality> modalities;
  std::vector<std::vector<double>> evidence;
};

/// Projection lookup by modality; empty means identity for every modality.
using ProjectionSet = std::span<const AlignmentProjection>;

tape::Var alignment_loss_on_tape(tape::Tape& t, std::span<const AlignmentChain* const> chains,
                                 AlignmentStrategy strategy, double tau,
                                 ProjectionSet projections);
double alignment_loss(std::span<const AlignmentChain> chains, AlignmentStrategy strategy,
                      double tau, ProjectionSet projections = {});

/// Chains built from task gold sets; external anchors come from anchor_vec.
std::vector<AlignmentChain> make_chains(const CorpusIndex& corpus,
                                        std::span<const RetrievalTask> tasks);

struct AlignmentTrainResult {
  std::vector<AlignmentProjection> projections;
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;
};

/// Identity-initialised d x d maps for `modalities`; chains may only use
/// those. Errors: empty chains, unknown modality.
AlignmentTrainResult train_alignment(std::span<const AlignmentChain> chains,
                                     AlignmentStrategy strategy, const TrainConfig& config,
                                     std::span<const Modality> modalities);

// ---- steering training ----

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double mean_g = 0.0;
  double std_g = 0.0;
  double mean_w1 = 0.0;
  double mean_w2 = 0.0;
};

struct GateStats {
  std::size_t count = 0;
  double mean_g = 0.0, std_g = 0.0;
  double mean_w1 = 0.0, std_w1 = 0.0;
  double mean_w2 = 0.0, std_w2 = 0.0;
};

struct SteeringTrainResult {
  double initial_loss = 0.0;
  std::vector<EpochRecord> curve;
  std::map<std::string, GateStats> gate_stats;  // per qtype, after training
  std::size_t skipped_steps = 0;
};

/// Trains `params` in place. Additive mode has nothing to learn, so it only
/// evaluates the loss curve. Errors: empty task set, tasks without target or
/// context.
SteeringTrainResult train_steering(const CorpusIndex& corpus,
                                   std::span<const RetrievalTask> tasks,
                                   const TrainConfig& config, SteeringParams& params);

/// g, w1, w2 statistics of gap_request over `tasks`, grouped by qtype.
std::map<std::string, GateStats> gate_statistics(const CorpusIndex& corpus,
                                                 std::span<const RetrievalTask> tasks,
                                                 const SteeringParams& params,
                                                 std::size_t workers = 1);

void write_training_csv(const std::filesystem::path& path, std::span<const EpochRecord> curve);
std::string gate_stats_csv(const std::map<std::string, GateStats>& stats);

/// Finite-difference check of the retrieval loss on one batch.
tape::GradCheckReport check_steering_gradients(const TrainBatch& batch, SteeringParams& params,
                                               double eps = 1e-4, std::size_t max_coords = 0,
                                               std::uint64_t seed = 0);

}  // namespace grail
