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
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "grail/error.hpp"
#include "grail/io.hpp"
#include "grail/parallel.hpp"
#include "grail/pool.hpp"

namespace grail {

using tape::GradientMap;
using tape::Parameter;
using tape::Tape;
using tape::Var;

// ---------------------------------------------------------------- AdamW

bool adamw_step(std::span<Parameter* const> params, const GradientMap& grads, AdamState& state,
                const AdamConfig& config) {
  for (const Parameter* p : params) {
    const auto it = grads.find(p->name());
    if (it == grads.end()) fail(ErrorCode::kContract, fmt::format("no gradient for '{}'", p->name()));
    if (it->second.size() != p->size()) {
      fail(ErrorCode::kDimensionMismatch, fmt::format("gradient shape mismatch for '{}'", p->name()));
    }
    for (double g : it->second) {
      if (!std::isfinite(g)) {
        ++state.skipped;
        spdlog::warn("non-finite gradient in '{}'; skipping step", p->name());
        return false;
      }
    }
  }
  ++state.step;
  const double t = double(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (Parameter* p : params) {
    const auto& g = grads.at(p->name());
    auto& m = state.m[p->name()];
    auto& v = state.v[p->name()];
    m.resize(p->size(), 0.0);
    v.resize(p->size(), 0.0);
    auto w = p->data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= config.learning_rate * config.weight_decay * w[i];
      w[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
  return true;
}

// ---------------------------------------------------------------- samples

std::vector<std::string> mine_hard_distractors(const Searcher& searcher, const RetrievalTask& task,
                                               std::size_t count) {
  if (count == 0) return {};
  std::vector<std::string> exclude = task.gold;
  exclude.insert(exclude.end(), task.context.begin(), task.context.end());
  if (task.target) exclude.push_back(*task.target);
  std::sort(exclude.begin(), exclude.end());
  exclude.erase(std::unique(exclude.begin(), exclude.end()), exclude.end());
  const std::size_t available = searcher.corpus().size() - exclude.size();
  if (available == 0) {
    fail(ErrorCode::kInvalidArgument,
         fmt::format("task '{}': corpus has no non-gold items to mine", task.qid));
  }
  if (count > available) {
    spdlog::warn("task '{}': asked for {} distractors, only {} available", task.qid, count,
                 available);
  }
  return searcher.top_k(task.query, std::min(count, available), exclude).ids();
}

std::vector<TrainSample> make_samples(const CorpusIndex& corpus,
                                      std::span<const RetrievalTask> tasks,
                                      std::size_t hard_negatives, std::size_t workers) {
  const Searcher searcher(corpus, 1);
  std::vector<TrainSample> out(tasks.size());
  parallel_for(tasks.size(), workers, [&](std::size_t i) {
    const RetrievalTask& task = tasks[i];
    if (!task.target || task.context.empty()) {
      fail(ErrorCode::kContract,
           fmt::format("task '{}' needs a target and a nonempty context for training", task.qid));
    }
    TrainSample& s = out[i];
    s.qid = task.qid;
    s.qtype = task.qtype;
    s.query = task.query;
    s.context = embeddings_of(corpus, task.context);
    s.positive_id = *task.target;
    const auto row = corpus.row(corpus.row_of(*task.target));
    s.positive.assign(row.begin(), row.end());
    s.distractor_ids = mine_hard_distractors(searcher, task, hard_negatives);
    s.distractors = embeddings_of(corpus, s.distractor_ids);
  });
  return out;
}

std::vector<TrainBatch> make_batches(std::span<const TrainSample> samples,
                                     std::span<const std::size_t> order, std::size_t batch_size) {
  if (batch_size == 0) fail(ErrorCode::kInvalidArgument, "batch size must be positive");
  std::vector<TrainBatch> batches;
  std::vector<std::size_t> pending(order.begin(), order.end());
  while (!pending.empty()) {
    TrainBatch b;
    b.index = batches.size();
    std::set<std::string> used;
    std::vector<std::size_t> deferred;
    for (std::size_t i : pending) {
      if (b.samples.size() < batch_size && used.insert(samples[i].positive_id).second) {
        b.samples.push_back(&samples[i]);
      } else {
        deferred.push_back(i);
      }
    }
    batches.push_back(std::move(b));
    pending = std::move(deferred);
  }
  return batches;
}

// ---------------------------------------------------------------- retrieval loss

namespace {

void check_batch(const TrainBatch& batch) {
  if (batch.samples.empty()) fail(ErrorCode::kInvalidArgument, "empty training batch");
  std::set<std::string> seen;
  for (const TrainSample* s : batch.samples) {
    if (!seen.insert(s->positive_id).second) {
      fail(ErrorCode::kContract,
           fmt::format("positive '{}' appears twice in batch {}", s->positive_id, batch.index));
    }
  }
  if (batch.samples.size() == 1 && batch.samples.front()->distractors.empty()) {
    spdlog::warn("batch {} has one sample and no distractors; its loss is identically 0",
                 batch.index);
  }
}

std::vector<Var> constants(Tape& t, std::span<const std::vector<double>> vs) {
  std::vector<Var> out;
  out.reserve(vs.size());
  for (const auto& v : vs) out.push_back(t.constant(v));
  return out;
}

}  // namespace

Var sample_retrieval_loss(Tape& t, const TrainBatch& batch, std::size_t x,
                          const SteeringParams& params, const ParamVars* pv,
                          SteeredVars* steered) {
  const TrainSample& s = *batch.samples[x];
  Var q = t.constant(s.query);
  const auto ctx = constants(t, s.context);
  SteeredVars sv = params.mode == SteeringMode::kAdditive
                       ? build_additive_request(t, q, ctx, params.tau_base())
                       : build_gap_request(t, q, ctx, params, *pv);

  // Candidate rows: own positive first, then the other samples' positives,
  // then this sample's hard distractors.
  const std::size_t d = s.query.size();
  std::vector<const std::vector<double>*> cands{&s.positive};
  for (std::size_t y = 0; y < batch.samples.size(); ++y) {
    if (y != x) cands.push_back(&batch.samples[y]->positive);
  }
  for (const auto& z : s.distractors) cands.push_back(&z);

  std::vector<double> mat;
  mat.reserve(cands.size() * d);
  std::vector<double> inv_norm;
  inv_norm.reserve(cands.size());
  for (const auto* c : cands) {
    if (c->size() != d) fail(ErrorCode::kDimensionMismatch, "candidate dimension mismatch");
    double nn = 0.0;
    for (double v : *c) nn += v * v;
    if (nn == 0.0) fail(ErrorCode::kInvalidArgument, "zero-norm candidate embedding");
    inv_norm.push_back(1.0 / std::sqrt(nn));
    mat.insert(mat.end(), c->begin(), c->end());
  }
  Var dots = tape::matvec(t.constant_matrix(cands.size(), d, mat), sv.h_req);
  Var h_norm = tape::sqrt(tape::dot(sv.h_req, sv.h_req));
  Var sims = tape::mul(tape::div(dots, h_norm), t.constant(inv_norm));
  Var logits = tape::div(sims, sv.tau);
  Var loss = tape::sub(tape::logsumexp(logits), tape::slice(logits, 0, 1));
  if (steered) *steered = sv;
  return loss;
}

Var retrieval_loss_on_tape(Tape& t, const TrainBatch& batch, const SteeringParams& params) {
  check_batch(batch);
  const ParamVars pv = bind(t, params);
  std::vector<Var> terms;
  for (std::size_t x = 0; x < batch.samples.size(); ++x) {
    terms.push_back(sample_retrieval_loss(t, batch, x, params, &pv));
  }
  return tape::scale(tape::sum(tape::concat(terms)), 1.0 / double(terms.size()));
}

LossAndGrad retrieval_loss_and_grad(const TrainBatch& batch, const SteeringParams& params,
                                    std::size_t workers) {
  check_batch(batch);
  const std::size_t n = batch.samples.size();
  std::vector<double> losses(n);
  std::vector<GradientMap> grads(n);
  LossAndGrad out;
  out.stats.resize(n);
  parallel_for(n, workers, [&](std::size_t x) {
    Tape t;
    const ParamVars pv = bind(t, params);
    SteeredVars sv;
    Var loss = sample_retrieval_loss(t, batch, x, params, &pv, &sv);
    losses[x] = loss.scalar();
    grads[x] = t.backward(loss);
    out.stats[x] = {sv.g.scalar(), sv.w.value()[0], sv.w.value()[1], sv.tau.scalar()};
  });
  const double inv_n = 1.0 / double(n);
  for (std::size_t x = 0; x < n; ++x) {
    out.loss += losses[x];
    for (auto& [name, g] : grads[x]) {
      auto& acc = out.grads[name];
      acc.resize(g.size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * inv_n;
    }
  }
  out.loss *= inv_n;
  return out;
}

double retrieval_loss(const TrainBatch& batch, const SteeringParams& params) {
  Tape t;
  return retrieval_loss_on_tape(t, batch, params).scalar();
}

// ---------------------------------------------------------------- alignment

const char* alignment_strategy_name(AlignmentStrategy s) noexcept {
  switch (s) {
    case AlignmentStrategy::kCentroid: return "centroid";
    case AlignmentStrategy::kQueryEvidence: return "query_evidence";
    case AlignmentStrategy::kExternalAnchor: return "external_anchor";
  }
  return "unknown";
}

AlignmentStrategy parse_alignment_strategy(std::string_view name) {
  if (name == "centroid") return AlignmentStrategy::kCentroid;
  if (name == "query_evidence") return AlignmentStrategy::kQueryEvidence;
  if (name == "external_anchor") return AlignmentStrategy::kExternalAnchor;
  fail(ErrorCode::kInvalidArgument, fmt::format("unknown alignment strategy '{}'", name));
}

namespace {

Var unit(Var v, const char* what) {
  double nn = 0.0;
  for (double x : v.value()) nn += x * x;
  if (nn == 0.0) fail(ErrorCode::kInvalidArgument, fmt::format("zero-norm {}", what));
  return tape::div(v, tape::sqrt(tape::dot(v, v)));
}

}  // namespace

Var alignment_loss_on_tape(Tape& t, std::span<const AlignmentChain* const> chains,
                           AlignmentStrategy strategy, double tau, ProjectionSet projections) {
  if (chains.empty()) fail(ErrorCode::kInvalidArgument, "alignment loss needs at least one chain");
  if (!(tau > 0.0)) fail(ErrorCode::kInvalidArgument, "alignment temperature must be positive");

  std::map<Modality, Var> proj;
  for (const auto& p : projections) proj[p.modality] = t.param(p.matrix);

  // Unit-normalised projected evidence, flattened with owning chain index.
  std::vector<Var> items;
  std::vector<std::size_t> owner;
  std::vector<std::size_t> first(chains.size() + 1, 0);
  for (std::size_t x = 0; x < chains.size(); ++x) {
    const AlignmentChain& c = *chains[x];
    if (c.evidence.empty()) fail(ErrorCode::kInvalidArgument, "alignment chain without evidence");
    if (c.modalities.size() != c.evidence.size()) {
      fail(ErrorCode::kInvalidArgument, "alignment chain modality count mismatch");
    }
    first[x] = items.size();
    for (std::size_t j = 0; j < c.evidence.size(); ++j) {
      Var e = t.constant(c.evidence[j]);
      if (!proj.empty()) {
        const auto it = proj.find(c.modalities[j]);
        if (it == proj.end()) {
          fail(ErrorCode::kNotFound,
               fmt::format("no projection for modality '{}'", modality_name(c.modalities[j])));
        }
        e = tape::matvec(it->second, e);
      }
      items.push_back(e);
      owner.push_back(x);
    }
  }
  first[chains.size()] = items.size();

  std::vector<Var> anchors;
  for (std::size_t x = 0; x < chains.size(); ++x) {
    const AlignmentChain& c = *chains[x];
    Var a;
    switch (strategy) {
      case AlignmentStrategy::kCentroid: {
        a = items[first[x]];
        for (std::size_t j = first[x] + 1; j < first[x + 1]; ++j) a = tape::add(a, items[j]);
        a = tape::scale(a, 1.0 / double(first[x + 1] - first[x]));
        break;
      }
      case AlignmentStrategy::kQueryEvidence:
        a = t.constant(c.query);
        break;
      case AlignmentStrategy::kExternalAnchor:
        if (!c.anchor) fail(ErrorCode::kInvalidArgument, "external anchor strategy needs anchors");
        a = t.constant(*c.anchor);
        break;
    }
    anchors.push_back(unit(a, "anchor"));
  }
  std::vector<Var> units;
  units.reserve(items.size());
  for (Var e : items) units.push_back(unit(e, "evidence"));

  const double inv_tau = 1.0 / tau;
  std::vector<Var> chain_terms;
  for (std::size_t x = 0; x < chains.size(); ++x) {
    std::vector<Var> neg;
    for (std::size_t j = 0; j < units.size(); ++j) {
      if (owner[j] != x) neg.push_back(tape::scale(tape::dot(anchors[x], units[j]), inv_tau));
    }
    std::vector<Var> terms;
    for (std::size_t j = first[x]; j < first[x + 1]; ++j) {
      Var pos = tape::scale(tape::dot(anchors[x], units[j]), inv_tau);
      std::vector<Var> row{pos};
      row.insert(row.end(), neg.begin(), neg.end());
      terms.push_back(tape::sub(tape::logsumexp(tape::concat(row)), pos));
    }
    chain_terms.push_back(
        tape::scale(tape::sum(tape::concat(terms)), 1.0 / double(terms.size())));
  }
  return tape::scale(tape::sum(tape::concat(chain_terms)), 1.0 / double(chains.size()));
}

double alignment_loss(std::span<const AlignmentChain> chains, AlignmentStrategy strategy,
                      double tau, ProjectionSet projections) {
  std::vector<const AlignmentChain*> ptrs;
  for (const auto& c : chains) ptrs.push_back(&c);
  Tape t;
  return alignment_loss_on_tape(t, ptrs, strategy, tau, projections).scalar();
}

std::vector<AlignmentChain> make_chains(const CorpusIndex& corpus,
                                        std::span<const RetrievalTask> tasks) {
  std::vector<AlignmentChain> out;
  out.reserve(tasks.size());
  for (const auto& task : tasks) {
    AlignmentChain c;
    c.query = task.query;
    c.anchor = task.anchor;
    c.evidence = embeddings_of(corpus, task.gold);
    for (const auto& id : task.gold) c.modalities.push_back(corpus.modality(corpus.row_of(id)));
    out.push_back(std::move(c));
  }
  return out;
}

AlignmentTrainResult train_alignment(std::span<const AlignmentChain> chains,
                                     AlignmentStrategy strategy, const TrainConfig& config,
                                     std::span<const Modality> modalities) {
  if (chains.empty()) fail(ErrorCode::kInvalidArgument, "no alignment chains");
  const std::set<Modality> allowed(modalities.begin(), modalities.end());
  for (const auto& c : chains) {
    for (Modality m : c.modalities) {
      if (!allowed.count(m)) {
        fail(ErrorCode::kNotFound,
             fmt::format("chain uses modality '{}' without a projection", modality_name(m)));
      }
    }
  }
  const std::size_t d = chains.front().evidence.front().size();
  AlignmentTrainResult r;
  for (Modality m : allowed) {
    AlignmentProjection p{m, Parameter(fmt::format("proj_{}", modality_name(m)), d, d)};
    for (std::size_t i = 0; i < d; ++i) p.matrix[i * d + i] = 1.0;
    r.projections.push_back(std::move(p));
  }
  std::vector<Parameter*> params;
  for (auto& p : r.projections) params.push_back(&p.matrix);

  r.initial_loss = alignment_loss(chains, strategy, config.tau, r.projections);
  const AdamConfig adam{config.learning_rate, config.weight_decay};
  AdamState state;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(chains.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      std::vector<const AlignmentChain*> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + config.batch_size); ++i) {
        batch.push_back(&chains[order[i]]);
      }
      Tape t;
      Var loss = alignment_loss_on_tape(t, batch, strategy, config.tau, r.projections);
      total += loss.scalar() * double(batch.size());
      adamw_step(params, t.backward(loss), state, adam);
    }
    r.epoch_loss.push_back(total / double(order.size()));
  }
  return r;
}

// ---------------------------------------------------------------- steering training

namespace {

struct Moments {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  void add(double x) {
    sum += x;
    sq += x * x;
    ++n;
  }
  double mean() const { return n ? sum / double(n) : 0.0; }
  double stddev() const {
    if (!n) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, sq / double(n) - m * m));
  }
};

}  // namespace

std::map<std::string, GateStats> gate_statistics(const CorpusIndex& corpus,
                                                 std::span<const RetrievalTask> tasks,
                                                 const SteeringParams& params,
                                                 std::size_t workers) {
  std::vector<SteeredQuery> out(tasks.size());
  parallel_for(tasks.size(), workers, [&](std::size_t i) {
    const auto ctx = embeddings_of(corpus, tasks[i].context);
    out[i] = gap_request(tasks[i].query, ctx, params);
  });
  std::map<std::string, std::array<Moments, 3>> acc;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    auto& m = acc[tasks[i].qtype];
    m[0].add(out[i].g);
    m[1].add(out[i].w1);
    m[2].add(out[i].w2);
  }
  std::map<std::string, GateStats> stats;
  for (const auto& [k, m] : acc) {
    stats[k] = {m[0].n,        m[0].mean(), m[0].stddev(), m[1].mean(),
                m[1].stddev(), m[2].mean(), m[2].stddev()};
  }
  return stats;
}

SteeringTrainResult train_steering(const CorpusIndex& corpus,
                                   std::span<const RetrievalTask> tasks,
                                   const TrainConfig& config, SteeringParams& params) {
  if (tasks.empty()) fail(ErrorCode::kInvalidArgument, "no training tasks");
  if (config.batch_size < 2) {
    spdlog::warn("batch size {} leaves no in-batch negatives", config.batch_size);
  }
  const auto samples = make_samples(corpus, tasks, config.hard_negatives, config.workers);
  const bool learn = params.mode == SteeringMode::kGap;
  const auto trainable = params.trainable();
  // Projections are not touched by the retrieval loss.
  std::vector<Parameter*> steer(trainable.begin(), trainable.begin() + 6);

  SteeringTrainResult r;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  {
    double total = 0.0;
    for (const auto& b : make_batches(samples, order, config.batch_size)) {
      total += retrieval_loss_and_grad(b, params, config.workers).loss * double(b.samples.size());
    }
    r.initial_loss = total / double(samples.size());
  }

  const AdamConfig adam{config.learning_rate, config.weight_decay};
  AdamState state;
  std::mt19937_64 rng(config.seed);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    Moments g, w1, w2;
    for (const auto& b : make_batches(samples, order, config.batch_size)) {
      LossAndGrad lg = retrieval_loss_and_grad(b, params, config.workers);
      total += lg.loss * double(b.samples.size());
      for (const auto& s : lg.stats) {
        g.add(s.g);
        w1.add(s.w1);
        w2.add(s.w2);
      }
      if (learn) adamw_step(steer, lg.grads, state, adam);
    }
    r.curve.push_back({epoch, total / double(samples.size()), g.mean(), g.stddev(), w1.mean(),
                       w2.mean()});
    spdlog::debug("epoch {} loss {:.6f} w1 {:.4f}", epoch, r.curve.back().mean_loss,
                  r.curve.back().mean_w1);
  }
  r.skipped_steps = state.skipped;
  if (learn) r.gate_stats = gate_statistics(corpus, tasks, params, config.workers);
  return r;
}

void write_training_csv(const std::filesystem::path& path, std::span<const EpochRecord> curve) {
  std::string out = "epoch,mean_loss,mean_g,std_g,mean_w1,mean_w2\n";
  for (const auto& e : curve) {
    out += fmt::format("{},{:.9f},{:.9f},{:.9f},{:.9f},{:.9f}\n", e.epoch, e.mean_loss, e.mean_g,
                       e.std_g, e.mean_w1, e.mean_w2);
  }
  io::write_file(path, out);
}

std::string gate_stats_csv(const std::map<std::string, GateStats>& stats) {
  std::string out = "qtype,count,mean_g,std_g,mean_w1,std_w1,mean_w2,std_w2\n";
  for (const auto& [k, s] : stats) {
    out += fmt::format("{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", k, s.count, s.mean_g,
                       s.std_g, s.mean_w1, s.std_w1, s.mean_w2, s.std_w2);
  }
  return out;
}

tape::GradCheckReport check_steering_gradients(const TrainBatch& batch, SteeringParams& params,
                                               double eps, std::size_t max_coords,
                                               std::uint64_t seed) {
  const auto all = params.trainable();
  std::vector<Parameter*> steer(all.begin(), all.begin() + 6);
  return tape::check_gradients(
      [&](Tape& t) { return retrieval_loss_on_tape(t, batch, params); }, steer, eps, max_coords,
      seed);
}

}  // namespace grail
