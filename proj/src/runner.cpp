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

#include "grail/runner.hpp"

#include <algorithm>
#include <charconv>
#include <mutex>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "grail/error.hpp"
#include "grail/experiment.hpp"
#include "grail/io.hpp"
#include "grail/synthgen.hpp"

namespace grail::run {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::mutex g_config_mu;
json g_run_config;

void write_json(const fs::path& path, json j) {
  {
    std::lock_guard lock(g_config_mu);
    if (!g_run_config.is_null()) j["run_config"] = g_run_config;
  }
  io::write_file(path, j.dump(2) + "\n");
}

}  // namespace

Options parse_options(std::string_view text) {
  Options out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find_first_of(",\n", pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view item = trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (item.empty() || item.front() == '#') continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorCode::kInvalidArgument, fmt::format("option '{}' is not key=value", item));
    }
    const std::string key(trim(item.substr(0, eq)));
    if (key.empty()) fail(ErrorCode::kInvalidArgument, fmt::format("option '{}' has no key", item));
    out[key] = std::string(trim(item.substr(eq + 1)));
  }
  return out;
}

std::optional<std::string> Reader::text(const std::string& key) {
  const auto it = options_->find(key);
  if (it == options_->end()) return std::nullopt;
  used_.insert(key);
  return it->second;
}

namespace {

template <typename T>
T convert(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    fail(ErrorCode::kInvalidArgument, fmt::format("option '{}': bad value '{}'", key, value));
  }
  return out;
}

}  // namespace

std::size_t Reader::count(const std::string& key, std::size_t fallback) {
  const auto v = text(key);
  return v ? convert<std::size_t>(key, *v) : fallback;
}

double Reader::real(const std::string& key, double fallback) {
  const auto v = text(key);
  return v ? convert<double>(key, *v) : fallback;
}

std::uint64_t Reader::u64(const std::string& key, std::uint64_t fallback) {
  const auto v = text(key);
  return v ? convert<std::uint64_t>(key, *v) : fallback;
}

bool Reader::flag(const std::string& key, bool fallback) {
  const auto v = text(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  fail(ErrorCode::kInvalidArgument, fmt::format("option '{}': expected true or false", key));
}

void Reader::finish() const {
  for (const auto& [k, v] : *options_) {
    if (!used_.count(k)) fail(ErrorCode::kInvalidArgument, fmt::format("unknown option '{}'", k));
  }
}

TrainConfig train_config(Reader& r) {
  TrainConfig c;
  c.batch_size = r.count("batch", c.batch_size);
  c.epochs = r.count("epochs", c.epochs);
  c.learning_rate = r.real("lr", c.learning_rate);
  c.tau = r.real("tau", c.tau);
  c.hard_negatives = r.count("negatives", c.hard_negatives);
  c.seed = r.u64("seed", c.seed);
  c.weight_decay = r.real("weight_decay", c.weight_decay);
  c.workers = r.count("workers", c.workers);
  if (c.batch_size == 0 || c.epochs == 0 || !(c.learning_rate > 0) || !(c.tau > 0) ||
      c.weight_decay < 0) {
    fail(ErrorCode::kInvalidArgument, "training options must be positive");
  }
  return c;
}

namespace {

json config_json(const TrainConfig& c) {
  return {{"batch", c.batch_size},      {"epochs", c.epochs},
          {"lr", fixed(c.learning_rate)}, {"tau", fixed(c.tau)},
          {"negatives", c.hard_negatives}, {"seed", c.seed},
          {"weight_decay", fixed(c.weight_decay)}};
}

json gate_json(const std::map<std::string, GateStats>& stats) {
  json j = json::object();
  for (const auto& [k, s] : stats) {
    j[k] = {{"count", s.count},        {"mean_g", fixed(s.mean_g)},   {"std_g", fixed(s.std_g)},
            {"mean_w1", fixed(s.mean_w1)}, {"std_w1", fixed(s.std_w1)}, {"mean_w2", fixed(s.mean_w2)},
            {"std_w2", fixed(s.std_w2)}};
  }
  return j;
}

}  // namespace

void set_run_config(json config) {
  std::lock_guard lock(g_config_mu);
  g_run_config = std::move(config);
}

json ingest(const fs::path& vectors, const fs::path& meta, const fs::path& out) {
  VectorBlock block = read_vector_file(vectors);
  const CorpusIndex corpus = normalize(grail::ingest(read_metadata(meta), block.dim, std::move(block.data)));
  save_corpus(corpus, out / "corpus.grle", out / "meta.jsonl");
  json j;
  j["items"] = corpus.size();
  j["dim"] = corpus.dim();
  write_json(out / "ingest.json", j);
  return j;
}

json synth(const Options& options, const fs::path& out) {
  SynthSpec spec;
  for (const auto& [k, v] : options) apply_synth_option(spec, k, v);
  const SynthResult r = generate(spec);
  write_synth(r, out);
  json j;
  j["items"] = r.corpus.size();
  j["dim"] = r.corpus.dim();
  j["tasks"] = r.tasks.size();
  j["certified"] = {{kComposeType, r.certified(kComposeType)},
                    {kAggregateType, r.certified(kAggregateType)}};
  j["seed"] = spec.seed;
  json opts = json::object();
  for (const auto& [k, v] : options) opts[k] = v;
  j["options"] = opts;
  write_json(out / "synth.json", j);
  return j;
}

std::vector<RetrievalTask> completion_tasks(const CorpusIndex& corpus,
                                            std::span<const RetrievalTask> tasks) {
  const bool targeted = std::all_of(tasks.begin(), tasks.end(),
                                    [](const RetrievalTask& t) { return t.target.has_value(); });
  if (targeted) return {tasks.begin(), tasks.end()};
  const bool none = std::none_of(tasks.begin(), tasks.end(),
                                 [](const RetrievalTask& t) { return t.target.has_value(); });
  if (!none) fail(ErrorCode::kContract, "task file mixes targeted and untargeted tasks");
  return expand_leave_one_out(tasks, corpus);
}

json train_steering(const CorpusIndex& corpus, std::span<const RetrievalTask> tasks,
                    SteeringParams& params, const Options& options, const fs::path& out) {
  Reader r(options);
  const TrainConfig cfg = train_config(r);
  const auto qtype = r.text("qtype");
  r.finish();
  std::vector<RetrievalTask> train = completion_tasks(corpus, tasks);
  if (qtype) {
    std::erase_if(train, [&](const RetrievalTask& t) { return t.qtype != *qtype; });
    if (train.empty()) fail(ErrorCode::kInvalidArgument, fmt::format("no tasks of qtype '{}'", *qtype));
  }
  const SteeringTrainResult res = train_steering(corpus, train, cfg, params);
  save_params(params, out / "params.grlp");
  write_training_csv(out / "training.csv", res.curve);
  io::write_file(out / "gate_stats.csv", gate_stats_csv(res.gate_stats));
  json j;
  j["config"] = config_json(cfg);
  j["mode"] = steering_mode_name(params.mode);
  j["use_mix"] = params.use_mix;
  j["qtype"] = qtype ? json(*qtype) : json(nullptr);
  j["samples"] = train.size();
  j["initial_loss"] = fixed(res.initial_loss);
  j["final_loss"] = fixed(res.curve.empty() ? res.initial_loss : res.curve.back().mean_loss);
  j["skipped_steps"] = res.skipped_steps;
  j["gate_stats"] = gate_json(res.gate_stats);
  write_json(out / "train_steer.json", j);
  return j;
}

json train_alignment(const CorpusIndex& corpus, std::span<const RetrievalTask> tasks,
                     SteeringParams& params, const Options& options, const fs::path& out) {
  Reader r(options);
  const TrainConfig cfg = train_config(r);
  const AlignmentStrategy strategy =
      parse_alignment_strategy(r.text("strategy").value_or("centroid"));
  r.finish();
  if (corpus.dim() != params.dim) {
    fail(ErrorCode::kDimensionMismatch, "params and corpus dimensions differ");
  }
  const auto chains = make_chains(corpus, tasks);
  std::set<Modality> present;
  for (std::size_t i = 0; i < corpus.size(); ++i) present.insert(corpus.modality(i));
  const std::vector<Modality> modalities(present.begin(), present.end());
  AlignmentTrainResult res = train_alignment(chains, strategy, cfg, modalities);
  params.projections = std::move(res.projections);
  save_params(params, out / "params.grlp");
  std::string csv = "epoch,mean_loss\n";
  csv += fmt::format("0,{:.9f}\n", res.initial_loss);
  for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) {
    csv += fmt::format("{},{:.9f}\n", e + 1, res.epoch_loss[e]);
  }
  io::write_file(out / "alignment.csv", csv);
  json j;
  j["config"] = config_json(cfg);
  j["strategy"] = alignment_strategy_name(strategy);
  j["chains"] = chains.size();
  j["initial_loss"] = fixed(res.initial_loss);
  j["final_loss"] = fixed(res.epoch_loss.empty() ? res.initial_loss : res.epoch_loss.back());
  write_json(out / "train_align.json", j);
  return j;
}

json train_router(std::span<const RetrievalTask> tasks, const std::map<std::string, int>& route_map,
                  RouterParams& router, const Options& options, const fs::path& out) {
  Reader r(options);
  RouterTrainConfig cfg;
  cfg.iterations = r.count("iterations", cfg.iterations);
  cfg.learning_rate = r.real("lr", cfg.learning_rate);
  cfg.holdout_fraction = r.real("holdout", cfg.holdout_fraction);
  cfg.seed = r.u64("seed", cfg.seed);
  r.finish();
  std::vector<std::vector<double>> queries;
  std::vector<int> labels;
  for (const auto& t : tasks) {
    const auto it = route_map.find(t.qtype);
    if (it == route_map.end()) {
      fail(ErrorCode::kNotFound, fmt::format("task '{}': no route label for qtype '{}'", t.qid, t.qtype));
    }
    queries.push_back(t.query);
    labels.push_back(it->second);
  }
  const RouterTrainResult res = train_router(queries, labels, cfg);
  router = res.params;
  save_router(router, out / "router.bin");
  json j;
  j["iterations"] = cfg.iterations;
  j["lr"] = fixed(cfg.learning_rate);
  j["holdout_fraction"] = fixed(cfg.holdout_fraction);
  j["seed"] = cfg.seed;
  j["train_count"] = res.report.train_count;
  j["holdout_count"] = res.report.holdout_count;
  j["initial_accuracy"] = fixed(res.report.initial_accuracy);
  j["train_accuracy"] = fixed(res.report.train_accuracy);
  j["holdout_accuracy"] = fixed(res.report.holdout_accuracy);
  j["holdout_f1"] = fixed(res.report.holdout_f1);
  write_json(out / "train_router.json", j);
  return j;
}

RequestPolicy make_policy(RetrievalMode mode, const Specialists& s, SteeringParams& additive) {
  switch (mode) {
    case RetrievalMode::kQueryOnly: return RequestPolicy::query_only();
    case RetrievalMode::kAdditive: return RequestPolicy::additive(s.tau_base);
    case RetrievalMode::kGap:
      if (!s.gap) fail(ErrorCode::kInvalidArgument, "gap mode needs steering params");
      return RequestPolicy::gap(*s.gap);
    case RetrievalMode::kHybrid:
      if (!s.gap) fail(ErrorCode::kInvalidArgument, "hybrid mode needs gap steering params");
      additive = SteeringParams::create(s.gap->dim, s.gap->hidden, true, SteeringMode::kAdditive, 0,
                                        s.tau_base);
      if (!s.oracle.empty()) return RequestPolicy::oracle(additive, *s.gap, s.oracle);
      if (!s.router) fail(ErrorCode::kInvalidArgument, "hybrid mode needs a router or a route map");
      return RequestPolicy::hybrid(additive, *s.gap, *s.router);
  }
  fail(ErrorCode::kContract, "unhandled mode");
}

namespace {

json dispatch_json(const RequestPolicy& p) {
  return {{"additive", p.counters().additive.load()}, {"gap", p.counters().gap.load()}};
}

json complete_into(const CorpusIndex& corpus, std::span<const RetrievalTask> tasks,
                   RetrievalMode mode, const Specialists& s, std::span<const std::size_t> ks,
                   std::size_t workers, const fs::path& out) {
  SteeringParams additive;
  const RequestPolicy policy = make_policy(mode, s, additive);
  const auto records = run_completion(corpus, tasks, policy, ks, workers);
  const std::string name = retrieval_mode_name(mode);
  io::write_file(out / fmt::format("completion_{}.csv", name), completion_csv(records, ks));
  json j = to_json(summarize_completion(records, ks));
  j["mode"] = name;
  j["instances"] = records.size();
  j["dispatch"] = dispatch_json(policy);
  return j;
}

json pool_into(const CorpusIndex& corpus, std::span<const RetrievalTask> tasks, RetrievalMode mode,
               const Specialists& s, const StepSchedule& schedule, std::size_t workers,
               const fs::path& out) {
  SteeringParams additive;
  const RequestPolicy policy = make_policy(mode, s, additive);
  const auto records = run_pool(corpus, tasks, schedule, policy, workers);
  const std::string name = retrieval_mode_name(mode);
  io::write_file(out / fmt::format("pool_{}.csv", name), pool_csv(records));
  json j = to_json(summarize_pool(records, schedule.total()));
  j["mode"] = name;
  j["schedule"] = schedule.to_string();
  j["tasks"] = records.size();
  j["dispatch"] = dispatch_json(policy);
  return j;
}

}  // namespace

json complete(const CorpusIndex& corpus, std::span<const RetrievalTask> tasks, RetrievalMode mode,
              const Specialists& specialists, std::span<const std::size_t> ks,
              std::size_t workers, const fs::path& out) {
  const auto inst = completion_tasks(corpus, tasks);
  json j = complete_into(corpus, inst, mode, specialists, ks, workers, out);
  write_json(out / fmt::format("completion_{}.json", retrieval_mode_name(mode)), j);
  return j;
}

json build_pool(const CorpusIndex& corpus, std::span<const RetrievalTask> tasks,
                RetrievalMode mode, const Specialists& specialists, const StepSchedule& schedule,
                std::size_t workers, const fs::path& out) {
  json j = pool_into(corpus, tasks, mode, specialists, schedule, workers, out);
  write_json(out / fmt::format("pool_{}.json", retrieval_mode_name(mode)), j);
  return j;
}

json eval(const CorpusIndex& corpus, std::span<const RetrievalTask> tasks,
          const Specialists& specialists, std::span<const std::size_t> ks,
          const StepSchedule& schedule, std::size_t workers, const fs::path& out) {
  std::vector<RetrievalMode> modes{RetrievalMode::kQueryOnly, RetrievalMode::kAdditive};
  if (specialists.gap) modes.push_back(RetrievalMode::kGap);
  if (specialists.gap && (specialists.router || !specialists.oracle.empty())) {
    modes.push_back(RetrievalMode::kHybrid);
  }
  const auto inst = completion_tasks(corpus, tasks);
  json j;
  j["schedule"] = schedule.to_string();
  j["ks"] = std::vector<std::size_t>(ks.begin(), ks.end());
  for (RetrievalMode m : modes) {
    const std::string name = retrieval_mode_name(m);
    j["completion"][name] = complete_into(corpus, inst, m, specialists, ks, workers, out);
    j["pool"][name] = pool_into(corpus, tasks, m, specialists, schedule, workers, out);
  }
  if (specialists.gap) {
    j["gate_stats"] = gate_json(gate_statistics(corpus, inst, *specialists.gap, workers));
  }
  write_json(out / "eval.json", j);
  return j;
}

json grad_check(const CorpusIndex& corpus, std::span<const RetrievalTask> tasks,
                SteeringParams& params, std::size_t batch, std::size_t batches,
                std::uint64_t seed) {
  if (batch == 0 || batches == 0) fail(ErrorCode::kInvalidArgument, "grad-check needs batches");
  const auto inst = completion_tasks(corpus, tasks);
  const auto samples = make_samples(corpus, inst, 4);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto all = make_batches(samples, order, batch);
  json j;
  j["batches"] = json::array();
  double worst = 0.0;
  for (std::size_t b = 0; b < std::min(batches, all.size()); ++b) {
    const auto rep = check_steering_gradients(all[b], params, 1e-4, 64, seed + b);
    json entry;
    entry["max_rel_error"] = fmt::format("{:.3e}", rep.max_rel_error);
    for (const auto& e : rep.entries) {
      entry["tensors"][e.param] = {{"coords", e.coords_checked},
                                   {"rel_error", fmt::format("{:.3e}", e.rel_error)},
                                   {"max_coord_error", fmt::format("{:.3e}", e.max_coord_error)}};
    }
    worst = std::max(worst, rep.max_rel_error);
    j["batches"].push_back(entry);
  }
  j["max_rel_error"] = fmt::format("{:.3e}", worst);
  j["max_rel_error_value"] = worst;
  j["tolerance"] = 1e-4;
  j["passed"] = worst <= 1e-4;
  return j;
}

std::vector<std::size_t> parse_ks(std::string_view text) {
  std::vector<std::size_t> ks;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    ks.push_back(convert<std::size_t>("k", std::string(trim(text.substr(pos, end - pos)))));
    pos = end + 1;
  }
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.front() == 0) fail(ErrorCode::kInvalidArgument, "K values must be >= 1");
  return ks;
}

}  // namespace grail::run
