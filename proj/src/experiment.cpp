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

#include "grail/experiment.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "grail/error.hpp"
#include "grail/parallel.hpp"

namespace grail {

using json = nlohmann::json;

std::string fixed(double x) { return fmt::format("{:.6f}", x); }

std::vector<CompletionRecord> run_completion(const CorpusIndex& corpus,
                                             std::span<const RetrievalTask> tasks,
                                             const RequestPolicy& policy,
                                             std::span<const std::size_t> ks,
                                             std::size_t workers) {
  if (ks.empty()) fail(ErrorCode::kInvalidArgument, "no K values requested");
  const std::size_t kmax = *std::max_element(ks.begin(), ks.end());
  const Searcher searcher(corpus, 1);
  std::vector<CompletionRecord> out(tasks.size());
  parallel_for(tasks.size(), workers, [&](std::size_t i) {
    const RetrievalTask& t = tasks[i];
    const CompletionResult res = complete_evidence(searcher, t, policy, kmax);
    CompletionRecord& r = out[i];
    r.qid = t.qid;
    r.qtype = t.qtype;
    r.target = *t.target;
    r.rank = res.target_rank;
    for (std::size_t k : ks) r.hits.push_back(recall_at_k(r.rank, k));
    const auto ctx = embeddings_of(corpus, t.context);
    const auto tgt = embeddings_of(corpus, std::span<const std::string>(&*t.target, 1));
    r.delta_esc = escape_delta(res.steered.h_req, tgt.front(), ctx);
    r.g = res.steered.g;
    r.w1 = res.steered.w1;
    r.w2 = res.steered.w2;
    r.tau = res.steered.tau_dyn;
  });
  return out;
}

std::vector<PoolRecord> run_pool(const CorpusIndex& corpus, std::span<const RetrievalTask> tasks,
                                 const StepSchedule& schedule, const RequestPolicy& policy,
                                 std::size_t workers) {
  const std::size_t k = schedule.total();
  const Searcher searcher(corpus, 1);
  std::vector<PoolRecord> out(tasks.size());
  parallel_for(tasks.size(), workers, [&](std::size_t i) {
    const RetrievalTask& t = tasks[i];
    const PoolState state = build_pool(searcher, t.query, schedule, policy, t.qtype);
    PoolRecord& r = out[i];
    r.qid = t.qid;
    r.qtype = t.qtype;
    r.gold = t.gold;
    r.base = state.hops.front().block;
    r.retrieved = state.accumulated;
    r.query_only = searcher.top_k(t.query, k).ids();
    r.short_pool = state.short_pool;
    r.set_recall = set_recall(r.retrieved, r.gold);
    r.set_recall_qo = set_recall(r.query_only, r.gold);
    r.jump = rank_jump(r.retrieved, r.gold, r.query_only, [&](const std::string& id) {
      return *searcher.rank_of(t.query, id);
    });
    r.noisy = std::none_of(r.base.begin(), r.base.end(), [&](const std::string& id) {
      return std::find(r.gold.begin(), r.gold.end(), id) != r.gold.end();
    });
  });
  return out;
}

namespace {

Aggregate aggregate_field(std::span<const CompletionRecord> records,
                          double (*get)(const CompletionRecord&)) {
  std::vector<GroupedValue> v;
  v.reserve(records.size());
  for (const auto& r : records) v.push_back({r.qtype, get(r)});
  return aggregate(v);
}

}  // namespace

CompletionSummary summarize_completion(std::span<const CompletionRecord> records,
                                       std::span<const std::size_t> ks) {
  CompletionSummary s;
  s.ks.assign(ks.begin(), ks.end());
  for (std::size_t j = 0; j < ks.size(); ++j) {
    std::vector<GroupedValue> v;
    for (const auto& r : records) v.push_back({r.qtype, double(r.hits.at(j))});
    s.recall.push_back(aggregate(v));
  }
  s.delta_esc = aggregate_field(records, [](const CompletionRecord& r) { return r.delta_esc; });
  s.g = aggregate_field(records, [](const CompletionRecord& r) { return r.g; });
  s.w1 = aggregate_field(records, [](const CompletionRecord& r) { return r.w1; });
  s.w2 = aggregate_field(records, [](const CompletionRecord& r) { return r.w2; });
  return s;
}

PoolSummary summarize_pool(std::span<const PoolRecord> records, std::size_t k) {
  PoolSummary s;
  s.k = k;
  std::vector<GroupedValue> ret, qo;
  std::vector<double> jumps;
  std::vector<NrmSample> nrm;
  for (const auto& r : records) {
    ret.push_back({r.qtype, r.set_recall});
    qo.push_back({r.qtype, r.set_recall_qo});
    if (auto m = r.jump.mean()) jumps.push_back(*m);
    nrm.push_back({r.base, r.gold, r.retrieved, r.query_only});
    s.short_pools += r.short_pool ? 1 : 0;
  }
  s.set_recall = aggregate(ret);
  s.set_recall_qo = aggregate(qo);
  if (!jumps.empty()) s.jump = summarize(jumps);
  s.nrm = grail::nrm(nrm);
  return s;
}

std::string completion_csv(std::span<const CompletionRecord> records,
                           std::span<const std::size_t> ks) {
  std::string out = "qid,qtype,target,rank";
  for (std::size_t k : ks) out += fmt::format(",r_at_{}", k);
  out += ",delta_esc,g,w1,w2,tau\n";
  for (const auto& r : records) {
    out += fmt::format("{},{},{},{}", r.qid, r.qtype, r.target,
                       r.rank ? std::to_string(*r.rank) : std::string());
    for (int h : r.hits) out += fmt::format(",{}", h);
    out += fmt::format(",{},{},{},{},{}\n", fixed(r.delta_esc), fixed(r.g), fixed(r.w1),
                       fixed(r.w2), fixed(r.tau));
  }
  return out;
}

std::string pool_csv(std::span<const PoolRecord> records) {
  std::string out =
      "qid,qtype,set_recall,set_recall_qo,noisy,rescued,jump_mean,short_pool,retrieved\n";
  for (const auto& r : records) {
    const auto m = r.jump.mean();
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.qid, r.qtype, fixed(r.set_recall),
                       fixed(r.set_recall_qo), r.noisy ? 1 : 0, r.jump.rescued.size(),
                       m ? fixed(*m) : std::string(), r.short_pool ? 1 : 0,
                       fmt::join(r.retrieved, " "));
  }
  return out;
}

json to_json(const Aggregate& a) {
  json j;
  j["count"] = a.count;
  j["micro"] = fixed(a.micro);
  j["macro"] = fixed(a.macro);
  for (const auto& [k, m] : a.group_mean) {
    j["groups"][k] = {{"count", a.group_count.at(k)}, {"mean", fixed(m)}};
  }
  return j;
}

json to_json(const CompletionSummary& s) {
  json j;
  for (std::size_t i = 0; i < s.ks.size(); ++i) {
    j["recall"][fmt::format("r_at_{}", s.ks[i])] = to_json(s.recall[i]);
  }
  j["delta_esc"] = to_json(s.delta_esc);
  j["g"] = to_json(s.g);
  j["w1"] = to_json(s.w1);
  j["w2"] = to_json(s.w2);
  return j;
}

json to_json(const PoolSummary& s) {
  json j;
  j["k"] = s.k;
  j["set_recall"] = to_json(s.set_recall);
  j["set_recall_query_only"] = to_json(s.set_recall_qo);
  if (s.jump) {
    j["jump"] = {{"queries", s.jump->count},
                 {"mean", fixed(s.jump->mean)},
                 {"p90", fixed(s.jump->p90)},
                 {"std", fixed(s.jump->std)}};
  } else {
    j["jump"] = nullptr;
  }
  j["nrm"] = {{"noisy_tasks", s.nrm.noisy},
              {"value", s.nrm.value ? json(fixed(*s.nrm.value)) : json(nullptr)}};
  j["short_pools"] = s.short_pools;
  return j;
}

}  // namespace grail
