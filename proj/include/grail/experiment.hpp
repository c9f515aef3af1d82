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

// Batch runners for evidence completion and pool construction, and the
// per-task CSV / aggregate JSON reports built from them.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "grail/corpus.hpp"
#include "grail/metrics.hpp"
#include "grail/pool.hpp"

namespace grail {

struct CompletionRecord {
  std::string qid;
  std::string qtype;
  std::string target;
  std::optional<std::size_t> rank;
  std::vector<int> hits;  // recall_at_k for each requested K
  double delta_esc = 0.0;
  double g = 0.0;
  double w1 = 1.0;
  double w2 = 0.0;
  double tau = 0.0;
};

/// Errors: empty `ks`, tasks without target or context.
std::vector<CompletionRecord> run_completion(const CorpusIndex& corpus,
                                             std::span<const RetrievalTask> tasks,
                                             const RequestPolicy& policy,
                                             std::span<const std::size_t> ks,
                                             std::size_t workers = 1);

struct PoolRecord {
  std::string qid;
  std::string qtype;
  std::vector<std::string> gold;
  std::vector<std::string> base;
  std::vector<std::string> retrieved;
  std::vector<std::string> query_only;
  double set_recall = 0.0;
  double set_recall_qo = 0.0;
  JumpContribution jump;
  bool noisy = false;  // base block holds no gold item
  bool short_pool = false;
};

std::vector<PoolRecord> run_pool(const CorpusIndex& corpus, std::span<const RetrievalTask> tasks,
                                 const StepSchedule& schedule, const RequestPolicy& policy,
                                 std::size_t workers = 1);

struct CompletionSummary {
  std::vector<std::size_t> ks;
  std::vector<Aggregate> recall;  // one per K
  Aggregate delta_esc;
  Aggregate g, w1, w2;
};

CompletionSummary summarize_completion(std::span<const CompletionRecord> records,
                                       std::span<const std::size_t> ks);

struct PoolSummary {
  std::size_t k = 0;
  Aggregate set_recall;
  Aggregate set_recall_qo;
  std::optional<Distribution> jump;  // over queries with rescued items
  NrmResult nrm;
  std::size_t short_pools = 0;
};

PoolSummary summarize_pool(std::span<const PoolRecord> records, std::size_t k);

/// Restricts records to one qtype.
template <typename R>
std::vector<R> filter_qtype(std::span<const R> records, std::string_view qtype) {
  std::vector<R> out;
  for (const auto& r : records) {
    if (r.qtype == qtype) out.push_back(r);
  }
  return out;
}

std::string completion_csv(std::span<const CompletionRecord> records,
                           std::span<const std::size_t> ks);
std::string pool_csv(std::span<const PoolRecord> records);

nlohmann::json to_json(const Aggregate& a);
nlohmann::json to_json(const CompletionSummary& s);
nlohmann::json to_json(const PoolSummary& s);

/// Fixed-precision rendering so reports are byte-stable.
std::string fixed(double x);

}  // namespace grail
