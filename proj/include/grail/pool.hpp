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

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grail/corpus.hpp"
#include "grail/router.hpp"
#include "grail/search.hpp"
#include "grail/steering.hpp"

namespace grail {

/// Slice sizes [A, M_1, ..., M_T]; K is their sum.
struct StepSchedule {
  std::vector<std::size_t> slices;

  std::size_t total() const;
  std::size_t base() const { return slices.empty() ? 0 : slices.front(); }
  std::string to_string() const;
};

/// Grammar:  expr := term ('+' term)*   term := atom ('*' count)?
///           atom := number | '[' expr ']'
/// "3+2+3+2", "2*5", "[3+2]*2". Errors: zero slice or count, bad syntax.
StepSchedule parse_schedule(std::string_view text);

enum class RetrievalMode { kQueryOnly, kAdditive, kGap, kHybrid };

const char* retrieval_mode_name(RetrievalMode m) noexcept;
RetrievalMode parse_retrieval_mode(std::string_view name);

/// How a hop turns (q, acquired context) into a request vector.
class RequestPolicy {
 public:
  static RequestPolicy query_only();
  static RequestPolicy additive(double tau_base = kDefaultTauBase);
  static RequestPolicy gap(const SteeringParams& params);
  static RequestPolicy hybrid(const SteeringParams& additive, const SteeringParams& gap,
                              const RouterParams& router);
  /// Hybrid with per-qtype labels in place of the probe.
  static RequestPolicy oracle(const SteeringParams& additive, const SteeringParams& gap,
                              std::map<std::string, int> labels);

  RetrievalMode mode() const { return mode_; }
  bool uses_oracle() const { return !labels_.empty(); }

  /// Query-only returns h_req = q unchanged.
  SteeredQuery request(std::span<const double> q, std::span<const std::vector<double>> context,
                       std::string_view qtype = {}) const;

  DispatchCounters& counters() const { return *counters_; }

 private:
  RetrievalMode mode_ = RetrievalMode::kQueryOnly;
  double tau_base_ = kDefaultTauBase;
  const SteeringParams* additive_ = nullptr;
  const SteeringParams* gap_ = nullptr;
  const RouterParams* router_ = nullptr;
  std::map<std::string, int> labels_;
  std::shared_ptr<DispatchCounters> counters_ = std::make_shared<DispatchCounters>();
};

struct PoolHop {
  std::vector<double> request;
  std::vector<std::string> block;
  double g = 0.0;
  double w1 = 1.0;
  double w2 = 0.0;
};

struct PoolState {
  std::vector<PoolHop> hops;
  std::vector<std::string> accumulated;
  bool short_pool = false;
};

/// Hop 0 fetches A items with the raw query; every later hop steers from
/// the embeddings of all accumulated ids and excludes them from its search.
PoolState build_pool(const Searcher& searcher, std::span<const double> q,
                     const StepSchedule& schedule, const RequestPolicy& policy,
                     std::string_view qtype = {});

struct CompletionResult {
  RankedList list;
  std::optional<std::size_t> target_rank;
  SteeredQuery steered;
};

/// One steering step from the task's gold context, then top-K with the
/// context excluded. Requires a nonempty context and a target.
CompletionResult complete_evidence(const Searcher& searcher, const RetrievalTask& task,
                                   const RequestPolicy& policy, std::size_t k);

/// Widened copies of the corpus rows for `ids`.
std::vector<std::vector<double>> embeddings_of(const CorpusIndex& corpus,
                                               std::span<const std::string> ids);

}  // namespace grail
