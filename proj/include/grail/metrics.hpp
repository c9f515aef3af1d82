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
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grail/search.hpp"

namespace grail {

int recall_at_k(std::optional<std::size_t> rank, std::size_t k);

/// |pool & gold| / |gold|. Errors: empty gold.
double set_recall(std::span<const std::string> pool, std::span<const std::string> gold);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// sim(q', e_t) - max_i sim(q', e_i), cosine throughout. Errors: empty context.
double escape_delta(std::span<const double> steered, std::span<const double> target,
                    std::span<const std::vector<double>> context);

/// Gold items in the pool that the query-only top-K missed, with their
/// query-only ranks.
struct JumpContribution {
  std::vector<std::string> rescued;
  std::vector<std::size_t> baseline_ranks;

  /// Mean baseline rank, absent when nothing was rescued.
  std::optional<double> mean() const;
};

/// S = (pool & gold) \ baseline. `baseline_rank` maps an id to its rank under
/// the query-only ordering. Errors: empty baseline list.
JumpContribution rank_jump(std::span<const std::string> pool, std::span<const std::string> gold,
                           std::span<const std::string> baseline,
                           const std::function<std::size_t(const std::string&)>& baseline_rank);

struct Distribution {
  std::size_t count = 0;
  double mean = 0.0;
  double p90 = 0.0;  // nearest rank
  double std = 0.0;  // population
};

/// Errors: empty input.
Distribution summarize(std::span<const double> values);
double nearest_rank_percentile(std::span<const double> values, double pct);

struct NrmSample {
  std::vector<std::string> base;  // shared hop-0 block
  std::vector<std::string> gold;
  std::vector<std::string> retrieved;
  std::vector<std::string> query_only;
};

struct NrmResult {
  std::size_t noisy = 0;        // |Q_n|
  std::optional<double> value;  // absent when Q_n is empty
};

/// Mean Set-Rec gain over the query-only pool across tasks whose base block
/// holds no gold item.
NrmResult nrm(std::span<const NrmSample> samples);

struct GroupedValue {
  std::string group;
  double value = 0.0;
};

struct Aggregate {
  double micro = 0.0;
  double macro = 0.0;
  std::size_t count = 0;
  std::map<std::string, double> group_mean;
  std::map<std::string, std::size_t> group_count;
};

/// Micro mean over records and macro mean over per-group means. `grouping`
/// is "qtype" (use each record's group) or "none". Errors: empty records,
/// unknown grouping key.
Aggregate aggregate(std::span<const GroupedValue> records, std::string_view grouping = "qtype");

}  // namespace grail
