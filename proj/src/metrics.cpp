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

#include "grail/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "grail/error.hpp"

namespace grail {

int recall_at_k(std::optional<std::size_t> rank, std::size_t k) {
  return rank && *rank >= 1 && *rank <= k ? 1 : 0;
}

double set_recall(std::span<const std::string> pool, std::span<const std::string> gold) {
  const std::set<std::string> g(gold.begin(), gold.end());
  if (g.empty()) fail(ErrorCode::kInvalidArgument, "set recall needs a nonempty gold set");
  const std::set<std::string> p(pool.begin(), pool.end());
  std::size_t hit = 0;
  for (const auto& id : g) hit += p.count(id);
  return double(hit) / double(g.size());
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::kDimensionMismatch, "cosine of unequal sizes");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) fail(ErrorCode::kInvalidArgument, "cosine of a zero vector");
  return ab / std::sqrt(aa * bb);
}

double escape_delta(std::span<const double> steered, std::span<const double> target,
                    std::span<const std::vector<double>> context) {
  if (context.empty()) fail(ErrorCode::kInvalidArgument, "escape delta needs context");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& e : context) best = std::max(best, cosine_similarity(steered, e));
  return cosine_similarity(steered, target) - best;
}

std::optional<double> JumpContribution::mean() const {
  if (baseline_ranks.empty()) return std::nullopt;
  double s = 0.0;
  for (auto r : baseline_ranks) s += double(r);
  return s / double(baseline_ranks.size());
}

JumpContribution rank_jump(std::span<const std::string> pool, std::span<const std::string> gold,
                           std::span<const std::string> baseline,
                           const std::function<std::size_t(const std::string&)>& baseline_rank) {
  if (baseline.empty()) fail(ErrorCode::kInvalidArgument, "rank jump needs a baseline list");
  const std::set<std::string> g(gold.begin(), gold.end());
  const std::set<std::string> b(baseline.begin(), baseline.end());
  std::set<std::string> seen;
  JumpContribution out;
  for (const auto& id : pool) {
    if (!g.count(id) || b.count(id) || !seen.insert(id).second) continue;
    out.rescued.push_back(id);
    out.baseline_ranks.push_back(baseline_rank(id));
  }
  return out;
}

double nearest_rank_percentile(std::span<const double> values, double pct) {
  if (values.empty()) fail(ErrorCode::kInvalidArgument, "percentile of empty set");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * double(v.size())));
  rank = std::clamp<std::size_t>(rank, 1, v.size());
  return v[rank - 1];
}

Distribution summarize(std::span<const double> values) {
  if (values.empty()) fail(ErrorCode::kInvalidArgument, "summary of empty set");
  Distribution d;
  d.count = values.size();
  for (double x : values) d.mean += x;
  d.mean /= double(values.size());
  double var = 0.0;
  for (double x : values) var += (x - d.mean) * (x - d.mean);
  d.std = std::sqrt(var / double(values.size()));
  d.p90 = nearest_rank_percentile(values, 90.0);
  return d;
}

NrmResult nrm(std::span<const NrmSample> samples) {
  NrmResult r;
  double total = 0.0;
  for (const auto& s : samples) {
    const std::set<std::string> g(s.gold.begin(), s.gold.end());
    const bool noisy = std::none_of(s.base.begin(), s.base.end(),
                                    [&](const std::string& id) { return g.count(id) > 0; });
    if (!noisy) continue;
    ++r.noisy;
    total += set_recall(s.retrieved, s.gold) - set_recall(s.query_only, s.gold);
  }
  if (r.noisy > 0) r.value = total / double(r.noisy);
  return r;
}

Aggregate aggregate(std::span<const GroupedValue> records, std::string_view grouping) {
  if (grouping != "qtype" && grouping != "none") {
    fail(ErrorCode::kInvalidArgument, fmt::format("unknown grouping key '{}'", grouping));
  }
  if (records.empty()) fail(ErrorCode::kInvalidArgument, "aggregate of no records");
  // Sorted summation keeps the result independent of record order.
  auto sorted_sum = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  };
  Aggregate a;
  std::map<std::string, std::vector<double>> groups;
  std::vector<double> all;
  all.reserve(records.size());
  for (const auto& r : records) {
    groups[grouping == "none" ? std::string("all") : r.group].push_back(r.value);
    all.push_back(r.value);
  }
  a.count = records.size();
  a.micro = sorted_sum(all) / double(records.size());
  std::vector<double> means;
  for (auto& [k, v] : groups) {
    a.group_count[k] = v.size();
    a.group_mean[k] = sorted_sum(v) / double(v.size());
    means.push_back(a.group_mean[k]);
  }
  a.macro = sorted_sum(means);
  a.macro /= double(groups.size());
  return a;
}

}  // namespace grail
