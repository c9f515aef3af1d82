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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grail/corpus.hpp"

namespace grail {

struct ScoredHit {
  std::string id;
  std::size_t row = 0;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based
};

struct RankedList {
  std::vector<ScoredHit> hits;
  std::vector<std::string> excluded;

  std::vector<std::string> ids() const;
};

/// Exact inner-product search over a CorpusIndex. Hits are ordered by
/// descending score with ascending id breaking ties, so results do not
/// depend on the worker count.
class Searcher {
 public:
  explicit Searcher(const CorpusIndex& corpus, std::size_t workers = 1)
      : corpus_(&corpus), workers_(workers) {}

  const CorpusIndex& corpus() const { return *corpus_; }
  std::size_t workers() const { return workers_; }

  /// K highest-scoring rows not in `exclude`; min(K, N - |exclude|) hits.
  /// Errors: K < 1, query dimension mismatch, unknown excluded id.
  RankedList top_k(std::span<const double> query, std::size_t k,
                   std::span<const std::string> exclude = {}) const;

  /// 1-based rank of `target` under the same order, or nullopt when the
  /// target is itself excluded. Unknown target ids throw kNotFound.
  std::optional<std::size_t> rank_of(std::span<const double> query, const std::string& target,
                                     std::span<const std::string> exclude = {}) const;

  double score(std::span<const double> query, std::size_t row) const;

 private:
  std::vector<std::size_t> excluded_rows(std::span<const std::string> exclude) const;
  void check_query(std::span<const double> query) const;

  const CorpusIndex* corpus_;
  std::size_t workers_;
};

}  // namespace grail
