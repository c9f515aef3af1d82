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

#include "grail/search.hpp"

#include <algorithm>
#include <queue>

#include <fmt/format.h>

#include "grail/error.hpp"
#include "grail/parallel.hpp"

namespace grail {

std::vector<std::string> RankedList::ids() const {
  std::vector<std::string> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back(h.id);
  return out;
}

namespace {

struct Candidate {
  double score;
  std::uint32_t order;  // id ordinal
  std::size_t row;
};

// True when a ranks ahead of b.
inline bool ahead(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.order < b.order;
}

}  // namespace

void Searcher::check_query(std::span<const double> query) const {
  if (query.size() != corpus_->dim()) {
    fail(ErrorCode::kDimensionMismatch,
         fmt::format("query has dim {}, corpus has {}", query.size(), corpus_->dim()));
  }
}

double Searcher::score(std::span<const double> query, std::size_t row) const {
  const auto v = corpus_->row(row);
  double s = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) s += double(v[k]) * query[k];
  return s;
}

std::vector<std::size_t> Searcher::excluded_rows(std::span<const std::string> exclude) const {
  std::vector<std::size_t> rows;
  rows.reserve(exclude.size());
  for (const auto& id : exclude) rows.push_back(corpus_->row_of(id));
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rows;
}

RankedList Searcher::top_k(std::span<const double> query, std::size_t k,
                           std::span<const std::string> exclude) const {
  if (k < 1) fail(ErrorCode::kInvalidArgument, "top_k requires K >= 1");
  check_query(query);
  const auto skip = excluded_rows(exclude);
  const std::size_t n = corpus_->size();

  std::size_t shards = workers_ == 0 ? default_workers() : workers_;
  shards = std::max<std::size_t>(1, std::min(shards, n));
  std::vector<std::vector<Candidate>> partial(shards);

  parallel_shards(n, shards, [&](std::size_t begin, std::size_t end, std::size_t shard) {
    // Min-heap on rank order: the top is the weakest of the current best K.
    auto worse = [](const Candidate& a, const Candidate& b) { return ahead(a, b); };
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> heap(worse);
    auto ex = std::lower_bound(skip.begin(), skip.end(), begin);
    for (std::size_t r = begin; r < end; ++r) {
      if (ex != skip.end() && *ex == r) {
        ++ex;
        continue;
      }
      Candidate c{score(query, r), corpus_->id_order(r), r};
      if (heap.size() < k) {
        heap.push(c);
      } else if (ahead(c, heap.top())) {
        heap.pop();
        heap.push(c);
      }
    }
    auto& out = partial[shard];
    out.reserve(heap.size());
    while (!heap.empty()) {
      out.push_back(heap.top());
      heap.pop();
    }
  });

  std::vector<Candidate> merged;
  for (auto& p : partial) merged.insert(merged.end(), p.begin(), p.end());
  const std::size_t keep = std::min(k, merged.size());
  std::partial_sort(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(keep),
                    merged.end(), ahead);
  merged.resize(keep);

  RankedList list;
  list.excluded.assign(exclude.begin(), exclude.end());
  list.hits.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    list.hits.push_back({corpus_->id(merged[i].row), merged[i].row, merged[i].score, i + 1});
  }
  return list;
}

std::optional<std::size_t> Searcher::rank_of(std::span<const double> query,
                                             const std::string& target,
                                             std::span<const std::string> exclude) const {
  check_query(query);
  const std::size_t target_row = corpus_->row_of(target);
  const auto skip = excluded_rows(exclude);
  if (std::binary_search(skip.begin(), skip.end(), target_row)) return std::nullopt;

  const Candidate t{score(query, target_row), corpus_->id_order(target_row), target_row};
  const std::size_t n = corpus_->size();
  std::size_t shards = workers_ == 0 ? default_workers() : workers_;
  shards = std::max<std::size_t>(1, std::min(shards, n));
  std::vector<std::size_t> counts(shards, 0);
  parallel_shards(n, shards, [&](std::size_t begin, std::size_t end, std::size_t shard) {
    std::size_t ahead_count = 0;
    auto ex = std::lower_bound(skip.begin(), skip.end(), begin);
    for (std::size_t r = begin; r < end; ++r) {
      if (ex != skip.end() && *ex == r) {
        ++ex;
        continue;
      }
      if (r == target_row) continue;
      if (ahead({score(query, r), corpus_->id_order(r), r}, t)) ++ahead_count;
    }
    counts[shard] = ahead_count;
  });
  std::size_t rank = 1;
  for (auto c : counts) rank += c;
  return rank;
}

}  // namespace grail
