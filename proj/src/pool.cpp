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

#include "grail/pool.hpp"

#include <cctype>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "grail/error.hpp"

namespace grail {

std::size_t StepSchedule::total() const {
  return std::accumulate(slices.begin(), slices.end(), std::size_t{0});
}

std::string StepSchedule::to_string() const { return fmt::format("{}", fmt::join(slices, "+")); }

namespace {

class ScheduleParser {
 public:
  explicit ScheduleParser(std::string_view text) : text_(text) {}

  std::vector<std::size_t> parse() {
    auto out = expr();
    if (pos_ != text_.size()) error("unexpected character");
    return out;
  }

 private:
  std::vector<std::size_t> expr() {
    auto out = term();
    while (peek() == '+') {
      ++pos_;
      auto more = term();
      out.insert(out.end(), more.begin(), more.end());
    }
    return out;
  }

  std::vector<std::size_t> term() {
    std::vector<std::size_t> base;
    if (peek() == '[') {
      ++pos_;
      base = expr();
      if (peek() != ']') error("expected ']'");
      ++pos_;
    } else {
      base.push_back(number("slice"));
    }
    if (peek() != '*') return base;
    ++pos_;
    const std::size_t times = number("repeat count");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < times; ++i) out.insert(out.end(), base.begin(), base.end());
    return out;
  }

  std::size_t number(const char* what) {
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(text_[pos_] - '0');
      if (v > 1'000'000) error("number too large");
      ++pos_;
    }
    if (pos_ == start) error(fmt::format("expected {}", what).c_str());
    if (v == 0) fail(ErrorCode::kInvalidArgument, fmt::format("schedule '{}': zero {}", text_, what));
    return v;
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  [[noreturn]] void error(const char* msg) const {
    fail(ErrorCode::kFormat, fmt::format("schedule '{}': {} at offset {}", text_, msg, pos_));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

StepSchedule parse_schedule(std::string_view text) {
  if (text.empty()) fail(ErrorCode::kFormat, "empty schedule");
  return StepSchedule{ScheduleParser(text).parse()};
}

const char* retrieval_mode_name(RetrievalMode m) noexcept {
  switch (m) {
    case RetrievalMode::kQueryOnly: return "query_only";
    case RetrievalMode::kAdditive: return "additive";
    case RetrievalMode::kGap: return "gap";
    case RetrievalMode::kHybrid: return "hybrid";
  }
  return "unknown";
}

RetrievalMode parse_retrieval_mode(std::string_view name) {
  if (name == "query_only") return RetrievalMode::kQueryOnly;
  if (name == "additive") return RetrievalMode::kAdditive;
  if (name == "gap") return RetrievalMode::kGap;
  if (name == "hybrid") return RetrievalMode::kHybrid;
  fail(ErrorCode::kInvalidArgument, fmt::format("unknown mode '{}'", name));
}

RequestPolicy RequestPolicy::query_only() { return RequestPolicy{}; }

RequestPolicy RequestPolicy::additive(double tau_base) {
  RequestPolicy p;
  p.mode_ = RetrievalMode::kAdditive;
  p.tau_base_ = tau_base;
  return p;
}

RequestPolicy RequestPolicy::gap(const SteeringParams& params) {
  RequestPolicy p;
  p.mode_ = RetrievalMode::kGap;
  p.gap_ = &params;
  return p;
}

RequestPolicy RequestPolicy::hybrid(const SteeringParams& additive, const SteeringParams& gap,
                                    const RouterParams& router) {
  RequestPolicy p;
  p.mode_ = RetrievalMode::kHybrid;
  p.additive_ = &additive;
  p.gap_ = &gap;
  p.router_ = &router;
  return p;
}

RequestPolicy RequestPolicy::oracle(const SteeringParams& additive, const SteeringParams& gap,
                                    std::map<std::string, int> labels) {
  if (labels.empty()) fail(ErrorCode::kInvalidArgument, "oracle routing needs a label map");
  RequestPolicy p;
  p.mode_ = RetrievalMode::kHybrid;
  p.additive_ = &additive;
  p.gap_ = &gap;
  p.labels_ = std::move(labels);
  return p;
}

SteeredQuery RequestPolicy::request(std::span<const double> q,
                                    std::span<const std::vector<double>> context,
                                    std::string_view qtype) const {
  switch (mode_) {
    case RetrievalMode::kQueryOnly: {
      SteeredQuery s;
      s.h_req.assign(q.begin(), q.end());
      s.q_gap = s.h_req;
      s.tau_dyn = tau_base_;
      return s;
    }
    case RetrievalMode::kAdditive:
      ++counters_->additive;
      return additive_request(q, context, tau_base_);
    case RetrievalMode::kGap:
      ++counters_->gap;
      return gap_request(q, context, *gap_);
    case RetrievalMode::kHybrid: {
      if (!additive_ || !gap_) fail(ErrorCode::kContract, "hybrid mode needs both specialists");
      if (!labels_.empty()) {
        const auto it = labels_.find(std::string(qtype));
        if (it == labels_.end()) {
          fail(ErrorCode::kNotFound, fmt::format("no route label for qtype '{}'", qtype));
        }
        return dispatch_request(q, context, it->second, *additive_, *gap_, counters_.get());
      }
      if (!router_) fail(ErrorCode::kContract, "hybrid mode needs a router");
      return hybrid_request(q, context, *additive_, *gap_, *router_, counters_.get());
    }
  }
  fail(ErrorCode::kContract, "unhandled retrieval mode");
}

std::vector<std::vector<double>> embeddings_of(const CorpusIndex& corpus,
                                               std::span<const std::string> ids) {
  std::vector<std::vector<double>> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto row = corpus.row(corpus.row_of(id));
    out.emplace_back(row.begin(), row.end());
  }
  return out;
}

PoolState build_pool(const Searcher& searcher, std::span<const double> q,
                     const StepSchedule& schedule, const RequestPolicy& policy,
                     std::string_view qtype) {
  if (schedule.slices.empty()) fail(ErrorCode::kInvalidArgument, "empty schedule");
  const std::size_t k = schedule.total();
  if (searcher.corpus().size() < k) {
    fail(ErrorCode::kInvalidArgument,
         fmt::format("corpus has {} items, schedule needs K={}", searcher.corpus().size(), k));
  }

  PoolState state;
  for (std::size_t t = 0; t < schedule.slices.size(); ++t) {
    const std::size_t want = schedule.slices[t];
    PoolHop hop;
    if (t == 0) {
      hop.request.assign(q.begin(), q.end());
    } else {
      const auto ctx = embeddings_of(searcher.corpus(), state.accumulated);
      SteeredQuery s = policy.request(q, ctx, qtype);
      hop.request = std::move(s.h_req);
      hop.g = s.g;
      hop.w1 = s.w1;
      hop.w2 = s.w2;
    }
    const RankedList found = searcher.top_k(hop.request, want, state.accumulated);
    hop.block = found.ids();
    state.accumulated.insert(state.accumulated.end(), hop.block.begin(), hop.block.end());
    const bool exhausted = hop.block.size() < want;
    state.hops.push_back(std::move(hop));
    if (exhausted) {
      spdlog::warn("pool hop {} found {} of {} items; stopping short", t,
                   state.hops.back().block.size(), want);
      state.short_pool = true;
      break;
    }
  }
  return state;
}

CompletionResult complete_evidence(const Searcher& searcher, const RetrievalTask& task,
                                   const RequestPolicy& policy, std::size_t k) {
  if (!task.target) fail(ErrorCode::kContract, fmt::format("task '{}' has no target", task.qid));
  if (task.context.empty()) {
    fail(ErrorCode::kContract, fmt::format("task '{}' has an empty context", task.qid));
  }
  for (const auto& id : task.context) {
    if (id == *task.target) {
      fail(ErrorCode::kContract, fmt::format("task '{}': context contains the target", task.qid));
    }
  }
  if (!searcher.corpus().contains(*task.target)) {
    fail(ErrorCode::kNotFound, fmt::format("target '{}' not in corpus", *task.target));
  }
  const auto ctx = embeddings_of(searcher.corpus(), task.context);
  CompletionResult r;
  r.steered = policy.request(task.query, ctx, task.qtype);
  r.list = searcher.top_k(r.steered.h_req, k, task.context);
  r.target_rank = searcher.rank_of(r.steered.h_req, *task.target, task.context);
  return r;
}

}  // namespace grail
