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

// Seeded synthetic corpora with planted semantic anchoring.
//
// Every task owns an orthonormal frame (entity direction a, missing-facet
// direction b, sub-topic direction s) orthogonal to two global query-type
// signatures. Compose-like tasks:
//   bridge   c = N(a + lambda b + sigma_c n)      (context, gold)
//   target   t = N(b + sigma_t n)                 (gold, withheld)
//   cluster  D_j = N(a + sigma_j n)               (redundant distractors)
//   query    q = N(anchoring * kappa * a + b + zeta u_compose + sigma_q n)
// The entity term pulls raw and additive retrieval into the cluster, while
// removing the context direction from q leaves b, which only t carries.
// Aggregation-like tasks put the target inside the context's sub-topic
// (c = N(a + beta s + ...), t = N(a + beta s + ...)), so adding context helps
// and subtracting it hurts.
//
// Every emitted vector is finally mixed with one shared direction mu,
// v <- N(v + anisotropy * mu), mimicking the common offset of real encoder
// outputs. Items all receive the same offset, so it never reorders a ranking.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "grail/corpus.hpp"

namespace grail {

struct SynthSpec {
  std::size_t dim = 128;
  std::size_t compose_tasks = 500;
  std::size_t aggregate_tasks = 500;
  std::size_t distractors = 12;  // per cluster
  std::size_t background = 2000;
  double anchoring = 1.0;        // in [0, 1]
  double anchor_gain = 1.5;      // kappa
  double bridge = 0.3;           // lambda
  double subtopic = 0.8;         // beta
  double spread = 0.6;           // largest per-item noise radius
  double min_spread = 0.1;
  double bridge_spread = 1.0;    // largest noise radius of the compose context item
  double target_noise = 0.2;
  double query_noise = 0.1;
  double signature = 0.3;        // zeta
  double anisotropy = 0.5;       // weight of the direction shared by every embedding
  double text_ratio = 0.6;
  double table_ratio = 0.2;
  double image_ratio = 0.2;
  std::uint64_t seed = 7;
};

inline constexpr const char* kComposeType = "compose";
inline constexpr const char* kAggregateType = "aggregate";

/// Brute-force ranks of the target, context excluded, under the raw query,
/// the additive request LN(q + LN(h_ctx)) and the full-gate subtraction
/// LN(q - proj_h_ctx(q)).
struct Certificate {
  std::string qid;
  std::string archetype;
  std::size_t rank_query = 0;
  std::size_t rank_additive = 0;
  std::size_t rank_subtractive = 0;
  bool certified = false;
};

struct SynthResult {
  SynthSpec spec;
  CorpusIndex corpus;
  std::vector<RetrievalTask> tasks;
  std::map<std::string, int> route_map;  // qtype -> label
  std::vector<Certificate> certificates;

  std::size_t certified(std::string_view archetype) const;
};

/// Errors: invalid ratios, non-positive spread, anchoring outside [0, 1],
/// or a dimension too small to hold the orthogonal frames.
void validate_spec(const SynthSpec& spec);

SynthResult generate(const SynthSpec& spec);

struct SynthPaths {
  std::filesystem::path vectors, meta, tasks, routes, certificates;
};

SynthPaths synth_paths(const std::filesystem::path& dir);

/// corpus.grle, meta.jsonl, tasks.jsonl, routes.txt, certificates.jsonl.
SynthPaths write_synth(const SynthResult& result, const std::filesystem::path& dir);

/// Parses "key=value" overrides into a spec. Errors: unknown key, bad value.
void apply_synth_option(SynthSpec& spec, std::string_view key, std::string_view value);

}  // namespace grail
