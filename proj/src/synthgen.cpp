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

#include "grail/synthgen.hpp"

#include <charconv>
#include <cmath>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "grail/error.hpp"
#include "grail/io.hpp"
#include "grail/search.hpp"
#include "grail/steering.hpp"

namespace grail {

using json = nlohmann::json;
using Vec = std::vector<double>;

std::size_t SynthResult::certified(std::string_view archetype) const {
  std::size_t n = 0;
  for (const auto& c : certificates) n += (c.archetype == archetype && c.certified) ? 1 : 0;
  return n;
}

void validate_spec(const SynthSpec& s) {
  // Two signatures, the shared axis, three frame axes, and free noise axes.
  if (s.dim < 9) fail(ErrorCode::kInvalidArgument, fmt::format("synth dim {} is below 9", s.dim));
  if (!(s.spread > 0.0) || !(s.min_spread > 0.0) || s.min_spread > s.spread ||
      s.min_spread > s.bridge_spread) {
    fail(ErrorCode::kInvalidArgument,
         fmt::format("infeasible spread range [{}, {}]", s.min_spread, s.spread));
  }
  if (s.anchoring < 0.0 || s.anchoring > 1.0) {
    fail(ErrorCode::kInvalidArgument, "anchoring must lie in [0, 1]");
  }
  const double ratios = s.text_ratio + s.table_ratio + s.image_ratio;
  if (s.text_ratio < 0 || s.table_ratio < 0 || s.image_ratio < 0 || std::abs(ratios - 1.0) > 1e-9) {
    fail(ErrorCode::kInvalidArgument, "modality ratios must be nonnegative and sum to 1");
  }
  if (s.compose_tasks + s.aggregate_tasks == 0) fail(ErrorCode::kInvalidArgument, "no tasks requested");
  for (double v : {s.anisotropy, s.anchor_gain, s.bridge, s.subtopic, s.target_noise, s.query_noise, s.signature}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      fail(ErrorCode::kInvalidArgument, "synth geometry coefficients must be finite and >= 0");
    }
  }
}

namespace {

class Builder {
 public:
  explicit Builder(const SynthSpec& spec)
      : spec_(spec),
        rng_(spec.seed),
        modality_({spec.text_ratio, spec.table_ratio, spec.image_ratio}) {}

  Vec gaussian() {
    Vec v(spec_.dim);
    for (double& x : v) x = normal_(rng_);
    return v;
  }

  /// Unit vector orthogonal to every vector in `basis` (assumed orthonormal).
  Vec orthogonal(const std::vector<const Vec*>& basis) {
    Vec v = gaussian();
    for (int pass = 0; pass < 2; ++pass) {
      for (const Vec* b : basis) {
        double p = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) p += v[k] * (*b)[k];
        for (std::size_t k = 0; k < v.size(); ++k) v[k] -= p * (*b)[k];
      }
    }
    normalize(v);
    return v;
  }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

  static void normalize(Vec& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (double& x : v) x /= n;
  }

  static Vec combine(std::initializer_list<std::pair<double, const Vec*>> terms) {
    Vec out(terms.begin()->second->size(), 0.0);
    for (const auto& [w, v] : terms) {
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += w * (*v)[k];
    }
    normalize(out);
    return out;
  }

  std::string add_item(const Vec& v) {
    std::string id = fmt::format("e{:07d}", meta_.size());
    const auto m = static_cast<Modality>(modality_(rng_));
    meta_.push_back({id, m, std::nullopt});
    rows_.insert(rows_.end(), v.begin(), v.end());
    return id;
  }

  std::vector<MetadataRecord> meta_;
  std::vector<float> rows_;
  const SynthSpec& spec_;
  std::mt19937_64 rng_;

 private:
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::discrete_distribution<int> modality_;
};

// Mirrors the float round trip and renormalisation that task files apply.
Vec as_task_query(const Vec& q) {
  Vec out(q.size());
  double n = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    out[k] = static_cast<double>(static_cast<float>(q[k]));
    n += out[k] * out[k];
  }
  n = std::sqrt(n);
  for (double& x : out) x /= n;
  return out;
}

}  // namespace

SynthResult generate(const SynthSpec& spec) {
  validate_spec(spec);
  Builder b(spec);
  const Vec u_agg = b.orthogonal({});
  const Vec u_comp = b.orthogonal({&u_agg});
  const Vec mu = b.orthogonal({&u_agg, &u_comp});
  auto shift = [&](Vec v) {
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += spec.anisotropy * mu[k];
    Builder::normalize(v);
    return v;
  };

  struct Planned {
    std::string qid, qtype, context, target;
    Vec query;
  };
  std::vector<Planned> planned;

  auto plant = [&](bool compose, std::size_t index) {
    const Vec a = b.orthogonal({&u_agg, &u_comp, &mu});
    const Vec f = b.orthogonal({&u_agg, &u_comp, &mu, &a});
    const Vec s = b.orthogonal({&u_agg, &u_comp, &mu, &a, &f});
    const std::vector<const Vec*> frame{&u_agg, &u_comp, &mu, &a, &f, &s};
    auto noise = [&] { return b.orthogonal(frame); };

    Planned p;
    p.qtype = compose ? kComposeType : kAggregateType;
    p.qid = fmt::format("{}-{:04d}", p.qtype, index);
    const double sc = b.uniform(spec.min_spread, compose ? spec.bridge_spread : spec.spread);
    const Vec nc = noise(), nt = noise(), nq = noise();
    Vec ctx, tgt;
    if (compose) {
      ctx = Builder::combine({{1.0, &a}, {spec.bridge, &f}, {sc, &nc}});
      tgt = Builder::combine({{1.0, &f}, {spec.target_noise, &nt}});
      p.query = Builder::combine({{spec.anchoring * spec.anchor_gain, &a},
                                  {1.0, &f},
                                  {spec.signature, &u_comp},
                                  {spec.query_noise, &nq}});
    } else {
      ctx = Builder::combine({{1.0, &a}, {spec.subtopic, &s}, {sc, &nc}});
      tgt = Builder::combine({{1.0, &a}, {spec.subtopic, &s}, {spec.target_noise, &nt}});
      p.query = Builder::combine({{spec.anchor_gain, &a},
                                  {spec.subtopic, &s},
                                  {spec.signature, &u_agg},
                                  {spec.query_noise, &nq}});
    }
    p.query = shift(p.query);
    p.context = b.add_item(shift(ctx));
    p.target = b.add_item(shift(tgt));
    for (std::size_t j = 0; j < spec.distractors; ++j) {
      const double sj = b.uniform(spec.min_spread, spec.spread);
      const Vec nj = noise();
      b.add_item(shift(Builder::combine({{1.0, &a}, {sj, &nj}})));
    }
    planned.push_back(std::move(p));
  };

  for (std::size_t i = 0; i < spec.compose_tasks; ++i) plant(true, i);
  for (std::size_t i = 0; i < spec.aggregate_tasks; ++i) plant(false, i);
  for (std::size_t i = 0; i < spec.background; ++i) {
    Vec v = b.orthogonal({&mu});
    b.add_item(shift(v));
  }

  SynthResult r;
  r.spec = spec;
  r.corpus = normalize(ingest(std::move(b.meta_), spec.dim, std::move(b.rows_)));
  r.route_map = {{kAggregateType, 0}, {kComposeType, 1}};

  const Searcher searcher(r.corpus, 1);
  tape::Parameter no_mix("w_mix", 2, 2 * spec.dim);
  for (auto& p : planned) {
    RetrievalTask t;
    t.qid = p.qid;
    t.query = as_task_query(p.query);
    t.gold = {p.context, p.target};
    t.context = {p.context};
    t.target = p.target;
    t.qtype = p.qtype;
    validate_task(t, r.corpus);

    const auto row = r.corpus.row(r.corpus.row_of(p.context));
    const std::vector<Vec> ctx{Vec(row.begin(), row.end())};
    const Vec additive = additive_request(t.query, ctx).h_req;
    const ContextSummary summary = aggregate_context(t.query, ctx);
    const Vec q_gap = subtract_projection(t.query, summary.h_ctx, 1.0);
    const Vec subtractive = mix(q_gap, summary.h_ctx, no_mix, false).h_req;

    Certificate c;
    c.qid = t.qid;
    c.archetype = p.qtype;
    c.rank_query = *searcher.rank_of(t.query, p.target, t.context);
    c.rank_additive = *searcher.rank_of(additive, p.target, t.context);
    c.rank_subtractive = *searcher.rank_of(subtractive, p.target, t.context);
    c.certified = p.qtype == kComposeType
                      ? c.rank_subtractive == 1 && c.rank_additive > 1
                      : c.rank_additive == 1 && c.rank_additive < c.rank_subtractive;
    r.certificates.push_back(c);
    r.tasks.push_back(std::move(t));
  }
  return r;
}

SynthPaths synth_paths(const std::filesystem::path& dir) {
  return {dir / "corpus.grle", dir / "meta.jsonl", dir / "tasks.jsonl", dir / "routes.txt",
          dir / "certificates.jsonl"};
}

SynthPaths write_synth(const SynthResult& result, const std::filesystem::path& dir) {
  const SynthPaths paths = synth_paths(dir);
  save_corpus(result.corpus, paths.vectors, paths.meta);
  write_tasks(paths.tasks, result.tasks);
  std::string routes;
  for (const auto& [k, v] : result.route_map) {
    routes += fmt::format("{}{}={}", routes.empty() ? "" : ",", k, v);
  }
  io::write_file(paths.routes, routes + "\n");
  std::string certs;
  for (const auto& c : result.certificates) {
    json j;
    j["qid"] = c.qid;
    j["archetype"] = c.archetype;
    j["rank_query"] = c.rank_query;
    j["rank_additive"] = c.rank_additive;
    j["rank_subtractive"] = c.rank_subtractive;
    j["certified"] = c.certified;
    certs += j.dump() + "\n";
  }
  io::write_file(paths.certificates, certs);
  return paths;
}

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    fail(ErrorCode::kInvalidArgument, fmt::format("bad value '{}' for '{}'", value, key));
  }
  return out;
}

}  // namespace

void apply_synth_option(SynthSpec& s, std::string_view key, std::string_view value) {
  const std::map<std::string_view, std::size_t*> counts{
      {"dim", &s.dim},
      {"compose_tasks", &s.compose_tasks},
      {"aggregate_tasks", &s.aggregate_tasks},
      {"distractors", &s.distractors},
      {"background", &s.background},
  };
  const std::map<std::string_view, double*> reals{
      {"anchoring", &s.anchoring},       {"anchor_gain", &s.anchor_gain},
      {"bridge", &s.bridge},             {"subtopic", &s.subtopic},
      {"spread", &s.spread},             {"min_spread", &s.min_spread},
      {"bridge_spread", &s.bridge_spread},
      {"target_noise", &s.target_noise}, {"query_noise", &s.query_noise},
      {"signature", &s.signature},       {"text_ratio", &s.text_ratio},
      {"anisotropy", &s.anisotropy},
      {"table_ratio", &s.table_ratio},   {"image_ratio", &s.image_ratio},
  };
  if (auto it = counts.find(key); it != counts.end()) {
    *it->second = parse_number<std::size_t>(key, value);
  } else if (auto jt = reals.find(key); jt != reals.end()) {
    *jt->second = parse_number<double>(key, value);
  } else if (key == "seed") {
    s.seed = parse_number<std::uint64_t>(key, value);
  } else {
    fail(ErrorCode::kInvalidArgument, fmt::format("unknown synth option '{}'", key));
  }
}

}  // namespace grail
