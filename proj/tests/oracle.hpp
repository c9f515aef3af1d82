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

// Plain-loop reference implementations used as test oracles. Nothing here
// touches the tape; every formula is written out again from scratch.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "grail/corpus.hpp"
#include "grail/steering.hpp"
#include "grail/trainer.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline Vec layernorm(const Vec& x, double eps = 1e-5) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= double(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= double(x.size());
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / std::sqrt(var + eps);
  return out;
}

inline Vec softmax(const Vec& z) {
  const double m = *std::max_element(z.begin(), z.end());
  Vec out(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += out[i] = std::exp(z[i] - m);
  for (double& v : out) v /= s;
  return out;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline Vec concat(const Vec& a, const Vec& b) {
  Vec out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// rows x cols row-major times x.
inline Vec matvec(std::span<const double> w, std::size_t rows, const Vec& x) {
  Vec out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < x.size(); ++c) out[r] += w[r * x.size() + c] * x[c];
  }
  return out;
}

struct Steered {
  Vec h_ctx, q_gap, h_req;
  double g = 0.0, w1 = 1.0, w2 = 0.0, tau = 0.0;
};

inline Vec context_summary(const Vec& q, const std::vector<Vec>& ctx) {
  Vec logits;
  for (const Vec& e : ctx) logits.push_back(dot(e, q) / std::sqrt(double(q.size())));
  const Vec alpha = softmax(logits);
  Vec weighted(q.size(), 0.0);
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    for (std::size_t k = 0; k < q.size(); ++k) weighted[k] += alpha[i] * ctx[i][k];
  }
  return layernorm(weighted);
}

inline Steered gap(const Vec& q, const std::vector<Vec>& ctx, const grail::SteeringParams& p) {
  Steered s;
  s.h_ctx = context_summary(q, ctx);
  const Vec x = concat(q, s.h_ctx);
  s.g = sigmoid(matvec(p.w_gap.data(), 1, x)[0]);
  const double coef = dot(q, s.h_ctx) / dot(s.h_ctx, s.h_ctx);
  s.q_gap = q;
  for (std::size_t k = 0; k < q.size(); ++k) s.q_gap[k] -= s.g * coef * s.h_ctx[k];
  Vec mixed = s.q_gap;
  if (p.use_mix) {
    const Vec w = softmax(matvec(p.w_mix.data(), 2, concat(s.q_gap, s.h_ctx)));
    s.w1 = w[0];
    s.w2 = w[1];
    for (std::size_t k = 0; k < q.size(); ++k) mixed[k] = w[0] * s.q_gap[k] + w[1] * s.h_ctx[k];
  }
  s.h_req = layernorm(mixed);
  Vec hidden = matvec(p.mlp_w1.data(), p.hidden, x);
  for (std::size_t j = 0; j < hidden.size(); ++j) hidden[j] = std::tanh(hidden[j] + p.mlp_b1[j]);
  const double offset = matvec(p.mlp_w2.data(), 1, hidden)[0] + p.mlp_b2[0];
  s.tau = std::clamp(std::exp(p.log_tau_base + offset), 1e-3, 10.0);
  return s;
}

inline Steered additive(const Vec& q, const std::vector<Vec>& ctx, double tau_base) {
  Steered s;
  s.h_ctx = context_summary(q, ctx);
  const Vec inner = layernorm(s.h_ctx);
  Vec sum(q.size());
  for (std::size_t k = 0; k < q.size(); ++k) sum[k] = q[k] + inner[k];
  s.q_gap = q;
  s.h_req = layernorm(sum);
  s.tau = tau_base;
  return s;
}

inline double cosine(const Vec& a, const Vec& b) { return dot(a, b) / (norm(a) * norm(b)); }

// -log( exp(s+/tau) / sum over candidates exp(s/tau) ), written with the
// plain softmax denominator.
inline double retrieval_loss(const grail::TrainBatch& batch, const grail::SteeringParams& p) {
  double total = 0.0;
  for (std::size_t x = 0; x < batch.samples.size(); ++x) {
    const auto& s = *batch.samples[x];
    const Steered st = p.mode == grail::SteeringMode::kAdditive
                           ? additive(s.query, s.context, p.tau_base())
                           : gap(s.query, s.context, p);
    const double pos = std::exp(cosine(st.h_req, s.positive) / st.tau);
    double neg = 0.0;
    for (std::size_t y = 0; y < batch.samples.size(); ++y) {
      if (y != x) neg += std::exp(cosine(st.h_req, batch.samples[y]->positive) / st.tau);
    }
    for (const Vec& z : s.distractors) neg += std::exp(cosine(st.h_req, z) / st.tau);
    total += -std::log(pos / (pos + neg));
  }
  return total / double(batch.samples.size());
}

inline double alignment_loss(const std::vector<grail::AlignmentChain>& chains,
                             grail::AlignmentStrategy strategy, double tau) {
  std::vector<std::vector<Vec>> units(chains.size());
  for (std::size_t x = 0; x < chains.size(); ++x) {
    for (const Vec& e : chains[x].evidence) {
      Vec u = e;
      const double n = norm(e);
      for (double& v : u) v /= n;
      units[x].push_back(u);
    }
  }
  double total = 0.0;
  for (std::size_t x = 0; x < chains.size(); ++x) {
    Vec anchor;
    if (strategy == grail::AlignmentStrategy::kCentroid) {
      anchor.assign(chains[x].query.size(), 0.0);
      for (const Vec& e : chains[x].evidence) {
        for (std::size_t k = 0; k < e.size(); ++k) anchor[k] += e[k] / double(chains[x].evidence.size());
      }
    } else if (strategy == grail::AlignmentStrategy::kQueryEvidence) {
      anchor = chains[x].query;
    } else {
      anchor = *chains[x].anchor;
    }
    const double an = norm(anchor);
    for (double& v : anchor) v /= an;
    double neg = 0.0;
    for (std::size_t y = 0; y < chains.size(); ++y) {
      if (y == x) continue;
      for (const Vec& u : units[y]) neg += std::exp(dot(anchor, u) / tau);
    }
    double chain = 0.0;
    for (const Vec& u : units[x]) {
      const double pos = std::exp(dot(anchor, u) / tau);
      chain += -std::log(pos / (pos + neg));
    }
    total += chain / double(units[x].size());
  }
  return total / double(chains.size());
}

inline Vec random_unit(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec v(d);
  for (double& x : v) x = n(rng);
  const double s = norm(v);
  for (double& x : v) x /= s;
  return v;
}

}  // namespace oracle
