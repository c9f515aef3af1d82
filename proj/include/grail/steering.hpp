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

// Gap-aware query steering.
//
// Given a query q and the embeddings of already-acquired evidence, the
// request vector is built in four stages:
//   h_ctx = LN(sum_i alpha_i e_i),   alpha = softmax(e_i . q / sqrt(d))
//   g     = sigmoid(W_gap [q; h_ctx])
//   q_gap = q - g * (q . h_ctx / |h_ctx|^2) h_ctx
//   w     = softmax(W_mix [q_gap; h_ctx]),  h_req = LN(w1 q_gap + w2 h_ctx)
// with a per-query temperature tau = exp(log_tau_base + MLP([q; h_ctx])),
// clamped to [1e-3, 10]. The additive baseline is h_req = LN(q + LN(h_ctx)).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grail/corpus.hpp"
#include "grail/tape.hpp"

namespace grail {

enum class SteeringMode { kGap, kAdditive };

const char* steering_mode_name(SteeringMode m) noexcept;
SteeringMode parse_steering_mode(std::string_view name);

inline constexpr double kDefaultTauBase = 0.05;
inline constexpr double kTauMin = 1e-3;
inline constexpr double kTauMax = 10.0;
inline constexpr double kDegenerateContextNorm = 1e-8;
inline constexpr double kLayerNormEps = 1e-5;

/// Per-modality d x d alignment map applied to evidence embeddings.
struct AlignmentProjection {
  Modality modality = Modality::kText;
  tape::Parameter matrix;
};

struct SteeringParams {
  std::size_t dim = 0;
  std::size_t hidden = 64;
  bool use_mix = true;
  SteeringMode mode = SteeringMode::kGap;
  double log_tau_base = 0.0;

  tape::Parameter w_gap;   // 1 x 2d
  tape::Parameter w_mix;   // 2 x 2d
  tape::Parameter mlp_w1;  // hidden x 2d
  tape::Parameter mlp_b1;  // hidden x 1
  tape::Parameter mlp_w2;  // 1 x hidden
  tape::Parameter mlp_b2;  // 1 x 1
  std::vector<AlignmentProjection> projections;

  /// Gate and mixing weights start at zero (g = 0.5, w = (0.5, 0.5)); the
  /// temperature MLP's first layer is Xavier-uniform from `seed`, its output
  /// layer zero, so tau starts at tau_base.
  static SteeringParams create(std::size_t dim, std::size_t hidden = 64, bool use_mix = true,
                               SteeringMode mode = SteeringMode::kGap, std::uint64_t seed = 0,
                               double tau_base = kDefaultTauBase);

  double tau_base() const;

  /// Tensors updated by training. log_tau_base stays fixed.
  std::vector<tape::Parameter*> trainable();
  std::vector<const tape::Parameter*> tensors() const;
};

struct SteeredQuery {
  SteeringMode mode = SteeringMode::kGap;
  std::vector<double> alpha;
  std::vector<double> h_ctx;
  double g = 0.0;
  std::vector<double> q_gap;
  double w1 = 1.0;
  double w2 = 0.0;
  std::vector<double> h_req;
  double tau_dyn = kDefaultTauBase;
  bool degenerate = false;  // |sum alpha_i e_i| fell below 1e-8
};

// Tape-level construction, shared by inference and training.

struct ParamVars {
  tape::Var w_gap, w_mix, mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

ParamVars bind(tape::Tape& t, const SteeringParams& p);

struct ContextVars {
  tape::Var alpha;
  tape::Var h_ctx;
  bool degenerate = false;
};

struct SteeredVars {
  ContextVars ctx;
  tape::Var g;
  tape::Var q_gap;
  tape::Var w;  // size 2
  tape::Var h_req;
  tape::Var tau;
};

ContextVars build_context(tape::Tape& t, tape::Var q, std::span<const tape::Var> context);
tape::Var build_gate(tape::Var q, tape::Var h_ctx, tape::Var w_gap);
tape::Var build_subtraction(tape::Var q, tape::Var h_ctx, tape::Var g);
tape::Var build_temperature(tape::Tape& t, tape::Var q, tape::Var h_ctx, const ParamVars& pv,
                            double log_tau_base);
SteeredVars build_gap_request(tape::Tape& t, tape::Var q, std::span<const tape::Var> context,
                              const SteeringParams& p, const ParamVars& pv);
SteeredVars build_additive_request(tape::Tape& t, tape::Var q,
                                   std::span<const tape::Var> context, double tau_base);

// Numeric operations.

struct ContextSummary {
  std::vector<double> alpha;
  std::vector<double> h_ctx;
  bool degenerate = false;
};

/// Errors: empty context, dimension mismatch.
ContextSummary aggregate_context(std::span<const double> q,
                                 std::span<const std::vector<double>> context);
double gap_gate(std::span<const double> q, std::span<const double> h_ctx,
                const tape::Parameter& w_gap);
/// Errors: zero-norm h_ctx.
std::vector<double> subtract_projection(std::span<const double> q, std::span<const double> h_ctx,
                                        double g);

struct MixResult {
  double w1 = 1.0;
  double w2 = 0.0;
  std::vector<double> h_req;
};

MixResult mix(std::span<const double> q_gap, std::span<const double> h_ctx,
              const tape::Parameter& w_mix, bool use_mix);
double dynamic_temperature(std::span<const double> q, std::span<const double> h_ctx,
                           const SteeringParams& p);

SteeredQuery gap_request(std::span<const double> q, std::span<const std::vector<double>> context,
                         const SteeringParams& p);
SteeredQuery additive_request(std::span<const double> q,
                              std::span<const std::vector<double>> context,
                              double tau_base = kDefaultTauBase);

/// Adds N(0, scale^2) noise to the six steering tensors. Used to move a
/// fresh parameter set off its zero start before gradient checks.
void perturb(SteeringParams& p, std::uint64_t seed, double scale);

/// Dispatches on p.mode.
SteeredQuery steer(std::span<const double> q, std::span<const std::vector<double>> context,
                   const SteeringParams& p);

// Parameter file: one line of JSON header
//   {"dim","hidden","use_mix","mode","log_tau_base","projections"}
// then "GRLP", u32 version, and float32 LE tensors in the order
// W_gap, W_mix, MLP layer 1 (weights, bias), MLP layer 2 (weights, bias),
// followed by any alignment projections in header order.
inline constexpr char kParamMagic[4] = {'G', 'R', 'L', 'P'};
inline constexpr std::uint32_t kParamVersion = 1;

std::string serialize_params(const SteeringParams& p);
SteeringParams deserialize_params(std::string_view bytes, const std::string& source = "params");
void save_params(const SteeringParams& p, const std::filesystem::path& path);
SteeringParams load_params(const std::filesystem::path& path);

}  // namespace grail
