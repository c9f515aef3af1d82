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

// Task-adaptive routing: a binary logistic probe over the query embedding
// decides, per query, whether the additive specialist (label 0, evidence
// aggregation) or the gap-aware specialist (label 1, target isolation)
// produces the request vector.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "grail/steering.hpp"

namespace grail {

struct RouterParams {
  std::vector<double> weights;
  double bias = 0.0;
  bool frozen = false;

  std::size_t dim() const { return weights.size(); }
};

struct RouterTrainConfig {
  std::size_t iterations = 500;
  double learning_rate = 0.5;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct RouterTrainReport {
  std::size_t train_count = 0;
  std::size_t holdout_count = 0;
  double initial_accuracy = 0.0;  // zero-initialised probe on the held-out split
  double train_accuracy = 0.0;
  double holdout_accuracy = 0.0;
  double holdout_f1 = 0.0;
};

struct RouterTrainResult {
  RouterParams params;
  RouterTrainReport report;
};

/// Fits the probe by full-batch gradient descent on mean cross-entropy from a
/// zero start, then freezes it. Errors: size mismatch, single-class labels.
RouterTrainResult train_router(std::span<const std::vector<double>> queries,
                               std::span<const int> labels, const RouterTrainConfig& config = {});

double router_logit(std::span<const double> q, const RouterParams& router);

/// 1 iff sigmoid(w.q + b) >= 0.5. Refuses an unfrozen router.
int route(std::span<const double> q, const RouterParams& router);

/// Counts how often each specialist actually ran.
struct DispatchCounters {
  std::atomic<std::size_t> additive{0};
  std::atomic<std::size_t> gap{0};
};

/// Runs exactly one specialist, chosen by `label` (0 additive, 1 gap).
SteeredQuery dispatch_request(std::span<const double> q,
                              std::span<const std::vector<double>> context, int label,
                              const SteeringParams& additive, const SteeringParams& gap,
                              DispatchCounters* counters = nullptr);

/// dispatch_request with the label taken from route(q, router).
SteeredQuery hybrid_request(std::span<const double> q,
                            std::span<const std::vector<double>> context,
                            const SteeringParams& additive, const SteeringParams& gap,
                            const RouterParams& router, DispatchCounters* counters = nullptr);

/// Maps qtype strings to route labels, e.g. "Compose=1,Aggregate=0".
std::map<std::string, int> parse_route_map(std::string_view text);

// Router file: one JSON line {"bias","dim","frozen"} followed by dim float32
// little-endian weights.
std::string serialize_router(const RouterParams& router);
RouterParams deserialize_router(std::string_view bytes, const std::string& source = "router");
void save_router(const RouterParams& router, const std::filesystem::path& path);
RouterParams load_router(const std::filesystem::path& path);

}  // namespace grail
