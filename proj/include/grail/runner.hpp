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

// End-to-end pipelines behind the C API and the command-line tool. Each
// writes its reports into an output directory and returns the summary JSON.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "grail/corpus.hpp"
#include "grail/pool.hpp"
#include "grail/router.hpp"
#include "grail/steering.hpp"
#include "grail/trainer.hpp"

namespace grail::run {

/// key=value pairs separated by ',' or newlines. Every key must be read
/// through a Reader, which rejects leftovers.
using Options = std::map<std::string, std::string>;

Options parse_options(std::string_view text);

class Reader {
 public:
  explicit Reader(const Options& options) : options_(&options) {}

  std::optional<std::string> text(const std::string& key);
  std::size_t count(const std::string& key, std::size_t fallback);
  double real(const std::string& key, double fallback);
  bool flag(const std::string& key, bool fallback);
  std::uint64_t u64(const std::string& key, std::uint64_t fallback);

  /// Throws kInvalidArgument naming the first unread key.
  void finish() const;

 private:
  const Options* options_;
  std::set<std::string> used_;
};

/// Options: batch, epochs, lr, tau, negatives, seed, weight_decay, workers.
TrainConfig train_config(Reader& r);

/// Effective run configuration copied into every JSON report as "run_config".
/// Process-wide; null disables the echo.
void set_run_config(nlohmann::json config);

/// Validates, L2-normalises and writes corpus.grle + meta.jsonl into `out`.
nlohmann::json ingest(const std::filesystem::path& vectors, const std::filesystem::path& meta,
                      const std::filesystem::path& out);

nlohmann::json synth(const Options& options, const std::filesystem::path& out);

/// Tasks without targets are expanded leave-one-out first. Options: the
/// TrainConfig keys plus qtype (restrict training to one qtype).
nlohmann::json train_steering(const CorpusIndex& corpus, std::span<const RetrievalTask> tasks,
                              SteeringParams& params, const Options& options,
                              const std::filesystem::path& out);

/// Options: the TrainConfig keys plus strategy (centroid | query_evidence |
/// external_anchor).
nlohmann::json train_alignment(const CorpusIndex& corpus, std::span<const RetrievalTask> tasks,
                               SteeringParams& params, const Options& options,
                               const std::filesystem::path& out);

/// Options: iterations, lr, holdout, seed.
nlohmann::json train_router(std::span<const RetrievalTask> tasks,
                            const std::map<std::string, int>& route_map, RouterParams& router,
                            const Options& options, const std::filesystem::path& out);

/// Specialists a policy may borrow; all are owned by the caller.
struct Specialists {
  const SteeringParams* gap = nullptr;
  const RouterParams* router = nullptr;
  std::map<std::string, int> oracle;  // nonempty selects oracle routing
  double tau_base = kDefaultTauBase;
};

RequestPolicy make_policy(RetrievalMode mode, const Specialists& s, SteeringParams& additive);

/// Tasks without targets are expanded leave-one-out.
nlohmann::json complete(const CorpusIndex& corpus, std::span<const RetrievalTask> tasks,
                        RetrievalMode mode, const Specialists& specialists,
                        std::span<const std::size_t> ks, std::size_t workers,
                        const std::filesystem::path& out);

nlohmann::json build_pool(const CorpusIndex& corpus, std::span<const RetrievalTask> tasks,
                          RetrievalMode mode, const Specialists& specialists,
                          const StepSchedule& schedule, std::size_t workers,
                          const std::filesystem::path& out);

/// Completion and pool reports for every mode the specialists allow.
nlohmann::json eval(const CorpusIndex& corpus, std::span<const RetrievalTask> tasks,
                    const Specialists& specialists, std::span<const std::size_t> ks,
                    const StepSchedule& schedule, std::size_t workers,
                    const std::filesystem::path& out);

/// Finite-difference check of the retrieval loss on `batches` batches of
/// `batch` samples drawn with `seed`. Returns the report JSON.
nlohmann::json grad_check(const CorpusIndex& corpus, std::span<const RetrievalTask> tasks,
                          SteeringParams& params, std::size_t batch, std::size_t batches,
                          std::uint64_t seed);

/// Completion tasks: `tasks` unchanged when they carry targets, otherwise
/// their leave-one-out expansion.
std::vector<RetrievalTask> completion_tasks(const CorpusIndex& corpus,
                                            std::span<const RetrievalTask> tasks);

std::vector<std::size_t> parse_ks(std::string_view text);

}  // namespace grail::run
