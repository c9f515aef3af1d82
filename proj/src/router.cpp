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

#include "grail/router.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "grail/error.hpp"
#include "grail/io.hpp"

namespace grail {

using json = nlohmann::json;

namespace {

double logistic(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double raw_logit(std::span<const double> q, const std::vector<double>& w, double b) {
  double z = b;
  for (std::size_t k = 0; k < w.size(); ++k) z += w[k] * q[k];
  return z;
}

struct Scores {
  double accuracy = 0.0;
  double f1 = 0.0;
};

Scores score(std::span<const std::vector<double>> queries, std::span<const int> labels,
             std::span<const std::size_t> idx, const std::vector<double>& w, double b) {
  if (idx.empty()) return {};
  std::size_t correct = 0, tp = 0, fp = 0, fn = 0;
  for (std::size_t i : idx) {
    const int pred = raw_logit(queries[i], w, b) >= 0.0 ? 1 : 0;
    if (pred == labels[i]) ++correct;
    if (pred == 1 && labels[i] == 1) ++tp;
    if (pred == 1 && labels[i] == 0) ++fp;
    if (pred == 0 && labels[i] == 1) ++fn;
  }
  Scores s;
  s.accuracy = double(correct) / double(idx.size());
  const double denom = double(2 * tp + fp + fn);
  s.f1 = denom == 0.0 ? 0.0 : double(2 * tp) / denom;
  return s;
}

}  // namespace

RouterTrainResult train_router(std::span<const std::vector<double>> queries,
                               std::span<const int> labels, const RouterTrainConfig& config) {
  if (queries.size() != labels.size() || queries.empty()) {
    fail(ErrorCode::kInvalidArgument, "router training needs one label per query");
  }
  const std::size_t dim = queries.front().size();
  bool seen[2] = {false, false};
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (queries[i].size() != dim) fail(ErrorCode::kDimensionMismatch, "router queries differ in dim");
    if (labels[i] != 0 && labels[i] != 1) fail(ErrorCode::kInvalidArgument, "route labels must be 0 or 1");
    seen[labels[i]] = true;
  }
  if (!seen[0] || !seen[1]) {
    fail(ErrorCode::kInvalidArgument, "router training data contains a single class");
  }

  std::vector<std::size_t> order(queries.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto holdout = static_cast<std::size_t>(std::floor(config.holdout_fraction * double(order.size())));
  if (order.size() >= 2) holdout = std::min(holdout, order.size() - 1);
  std::vector<std::size_t> train(order.begin(), order.end() - static_cast<std::ptrdiff_t>(holdout));
  std::vector<std::size_t> held(order.end() - static_cast<std::ptrdiff_t>(holdout), order.end());
  std::sort(train.begin(), train.end());
  std::sort(held.begin(), held.end());

  std::vector<double> w(dim, 0.0);
  double b = 0.0;
  RouterTrainResult result;
  result.report.train_count = train.size();
  result.report.holdout_count = held.size();
  result.report.initial_accuracy = score(queries, labels, held, w, b).accuracy;

  std::vector<double> gw(dim);
  const double inv_n = 1.0 / double(train.size());
  for (std::size_t it = 0; it < config.iterations; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i : train) {
      const double err = logistic(raw_logit(queries[i], w, b)) - double(labels[i]);
      for (std::size_t k = 0; k < dim; ++k) gw[k] += err * queries[i][k];
      gb += err;
    }
    for (std::size_t k = 0; k < dim; ++k) w[k] -= config.learning_rate * gw[k] * inv_n;
    b -= config.learning_rate * gb * inv_n;
  }

  result.report.train_accuracy = score(queries, labels, train, w, b).accuracy;
  const Scores h = score(queries, labels, held, w, b);
  result.report.holdout_accuracy = h.accuracy;
  result.report.holdout_f1 = h.f1;
  result.params.weights = std::move(w);
  result.params.bias = b;
  result.params.frozen = true;
  return result;
}

double router_logit(std::span<const double> q, const RouterParams& router) {
  if (q.size() != router.dim()) {
    fail(ErrorCode::kDimensionMismatch,
         fmt::format("router has dim {}, query has {}", router.dim(), q.size()));
  }
  return raw_logit(q, router.weights, router.bias);
}

int route(std::span<const double> q, const RouterParams& router) {
  if (!router.frozen) fail(ErrorCode::kContract, "router must be frozen before inference");
  return router_logit(q, router) >= 0.0 ? 1 : 0;
}

SteeredQuery dispatch_request(std::span<const double> q,
                              std::span<const std::vector<double>> context, int label,
                              const SteeringParams& additive, const SteeringParams& gap,
                              DispatchCounters* counters) {
  if (label == 0) {
    if (counters) ++counters->additive;
    return additive_request(q, context, additive.tau_base());
  }
  if (counters) ++counters->gap;
  return gap_request(q, context, gap);
}

SteeredQuery hybrid_request(std::span<const double> q,
                            std::span<const std::vector<double>> context,
                            const SteeringParams& additive, const SteeringParams& gap,
                            const RouterParams& router, DispatchCounters* counters) {
  return dispatch_request(q, context, route(q, router), additive, gap, counters);
}

std::map<std::string, int> parse_route_map(std::string_view text) {
  std::map<std::string, int> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    const std::string_view item = text.substr(pos, comma - pos);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      fail(ErrorCode::kFormat, fmt::format("bad route-map entry '{}'", item));
    }
    const std::string_view label = item.substr(eq + 1);
    if (label != "0" && label != "1") {
      fail(ErrorCode::kFormat, fmt::format("route label must be 0 or 1 in '{}'", item));
    }
    out[std::string(item.substr(0, eq))] = label == "1" ? 1 : 0;
    pos = comma + 1;
  }
  return out;
}

std::string serialize_router(const RouterParams& router) {
  json header;
  header["dim"] = router.dim();
  header["bias"] = router.bias;
  header["frozen"] = router.frozen;
  io::ByteWriter w;
  const std::string head = header.dump() + "\n";
  w.bytes(head.data(), head.size());
  for (double x : router.weights) w.f32(static_cast<float>(x));
  return w.buffer();
}

RouterParams deserialize_router(std::string_view bytes, const std::string& source) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) fail(ErrorCode::kFormat, fmt::format("{}: missing header", source));
  RouterParams r;
  std::size_t dim = 0;
  try {
    const json header = json::parse(bytes.substr(0, nl));
    dim = header.at("dim").get<std::size_t>();
    r.bias = header.at("bias").get<double>();
    r.frozen = header.at("frozen").get<bool>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, fmt::format("{}: bad header: {}", source, e.what()));
  }
  io::ByteReader in(bytes, source, nl + 1);
  r.weights.resize(dim);
  for (double& x : r.weights) x = in.f32();
  if (in.remaining() != 0) fail(ErrorCode::kFormat, fmt::format("{}: trailing bytes", source));
  return r;
}

void save_router(const RouterParams& router, const std::filesystem::path& path) {
  io::write_file(path, serialize_router(router));
}

RouterParams load_router(const std::filesystem::path& path) {
  return deserialize_router(io::read_file(path), path.string());
}

}  // namespace grail
