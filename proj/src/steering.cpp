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

#include "grail/steering.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "grail/error.hpp"
#include "grail/io.hpp"

namespace grail {

using tape::Tape;
using tape::Var;
using json = nlohmann::json;

const char* steering_mode_name(SteeringMode m) noexcept {
  return m == SteeringMode::kGap ? "gap" : "additive";
}

SteeringMode parse_steering_mode(std::string_view name) {
  if (name == "gap") return SteeringMode::kGap;
  if (name == "additive") return SteeringMode::kAdditive;
  fail(ErrorCode::kInvalidArgument, fmt::format("unknown steering mode '{}'", name));
}

SteeringParams SteeringParams::create(std::size_t dim, std::size_t hidden, bool use_mix,
                                      SteeringMode mode, std::uint64_t seed, double tau_base) {
  if (dim == 0 || hidden == 0) fail(ErrorCode::kInvalidArgument, "dim and hidden must be positive");
  if (!(tau_base > 0.0)) fail(ErrorCode::kInvalidArgument, "tau_base must be positive");
  SteeringParams p;
  p.dim = dim;
  p.hidden = hidden;
  p.use_mix = use_mix;
  p.mode = mode;
  p.log_tau_base = std::log(tau_base);
  p.w_gap = tape::Parameter("w_gap", 1, 2 * dim);
  p.w_mix = tape::Parameter("w_mix", 2, 2 * dim);
  p.mlp_w1 = tape::Parameter("mlp_w1", hidden, 2 * dim);
  p.mlp_b1 = tape::Parameter("mlp_b1", hidden, 1);
  p.mlp_w2 = tape::Parameter("mlp_w2", 1, hidden);
  p.mlp_b2 = tape::Parameter("mlp_b2", 1, 1);

  std::mt19937_64 rng(seed);
  const double limit = std::sqrt(6.0 / double(2 * dim + hidden));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (double& x : p.mlp_w1.data()) x = u(rng);
  return p;
}

void perturb(SteeringParams& p, std::uint64_t seed, double scale) {
  if (!(scale >= 0.0)) fail(ErrorCode::kInvalidArgument, "perturbation scale must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (tape::Parameter* t : {&p.w_gap, &p.w_mix, &p.mlp_w1, &p.mlp_b1, &p.mlp_w2, &p.mlp_b2}) {
    for (double& x : t->data()) x += n(rng);
  }
}

double SteeringParams::tau_base() const { return std::exp(log_tau_base); }

std::vector<tape::Parameter*> SteeringParams::trainable() {
  std::vector<tape::Parameter*> out{&w_gap, &w_mix, &mlp_w1, &mlp_b1, &mlp_w2, &mlp_b2};
  for (auto& pr : projections) out.push_back(&pr.matrix);
  return out;
}

std::vector<const tape::Parameter*> SteeringParams::tensors() const {
  std::vector<const tape::Parameter*> out{&w_gap, &w_mix, &mlp_w1, &mlp_b1, &mlp_w2, &mlp_b2};
  for (const auto& pr : projections) out.push_back(&pr.matrix);
  return out;
}

ParamVars bind(Tape& t, const SteeringParams& p) {
  return {t.param(p.w_gap),  t.param(p.w_mix),  t.param(p.mlp_w1),
          t.param(p.mlp_b1), t.param(p.mlp_w2), t.param(p.mlp_b2)};
}

ContextVars build_context(Tape& t, Var q, std::span<const Var> context) {
  if (context.empty()) fail(ErrorCode::kInvalidArgument, "context set must be nonempty");
  const double inv_sqrt_d = 1.0 / std::sqrt(double(q.size()));
  std::vector<Var> logits;
  logits.reserve(context.size());
  for (Var e : context) {
    if (e.size() != q.size()) {
      fail(ErrorCode::kDimensionMismatch,
           fmt::format("context vector has dim {}, query has {}", e.size(), q.size()));
    }
    logits.push_back(tape::scale(tape::dot(e, q), inv_sqrt_d));
  }
  ContextVars out;
  out.alpha = tape::softmax(tape::concat(logits));
  Var weighted = tape::mul(tape::slice(out.alpha, 0, 1), context[0]);
  for (std::size_t i = 1; i < context.size(); ++i) {
    weighted = tape::add(weighted, tape::mul(tape::slice(out.alpha, i, 1), context[i]));
  }
  double norm = 0.0;
  for (double x : weighted.value()) norm += x * x;
  if (std::sqrt(norm) < kDegenerateContextNorm) {
    out.degenerate = true;
    out.h_ctx = t.constant(std::vector<double>(q.size(), 0.0));
  } else {
    out.h_ctx = tape::layernorm(weighted, kLayerNormEps);
  }
  return out;
}

Var build_gate(Var q, Var h_ctx, Var w_gap) {
  return tape::sigmoid(tape::matvec(w_gap, tape::concat({q, h_ctx})));
}

Var build_subtraction(Var q, Var h_ctx, Var g) {
  Var coef = tape::div(tape::dot(q, h_ctx), tape::dot(h_ctx, h_ctx));
  return tape::sub(q, tape::mul(tape::mul(g, coef), h_ctx));
}

Var build_temperature(Tape& t, Var q, Var h_ctx, const ParamVars& pv, double log_tau_base) {
  Var x = tape::concat({q, h_ctx});
  Var hidden = tape::tanh(tape::add(tape::matvec(pv.mlp_w1, x), pv.mlp_b1));
  Var offset = tape::add(tape::matvec(pv.mlp_w2, hidden), pv.mlp_b2);
  Var log_tau = tape::add(t.constant(log_tau_base), offset);
  return tape::clamp(tape::exp(log_tau), kTauMin, kTauMax);
}

SteeredVars build_gap_request(Tape& t, Var q, std::span<const Var> context,
                              const SteeringParams& p, const ParamVars& pv) {
  if (q.size() != p.dim) {
    fail(ErrorCode::kDimensionMismatch,
         fmt::format("query has dim {}, steering params have {}", q.size(), p.dim));
  }
  SteeredVars s;
  s.ctx = build_context(t, q, context);
  s.g = build_gate(q, s.ctx.h_ctx, pv.w_gap);
  s.tau = build_temperature(t, q, s.ctx.h_ctx, pv, p.log_tau_base);
  if (s.ctx.degenerate) {
    s.q_gap = q;
    s.w = t.constant(std::vector<double>{1.0, 0.0});
    s.h_req = tape::layernorm(q, kLayerNormEps);
    return s;
  }
  s.q_gap = build_subtraction(q, s.ctx.h_ctx, s.g);
  Var mixed;
  if (p.use_mix) {
    s.w = tape::softmax(tape::matvec(pv.w_mix, tape::concat({s.q_gap, s.ctx.h_ctx})));
    mixed = tape::add(tape::mul(tape::slice(s.w, 0, 1), s.q_gap),
                      tape::mul(tape::slice(s.w, 1, 1), s.ctx.h_ctx));
  } else {
    s.w = t.constant(std::vector<double>{1.0, 0.0});
    mixed = s.q_gap;
  }
  s.h_req = tape::layernorm(mixed, kLayerNormEps);
  return s;
}

SteeredVars build_additive_request(Tape& t, Var q, std::span<const Var> context, double tau_base) {
  SteeredVars s;
  s.ctx = build_context(t, q, context);
  s.q_gap = q;
  s.w = t.constant(std::vector<double>{1.0, 0.0});
  s.g = t.constant(0.0);
  s.tau = t.constant(tau_base);
  s.h_req = tape::layernorm(tape::add(q, tape::layernorm(s.ctx.h_ctx, kLayerNormEps)),
                            kLayerNormEps);
  return s;
}

namespace {

std::vector<Var> constants(Tape& t, std::span<const std::vector<double>> vs) {
  std::vector<Var> out;
  out.reserve(vs.size());
  for (const auto& v : vs) out.push_back(t.constant(v));
  return out;
}

SteeredQuery extract(const SteeredVars& s, SteeringMode mode) {
  SteeredQuery out;
  out.mode = mode;
  out.alpha = s.ctx.alpha.value();
  out.h_ctx = s.ctx.h_ctx.value();
  out.degenerate = s.ctx.degenerate;
  out.g = s.g.scalar();
  out.q_gap = s.q_gap.value();
  out.w1 = s.w.value()[0];
  out.w2 = s.w.value()[1];
  out.h_req = s.h_req.value();
  out.tau_dyn = s.tau.scalar();
  return out;
}

void check_dim(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    fail(ErrorCode::kDimensionMismatch,
         fmt::format("{}: vectors of dim {} and {}", what, a.size(), b.size()));
  }
}

}  // namespace

ContextSummary aggregate_context(std::span<const double> q,
                                 std::span<const std::vector<double>> context) {
  Tape t;
  auto ctx = constants(t, context);
  ContextVars cv = build_context(t, t.constant(q), ctx);
  return {cv.alpha.value(), cv.h_ctx.value(), cv.degenerate};
}

double gap_gate(std::span<const double> q, std::span<const double> h_ctx,
                const tape::Parameter& w_gap) {
  check_dim(q, h_ctx, "gap_gate");
  Tape t;
  return build_gate(t.constant(q), t.constant(h_ctx), t.param(w_gap)).scalar();
}

std::vector<double> subtract_projection(std::span<const double> q, std::span<const double> h_ctx,
                                        double g) {
  check_dim(q, h_ctx, "subtract_projection");
  double norm = 0.0;
  for (double x : h_ctx) norm += x * x;
  if (norm == 0.0) fail(ErrorCode::kInvalidArgument, "subtract_projection: zero-norm context");
  Tape t;
  return build_subtraction(t.constant(q), t.constant(h_ctx), t.constant(g)).value();
}

MixResult mix(std::span<const double> q_gap, std::span<const double> h_ctx,
              const tape::Parameter& w_mix, bool use_mix) {
  check_dim(q_gap, h_ctx, "mix");
  Tape t;
  Var qg = t.constant(q_gap);
  Var hc = t.constant(h_ctx);
  if (!use_mix) return {1.0, 0.0, tape::layernorm(qg, kLayerNormEps).value()};
  Var w = tape::softmax(tape::matvec(t.param(w_mix), tape::concat({qg, hc})));
  Var mixed = tape::add(tape::mul(tape::slice(w, 0, 1), qg), tape::mul(tape::slice(w, 1, 1), hc));
  return {w.value()[0], w.value()[1], tape::layernorm(mixed, kLayerNormEps).value()};
}

double dynamic_temperature(std::span<const double> q, std::span<const double> h_ctx,
                           const SteeringParams& p) {
  check_dim(q, h_ctx, "dynamic_temperature");
  Tape t;
  ParamVars pv = bind(t, p);
  return build_temperature(t, t.constant(q), t.constant(h_ctx), pv, p.log_tau_base).scalar();
}

SteeredQuery gap_request(std::span<const double> q, std::span<const std::vector<double>> context,
                         const SteeringParams& p) {
  Tape t;
  ParamVars pv = bind(t, p);
  auto ctx = constants(t, context);
  return extract(build_gap_request(t, t.constant(q), ctx, p, pv), SteeringMode::kGap);
}

SteeredQuery additive_request(std::span<const double> q,
                              std::span<const std::vector<double>> context, double tau_base) {
  Tape t;
  auto ctx = constants(t, context);
  return extract(build_additive_request(t, t.constant(q), ctx, tau_base), SteeringMode::kAdditive);
}

SteeredQuery steer(std::span<const double> q, std::span<const std::vector<double>> context,
                   const SteeringParams& p) {
  return p.mode == SteeringMode::kGap ? gap_request(q, context, p)
                                      : additive_request(q, context, p.tau_base());
}

std::string serialize_params(const SteeringParams& p) {
  json header;
  header["dim"] = p.dim;
  header["hidden"] = p.hidden;
  header["use_mix"] = p.use_mix;
  header["mode"] = steering_mode_name(p.mode);
  header["log_tau_base"] = p.log_tau_base;
  std::vector<std::string> proj;
  for (const auto& pr : p.projections) proj.emplace_back(modality_name(pr.modality));
  header["projections"] = proj;

  io::ByteWriter w;
  const std::string head = header.dump() + "\n";
  w.bytes(head.data(), head.size());
  w.bytes(kParamMagic, 4);
  w.u32(kParamVersion);
  for (const tape::Parameter* t : p.tensors()) {
    for (double x : t->data()) w.f32(static_cast<float>(x));
  }
  return w.buffer();
}

SteeringParams deserialize_params(std::string_view bytes, const std::string& source) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) {
    fail(ErrorCode::kFormat, fmt::format("{}: missing JSON header line", source));
  }
  json header;
  try {
    header = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, fmt::format("{}: bad header: {}", source, e.what()));
  }
  SteeringParams p;
  try {
    const auto dim = header.at("dim").get<std::size_t>();
    const auto hidden = header.at("hidden").get<std::size_t>();
    p = SteeringParams::create(dim, hidden, header.at("use_mix").get<bool>(),
                               parse_steering_mode(header.at("mode").get<std::string>()));
    p.log_tau_base = header.at("log_tau_base").get<double>();
    for (const auto& m : header.value("projections", std::vector<std::string>{})) {
      p.projections.push_back({parse_modality(m), tape::Parameter("proj_" + m, dim, dim)});
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, fmt::format("{}: bad header: {}", source, e.what()));
  }

  const std::size_t body = nl + 1;
  if (bytes.size() < body + 4 || std::memcmp(bytes.data() + body, kParamMagic, 4) != 0) {
    fail(ErrorCode::kBadMagic, fmt::format("{}: missing GRLP block", source));
  }
  io::ByteReader r(bytes, source, body + 4);
  const std::uint32_t version = r.u32();
  if (version != kParamVersion) {
    fail(ErrorCode::kVersionMismatch,
         fmt::format("{}: parameter version {} (expected {})", source, version, kParamVersion));
  }
  for (tape::Parameter* t : p.trainable()) {
    for (double& x : t->data()) x = r.f32();
  }
  if (r.remaining() != 0) {
    fail(ErrorCode::kFormat, fmt::format("{}: {} trailing bytes", source, r.remaining()));
  }
  return p;
}

void save_params(const SteeringParams& p, const std::filesystem::path& path) {
  io::write_file(path, serialize_params(p));
}

SteeringParams load_params(const std::filesystem::path& path) {
  return deserialize_params(io::read_file(path), path.string());
}

}  // namespace grail
