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

#include "grail/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "grail/error.hpp"

namespace grail::tape {

const char* op_name(OpKind op) noexcept {
  switch (op) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParam: return "param";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kScale: return "scale";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kDot: return "dot";
    case OpKind::kMatVec: return "matvec";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLayerNorm: return "layernorm";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kLogSumExp: return "logsumexp";
    case OpKind::kConcat: return "concat";
    case OpKind::kSum: return "sum";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kClamp: return "clamp";
    case OpKind::kSlice: return "slice";
  }
  return "unknown";
}

Parameter::Parameter(std::string name, std::size_t rows, std::size_t cols)
    : name_(std::move(name)), rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

const std::vector<double>& Var::value() const { return tape_->node(*this).value; }

double Var::scalar() const {
  const auto& v = value();
  if (v.size() != 1) {
    fail(ErrorCode::kDimensionMismatch,
         fmt::format("expected scalar node, got size {}", v.size()));
  }
  return v[0];
}

std::size_t Var::size() const { return value().size(); }

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) fail(ErrorCode::kInvalidArgument, "use of an empty tape variable");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) fail(ErrorCode::kInvalidArgument, "operands live on different tapes");
  return t;
}

void require_same_size(Var a, Var b, const char* op) {
  if (a.size() != b.size()) {
    fail(ErrorCode::kDimensionMismatch,
         fmt::format("{}: operand sizes {} and {} differ", op, a.size(), b.size()));
  }
}

void require_scalar(Var a, const char* op) {
  if (a.size() != 1) {
    fail(ErrorCode::kDimensionMismatch,
         fmt::format("{}: expected scalar operand, got size {}", op, a.size()));
  }
}

}  // namespace

Var Tape::push(Node node) {
  for (double x : node.value) {
    if (!std::isfinite(x)) {
      fail(ErrorCode::kNonFinite,
           fmt::format("non-finite value produced by {} at tape position {}",
                       op_name(node.op), nodes_.size()));
    }
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

const Tape::Node& Tape::node(Var v) const { return nodes_.at(v.index()); }

OpKind Tape::op(Var v) const { return node(v).op; }

Var Tape::constant(std::span<const double> values) {
  Node n;
  n.op = OpKind::kConstant;
  n.rows = values.size();
  n.value.assign(values.begin(), values.end());
  return push(std::move(n));
}

Var Tape::constant(std::span<const float> values) {
  Node n;
  n.op = OpKind::kConstant;
  n.rows = values.size();
  n.value.assign(values.begin(), values.end());
  return push(std::move(n));
}

Var Tape::constant(double value) {
  const double v[1] = {value};
  return constant(std::span<const double>(v, 1));
}

Var Tape::constant_matrix(std::size_t rows, std::size_t cols, std::span<const double> values) {
  if (rows * cols != values.size()) {
    fail(ErrorCode::kDimensionMismatch,
         fmt::format("constant_matrix: {}x{} needs {} values, got {}", rows, cols, rows * cols,
                     values.size()));
  }
  Node n;
  n.op = OpKind::kConstant;
  n.rows = rows;
  n.cols = cols;
  n.value.assign(values.begin(), values.end());
  return push(std::move(n));
}

Var Tape::param(const Parameter& p) {
  Node n;
  n.op = OpKind::kParam;
  n.rows = p.rows();
  n.cols = p.cols();
  n.value.assign(p.data().begin(), p.data().end());
  n.param = &p;
  return push(std::move(n));
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_size(a, b, "add");
  Tape::Node n;
  n.op = OpKind::kAdd;
  n.a = a.index();
  n.b = b.index();
  n.rows = a.size();
  n.value = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += bv[i];
  return t.push(std::move(n));
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_size(a, b, "sub");
  Tape::Node n;
  n.op = OpKind::kSub;
  n.a = a.index();
  n.b = b.index();
  n.rows = a.size();
  n.value = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] -= bv[i];
  return t.push(std::move(n));
}

Var scale(Var a, double factor) {
  Tape& t = tape_of(a);
  Tape::Node n;
  n.op = OpKind::kScale;
  n.a = a.index();
  n.aux = factor;
  n.rows = a.size();
  n.value = a.value();
  for (double& x : n.value) x *= factor;
  return t.push(std::move(n));
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.size() != 1 && b.size() != 1) require_same_size(a, b, "mul");
  Tape::Node n;
  n.op = OpKind::kMul;
  n.a = a.index();
  n.b = b.index();
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t len = std::max(av.size(), bv.size());
  n.rows = len;
  n.value.resize(len);
  for (std::size_t i = 0; i < len; ++i) {
    n.value[i] = av[av.size() == 1 ? 0 : i] * bv[bv.size() == 1 ? 0 : i];
  }
  return t.push(std::move(n));
}

Var div(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_scalar(b, "div");
  const double denom = b.value()[0];
  if (denom == 0.0) fail(ErrorCode::kNonFinite, "div: division by zero");
  Tape::Node n;
  n.op = OpKind::kDiv;
  n.a = a.index();
  n.b = b.index();
  n.rows = a.size();
  n.value = a.value();
  for (double& x : n.value) x /= denom;
  return t.push(std::move(n));
}

Var dot(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_size(a, b, "dot");
  Tape::Node n;
  n.op = OpKind::kDot;
  n.a = a.index();
  n.b = b.index();
  n.rows = 1;
  const auto& av = a.value();
  const auto& bv = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  n.value = {s};
  return t.push(std::move(n));
}

Var matvec(Var w, Var x) {
  Tape& t = tape_of(w, x);
  const auto& wn = t.node(w);
  if (wn.cols != x.size() || wn.rows * wn.cols != wn.value.size()) {
    fail(ErrorCode::kDimensionMismatch,
         fmt::format("matvec: {}x{} matrix against vector of size {}", wn.rows, wn.cols,
                     x.size()));
  }
  Tape::Node n;
  n.op = OpKind::kMatVec;
  n.a = w.index();
  n.b = x.index();
  n.rows = wn.rows;
  n.value.assign(wn.rows, 0.0);
  const auto& xv = x.value();
  for (std::size_t r = 0; r < wn.rows; ++r) {
    const double* row = wn.value.data() + r * wn.cols;
    double s = 0.0;
    for (std::size_t c = 0; c < wn.cols; ++c) s += row[c] * xv[c];
    n.value[r] = s;
  }
  return t.push(std::move(n));
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  Tape::Node n;
  n.op = OpKind::kSigmoid;
  n.a = a.index();
  n.rows = a.size();
  n.value = a.value();
  for (double& x : n.value) {
    x = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return t.push(std::move(n));
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  Tape::Node n;
  n.op = OpKind::kTanh;
  n.a = a.index();
  n.rows = a.size();
  n.value = a.value();
  for (double& x : n.value) x = std::tanh(x);
  return t.push(std::move(n));
}

Var softmax(Var a) {
  Tape& t = tape_of(a);
  if (a.size() == 0) fail(ErrorCode::kDimensionMismatch, "softmax of empty vector");
  Tape::Node n;
  n.op = OpKind::kSoftmax;
  n.a = a.index();
  n.rows = a.size();
  n.value = a.value();
  const double m = *std::max_element(n.value.begin(), n.value.end());
  double z = 0.0;
  for (double& x : n.value) {
    x = std::exp(x - m);
    z += x;
  }
  for (double& x : n.value) x /= z;
  return t.push(std::move(n));
}

Var layernorm(Var a, double eps) {
  Tape& t = tape_of(a);
  if (a.size() == 0) fail(ErrorCode::kDimensionMismatch, "layernorm of empty vector");
  Tape::Node n;
  n.op = OpKind::kLayerNorm;
  n.a = a.index();
  n.rows = a.size();
  n.value = a.value();
  const double len = static_cast<double>(n.value.size());
  const double mean = std::accumulate(n.value.begin(), n.value.end(), 0.0) / len;
  double var = 0.0;
  for (double x : n.value) var += (x - mean) * (x - mean);
  var /= len;
  const double sigma = std::sqrt(var + eps);
  for (double& x : n.value) x = (x - mean) / sigma;
  n.aux = sigma;
  return t.push(std::move(n));
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  Tape::Node n;
  n.op = OpKind::kExp;
  n.a = a.index();
  n.rows = a.size();
  n.value = a.value();
  for (double& x : n.value) x = std::exp(x);
  return t.push(std::move(n));
}

Var log(Var a) {
  Tape& t = tape_of(a);
  Tape::Node n;
  n.op = OpKind::kLog;
  n.a = a.index();
  n.rows = a.size();
  n.value = a.value();
  for (double& x : n.value) {
    if (x <= 0.0) fail(ErrorCode::kNonFinite, "log of non-positive value");
    x = std::log(x);
  }
  return t.push(std::move(n));
}

Var logsumexp(Var a) {
  Tape& t = tape_of(a);
  if (a.size() == 0) fail(ErrorCode::kDimensionMismatch, "logsumexp of empty vector");
  Tape::Node n;
  n.op = OpKind::kLogSumExp;
  n.a = a.index();
  n.rows = 1;
  const auto& av = a.value();
  const double m = *std::max_element(av.begin(), av.end());
  n.cache.resize(av.size());
  double z = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    n.cache[i] = std::exp(av[i] - m);
    z += n.cache[i];
  }
  for (double& w : n.cache) w /= z;
  n.value = {m + std::log(z)};
  return t.push(std::move(n));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorCode::kDimensionMismatch, "concat of nothing");
  Tape& t = tape_of(parts.front());
  Tape::Node n;
  n.op = OpKind::kConcat;
  for (Var p : parts) {
    tape_of(parts.front(), p);
    n.inputs.push_back(p.index());
    const auto& v = p.value();
    n.value.insert(n.value.end(), v.begin(), v.end());
  }
  n.rows = n.value.size();
  return t.push(std::move(n));
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  Tape::Node n;
  n.op = OpKind::kSum;
  n.a = a.index();
  n.rows = 1;
  const auto& av = a.value();
  n.value = {std::accumulate(av.begin(), av.end(), 0.0)};
  return t.push(std::move(n));
}

Var sqrt(Var a) {
  Tape& t = tape_of(a);
  Tape::Node n;
  n.op = OpKind::kSqrt;
  n.a = a.index();
  n.rows = a.size();
  n.value = a.value();
  for (double& x : n.value) {
    if (x <= 0.0) fail(ErrorCode::kNonFinite, "sqrt of non-positive value");
    x = std::sqrt(x);
  }
  return t.push(std::move(n));
}

Var clamp(Var a, double lo, double hi) {
  Tape& t = tape_of(a);
  Tape::Node n;
  n.op = OpKind::kClamp;
  n.a = a.index();
  n.aux = lo;
  n.aux2 = hi;
  n.rows = a.size();
  n.value = a.value();
  for (double& x : n.value) x = std::clamp(x, lo, hi);
  return t.push(std::move(n));
}

Var slice(Var a, std::size_t offset, std::size_t length) {
  Tape& t = tape_of(a);
  if (offset + length > a.size()) {
    fail(ErrorCode::kDimensionMismatch,
         fmt::format("slice [{}, {}) of vector of size {}", offset, offset + length, a.size()));
  }
  Tape::Node n;
  n.op = OpKind::kSlice;
  n.a = a.index();
  n.aux = static_cast<double>(offset);
  n.rows = length;
  const auto& av = a.value();
  n.value.assign(av.begin() + static_cast<std::ptrdiff_t>(offset),
                 av.begin() + static_cast<std::ptrdiff_t>(offset + length));
  return t.push(std::move(n));
}

Var cosine(Var a, Var b) {
  Var denom = sqrt(mul(dot(a, a), dot(b, b)));
  return div(dot(a, b), denom);
}

GradientMap Tape::backward(Var loss) const {
  if (loss.tape() != this) fail(ErrorCode::kInvalidArgument, "loss belongs to another tape");
  if (loss.size() != 1) {
    fail(ErrorCode::kDimensionMismatch,
         fmt::format("backward needs a scalar loss, got size {}", loss.size()));
  }

  GradientMap out;
  for (const Node& n : nodes_) {
    if (n.op == OpKind::kParam) out.try_emplace(n.param->name(), n.param->size(), 0.0);
  }

  std::vector<std::vector<double>> grads(loss.index() + 1);
  grads[loss.index()] = {1.0};

  auto acc = [&](std::uint32_t idx) -> std::vector<double>& {
    auto& g = grads[idx];
    if (g.empty()) g.assign(nodes_[idx].value.size(), 0.0);
    return g;
  };

  for (std::int64_t i = loss.index(); i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    const std::vector<double>& g = grads[static_cast<std::size_t>(i)];
    if (g.empty()) continue;

    switch (n.op) {
      case OpKind::kConstant:
        break;
      case OpKind::kParam: {
        auto& dst = out[n.param->name()];
        for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
        break;
      }
      case OpKind::kAdd: {
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        auto& gb = acc(n.b);
        for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k];
        break;
      }
      case OpKind::kSub: {
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        auto& gb = acc(n.b);
        for (std::size_t k = 0; k < g.size(); ++k) gb[k] -= g[k];
        break;
      }
      case OpKind::kScale: {
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += n.aux * g[k];
        break;
      }
      case OpKind::kMul: {
        const auto& av = nodes_[n.a].value;
        const auto& bv = nodes_[n.b].value;
        auto& ga = acc(n.a);
        if (av.size() == 1 && g.size() > 1) {
          double s = 0.0;
          for (std::size_t k = 0; k < g.size(); ++k) s += g[k] * bv[k];
          ga[0] += s;
        } else {
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * bv[bv.size() == 1 ? 0 : k];
        }
        auto& gb = acc(n.b);
        if (bv.size() == 1 && g.size() > 1) {
          double s = 0.0;
          for (std::size_t k = 0; k < g.size(); ++k) s += g[k] * av[k];
          gb[0] += s;
        } else {
          for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * av[av.size() == 1 ? 0 : k];
        }
        break;
      }
      case OpKind::kDiv: {
        const auto& av = nodes_[n.a].value;
        const double denom = nodes_[n.b].value[0];
        auto& ga = acc(n.a);
        double s = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
          ga[k] += g[k] / denom;
          s += g[k] * av[k];
        }
        acc(n.b)[0] -= s / (denom * denom);
        break;
      }
      case OpKind::kDot: {
        const auto& av = nodes_[n.a].value;
        const auto& bv = nodes_[n.b].value;
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < av.size(); ++k) ga[k] += g[0] * bv[k];
        auto& gb = acc(n.b);
        for (std::size_t k = 0; k < bv.size(); ++k) gb[k] += g[0] * av[k];
        break;
      }
      case OpKind::kMatVec: {
        const Node& w = nodes_[n.a];
        const auto& xv = nodes_[n.b].value;
        auto& gw = acc(n.a);
        for (std::size_t r = 0; r < w.rows; ++r) {
          double* row = gw.data() + r * w.cols;
          for (std::size_t c = 0; c < w.cols; ++c) row[c] += g[r] * xv[c];
        }
        auto& gx = acc(n.b);
        for (std::size_t r = 0; r < w.rows; ++r) {
          const double* row = w.value.data() + r * w.cols;
          for (std::size_t c = 0; c < w.cols; ++c) gx[c] += row[c] * g[r];
        }
        break;
      }
      case OpKind::kSigmoid: {
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) {
          ga[k] += g[k] * n.value[k] * (1.0 - n.value[k]);
        }
        break;
      }
      case OpKind::kTanh: {
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) {
          ga[k] += g[k] * (1.0 - n.value[k] * n.value[k]);
        }
        break;
      }
      case OpKind::kSoftmax: {
        double s = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) s += g[k] * n.value[k];
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += n.value[k] * (g[k] - s);
        break;
      }
      case OpKind::kLayerNorm: {
        const double len = static_cast<double>(g.size());
        double mean_g = 0.0;
        double mean_gy = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
          mean_g += g[k];
          mean_gy += g[k] * n.value[k];
        }
        mean_g /= len;
        mean_gy /= len;
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) {
          ga[k] += (g[k] - mean_g - n.value[k] * mean_gy) / n.aux;
        }
        break;
      }
      case OpKind::kExp: {
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * n.value[k];
        break;
      }
      case OpKind::kLog: {
        const auto& av = nodes_[n.a].value;
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] / av[k];
        break;
      }
      case OpKind::kLogSumExp: {
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < n.cache.size(); ++k) ga[k] += g[0] * n.cache[k];
        break;
      }
      case OpKind::kConcat: {
        std::size_t offset = 0;
        for (std::uint32_t in : n.inputs) {
          auto& gi = acc(in);
          for (std::size_t k = 0; k < gi.size(); ++k) gi[k] += g[offset + k];
          offset += gi.size();
        }
        break;
      }
      case OpKind::kSum: {
        auto& ga = acc(n.a);
        for (double& x : ga) x += g[0];
        break;
      }
      case OpKind::kSqrt: {
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] / (2.0 * n.value[k]);
        break;
      }
      case OpKind::kClamp: {
        const auto& av = nodes_[n.a].value;
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) {
          if (av[k] >= n.aux && av[k] <= n.aux2) ga[k] += g[k];
        }
        break;
      }
      case OpKind::kSlice: {
        auto& ga = acc(n.a);
        const auto offset = static_cast<std::size_t>(n.aux);
        for (std::size_t k = 0; k < g.size(); ++k) ga[offset + k] += g[k];
        break;
      }
    }
  }
  return out;
}

GradCheckReport check_gradients(const std::function<Var(Tape&)>& fn,
                                std::span<Parameter* const> params, double eps,
                                std::size_t max_coords, std::uint64_t seed) {
  GradCheckReport report;
  GradientMap analytic;
  {
    Tape tape;
    Var loss = fn(tape);
    analytic = tape.backward(loss);
  }

  auto evaluate = [&fn] {
    Tape tape;
    return fn(tape).scalar();
  };

  std::mt19937_64 rng(seed);
  for (Parameter* p : params) {
    GradCheckEntry entry;
    entry.param = p->name();
    std::vector<double> grad(p->size(), 0.0);
    if (auto it = analytic.find(p->name()); it != analytic.end()) grad = it->second;

    std::vector<std::size_t> coords(p->size());
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords != 0 && coords.size() > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords);
      std::sort(coords.begin(), coords.end());
    }

    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t c : coords) {
      const double saved = (*p)[c];
      (*p)[c] = saved + eps;
      const double up = evaluate();
      (*p)[c] = saved - eps;
      const double down = evaluate();
      (*p)[c] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double a = grad[c];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      entry.max_coord_error = std::max(entry.max_coord_error, rel);
      entry.max_abs_analytic = std::max(entry.max_abs_analytic, std::abs(a));
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      ++entry.coords_checked;
    }
    entry.rel_error = std::sqrt(diff2) / std::max(1e-12, std::sqrt(a2) + std::sqrt(n2));
    report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace grail::tape
