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

// Reverse-mode differentiation over the small, fixed vocabulary of vector
// primitives the steering layers and the contrastive losses are built from.
//
// A Tape records nodes in creation order. Every node stores its forward value;
// backward() walks the tape once from the loss back to index 0, which is a
// valid reverse topological order because inputs always precede outputs.
// All values are double precision.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace grail::tape {

enum class OpKind : std::uint8_t {
  kConstant,
  kParam,
  kAdd,
  kSub,
  kScale,
  kMul,
  kDiv,
  kDot,
  kMatVec,
  kSigmoid,
  kTanh,
  kSoftmax,
  kLayerNorm,
  kExp,
  kLog,
  kLogSumExp,
  kConcat,
  kSum,
  kSqrt,
  kClamp,
  kSlice,
};

const char* op_name(OpKind op) noexcept;

/// A named, trainable row-major tensor. Vectors are rows x 1.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, std::size_t rows, std::size_t cols);

  const std::string& name() const { return name_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

 private:
  std::string name_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Gradient buffers keyed by parameter name; each buffer has the parameter's
/// exact element count.
using GradientMap = std::map<std::string, std::vector<double>>;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives and
/// has not been cleared.
class Var {
 public:
  Var() = default;

  const std::vector<double>& value() const;
  double scalar() const;
  std::size_t size() const;
  Tape* tape() const { return tape_; }
  std::uint32_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(std::span<const double> values);
  Var constant(std::span<const float> values);
  Var constant(double value);
  /// Row-major rows x cols constant, usable as the left operand of matvec.
  Var constant_matrix(std::size_t rows, std::size_t cols, std::span<const double> values);
  /// Registers a parameter leaf. backward() reports a gradient entry for it
  /// even when it does not influence the loss.
  Var param(const Parameter& p);

  /// Gradients of a scalar loss with respect to every registered parameter.
  GradientMap backward(Var loss) const;

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  OpKind op(Var v) const;

 private:
  struct Node {
    OpKind op = OpKind::kConstant;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::vector<std::uint32_t> inputs;  // concat only
    std::size_t rows = 0;
    std::size_t cols = 1;
    std::vector<double> value;
    std::vector<double> cache;  // softmax weights for logsumexp
    double aux = 0.0;           // scale factor, layernorm sigma, clamp bounds
    double aux2 = 0.0;
    const Parameter* param = nullptr;
  };

  Var push(Node node);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;

  friend class Var;
  friend Var add(Var, Var);
  friend Var sub(Var, Var);
  friend Var scale(Var, double);
  friend Var mul(Var, Var);
  friend Var div(Var, Var);
  friend Var dot(Var, Var);
  friend Var matvec(Var, Var);
  friend Var sigmoid(Var);
  friend Var tanh(Var);
  friend Var softmax(Var);
  friend Var layernorm(Var, double);
  friend Var exp(Var);
  friend Var log(Var);
  friend Var logsumexp(Var);
  friend Var concat(std::span<const Var>);
  friend Var sum(Var);
  friend Var sqrt(Var);
  friend Var clamp(Var, double, double);
  friend Var slice(Var, std::size_t, std::size_t);
};

// Primitives. Shape rules: add/sub need equal sizes; mul broadcasts when
// either side is a scalar, otherwise multiplies elementwise; div requires a
// scalar denominator; matvec takes a rows x cols left operand.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double factor);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var dot(Var a, Var b);
Var matvec(Var w, Var x);
Var sigmoid(Var a);
Var tanh(Var a);
Var softmax(Var a);
/// Zero-mean, unit-variance normalisation without affine terms.
Var layernorm(Var a, double eps = 1e-5);
Var exp(Var a);
Var log(Var a);
Var logsumexp(Var a);
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
Var sum(Var a);
Var sqrt(Var a);
/// Gradient passes only where lo <= x <= hi.
Var clamp(Var a, double lo, double hi);
Var slice(Var a, std::size_t offset, std::size_t length);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

/// Cosine similarity built from primitives: dot(a,b) / sqrt(dot(a,a) dot(b,b)).
Var cosine(Var a, Var b);

struct GradCheckEntry {
  std::string param;
  std::size_t coords_checked = 0;
  double rel_error = 0.0;        // ||a - n|| / max(1e-12, ||a|| + ||n||) over probed coords
  double max_coord_error = 0.0;  // worst single-coordinate relative error
  double max_abs_analytic = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;  // worst per-tensor rel_error
};

/// Compares backward() against central differences. `fn` must build the loss
/// on the tape it is handed, registering the parameters with Tape::param.
/// At most `max_coords` coordinates per parameter are probed (all when 0),
/// chosen by a seeded shuffle. Per tensor, rel_error compares the probed
/// gradient vectors as a whole; max_coord_error is the worst coordinate under
/// |a - n| / max(1e-8, |a| + |n|), which is dominated by round-off on
/// near-zero coordinates.
GradCheckReport check_gradients(const std::function<Var(Tape&)>& fn,
                                std::span<Parameter* const> params,
                                double eps = 1e-4, std::size_t max_coords = 0,
                                std::uint64_t seed = 0);

}  // namespace grail::tape
