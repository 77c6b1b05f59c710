#pragma once
// Scalar reverse-mode automatic differentiation on a flat tape.
//
// Every node stores its value and the local partial derivatives w.r.t. its
// inputs, computed during the forward pass; backward() is then a single
// reverse sweep of multiply-accumulates. Unary/binary nodes keep their two
// partials inline; reductions (dot, sum, logsumexp) keep argument ids and
// partials in side pools so a whole inner product costs one node.
//
// Any non-finite value surfacing anywhere raises TapeError naming the first
// offending node; nothing downstream of a NaN is ever trusted.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrf/mathutil.hpp"

namespace vrf::ad {

using Id = std::int32_t;

struct TapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Tape {
 public:
  // Differentiable input.
  Id leaf(double v) { return push_input(Op::leaf, v); }
  // Non-differentiable input; gradient stops here.
  Id constant(double v) { return push_input(Op::constant, v); }

  Id add(Id a, Id b) { return push2(Op::add, val_[a] + val_[b], a, 1.0, b, 1.0); }
  Id sub(Id a, Id b) { return push2(Op::sub, val_[a] - val_[b], a, 1.0, b, -1.0); }
  Id mul(Id a, Id b) {
    return push2(Op::mul, val_[a] * val_[b], a, val_[b], b, val_[a]);
  }
  Id div(Id a, Id b) {
    const double ib = 1.0 / val_[b];
    return push2(Op::div, val_[a] * ib, a, ib, b, -val_[a] * ib * ib);
  }
  Id neg(Id a) { return push1(Op::neg, -val_[a], a, -1.0); }
  Id add_const(Id a, double c) { return push1(Op::add, val_[a] + c, a, 1.0); }
  Id mul_const(Id a, double c) { return push1(Op::mul, val_[a] * c, a, c); }

  Id exp(Id a) {
    const double v = std::exp(val_[a]);
    return push1(Op::exp, v, a, v);
  }
  Id log(Id a) { return push1(Op::log, std::log(val_[a]), a, 1.0 / val_[a]); }
  Id sqrt(Id a) {
    const double v = std::sqrt(val_[a]);
    return push1(Op::sqrt, v, a, 0.5 / v);
  }
  Id sigmoid(Id a) {
    const double v = vrf::sigmoid(val_[a]);
    return push1(Op::sigmoid, v, a, v * (1.0 - v));
  }
  Id tanh(Id a) {
    const double v = std::tanh(val_[a]);
    return push1(Op::tanh, v, a, 1.0 - v * v);
  }
  Id softplus(Id a) {
    return push1(Op::softplus, vrf::softplus(val_[a]), a, vrf::sigmoid(val_[a]));
  }
  // Hinge max(0, x); subgradient 0 at exactly x = 0.
  Id max0(Id a) {
    const bool on = val_[a] > 0.0;
    return push1(Op::max0, on ? val_[a] : 0.0, a, on ? 1.0 : 0.0);
  }

  Id dot(std::span<const Id> a, std::span<const Id> b);
  Id sum(std::span<const Id> xs);
  Id logsumexp(std::span<const Id> xs);

  // softmax_i = exp(x_i - logsumexp(x)); built from exp/sub/logsumexp nodes.
  std::vector<Id> softmax(std::span<const Id> xs);
  // Gaussian error linear unit, tanh form:
  //   0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))
  Id gelu(Id x);

  double val(Id i) const { return val_[i]; }
  double grad(Id i) const {
    if (grad_.size() != val_.size())
      throw std::logic_error("Tape::grad: backward() has not run");
    return grad_[i];
  }

  void backward(Id root);
  void reset();
  std::size_t size() const { return val_.size(); }

 private:
  enum class Op : std::uint8_t {
    leaf, constant, add, sub, mul, div, neg, exp, log, sqrt,
    sigmoid, tanh, softplus, max0, dot, sum, logsumexp,
  };
  enum class Kind : std::uint8_t { input = 0, scalar = 1, reduction = 2 };

  static const char* op_name(Op op);
  [[noreturn]] void fail_nonfinite(Op op) const;

  Id push_input(Op op, double v) {
    if (!std::isfinite(v)) fail_nonfinite(op);
    return raw_push(Kind::input, op, v, -1, 0.0, -1, 0.0);
  }
  Id push1(Op op, double v, Id a, double pa) {
    if (!std::isfinite(v)) fail_nonfinite(op);
    return raw_push(Kind::scalar, op, v, a, pa, -1, 0.0);
  }
  Id push2(Op op, double v, Id a, double pa, Id b, double pb) {
    if (!std::isfinite(v)) fail_nonfinite(op);
    return raw_push(Kind::scalar, op, v, a, pa, b, pb);
  }
  Id raw_push(Kind k, Op op, double v, Id a, double pa, Id b, double pb) {
    const Id id = static_cast<Id>(val_.size());
    val_.push_back(v);
    kind_.push_back(k);
    op_.push_back(op);
    ia_.push_back(a);
    ib_.push_back(b);
    pa_.push_back(pa);
    pb_.push_back(pb);
    return id;
  }
  // Appends a reduction node whose arguments/partials were just written to
  // the pools starting at `begin`.
  Id push_reduction(Op op, double v, std::size_t begin);

  std::vector<double> val_, pa_, pb_, grad_;
  std::vector<Id> ia_, ib_;
  std::vector<Kind> kind_;
  std::vector<Op> op_;
  // Reduction pools; for a reduction node, ia_ = begin and ib_ = end index.
  std::vector<Id> pool_args_;
  std::vector<double> pool_parts_;
};

}  // namespace vrf::ad
