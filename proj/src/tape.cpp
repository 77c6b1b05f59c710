#include "vrf/tape.hpp"

namespace vrf::ad {

const char* Tape::op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::constant: return "constant";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::neg: return "neg";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::sqrt: return "sqrt";
    case Op::sigmoid: return "sigmoid";
    case Op::tanh: return "tanh";
    case Op::softplus: return "softplus";
    case Op::max0: return "max0";
    case Op::dot: return "dot";
    case Op::sum: return "sum";
    case Op::logsumexp: return "logsumexp";
  }
  return "?";
}

void Tape::fail_nonfinite(Op op) const {
  throw TapeError("non-finite value at node " + std::to_string(val_.size()) +
                  " (" + op_name(op) + ")");
}

Id Tape::push_reduction(Op op, double v, std::size_t begin) {
  if (!std::isfinite(v)) fail_nonfinite(op);
  const Id id = static_cast<Id>(val_.size());
  val_.push_back(v);
  kind_.push_back(Kind::reduction);
  op_.push_back(op);
  ia_.push_back(static_cast<Id>(begin));
  ib_.push_back(static_cast<Id>(pool_args_.size()));
  pa_.push_back(0.0);
  pb_.push_back(0.0);
  return id;
}

Id Tape::dot(std::span<const Id> a, std::span<const Id> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("Tape::dot: length mismatch");
  const std::size_t begin = pool_args_.size();
  double v = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    v += val_[a[i]] * val_[b[i]];
    pool_args_.push_back(a[i]);
    pool_parts_.push_back(val_[b[i]]);
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    pool_args_.push_back(b[i]);
    pool_parts_.push_back(val_[a[i]]);
  }
  return push_reduction(Op::dot, v, begin);
}

Id Tape::sum(std::span<const Id> xs) {
  const std::size_t begin = pool_args_.size();
  double v = 0.0;
  for (Id x : xs) {
    v += val_[x];
    pool_args_.push_back(x);
    pool_parts_.push_back(1.0);
  }
  return push_reduction(Op::sum, v, begin);
}

Id Tape::logsumexp(std::span<const Id> xs) {
  if (xs.empty()) throw std::invalid_argument("Tape::logsumexp: empty input");
  double m = val_[xs[0]];
  for (Id x : xs) m = std::max(m, val_[x]);
  double s = 0.0;
  for (Id x : xs) s += std::exp(val_[x] - m);
  const double v = m + std::log(s);
  const std::size_t begin = pool_args_.size();
  for (Id x : xs) {
    pool_args_.push_back(x);
    pool_parts_.push_back(std::exp(val_[x] - v));  // the softmax weight
  }
  return push_reduction(Op::logsumexp, v, begin);
}

std::vector<Id> Tape::softmax(std::span<const Id> xs) {
  const Id lse = logsumexp(xs);
  std::vector<Id> out;
  out.reserve(xs.size());
  for (Id x : xs) out.push_back(exp(sub(x, lse)));
  return out;
}

Id Tape::gelu(Id x) {
  const double c = std::sqrt(2.0 / vrf::kPi);
  const Id x3 = mul(x, mul(x, x));
  const Id u = mul_const(add(x, mul_const(x3, 0.044715)), c);
  // tanh(u) = 2*sigmoid(2u) - 1, composed from engine primitives
  const Id t = add_const(mul_const(sigmoid(mul_const(u, 2.0)), 2.0), -1.0);
  return mul_const(mul(x, add_const(t, 1.0)), 0.5);
}

void Tape::backward(Id root) {
  grad_.assign(val_.size(), 0.0);
  grad_[root] = 1.0;
  for (Id i = static_cast<Id>(val_.size()) - 1; i >= 0; --i) {
    const double g = grad_[i];
    if (g == 0.0) continue;
    switch (kind_[i]) {
      case Kind::input:
        break;
      case Kind::scalar:
        grad_[ia_[i]] += pa_[i] * g;
        if (ib_[i] >= 0) grad_[ib_[i]] += pb_[i] * g;
        break;
      case Kind::reduction:
        for (Id j = ia_[i]; j < ib_[i]; ++j)
          grad_[pool_args_[j]] += pool_parts_[j] * g;
        break;
    }
  }
}

void Tape::reset() {
  val_.clear();
  pa_.clear();
  pb_.clear();
  grad_.clear();
  ia_.clear();
  ib_.clear();
  kind_.clear();
  op_.clear();
  pool_args_.clear();
  pool_parts_.clear();
}

}  // namespace vrf::ad
