#pragma once

// Self-contained reverse-mode differentiation on a flat tape of scalar ops.
// Nodes are appended in topological order, so one reverse sweep computes
// exact gradients. Ops whose derivative does not exist at the evaluation
// point (log/sqrt outside the domain, division by zero) throw domain_error
// rather than silently producing garbage.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace spindiff::ad {

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  AddC,   // a + c0
  MulC,   // a * c0
  Tanh,
  Exp,
  Log,
  Sqrt,
  Clamp,  // clamp(a, c0, c1); gradient passes only strictly inside
  Relu,   // max(0, a); gradient 0 at the kink
};

class Tape;

struct Value {
  Tape* tape = nullptr;
  std::int32_t idx = -1;
  double val() const;
};

class Tape {
public:
  struct Node {
    double val;
    std::int32_t a;
    std::int32_t b;
    Op op;
    double c0;
    double c1;
  };

  void clear() { nodes_.clear(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }
  std::size_t size() const { return nodes_.size(); }

  Value leaf(double v) { return push(v, -1, -1, Op::Leaf); }

  double val(std::int32_t i) const { return nodes_[static_cast<std::size_t>(i)].val; }

  Value push(double v, std::int32_t a, std::int32_t b, Op op, double c0 = 0.0,
             double c1 = 0.0) {
    nodes_.push_back(Node{v, a, b, op, c0, c1});
    return Value{this, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  // Reverse sweep from root; grad(i) valid until the next backward/clear.
  void backward(Value root) {
    grads_.assign(nodes_.size(), 0.0);
    grads_[static_cast<std::size_t>(root.idx)] = 1.0;
    for (std::int32_t i = root.idx; i >= 0; --i) {
      double g = grads_[static_cast<std::size_t>(i)];
      if (g == 0.0) continue;
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      switch (n.op) {
        case Op::Leaf:
          break;
        case Op::Add:
          grads_[n.a] += g;
          grads_[n.b] += g;
          break;
        case Op::Sub:
          grads_[n.a] += g;
          grads_[n.b] -= g;
          break;
        case Op::Mul:
          grads_[n.a] += g * nodes_[n.b].val;
          grads_[n.b] += g * nodes_[n.a].val;
          break;
        case Op::Div: {
          double bv = nodes_[n.b].val;
          grads_[n.a] += g / bv;
          grads_[n.b] -= g * n.val / bv;
          break;
        }
        case Op::Neg:
          grads_[n.a] -= g;
          break;
        case Op::AddC:
          grads_[n.a] += g;
          break;
        case Op::MulC:
          grads_[n.a] += g * n.c0;
          break;
        case Op::Tanh:
          grads_[n.a] += g * (1.0 - n.val * n.val);
          break;
        case Op::Exp:
          grads_[n.a] += g * n.val;
          break;
        case Op::Log:
          grads_[n.a] += g / nodes_[n.a].val;
          break;
        case Op::Sqrt:
          grads_[n.a] += g * 0.5 / n.val;
          break;
        case Op::Clamp:
          if (nodes_[n.a].val > n.c0 && nodes_[n.a].val < n.c1) grads_[n.a] += g;
          break;
        case Op::Relu:
          if (nodes_[n.a].val > 0.0) grads_[n.a] += g;
          break;
      }
    }
  }

  double grad(Value v) const { return grads_[static_cast<std::size_t>(v.idx)]; }
  double grad(std::int32_t i) const { return grads_[static_cast<std::size_t>(i)]; }

private:
  std::vector<Node> nodes_;
  std::vector<double> grads_;
};

inline double Value::val() const { return tape->val(idx); }

inline Value operator+(Value a, Value b) {
  return a.tape->push(a.val() + b.val(), a.idx, b.idx, Op::Add);
}
inline Value operator-(Value a, Value b) {
  return a.tape->push(a.val() - b.val(), a.idx, b.idx, Op::Sub);
}
inline Value operator*(Value a, Value b) {
  return a.tape->push(a.val() * b.val(), a.idx, b.idx, Op::Mul);
}
inline Value operator/(Value a, Value b) {
  double bv = b.val();
  if (bv == 0.0) throw std::domain_error("autodiff: division by zero");
  return a.tape->push(a.val() / bv, a.idx, b.idx, Op::Div);
}
inline Value operator-(Value a) { return a.tape->push(-a.val(), a.idx, -1, Op::Neg); }

inline Value operator+(Value a, double c) {
  return a.tape->push(a.val() + c, a.idx, -1, Op::AddC, c);
}
inline Value operator+(double c, Value a) { return a + c; }
inline Value operator-(Value a, double c) { return a + (-c); }
inline Value operator-(double c, Value a) {
  Value na = -a;
  return na + c;
}
inline Value operator*(Value a, double c) {
  return a.tape->push(a.val() * c, a.idx, -1, Op::MulC, c);
}
inline Value operator*(double c, Value a) { return a * c; }
inline Value operator/(Value a, double c) {
  if (c == 0.0) throw std::domain_error("autodiff: division by zero");
  return a * (1.0 / c);
}
inline Value operator/(double c, Value a) {
  Value one = a.tape->leaf(c);
  return one / a;
}

inline Value tanh(Value a) { return a.tape->push(std::tanh(a.val()), a.idx, -1, Op::Tanh); }
inline Value exp(Value a) { return a.tape->push(std::exp(a.val()), a.idx, -1, Op::Exp); }
inline Value log(Value a) {
  if (a.val() <= 0.0) throw std::domain_error("autodiff: log outside domain");
  return a.tape->push(std::log(a.val()), a.idx, -1, Op::Log);
}
inline Value sqrt(Value a) {
  if (a.val() < 0.0) throw std::domain_error("autodiff: sqrt outside domain");
  if (a.val() == 0.0) throw std::domain_error("autodiff: sqrt not differentiable at 0");
  return a.tape->push(std::sqrt(a.val()), a.idx, -1, Op::Sqrt);
}
inline Value clamp(Value a, double lo, double hi) {
  double v = a.val();
  double c = v < lo ? lo : (v > hi ? hi : v);
  return a.tape->push(c, a.idx, -1, Op::Clamp, lo, hi);
}
inline Value relu(Value a) {
  return a.tape->push(a.val() > 0.0 ? a.val() : 0.0, a.idx, -1, Op::Relu);
}

}  // namespace spindiff::ad

namespace spindiff {

// double-path twins of the tape primitives so numeric kernels can be written
// once, generic over the scalar type.
inline double clamp(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}
inline double relu(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace spindiff
