#pragma once

/// \file autodiff.hpp
///
/// Scalar reverse-mode tape plus degree-2 forward Taylor jets.
///
/// A `Jet2<S>` carries (f, df/dx, d2f/dx2) at one point. With `S = double`
/// it is plain forward-mode differentiation in x. With `S = Var` every
/// coefficient is a node on a `Tape`, so gradients with respect to the
/// leaves (network parameters) flow through the spatial derivatives too.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vpinn {

enum class Op : std::uint8_t { Leaf, Add, Sub, Mul, Div, Neg, Exp, Sin, Cos, Tanh, PowI };

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Exp: return "exp";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Tanh: return "tanh";
    case Op::PowI: return "powi";
  }
  return "?";
}

struct NodeRef {
  std::uint32_t index = 0;
  friend bool operator==(NodeRef, NodeRef) = default;
};

/// Append-only computation graph. Each node has at most two parents and
/// stores the local partials d(node)/d(parent) computed at record time, so
/// the reverse sweep is a single pass of multiply-adds.
class Tape {
 public:
  struct Node {
    Op op = Op::Leaf;
    std::int32_t parent[2] = {-1, -1};
    double partial[2] = {0.0, 0.0};
  };

  NodeRef leaf(double value) {
    nodes_.push_back(Node{});
    values_.push_back(value);
    return last();
  }

  /// Records a unary or binary primitive. `PowI` must go through `powi`.
  NodeRef primitive(Op op, NodeRef a, std::optional<NodeRef> b = std::nullopt) {
    check(a);
    const double x = values_[a.index];
    Node n;
    n.op = op;
    n.parent[0] = static_cast<std::int32_t>(a.index);
    double value = 0.0;
    switch (op) {
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div: {
        if (!b) throw std::invalid_argument(std::string("binary op '") + op_name(op) + "' needs two operands");
        check(*b);
        const double y = values_[b->index];
        n.parent[1] = static_cast<std::int32_t>(b->index);
        if (op == Op::Add) {
          value = x + y;
          n.partial[0] = 1.0;
          n.partial[1] = 1.0;
        } else if (op == Op::Sub) {
          value = x - y;
          n.partial[0] = 1.0;
          n.partial[1] = -1.0;
        } else if (op == Op::Mul) {
          value = x * y;
          n.partial[0] = y;
          n.partial[1] = x;
        } else {
          if (y == 0.0) throw std::domain_error("division by a node with value 0");
          value = x / y;
          n.partial[0] = 1.0 / y;
          n.partial[1] = -value / y;
        }
        break;
      }
      case Op::Neg:
        value = -x;
        n.partial[0] = -1.0;
        break;
      case Op::Exp:
        value = std::exp(x);
        n.partial[0] = value;
        break;
      case Op::Sin:
        value = std::sin(x);
        n.partial[0] = std::cos(x);
        break;
      case Op::Cos:
        value = std::cos(x);
        n.partial[0] = -std::sin(x);
        break;
      case Op::Tanh:
        value = std::tanh(x);
        n.partial[0] = 1.0 - value * value;
        break;
      case Op::Leaf:
      case Op::PowI:
        throw std::invalid_argument(std::string("primitive() cannot record '") + op_name(op) + "'");
    }
    if (b && n.parent[1] < 0) throw std::invalid_argument(std::string("unary op '") + op_name(op) + "' takes one operand");
    nodes_.push_back(n);
    values_.push_back(value);
    return last();
  }

  NodeRef powi(NodeRef a, int exponent) {
    check(a);
    const double x = values_[a.index];
    if (exponent < 0 && x == 0.0) throw std::domain_error("negative integer power of 0");
    Node n;
    n.op = Op::PowI;
    n.parent[0] = static_cast<std::int32_t>(a.index);
    n.partial[0] = exponent == 0 ? 0.0 : exponent * ipow(x, exponent - 1);
    nodes_.push_back(n);
    values_.push_back(ipow(x, exponent));
    return last();
  }

  double value(NodeRef r) const {
    check(r);
    return values_[r.index];
  }
  const Node& node(NodeRef r) const {
    check(r);
    return nodes_[r.index];
  }
  std::size_t size() const { return nodes_.size(); }
  bool contains(NodeRef r) const { return r.index < nodes_.size(); }

  void clear() {
    nodes_.clear();
    values_.clear();
  }
  void reserve(std::size_t n) {
    nodes_.reserve(n);
    values_.reserve(n);
  }

  /// Full adjoint vector for a set of weighted output seeds. A single seed
  /// {loss, 1.0} gives the ordinary gradient; several seeds compute a
  /// vector-Jacobian product in one sweep.
  std::vector<double> adjoints(std::span<const std::pair<NodeRef, double>> seeds) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    std::size_t top = 0;
    for (const auto& [ref, w] : seeds) {
      check(ref);
      adj[ref.index] += w;
      top = std::max<std::size_t>(top, ref.index + 1);
    }
    for (std::size_t i = top; i-- > 0;) {
      const double a = adj[i];
      if (a == 0.0) continue;
      const Node& n = nodes_[i];
      if (n.parent[0] >= 0) adj[static_cast<std::size_t>(n.parent[0])] += n.partial[0] * a;
      if (n.parent[1] >= 0) adj[static_cast<std::size_t>(n.parent[1])] += n.partial[1] * a;
    }
    return adj;
  }

  /// d(loss)/d(param) for each parameter leaf, ordered like `params`.
  std::vector<double> backward(NodeRef loss, std::span<const NodeRef> params) const {
    for (NodeRef p : params) {
      if (!contains(p)) throw std::invalid_argument("parameter node is not on this tape");
      if (nodes_[p.index].op != Op::Leaf) throw std::invalid_argument("parameter node is not a leaf");
    }
    const std::pair<NodeRef, double> seed{loss, 1.0};
    const auto adj = adjoints(std::span(&seed, 1));
    std::vector<double> grad;
    grad.reserve(params.size());
    for (NodeRef p : params) grad.push_back(adj[p.index]);
    return grad;
  }

 private:
  static double ipow(double x, int n) {
    if (n < 0) return 1.0 / ipow(x, -n);
    double r = 1.0;
    while (n-- > 0) r *= x;
    return r;
  }
  NodeRef last() const { return NodeRef{static_cast<std::uint32_t>(nodes_.size() - 1)}; }
  void check(NodeRef r) const {
    if (r.index >= nodes_.size()) throw std::invalid_argument("node index " + std::to_string(r.index) + " is not on this tape");
  }

  std::vector<Node> nodes_;
  std::vector<double> values_;
};

/// Value handle on a tape with arithmetic operators. Mixed Var/double
/// arithmetic records the double as a constant leaf.
class Var {
 public:
  Var() = default;
  Var(Tape& tape, NodeRef ref) : tape_(&tape), ref_(ref) {}
  static Var leaf(Tape& tape, double v) { return Var(tape, tape.leaf(v)); }

  double value() const { return tape_->value(ref_); }
  NodeRef ref() const { return ref_; }
  Tape& tape() const { return *tape_; }

  Var constant(double v) const { return leaf(*tape_, v); }

  friend Var operator+(const Var& a, const Var& b) { return a.binary(Op::Add, b); }
  friend Var operator-(const Var& a, const Var& b) { return a.binary(Op::Sub, b); }
  friend Var operator*(const Var& a, const Var& b) { return a.binary(Op::Mul, b); }
  friend Var operator/(const Var& a, const Var& b) { return a.binary(Op::Div, b); }
  friend Var operator-(const Var& a) { return Var(*a.tape_, a.tape_->primitive(Op::Neg, a.ref_)); }

  friend Var operator+(const Var& a, double b) { return a + a.constant(b); }
  friend Var operator+(double a, const Var& b) { return b.constant(a) + b; }
  friend Var operator-(const Var& a, double b) { return a - a.constant(b); }
  friend Var operator-(double a, const Var& b) { return b.constant(a) - b; }
  friend Var operator*(const Var& a, double b) { return a * a.constant(b); }
  friend Var operator*(double a, const Var& b) { return b.constant(a) * b; }
  friend Var operator/(const Var& a, double b) { return a / a.constant(b); }
  friend Var operator/(double a, const Var& b) { return b.constant(a) / b; }

  Var& operator+=(const Var& b) { return *this = *this + b; }
  Var& operator-=(const Var& b) { return *this = *this - b; }
  Var& operator*=(const Var& b) { return *this = *this * b; }

  friend Var exp(const Var& a) { return a.unary(Op::Exp); }
  friend Var sin(const Var& a) { return a.unary(Op::Sin); }
  friend Var cos(const Var& a) { return a.unary(Op::Cos); }
  friend Var tanh(const Var& a) { return a.unary(Op::Tanh); }
  friend Var powi(const Var& a, int n) { return Var(*a.tape_, a.tape_->powi(a.ref_, n)); }

 private:
  Var binary(Op op, const Var& b) const {
    if (tape_ != b.tape_) throw std::invalid_argument("operands live on different tapes");
    return Var(*tape_, tape_->primitive(op, ref_, b.ref_));
  }
  Var unary(Op op) const { return Var(*tape_, tape_->primitive(op, ref_)); }

  Tape* tape_ = nullptr;
  NodeRef ref_;
};

inline double powi(double x, int n) {
  if (n < 0) return 1.0 / powi(x, -n);
  double r = 1.0;
  while (n-- > 0) r *= x;
  return r;
}

inline double value_of(double x) { return x; }
inline double value_of(const Var& v) { return v.value(); }

/// Truncated Taylor polynomial (value, first, second derivative in x).
template <class S>
struct Jet2 {
  S c0{};
  S c1{};
  S c2{};

  Jet2() = default;
  Jet2(S v, S d1, S d2) : c0(std::move(v)), c1(std::move(d1)), c2(std::move(d2)) {}
};

inline Jet2<double> seed_jet(double x) { return {x, 1.0, 0.0}; }
inline Jet2<double> constant_jet(double c) { return {c, 0.0, 0.0}; }
inline Jet2<Var> seed_jet(Tape& t, double x) { return {Var::leaf(t, x), Var::leaf(t, 1.0), Var::leaf(t, 0.0)}; }
inline Jet2<Var> constant_jet(Tape& t, double c) { return {Var::leaf(t, c), Var::leaf(t, 0.0), Var::leaf(t, 0.0)}; }
/// Lifts a tape value that does not depend on x.
inline Jet2<Var> constant_jet(const Var& c) { return {c, c.constant(0.0), c.constant(0.0)}; }

template <class S>
Jet2<double> values_of(const Jet2<S>& j) {
  return {value_of(j.c0), value_of(j.c1), value_of(j.c2)};
}

namespace detail {
// out = f(a) given f(a0), f'(a0), f''(a0)
template <class S>
Jet2<S> chain(const Jet2<S>& a, S f0, const S& f1, const S& f2) {
  S d1 = f1 * a.c1;
  S d2 = f1 * a.c2 + f2 * (a.c1 * a.c1);
  return {std::move(f0), std::move(d1), std::move(d2)};
}
}  // namespace detail

template <class S>
Jet2<S> operator+(const Jet2<S>& a, const Jet2<S>& b) {
  return {a.c0 + b.c0, a.c1 + b.c1, a.c2 + b.c2};
}
template <class S>
Jet2<S> operator-(const Jet2<S>& a, const Jet2<S>& b) {
  return {a.c0 - b.c0, a.c1 - b.c1, a.c2 - b.c2};
}
template <class S>
Jet2<S> operator-(const Jet2<S>& a) {
  return {-a.c0, -a.c1, -a.c2};
}
template <class S>
Jet2<S> operator*(const Jet2<S>& a, const Jet2<S>& b) {
  S p1 = a.c1 * b.c0 + a.c0 * b.c1;
  S p2 = a.c2 * b.c0 + 2.0 * (a.c1 * b.c1) + a.c0 * b.c2;
  return {a.c0 * b.c0, std::move(p1), std::move(p2)};
}
template <class S>
Jet2<S> operator/(const Jet2<S>& a, const Jet2<S>& b) {
  S q0 = a.c0 / b.c0;
  S q1 = (a.c1 - q0 * b.c1) / b.c0;
  S q2 = (a.c2 - 2.0 * (q1 * b.c1) - q0 * b.c2) / b.c0;
  return {std::move(q0), std::move(q1), std::move(q2)};
}

// Jet with an x-independent tape value.
inline Jet2<Var> operator*(const Var& s, const Jet2<Var>& a) { return {s * a.c0, s * a.c1, s * a.c2}; }
inline Jet2<Var> operator+(const Jet2<Var>& a, const Var& s) { return {a.c0 + s, a.c1, a.c2}; }

// Jet with a double constant.
template <class S>
Jet2<S> operator*(double s, const Jet2<S>& a) {
  return {s * a.c0, s * a.c1, s * a.c2};
}
template <class S>
Jet2<S> operator*(const Jet2<S>& a, double s) {
  return s * a;
}
template <class S>
Jet2<S> operator/(const Jet2<S>& a, double s) {
  if (s == 0.0) throw std::domain_error("division of a jet by 0");
  return (1.0 / s) * a;
}
template <class S>
Jet2<S> operator+(const Jet2<S>& a, double s) {
  return {a.c0 + s, a.c1, a.c2};
}
template <class S>
Jet2<S> operator+(double s, const Jet2<S>& a) {
  return a + s;
}
template <class S>
Jet2<S> operator-(const Jet2<S>& a, double s) {
  return {a.c0 - s, a.c1, a.c2};
}
template <class S>
Jet2<S> operator-(double s, const Jet2<S>& a) {
  return {s - a.c0, -a.c1, -a.c2};
}

template <class S>
Jet2<S> exp(const Jet2<S>& a) {
  using std::exp;
  S e = exp(a.c0);
  return detail::chain(a, e, e, e);
}
template <class S>
Jet2<S> sin(const Jet2<S>& a) {
  using std::cos;
  using std::sin;
  S s = sin(a.c0);
  S c = cos(a.c0);
  S f2 = -s;
  return detail::chain(a, std::move(s), c, f2);
}
template <class S>
Jet2<S> cos(const Jet2<S>& a) {
  using std::cos;
  using std::sin;
  S c = cos(a.c0);
  S f1 = -sin(a.c0);
  S f2 = -c;
  return detail::chain(a, std::move(c), f1, f2);
}
template <class S>
Jet2<S> tanh(const Jet2<S>& a) {
  using std::tanh;
  S h = tanh(a.c0);
  S s = 1.0 - h * h;
  S f2 = -2.0 * (h * s);
  return detail::chain(a, std::move(h), s, f2);
}
template <class S>
Jet2<S> powi(const Jet2<S>& a, int n) {
  if (n == 0) return {a.c0 * 0.0 + 1.0, a.c1 * 0.0, a.c2 * 0.0};
  S f0 = powi(a.c0, n);
  S f1 = static_cast<double>(n) * powi(a.c0, n - 1);
  S f2 = (n == 1) ? a.c0 * 0.0 : static_cast<double>(n) * static_cast<double>(n - 1) * powi(a.c0, n - 2);
  return detail::chain(a, std::move(f0), f1, f2);
}

}  // namespace vpinn
