#pragma once

/// \file network.hpp
///
/// Fully connected tanh network NN(x) and the hard-constrained trial
/// function T(x) = x(1 - x) NN(x), which vanishes at both ends of [0, 1].
///
/// Two evaluation routes share one parameter layout:
///  - `mlp_forward` / `trial` build the network from `Jet2<Var>` on a tape
///    (the reference route; any loss built on it is differentiable);
///  - `MlpTrialModel` evaluates a batch of points layer by layer and runs a
///    hand-written adjoint of the same jet recurrences (the training route).
///
/// Flat parameter order: for each layer k, W_k row-major (out x in), then b_k.

#include <Eigen/Dense>

#include <bit>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vpinn/autodiff.hpp"

namespace vpinn {

inline const std::vector<int>& default_widths() {
  static const std::vector<int> w{1, 20, 20, 20, 20, 1};
  return w;
}

inline void validate_widths(std::span<const int> widths) {
  if (widths.size() < 2) throw std::invalid_argument("network needs at least an input and an output layer");
  for (int w : widths)
    if (w <= 0) throw std::invalid_argument("layer widths must be positive");
  if (widths.front() != 1 || widths.back() != 1) throw std::invalid_argument("network must map a scalar to a scalar (first and last width 1)");
}

/// Sum over layers of N_k * N_{k-1} + N_k.
inline std::size_t parameter_count(std::span<const int> widths) {
  std::size_t n = 0;
  for (std::size_t k = 1; k < widths.size(); ++k)
    n += static_cast<std::size_t>(widths[k]) * static_cast<std::size_t>(widths[k - 1]) + static_cast<std::size_t>(widths[k]);
  return n;
}

struct MlpParams {
  std::vector<int> widths;
  std::vector<double> values;

  std::size_t layer_count() const { return widths.size() - 1; }
  int fan_in(std::size_t k) const { return widths[k]; }
  int fan_out(std::size_t k) const { return widths[k + 1]; }

  std::size_t weight_offset(std::size_t k) const {
    std::size_t off = 0;
    for (std::size_t j = 0; j < k; ++j) off += static_cast<std::size_t>(widths[j + 1]) * widths[j] + widths[j + 1];
    return off;
  }
  std::size_t bias_offset(std::size_t k) const { return weight_offset(k) + static_cast<std::size_t>(widths[k + 1]) * widths[k]; }

  double& weight(std::size_t k, int row, int col) { return values[weight_offset(k) + static_cast<std::size_t>(row) * widths[k] + col]; }
  double weight(std::size_t k, int row, int col) const { return values[weight_offset(k) + static_cast<std::size_t>(row) * widths[k] + col]; }
  double& bias(std::size_t k, int row) { return values[bias_offset(k) + row]; }
  double bias(std::size_t k, int row) const { return values[bias_offset(k) + row]; }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

inline MlpParams zero_params(std::vector<int> widths) {
  validate_widths(widths);
  MlpParams p;
  p.values.assign(parameter_count(widths), 0.0);
  p.widths = std::move(widths);
  return p;
}

/// Glorot-uniform weights, zero biases.
inline MlpParams init_params(std::vector<int> widths, std::uint64_t seed) {
  MlpParams p = zero_params(std::move(widths));
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < p.layer_count(); ++k) {
    const double bound = std::sqrt(6.0 / (p.fan_in(k) + p.fan_out(k)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (int r = 0; r < p.fan_out(k); ++r)
      for (int c = 0; c < p.fan_in(k); ++c) p.weight(k, r, c) = dist(rng);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Tape route

struct TapeMlp {
  std::vector<int> widths;
  std::vector<Var> theta;

  std::vector<NodeRef> refs() const {
    std::vector<NodeRef> r;
    r.reserve(theta.size());
    for (const Var& v : theta) r.push_back(v.ref());
    return r;
  }
};

/// Registers every parameter as a leaf on `tape`, in flat order.
inline TapeMlp bind_params(Tape& tape, const MlpParams& p) {
  validate_widths(p.widths);
  TapeMlp m{p.widths, {}};
  m.theta.reserve(p.values.size());
  for (double v : p.values) m.theta.push_back(Var::leaf(tape, v));
  return m;
}

namespace detail {
template <class S, class Param>
Jet2<S> mlp_apply(std::span<const int> widths, Param&& theta, const Jet2<S>& x) {
  std::vector<Jet2<S>> act{x};
  std::size_t off = 0;
  const std::size_t layers = widths.size() - 1;
  for (std::size_t k = 0; k < layers; ++k) {
    const int in = widths[k];
    const int out = widths[k + 1];
    const std::size_t boff = off + static_cast<std::size_t>(out) * in;
    std::vector<Jet2<S>> next;
    next.reserve(out);
    for (int r = 0; r < out; ++r) {
      const S& w0 = theta(off + static_cast<std::size_t>(r) * in);
      Jet2<S> z{w0 * act[0].c0, w0 * act[0].c1, w0 * act[0].c2};
      for (int c = 1; c < in; ++c) {
        const S& w = theta(off + static_cast<std::size_t>(r) * in + c);
        z.c0 = z.c0 + w * act[c].c0;
        z.c1 = z.c1 + w * act[c].c1;
        z.c2 = z.c2 + w * act[c].c2;
      }
      z.c0 = z.c0 + theta(boff + r);
      next.push_back(k + 1 < layers ? tanh(z) : z);
    }
    act = std::move(next);
    off = boff + out;
  }
  return act[0];
}

template <class S>
Jet2<S> hard_constraint(const Jet2<S>& x, const Jet2<S>& nn) {
  return (x * (1.0 - x)) * nn;
}
}  // namespace detail

inline Jet2<Var> mlp_forward(const TapeMlp& m, const Jet2<Var>& x) {
  return detail::mlp_apply<Var>(m.widths, [&](std::size_t i) -> const Var& { return m.theta[i]; }, x);
}

inline Jet2<double> mlp_forward(const MlpParams& p, const Jet2<double>& x) {
  return detail::mlp_apply<double>(p.widths, [&](std::size_t i) -> const double& { return p.values[i]; }, x);
}

inline Jet2<Var> trial(const TapeMlp& m, const Jet2<Var>& x) { return detail::hard_constraint(x, mlp_forward(m, x)); }
inline Jet2<double> trial(const MlpParams& p, const Jet2<double>& x) { return detail::hard_constraint(x, mlp_forward(p, x)); }

// ---------------------------------------------------------------------------
// Batched route

/// Value, first and second x-derivative of a trial function at a set of points.
struct JetBatch {
  Eigen::VectorXd v, d1, d2;

  JetBatch() = default;
  explicit JetBatch(Eigen::Index n) : v(Eigen::VectorXd::Zero(n)), d1(Eigen::VectorXd::Zero(n)), d2(Eigen::VectorXd::Zero(n)) {}
  Eigen::Index size() const { return v.size(); }
};

/// A parametrized trial family evaluated at points fixed at construction.
/// `backward` consumes adjoints of the last `forward` and accumulates into
/// `grad` (which it overwrites).
template <class M>
concept TrialModel = requires(M& m, const M& cm, std::span<const double> theta, std::span<double> grad, const JetBatch& adj) {
  { cm.parameter_count() } -> std::convertible_to<std::size_t>;
  { cm.points() } -> std::convertible_to<std::span<const double>>;
  { m.forward(theta) } -> std::same_as<const JetBatch&>;
  { m.backward(adj, grad) };
  { cm.evaluate(theta, theta) } -> std::same_as<JetBatch>;
};

class MlpTrialModel {
 public:
  MlpTrialModel(std::vector<int> widths, std::span<const double> points) : widths_(std::move(widths)), points_(points.begin(), points.end()) {
    validate_widths(widths_);
    n_params_ = vpinn::parameter_count(widths_);
    layers_.resize(widths_.size() - 1);
  }

  std::size_t parameter_count() const { return n_params_; }
  std::span<const double> points() const { return points_; }
  const std::vector<int>& widths() const { return widths_; }

  const JetBatch& forward(std::span<const double> theta) {
    check(theta.size());
    const Eigen::Index n = static_cast<Eigen::Index>(points_.size());
    const Eigen::Map<const Eigen::RowVectorXd> x(points_.data(), n);
    Eigen::MatrixXd a0 = x, a1 = Eigen::MatrixXd::Ones(1, n), a2 = Eigen::MatrixXd::Zero(1, n);
    std::size_t off = 0;
    const std::size_t last = layers_.size() - 1;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const int in = widths_[k], out = widths_[k + 1];
      const ConstMatMap w(theta.data() + off, out, in);
      const Eigen::Map<const Eigen::VectorXd> b(theta.data() + off + static_cast<std::size_t>(out) * in, out);
      off += static_cast<std::size_t>(out) * in + out;
      Layer& L = layers_[k];
      L.a0 = std::move(a0);
      L.a1 = std::move(a1);
      L.a2 = std::move(a2);
      Eigen::MatrixXd z0 = w * L.a0;
      z0.colwise() += b;
      L.z1 = w * L.a1;
      L.z2 = (k == 0) ? Eigen::MatrixXd::Zero(out, n) : Eigen::MatrixXd(w * L.a2);
      if (k == last) {
        out_.v = z0.row(0).transpose();
        out_.d1 = L.z1.row(0).transpose();
        out_.d2 = L.z2.row(0).transpose();
        break;
      }
      L.h = z0.array().tanh().matrix();
      L.s = (1.0 - L.h.array().square()).matrix();
      const Eigen::ArrayXXd f2 = -2.0 * L.h.array() * L.s.array();
      a0 = L.h;
      a1 = (L.s.array() * L.z1.array()).matrix();
      a2 = (L.s.array() * L.z2.array() + f2 * L.z1.array().square()).matrix();
    }
    // T = p NN with p = x(1 - x), p' = 1 - 2x, p'' = -2
    const Eigen::ArrayXd xa = x.transpose().array();
    const Eigen::ArrayXd p = xa * (1.0 - xa), dp = 1.0 - 2.0 * xa;
    trial_.v = (p * out_.v.array()).matrix();
    trial_.d1 = (dp * out_.v.array() + p * out_.d1.array()).matrix();
    trial_.d2 = (-2.0 * out_.v.array() + 2.0 * dp * out_.d1.array() + p * out_.d2.array()).matrix();
    theta_ = theta.data();
    return trial_;
  }

  void backward(const JetBatch& adj, std::span<double> grad) const {
    check(grad.size());
    if (theta_ == nullptr) throw std::logic_error("backward() called before forward()");
    const Eigen::Index n = static_cast<Eigen::Index>(points_.size());
    if (adj.size() != n) throw std::invalid_argument("adjoint batch size does not match the bound points");
    const Eigen::ArrayXd xa = Eigen::Map<const Eigen::ArrayXd>(points_.data(), n);
    const Eigen::ArrayXd p = xa * (1.0 - xa), dp = 1.0 - 2.0 * xa;
    Eigen::MatrixXd g0 = (p * adj.v.array() + dp * adj.d1.array() - 2.0 * adj.d2.array()).matrix().transpose();
    Eigen::MatrixXd g1 = (p * adj.d1.array() + 2.0 * dp * adj.d2.array()).matrix().transpose();
    Eigen::MatrixXd g2 = (p * adj.d2.array()).matrix().transpose();

    std::vector<std::size_t> offs(layers_.size());
    std::size_t off = 0;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      offs[k] = off;
      off += static_cast<std::size_t>(widths_[k + 1]) * widths_[k] + widths_[k + 1];
    }
    const std::size_t last = layers_.size() - 1;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const int in = widths_[k], out = widths_[k + 1];
      const Layer& L = layers_[k];
      if (k != last) {
        // (g0, g1, g2) arrive as adjoints of the tanh output jet; map them to
        // adjoints of the pre-activation jet.
        const Eigen::ArrayXXd h = L.h.array(), s = L.s.array();
        const Eigen::ArrayXXd f2 = -2.0 * h * s;
        const Eigen::ArrayXXd f3 = -2.0 * s.square() + 4.0 * h.square() * s;
        const Eigen::ArrayXXd z1 = L.z1.array(), z2 = L.z2.array();
        const Eigen::ArrayXXd gh0 = g0.array(), gh1 = g1.array(), gh2 = g2.array();
        g0 = (s * gh0 + f2 * z1 * gh1 + (f2 * z2 + f3 * z1.square()) * gh2).matrix();
        g1 = (s * gh1 + 2.0 * f2 * z1 * gh2).matrix();
        g2 = (s * gh2).matrix();
      }
      MatMap gw(grad.data() + offs[k], out, in);
      gw.noalias() = g0 * L.a0.transpose();
      gw.noalias() += g1 * L.a1.transpose();
      if (k != 0) gw.noalias() += g2 * L.a2.transpose();
      Eigen::Map<Eigen::VectorXd>(grad.data() + offs[k] + static_cast<std::size_t>(out) * in, out) = g0.rowwise().sum();
      if (k == 0) break;
      const ConstMatMap w(theta_ + offs[k], out, in);
      Eigen::MatrixXd n0 = w.transpose() * g0;
      Eigen::MatrixXd n1 = w.transpose() * g1;
      Eigen::MatrixXd n2 = w.transpose() * g2;
      g0 = std::move(n0);
      g1 = std::move(n1);
      g2 = std::move(n2);
    }
  }

  /// Trial jets at arbitrary points (does not disturb the cached batch).
  JetBatch evaluate(std::span<const double> theta, std::span<const double> xs) const {
    MlpTrialModel tmp(widths_, xs);
    return tmp.forward(theta);
  }

 private:
  using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  struct Layer {
    Eigen::MatrixXd a0, a1, a2;  // input jet
    Eigen::MatrixXd z1, z2;      // pre-activation derivative coefficients
    Eigen::MatrixXd h, s;        // tanh(z0) and 1 - tanh^2(z0)
  };

  void check(std::size_t n) const {
    if (n != n_params_) throw std::invalid_argument("expected " + std::to_string(n_params_) + " parameters, got " + std::to_string(n));
  }

  std::vector<int> widths_;
  std::vector<double> points_;
  std::size_t n_params_ = 0;
  std::vector<Layer> layers_;
  JetBatch out_, trial_;
  const double* theta_ = nullptr;
};

static_assert(TrialModel<MlpTrialModel>);

// ---------------------------------------------------------------------------
// Snapshots

/// Raw little-endian float64 values in flat parameter order.
inline void save_params_binary(const std::string& path, const MlpParams& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (double v : p.values) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline MlpParams load_params_binary(const std::string& path, std::vector<int> widths) {
  MlpParams p = zero_params(std::move(widths));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  for (double& v : p.values) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw std::runtime_error(path + ": too few values for the given widths");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error(path + ": more values than the given widths hold");
  return p;
}

inline nlohmann::json params_to_json(const MlpParams& p) { return {{"widths", p.widths}, {"values", p.values}}; }

inline MlpParams params_from_json(const nlohmann::json& j) {
  MlpParams p = zero_params(j.at("widths").get<std::vector<int>>());
  auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != p.values.size()) throw std::invalid_argument("parameter count does not match widths");
  p.values = std::move(values);
  return p;
}

}  // namespace vpinn
