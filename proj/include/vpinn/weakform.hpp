#pragma once

/// \file weakform.hpp
///
/// Hat test functions, trapezoid quadrature, weak residual assembly and the
/// VPINN loss
///
///   R_i = sum_q w_q residual(x_q) v_i(x_q),   L = (1/M) sum_i R_i^2.
///
/// `WeakLoss` evaluates L and dL/dtheta for any `TrialModel`; the tape
/// functions build the same quantities as graph nodes.

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vpinn/autodiff.hpp"
#include "vpinn/network.hpp"
#include "vpinn/problems.hpp"

namespace vpinn {

enum class ResidualMode { Strong, IntegratedByParts };
enum class LossMode { Integral, Mse };

inline std::string_view to_string(ResidualMode m) { return m == ResidualMode::Strong ? "strong" : "ibp"; }
inline std::string_view to_string(LossMode m) { return m == LossMode::Integral ? "integral" : "mse"; }
inline ResidualMode residual_mode_from_string(std::string_view s) {
  if (s == "strong") return ResidualMode::Strong;
  if (s == "ibp") return ResidualMode::IntegratedByParts;
  throw std::invalid_argument("residual mode must be 'strong' or 'ibp', got '" + std::string(s) + "'");
}
inline LossMode loss_mode_from_string(std::string_view s) {
  if (s == "integral") return LossMode::Integral;
  if (s == "mse") return LossMode::Mse;
  throw std::invalid_argument("loss mode must be 'integral' or 'mse', got '" + std::string(s) + "'");
}

/// M interior hats on the uniform mesh x_k = k / (M + 1), k = 0..M+1.
/// Hats are indexed 1..M.
struct TestBasis {
  int M = 0;

  double width() const { return 1.0 / (M + 1); }
  double node(int k) const { return static_cast<double>(k) / (M + 1); }

  double value(int i, double x) const { return std::max(0.0, 1.0 - std::abs(x * (M + 1) - i)); }

  /// v_i'(x). At a mesh node the two one-sided slopes are averaged, except at
  /// x = 0 and x = 1 where only the inward slope exists.
  double slope(int i, double x) const {
    const double t = x * (M + 1);
    const double h = width();
    const double nearest = std::round(t);
    if (std::abs(t - nearest) <= 1e-9 * std::max(1.0, t)) {
      const int k = static_cast<int>(nearest);
      if (k == i) return 0.0;
      if (k == i - 1) return k == 0 ? 1.0 / h : 0.5 / h;
      if (k == i + 1) return k == M + 1 ? -1.0 / h : -0.5 / h;
      return 0.0;
    }
    if (t > i - 1 && t < i) return 1.0 / h;
    if (t > i && t < i + 1) return -1.0 / h;
    return 0.0;
  }
};

inline TestBasis build_basis(int M) {
  if (M < 1) throw std::invalid_argument("need at least one test function");
  return TestBasis{M};
}

struct QuadRule {
  std::vector<double> points;
  std::vector<double> weights;

  std::size_t size() const { return points.size(); }
};

/// Composite trapezoid rule on N uniform points of [0, 1] (endpoints included).
inline QuadRule build_quadrature(int N) {
  if (N < 2) throw std::invalid_argument("trapezoid rule needs at least two points");
  QuadRule q;
  q.points.resize(N);
  q.weights.assign(N, 1.0 / (N - 1));
  for (int j = 0; j < N; ++j) q.points[j] = static_cast<double>(j) / (N - 1);
  q.weights.front() *= 0.5;
  q.weights.back() *= 0.5;
  return q;
}

/// Nonzero (v_i(x_q), v_i'(x_q)) pairs of every hat on the quadrature grid.
struct HatTable {
  struct Entry {
    std::size_t q;
    double v;
    double dv;
  };
  int M = 0;
  std::size_t n_points = 0;
  std::vector<std::vector<Entry>> rows;  // rows[i - 1]
};

inline HatTable tabulate(const TestBasis& basis, const QuadRule& quad) {
  HatTable t;
  t.M = basis.M;
  t.n_points = quad.size();
  t.rows.resize(basis.M);
  for (std::size_t q = 0; q < quad.size(); ++q) {
    const double x = quad.points[q];
    const double pos = x * (basis.M + 1);
    const int lo = std::max(1, static_cast<int>(std::floor(pos)) - 1);
    const int hi = std::min(basis.M, static_cast<int>(std::floor(pos)) + 2);
    for (int i = lo; i <= hi; ++i) {
      const double v = basis.value(i, x);
      const double dv = basis.slope(i, x);
      if (v != 0.0 || dv != 0.0) t.rows[i - 1].push_back({q, v, dv});
    }
  }
  return t;
}

/// Pointwise residual  -k T'' + q(x) T' + s(x) T - f(x)  on the quadrature grid.
/// A steady problem has s = c and f = r. A backward Euler step has
/// s = c + 1/dt and f = r(., t_n) + u^{n-1}/dt.
struct WeakOperator {
  double diffusion = 0.0;
  std::vector<double> convection;
  std::vector<double> reaction;
  std::vector<double> rhs;

  std::size_t size() const { return rhs.size(); }

  template <class S>
  S residual(std::size_t q, const Jet2<S>& t) const {
    return (-diffusion) * t.c2 + convection[q] * t.c1 + reaction[q] * t.c0 - rhs[q];
  }

  static WeakOperator steady(const ProblemSpec& spec, const QuadRule& quad) {
    if (spec.parabolic()) throw std::invalid_argument("steady operator requested for a time-dependent problem");
    WeakOperator op;
    op.diffusion = spec.diffusion();
    for (double x : quad.points) {
      op.convection.push_back(spec.convection(x));
      op.reaction.push_back(spec.c(x));
      op.rhs.push_back(source(spec, x));
    }
    return op;
  }

  /// Level-n operator of (T - u^{n-1})/dt - eps T'' + q T' + c T - r(x, t_n).
  static WeakOperator backward_euler(const ProblemSpec& spec, const QuadRule& quad, double t_n, double dt, std::span<const double> prev) {
    if (!spec.parabolic()) throw std::invalid_argument("time step requested for a steady problem");
    if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
    if (prev.size() != quad.size()) throw std::invalid_argument("previous level is not sampled on the quadrature grid");
    WeakOperator op;
    op.diffusion = spec.diffusion();
    for (std::size_t q = 0; q < quad.size(); ++q) {
      const double x = quad.points[q];
      op.convection.push_back(spec.convection(x));
      op.reaction.push_back(spec.c(x) + 1.0 / dt);
      op.rhs.push_back(source(spec, x, t_n) + prev[q] / dt);
    }
    return op;
  }
};

// ---------------------------------------------------------------------------
// Tape route

/// Residual nodes at every quadrature point; `trial_at(q)` returns the trial
/// jet at quadrature point q.
template <class TrialAt>
std::vector<Var> pointwise_residuals(const WeakOperator& op, TrialAt&& trial_at) {
  std::vector<Var> res;
  res.reserve(op.size());
  for (std::size_t q = 0; q < op.size(); ++q) res.push_back(op.residual(q, trial_at(q)));
  return res;
}

template <class TrialAt>
std::vector<Var> assemble_weak_residuals(Tape& tape, const WeakOperator& op, const QuadRule& quad, const HatTable& hats, ResidualMode mode,
                                         TrialAt&& trial_at) {
  if (op.size() != quad.size() || hats.n_points != quad.size()) throw std::invalid_argument("operator, quadrature and hat table disagree on the grid");
  std::vector<Jet2<Var>> jets;
  jets.reserve(quad.size());
  for (std::size_t q = 0; q < quad.size(); ++q) jets.push_back(trial_at(q));
  std::vector<Var> R;
  R.reserve(hats.M);
  for (const auto& row : hats.rows) {
    Var acc = Var::leaf(tape, 0.0);
    for (const auto& e : row) {
      const Jet2<Var>& t = jets[e.q];
      const double w = quad.weights[e.q];
      if (mode == ResidualMode::Strong) {
        if (e.v != 0.0) acc = acc + (w * e.v) * op.residual(e.q, t);
      } else {
        Var lower = op.convection[e.q] * t.c1 + op.reaction[e.q] * t.c0 - op.rhs[e.q];
        acc = acc + (w * op.diffusion * e.dv) * t.c1 + (w * e.v) * lower;
      }
    }
    R.push_back(acc);
  }
  return R;
}

/// Weak residuals of the hard-constrained network trial.
inline std::vector<Var> assemble_weak_residuals(Tape& tape, const TapeMlp& net, const WeakOperator& op, const QuadRule& quad, const HatTable& hats,
                                                ResidualMode mode) {
  return assemble_weak_residuals(tape, op, quad, hats, mode, [&](std::size_t q) { return trial(net, seed_jet(tape, quad.points[q])); });
}

/// (1/M) sum_i R_i^2
inline Var vpinn_loss(Tape& tape, std::span<const Var> R) {
  if (R.empty()) throw std::invalid_argument("no weak residuals");
  Var acc = Var::leaf(tape, 0.0);
  for (const Var& r : R) acc = acc + r * r;
  return acc * (1.0 / static_cast<double>(R.size()));
}

/// (1/M) sum_i (1/N) sum_q (residual(x_q) v_i(x_q))^2
inline Var vpinn_mse_loss(Tape& tape, std::span<const Var> residual, const HatTable& hats) {
  Var acc = Var::leaf(tape, 0.0);
  for (const auto& row : hats.rows)
    for (const auto& e : row)
      if (e.v != 0.0) {
        Var g = e.v * residual[e.q];
        acc = acc + g * g;
      }
  return acc * (1.0 / (static_cast<double>(hats.M) * static_cast<double>(hats.n_points)));
}

// ---------------------------------------------------------------------------
// Batched route

template <TrialModel Model>
class WeakLoss {
 public:
  WeakLoss(Model& model, const QuadRule& quad, const HatTable& hats, WeakOperator op, ResidualMode residual = ResidualMode::Strong,
           LossMode loss = LossMode::Integral)
      : model_(model), quad_(quad), hats_(hats), op_(std::move(op)), residual_(residual), loss_(loss) {
    if (model_.points().size() != quad_.size() || op_.size() != quad_.size() || hats_.n_points != quad_.size())
      throw std::invalid_argument("model, operator, quadrature and hat table disagree on the grid");
    if (loss_ == LossMode::Mse && residual_ != ResidualMode::Strong) throw std::invalid_argument("the mse loss is defined for the strong residual only");
  }

  const WeakOperator& op() const { return op_; }
  void set_operator(WeakOperator op) {
    if (op.size() != quad_.size()) throw std::invalid_argument("operator does not match the quadrature grid");
    op_ = std::move(op);
  }
  Model& model() { return model_; }
  std::size_t parameter_count() const { return model_.parameter_count(); }

  /// Weak residuals R_1..R_M (integral loss only).
  std::vector<double> residuals(std::span<const double> theta) {
    const JetBatch& t = model_.forward(theta);
    return weak_residuals(t);
  }

  double value(std::span<const double> theta) {
    const JetBatch& t = model_.forward(theta);
    return loss_from(t, nullptr);
  }

  /// Loss at theta; writes dL/dtheta into `grad`.
  double operator()(std::span<const double> theta, std::span<double> grad) {
    const JetBatch& t = model_.forward(theta);
    JetBatch adj(static_cast<Eigen::Index>(quad_.size()));
    const double L = loss_from(t, &adj);
    model_.backward(adj, grad);
    return L;
  }

 private:
  std::vector<double> weak_residuals(const JetBatch& t) const {
    std::vector<double> R(hats_.M, 0.0);
    for (int i = 0; i < hats_.M; ++i) {
      double acc = 0.0;
      for (const auto& e : hats_.rows[i]) {
        const double w = quad_.weights[e.q];
        if (residual_ == ResidualMode::Strong) {
          acc += w * e.v * pointwise(e.q, t);
        } else {
          const double lower = op_.convection[e.q] * t.d1[e.q] + op_.reaction[e.q] * t.v[e.q] - op_.rhs[e.q];
          acc += w * (op_.diffusion * e.dv * t.d1[e.q] + e.v * lower);
        }
      }
      R[i] = acc;
    }
    return R;
  }

  double pointwise(std::size_t q, const JetBatch& t) const {
    return -op_.diffusion * t.d2[q] + op_.convection[q] * t.d1[q] + op_.reaction[q] * t.v[q] - op_.rhs[q];
  }

  // Pushes dL/dresidual back onto (T, T', T'') adjoints when `adj` is set.
  double loss_from(const JetBatch& t, JetBatch* adj) const {
    const double M = hats_.M;
    if (loss_ == LossMode::Mse) {
      const double scale = 1.0 / (M * static_cast<double>(hats_.n_points));
      double L = 0.0;
      for (const auto& row : hats_.rows)
        for (const auto& e : row) {
          if (e.v == 0.0) continue;
          const double r = pointwise(e.q, t);
          L += (e.v * r) * (e.v * r);
          if (adj) scatter(e.q, 2.0 * scale * e.v * e.v * r, 0.0, *adj);
        }
      return L * scale;
    }
    const std::vector<double> R = weak_residuals(t);
    double L = 0.0;
    for (double r : R) L += r * r;
    L /= M;
    if (adj) {
      for (int i = 0; i < hats_.M; ++i) {
        const double gR = 2.0 * R[i] / M;
        for (const auto& e : hats_.rows[i]) {
          const double w = quad_.weights[e.q];
          if (residual_ == ResidualMode::Strong)
            scatter(e.q, gR * w * e.v, 0.0, *adj);
          else
            scatter(e.q, gR * w * e.v, gR * w * op_.diffusion * e.dv, *adj);
        }
      }
    }
    return L;
  }

  // g_lower multiplies the undifferentiated-by-parts terms (q T' + s T - f,
  // plus -k T'' in strong form); g_flux multiplies T' from the k T' v' term.
  void scatter(std::size_t q, double g_lower, double g_flux, JetBatch& adj) const {
    if (residual_ == ResidualMode::Strong) adj.d2[q] += -op_.diffusion * g_lower;
    adj.d1[q] += op_.convection[q] * g_lower + g_flux;
    adj.v[q] += op_.reaction[q] * g_lower;
  }

  Model& model_;
  const QuadRule& quad_;
  const HatTable& hats_;
  WeakOperator op_;
  ResidualMode residual_;
  LossMode loss_;
};

}  // namespace vpinn
