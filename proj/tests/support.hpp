#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "vpinn/vpinn.hpp"

namespace vpinn::support {

/// Central differences of a scalar function of a vector.
inline std::vector<double> central_diff(const std::function<double(std::span<const double>)>& f, std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = f(x);
    x[i] = xi - h;
    const double fm = f(x);
    x[i] = xi;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(max_i |b_i|, floor)
inline double rel_err(std::span<const double> a, std::span<const double> b, double floor = 1e-12) {
  double num = 0, den = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return num / den;
}

/// Whole weak loss built on a fresh tape. Writes the tape gradient into
/// `grad` when it is non-null.
inline double tape_loss(const ProblemSpec& spec, const QuadRule& quad, const HatTable& hats, const MlpParams& p, ResidualMode rmode, LossMode lmode,
                        std::vector<double>* grad = nullptr) {
  Tape tape;
  TapeMlp net = bind_params(tape, p);
  const WeakOperator op = WeakOperator::steady(spec, quad);
  Var L;
  if (lmode == LossMode::Integral) {
    auto R = assemble_weak_residuals(tape, net, op, quad, hats, rmode);
    L = vpinn_loss(tape, R);
  } else {
    auto r = pointwise_residuals(op, [&](std::size_t q) { return trial(net, seed_jet(tape, quad.points[q])); });
    L = vpinn_mse_loss(tape, r, hats);
  }
  if (grad) *grad = tape.backward(L.ref(), net.refs());
  return L.value();
}

/// One-parameter trial T(x) = alpha sin(pi x); exact for separable
/// solutions e^{-t} sin(pi x), so the only error left is the time stepping.
class AmplitudeTrial {
 public:
  explicit AmplitudeTrial(std::span<const double> xs) : xs_(xs.begin(), xs.end()) {}
  std::size_t parameter_count() const { return 1; }
  std::span<const double> points() const { return xs_; }
  const JetBatch& forward(std::span<const double> theta) {
    last_ = evaluate(theta, xs_);
    return last_;
  }
  void backward(const JetBatch& adj, std::span<double> grad) const {
    const double pi = std::numbers::pi;
    double g = 0;
    for (std::size_t j = 0; j < xs_.size(); ++j) {
      const double s = std::sin(pi * xs_[j]), c = std::cos(pi * xs_[j]);
      g += adj.v[j] * s + adj.d1[j] * pi * c - adj.d2[j] * pi * pi * s;
    }
    grad[0] = g;
  }
  JetBatch evaluate(std::span<const double> theta, std::span<const double> xs) const {
    const double pi = std::numbers::pi;
    JetBatch b(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t j = 0; j < xs.size(); ++j) {
      const double s = std::sin(pi * xs[j]);
      b.v[j] = theta[0] * s;
      b.d1[j] = theta[0] * pi * std::cos(pi * xs[j]);
      b.d2[j] = -theta[0] * pi * pi * s;
    }
    return b;
  }

 private:
  std::vector<double> xs_;
  JetBatch last_;
};
static_assert(TrialModel<AmplitudeTrial>);

/// Final-time max error of backward Euler on u_t - k u_xx + u = r with
/// u = e^{-t} sin(pi x), using the amplitude trial at every level.
inline double amplitude_final_error(int steps, double k = 0.1) {
  const double pi = std::numbers::pi;
  const auto quad = build_quadrature(101);
  const auto hats = tabulate(build_basis(9), quad);
  AmplitudeTrial model(quad.points);
  std::vector<double> u0;
  for (double x : quad.points) u0.push_back(std::sin(pi * x));
  auto op = [&](double t, double dt, std::span<const double> prev) {
    WeakOperator w;
    w.diffusion = k;
    for (std::size_t q = 0; q < quad.size(); ++q) {
      const double x = quad.points[q];
      w.convection.push_back(0.0);
      w.reaction.push_back(1.0 + 1.0 / dt);
      w.rhs.push_back(std::exp(-t) * k * pi * pi * std::sin(pi * x) + prev[q] / dt);
    }
    return w;
  };
  auto exact_fn = [&](double x, double t) { return std::exp(-t) * std::sin(pi * x); };
  ParabolicSchedule sch;
  sch.first.adam_epochs = sch.later.adam_epochs = 0;
  sch.first.lbfgs_epochs = sch.later.lbfgs_epochs = 50;
  sch.first.target_loss = sch.later.target_loss = 0.0;
  const auto r = solve_levels(model, quad, hats, make_time_grid(steps), u0, op, exact_fn, {1.0}, sch);
  return r.records.back().max_err;
}

}  // namespace vpinn::support
