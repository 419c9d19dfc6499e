#pragma once

/// \file timestepper.hpp
///
/// Backward Euler in time with one weak-form fit per level:
///
///   (u^n - u^{n-1}) / dt - eps u^n_xx + q(x) u^n_x + c(x) u^n = r(x, t_n).
///
/// The previous level enters only through its values at the quadrature
/// points, which are frozen after each level is trained.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vpinn/optim.hpp"
#include "vpinn/problems.hpp"
#include "vpinn/report.hpp"
#include "vpinn/weakform.hpp"

namespace vpinn {

struct TimeGrid {
  int steps = 100;
  double final_time = 1.0;

  double dt() const { return final_time / steps; }
  double time(int n) const { return n * dt(); }
};

inline TimeGrid make_time_grid(int steps, double final_time = 1.0) {
  if (steps < 1) throw std::invalid_argument("need at least one time step");
  if (!(final_time > 0.0)) throw std::invalid_argument("final time must be positive");
  return {steps, final_time};
}

struct LevelSolution {
  int n = 0;
  double t = 0;
  std::vector<double> values;  // at the quadrature points
  std::vector<double> params;  // empty for level 0
};

inline LevelSolution init_level0(const ProblemSpec& spec, const QuadRule& quad) {
  if (!spec.parabolic()) throw std::invalid_argument("initial level requested for a steady problem");
  LevelSolution s;
  s.values = exact_on(spec, quad.points, 0.0);
  return s;
}

/// Level-n residual at one point, given the frozen previous value there.
template <class S>
S step_residual(const ProblemSpec& spec, double t_n, double dt, double x, const Jet2<S>& u, double prev) {
  if (!spec.parabolic()) throw std::invalid_argument("time step requested for a steady problem");
  return (u.c0 - prev) * (1.0 / dt) + apply_spatial_operator(spec, x, u) - source(spec, x, t_n);
}

struct ParabolicSchedule {
  TrainSchedule first;  // level 1
  TrainSchedule later;  // levels 2..N_t
  bool warm_start = true;

  ParabolicSchedule() {
    first.adam_epochs = 2000;
    first.lbfgs_epochs = 1000;
    first.target_loss = 1e-10;
    later = first;
    later.adam_epochs = 200;
  }
};

struct LevelRecord {
  int n = 0;
  double t = 0;
  double loss_before = 0;
  double loss_after = 0;
  double max_err = std::numeric_limits<double>::quiet_NaN();
  double l2_err = std::numeric_limits<double>::quiet_NaN();
  long evaluations = 0;
  std::string stop_reason;
};

struct ParabolicResult {
  std::vector<LevelSolution> levels;  // levels[0] is the initial condition
  std::vector<LevelRecord> records;   // one per trained level
  std::vector<TraceRow> trace;
  bool aborted = false;
  std::string stop_reason;
};

/// Builds the level-n operator from (t_n, dt, u^{n-1} at the quadrature points).
using LevelOperatorFn = std::function<WeakOperator(double, double, std::span<const double>)>;
/// Exact solution u(x, t), used only for per-level error records.
using ExactFn = std::function<double(double, double)>;

/// Generic level loop. `exact` may be empty.
template <TrialModel Model>
ParabolicResult solve_levels(Model& model, const QuadRule& quad, const HatTable& hats, const TimeGrid& grid, std::vector<double> u0,
                             const LevelOperatorFn& level_op, const ExactFn& exact_fn, std::vector<double> theta0, const ParabolicSchedule& sch,
                             ResidualMode residual = ResidualMode::Strong, LossMode loss = LossMode::Integral) {
  if (u0.size() != quad.size()) throw std::invalid_argument("initial level is not sampled on the quadrature grid");
  if (theta0.size() != model.parameter_count()) throw std::invalid_argument("initial parameters do not match the model");
  ParabolicResult out;
  out.levels.push_back({0, 0.0, std::move(u0), {}});
  const double dt = grid.dt();
  const std::vector<double> xs = eval_grid();
  WeakLoss<Model> objective(model, quad, hats, level_op(grid.time(1), dt, out.levels[0].values), residual, loss);
  std::vector<double> theta = theta0;
  int epoch = 0;

  for (int n = 1; n <= grid.steps; ++n) {
    const double t = grid.time(n);
    if (n > 1) objective.set_operator(level_op(t, dt, out.levels.back().values));
    const TrainSchedule& s = n == 1 ? sch.first : sch.later;
    const std::vector<double> start = (sch.warm_start || n == 1) ? theta : theta0;
    TrainResult tr = train([&](std::span<const double> th, std::span<double> g) { return objective(th, g); }, start, s);
    for (const auto& e : tr.trace) out.trace.push_back({++epoch, n, e.loss, e.phase});
    theta = tr.params;

    LevelRecord rec;
    rec.n = n;
    rec.t = t;
    rec.loss_before = tr.initial_loss;
    rec.loss_after = tr.final_loss;
    rec.evaluations = tr.evaluations;
    rec.stop_reason = tr.stop_reason;
    if (exact_fn) {
      const JetBatch b = model.evaluate(theta, xs);
      std::vector<double> ex(xs.size());
      for (std::size_t j = 0; j < xs.size(); ++j) ex[j] = exact_fn(xs[j], t);
      ErrorReport er;
      fill_norms(er, ex, std::span<const double>(b.v.data(), xs.size()));
      rec.max_err = er.max_err;
      rec.l2_err = er.l2_err;
    }
    out.records.push_back(rec);

    const JetBatch& at_quad = model.forward(theta);
    out.levels.push_back({n, t, std::vector<double>(at_quad.v.data(), at_quad.v.data() + at_quad.v.size()), theta});
    if (tr.aborted) {
      out.aborted = true;
      out.stop_reason = "level " + std::to_string(n) + ": " + tr.stop_reason;
      break;
    }
  }
  return out;
}

/// Levels 1..N_t of a parabolic benchmark problem.
template <TrialModel Model>
ParabolicResult solve_parabolic(const ProblemSpec& spec, Model& model, const QuadRule& quad, const HatTable& hats, const TimeGrid& grid,
                                std::vector<double> theta0, const ParabolicSchedule& sch, ResidualMode residual = ResidualMode::Strong,
                                LossMode loss = LossMode::Integral) {
  LevelSolution l0 = init_level0(spec, quad);
  auto op = [&spec, &quad](double t, double dt, std::span<const double> prev) { return WeakOperator::backward_euler(spec, quad, t, dt, prev); };
  auto ex = [&spec](double x, double t) { return exact(spec, x, t); };
  return solve_levels(model, quad, hats, grid, std::move(l0.values), op, ex, std::move(theta0), sch, residual, loss);
}

/// Per-level CSV: n, t, loss, max_err, l2_err.
inline std::string level_table(const ParabolicResult& r) {
  std::string s = "n,t,loss,max_err,l2_err\n";
  for (const auto& rec : r.records) s += std::to_string(rec.n) + "," + sci(rec.t) + "," + sci(rec.loss_after) + "," + sci(rec.max_err) + "," + sci(rec.l2_err) + "\n";
  return s;
}

}  // namespace vpinn
