#pragma once

/// \file optim.hpp
///
/// Full-batch Adam and L-BFGS (two-loop recursion, strong Wolfe line search)
/// over a flat parameter vector, and the Adam-then-L-BFGS training schedule.
/// One "epoch" is one optimizer step on the full quadrature set.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vpinn {

/// Loss at theta; the gradient is written to the second argument.
using Objective = std::function<double(std::span<const double>, std::span<double>)>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<double> m, v;
  long step = 0;

  AdamState() = default;
  AdamState(std::size_t n, AdamConfig cfg = {}) : config(cfg), m(n, 0.0), v(n, 0.0) {}
};

inline void adam_step(AdamState& s, std::span<double> params, std::span<const double> grad) {
  if (grad.size() != params.size() || s.m.size() != params.size()) throw std::invalid_argument("adam: gradient, moments and parameters differ in length");
  if (!all_finite(grad)) throw NonFiniteError("adam: non-finite gradient at step " + std::to_string(s.step + 1));
  const auto& c = s.config;
  ++s.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = c.beta1 * s.m[i] + (1.0 - c.beta1) * grad[i];
    s.v[i] = c.beta2 * s.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double mhat = s.m[i] / bc1;
    const double vhat = s.v[i] / bc2;
    params[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
  }
}

// ---------------------------------------------------------------------------
// L-BFGS

struct LbfgsConfig {
  int history = 10;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search = 25;
  /// Stop once the max-norm of the gradient falls below this.
  double gradient_tolerance = 1e-14;
};

struct LbfgsState {
  LbfgsConfig config;
  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> pairs;
  double loss = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> grad;
  bool primed = false;  // loss/grad hold the values at the current params
  long iterations = 0;

  LbfgsState() = default;
  explicit LbfgsState(LbfgsConfig cfg) : config(cfg) {}
};

struct LbfgsStepResult {
  bool accepted = false;
  bool fallback = false;     // took a steepest-descent step
  bool strong_wolfe = false; // curvature condition also held
  int evaluations = 0;
  double step = 0.0;
  std::string failure;
};

namespace detail {

inline double cubic_minimizer(double a1, double f1, double g1, double a2, double f2, double g2, double lo, double hi) {
  const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (a1 - a2);
  const double d2sq = d1 * d1 - g1 * g2;
  if (d2sq >= 0.0) {
    const double d2 = std::sqrt(d2sq);
    double x;
    if (a1 <= a2)
      x = a2 - (a2 - a1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2));
    else
      x = a1 - (a1 - a2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2));
    if (std::isfinite(x)) return std::clamp(x, lo, hi);
  }
  return 0.5 * (lo + hi);
}

struct Probe {
  double a = 0.0, f = 0.0, dphi = 0.0;
  std::vector<double> g;
};

}  // namespace detail

/// Line search along `dir` from `x` (loss f0, directional derivative dphi0 < 0).
/// On success `out` holds the accepted point. Returns false when no point
/// satisfying the sufficient-decrease condition was found in budget.
inline bool strong_wolfe_search(const Objective& fn, std::span<const double> x, double f0, double dphi0, std::span<const double> dir, double a0,
                                const LbfgsConfig& cfg, detail::Probe& out, int& evals, bool& wolfe) {
  const std::size_t n = x.size();
  std::vector<double> xt(n);
  auto eval = [&](double a) {
    detail::Probe p;
    p.a = a;
    p.g.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + a * dir[i];
    p.f = fn(xt, p.g);
    ++evals;
    if (!std::isfinite(p.f) || !all_finite(p.g)) {
      p.f = std::numeric_limits<double>::infinity();
      p.dphi = std::numeric_limits<double>::quiet_NaN();
    } else {
      p.dphi = dot(p.g, dir);
    }
    return p;
  };
  auto armijo = [&](const detail::Probe& p) { return p.f <= f0 + cfg.c1 * p.a * dphi0; };
  auto curvature = [&](const detail::Probe& p) { return std::abs(p.dphi) <= -cfg.c2 * dphi0; };

  detail::Probe prev{0.0, f0, dphi0, {}};
  detail::Probe lo, hi;
  bool bracketed = false;
  double a = a0;
  wolfe = false;
  while (evals < cfg.max_line_search) {
    detail::Probe p = eval(a);
    if (!std::isfinite(p.f)) {  // overshoot into overflow: shrink
      hi = std::move(p);
      lo = prev;
      bracketed = true;
      break;
    }
    if (!armijo(p) || (prev.a > 0.0 && p.f >= prev.f)) {
      lo = prev;
      hi = std::move(p);
      bracketed = true;
      break;
    }
    if (curvature(p)) {
      out = std::move(p);
      wolfe = true;
      return true;
    }
    if (p.dphi >= 0.0) {
      lo = std::move(p);
      hi = prev;
      bracketed = true;
      break;
    }
    const double next = detail::cubic_minimizer(prev.a, prev.f, prev.dphi, p.a, p.f, p.dphi, p.a + 0.01 * (p.a - prev.a), 10.0 * p.a);
    prev = std::move(p);
    a = next;
  }
  if (!bracketed) {
    if (prev.a > 0.0) {  // budget spent while still extrapolating; prev satisfies Armijo
      out = std::move(prev);
      return true;
    }
    return false;
  }
  // zoom: lo always satisfies Armijo and has the lowest loss seen in the bracket
  while (evals < cfg.max_line_search) {
    const double width = std::abs(hi.a - lo.a);
    if (width * std::sqrt(dot(dir, dir)) < 1e-16 * (1.0 + std::sqrt(dot(x, x)))) break;
    const double amin = std::min(lo.a, hi.a), amax = std::max(lo.a, hi.a);
    double aj;
    if (std::isfinite(hi.f) && std::isfinite(hi.dphi))
      aj = detail::cubic_minimizer(lo.a, lo.f, lo.dphi, hi.a, hi.f, hi.dphi, amin, amax);
    else
      aj = 0.5 * (lo.a + hi.a);
    // keep the trial away from the interval ends
    if (aj - amin < 0.1 * width || amax - aj < 0.1 * width) aj = 0.5 * (amin + amax);
    detail::Probe p = eval(aj);
    if (!std::isfinite(p.f) || !armijo(p) || p.f >= lo.f) {
      hi = std::move(p);
    } else {
      if (curvature(p)) {
        out = std::move(p);
        wolfe = true;
        return true;
      }
      if (p.dphi * (hi.a - lo.a) >= 0.0) hi = lo;
      lo = std::move(p);
    }
  }
  if (lo.a > 0.0) {
    out = std::move(lo);
    return true;
  }
  return false;
}

/// H * v via the two-loop recursion over the stored pairs.
inline std::vector<double> two_loop(const LbfgsState& s, std::span<const double> v) {
  std::vector<double> q(v.begin(), v.end());
  std::vector<double> alpha(s.pairs.size());
  for (std::size_t k = s.pairs.size(); k-- > 0;) {
    const auto& p = s.pairs[k];
    alpha[k] = p.rho * dot(p.s, q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[k] * p.y[i];
  }
  if (!s.pairs.empty()) {
    const auto& p = s.pairs.back();
    const double gamma = dot(p.s, p.y) / dot(p.y, p.y);
    for (double& e : q) e *= gamma;
  }
  for (std::size_t k = 0; k < s.pairs.size(); ++k) {
    const auto& p = s.pairs[k];
    const double beta = p.rho * dot(p.y, q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] += (alpha[k] - beta) * p.s[i];
  }
  return q;
}

/// One L-BFGS iteration. On the first call the objective is evaluated at
/// `params` to prime the state.
inline LbfgsStepResult lbfgs_step(LbfgsState& s, std::vector<double>& params, const Objective& fn) {
  LbfgsStepResult res;
  const std::size_t n = params.size();
  if (!s.primed) {
    s.grad.assign(n, 0.0);
    s.loss = fn(params, s.grad);
    ++res.evaluations;
    if (!std::isfinite(s.loss) || !all_finite(s.grad)) throw NonFiniteError("lbfgs: non-finite loss or gradient at the initial point");
    s.primed = true;
  }
  auto steepest = [&](std::vector<double>& d) {
    double g1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = -s.grad[i];
      g1 += std::abs(s.grad[i]);
    }
    return std::min(1.0, 1.0 / g1);
  };

  std::vector<double> dir(n);
  double a0 = 1.0;
  if (s.pairs.empty()) {
    a0 = steepest(dir);
  } else {
    dir = two_loop(s, s.grad);
    for (double& e : dir) e = -e;
  }
  double dphi0 = dot(s.grad, dir);
  if (!(dphi0 < 0.0)) {
    s.pairs.clear();
    a0 = steepest(dir);
    dphi0 = dot(s.grad, dir);
    res.fallback = true;
  }
  if (!(dphi0 < 0.0)) {
    res.failure = "zero gradient";
    return res;
  }

  detail::Probe found;
  int evals = 0;
  bool wolfe = false;
  bool ok = strong_wolfe_search(fn, params, s.loss, dphi0, dir, a0, s.config, found, evals, wolfe);
  if (!ok && !res.fallback) {
    // steepest descent with backtracking
    s.pairs.clear();
    res.fallback = true;
    a0 = steepest(dir);
    dphi0 = dot(s.grad, dir);
    std::vector<double> xt(n), g(n);
    double a = a0;
    for (int k = 0; k < 60 && !ok; ++k, a *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) xt[i] = params[i] + a * dir[i];
      const double f = fn(xt, g);
      ++evals;
      if (std::isfinite(f) && all_finite(g) && f <= s.loss + s.config.c1 * a * dphi0) {
        found.a = a;
        found.f = f;
        found.g = g;
        ok = true;
      }
    }
  }
  res.evaluations += evals;
  if (!ok) {
    res.failure = "line search failed to find sufficient decrease";
    return res;
  }
  // sufficient decrease holds for every accepted point
  if (!(found.f <= s.loss + s.config.c1 * found.a * dphi0)) throw std::logic_error("accepted L-BFGS step violates the Armijo condition");

  LbfgsState::Pair p;
  p.s.resize(n);
  p.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.s[i] = found.a * dir[i];
    params[i] += p.s[i];
    p.y[i] = found.g[i] - s.grad[i];
  }
  const double sy = dot(p.s, p.y);
  if (sy > 1e-10 * std::sqrt(dot(p.s, p.s)) * std::sqrt(dot(p.y, p.y))) {
    p.rho = 1.0 / sy;
    s.pairs.push_back(std::move(p));
    while (static_cast<int>(s.pairs.size()) > s.config.history) s.pairs.pop_front();
  }
  s.loss = found.f;
  s.grad = std::move(found.g);
  ++s.iterations;
  res.accepted = true;
  res.strong_wolfe = wolfe;
  res.step = found.a;
  return res;
}

// ---------------------------------------------------------------------------
// Training schedule

struct TrainSchedule {
  int adam_epochs = 2000;
  int lbfgs_epochs = 1500;
  std::uint64_t seed = 1;
  AdamConfig adam;
  LbfgsConfig lbfgs;
  /// L-BFGS stops early once the loss drops below this (0 disables).
  double target_loss = 0.0;
};

enum class Phase { Adam, Lbfgs };

struct TraceEntry {
  int epoch;
  double loss;
  Phase phase;
};

struct TrainResult {
  std::vector<double> params;  // best iterate seen
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double initial_loss = std::numeric_limits<double>::quiet_NaN();
  std::vector<TraceEntry> trace;
  long evaluations = 0;
  bool aborted = false;
  std::string stop_reason;  // empty when every epoch ran
};

/// Adam for `adam_epochs` steps, then L-BFGS for `lbfgs_epochs` iterations.
/// Adam entries record the loss at the start of the step, L-BFGS entries the
/// loss after it. The returned parameters are the best iterate evaluated.
inline TrainResult train(const Objective& fn, std::vector<double> theta, const TrainSchedule& sch) {
  if (sch.adam_epochs < 0 || sch.lbfgs_epochs < 0) throw std::invalid_argument("epoch counts must be non-negative");
  TrainResult out;
  const std::size_t n = theta.size();
  std::vector<double> grad(n);
  double best = std::numeric_limits<double>::infinity();
  out.params = theta;
  auto consider = [&](double loss, std::span<const double> at) {
    if (loss < best) {
      best = loss;
      out.params.assign(at.begin(), at.end());
    }
  };
  auto counted = [&](std::span<const double> th, std::span<double> g) {
    ++out.evaluations;
    return fn(th, g);
  };

  {
    const double f = counted(theta, grad);
    out.initial_loss = f;
    if (std::isfinite(f)) consider(f, theta);
  }
  int epoch = 0;
  if (sch.adam_epochs > 0) {
    AdamState adam(n, sch.adam);
    double f = out.initial_loss;
    for (int e = 0; e < sch.adam_epochs; ++e) {
      if (e > 0) f = counted(theta, grad);
      if (!std::isfinite(f) || !all_finite(grad)) {
        out.aborted = true;
        out.stop_reason = "non-finite loss or gradient during Adam at epoch " + std::to_string(epoch + 1);
        break;
      }
      consider(f, theta);
      out.trace.push_back({++epoch, f, Phase::Adam});
      adam_step(adam, theta, grad);
    }
  }
  if (!out.aborted && sch.lbfgs_epochs > 0) {
    LbfgsState lb(sch.lbfgs);
    Objective wrapped = counted;
    try {
      for (int e = 0; e < sch.lbfgs_epochs; ++e) {
        LbfgsStepResult r = lbfgs_step(lb, theta, wrapped);
        if (!r.accepted) {
          if (r.failure == "zero gradient") {
            out.stop_reason = "converged: zero gradient";
          } else {
            out.aborted = true;
            out.stop_reason = r.failure + " at L-BFGS epoch " + std::to_string(e + 1);
          }
          break;
        }
        consider(lb.loss, theta);
        out.trace.push_back({++epoch, lb.loss, Phase::Lbfgs});
        if (sch.target_loss > 0.0 && lb.loss < sch.target_loss) {
          out.stop_reason = "reached target loss";
          break;
        }
        double gmax = 0.0;
        for (double g : lb.grad) gmax = std::max(gmax, std::abs(g));
        if (gmax <= sch.lbfgs.gradient_tolerance) {
          out.stop_reason = "converged: gradient below tolerance";
          break;
        }
      }
    } catch (const NonFiniteError& err) {
      out.aborted = true;
      out.stop_reason = err.what();
    }
  }
  out.final_loss = std::isfinite(best) ? best : out.initial_loss;
  return out;
}

}  // namespace vpinn
