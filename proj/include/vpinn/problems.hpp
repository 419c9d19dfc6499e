#pragma once

/// \file problems.hpp
///
/// The five benchmark problems on x in (0, 1) with homogeneous Dirichlet data:
///
///   cd1     -eps u'' - (1 + x) u' + u = r
///   parab1  u_t - eps u_xx + u_x + u = r
///   rd1     -eps^2 u'' + u = r
///   tp1     -eps u'' + mu u' + u = r
///   parab2  u_t - eps u_xx + mu u_x + u = r
///
/// Every right-hand side is manufactured from a closed-form solution by
/// applying the operator to its degree-2 jet. Both parabolic solutions have
/// the form u(x, t) = exp(-t) g(x), so u_t = -u is taken analytically.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "vpinn/autodiff.hpp"

namespace vpinn {

enum class ProblemKind { ConvectionDiffusion, ReactionDiffusion, TwoParameter, ParabolicOneParam, ParabolicTwoParam };

inline std::string_view problem_key(ProblemKind k) {
  switch (k) {
    case ProblemKind::ConvectionDiffusion: return "cd1";
    case ProblemKind::ParabolicOneParam: return "parab1";
    case ProblemKind::ReactionDiffusion: return "rd1";
    case ProblemKind::TwoParameter: return "tp1";
    case ProblemKind::ParabolicTwoParam: return "parab2";
  }
  return "?";
}

inline ProblemKind problem_kind_from_key(std::string_view key) {
  for (auto k : {ProblemKind::ConvectionDiffusion, ProblemKind::ParabolicOneParam, ProblemKind::ReactionDiffusion, ProblemKind::TwoParameter,
                 ProblemKind::ParabolicTwoParam})
    if (problem_key(k) == key) return k;
  throw std::invalid_argument("unknown problem key '" + std::string(key) + "' (expected cd1, parab1, rd1, tp1 or parab2)");
}

inline bool needs_mu(ProblemKind k) { return k == ProblemKind::TwoParameter || k == ProblemKind::ParabolicTwoParam; }
inline bool is_parabolic(ProblemKind k) { return k == ProblemKind::ParabolicOneParam || k == ProblemKind::ParabolicTwoParam; }

struct ProblemSpec {
  ProblemKind kind = ProblemKind::ConvectionDiffusion;
  double epsilon = 0.1;
  std::optional<double> mu;
  double final_time = 1.0;

  // tp1 closed-form constants
  double m1 = 0, m2 = 0, D = 0, E = 0;
  // parab2 closed-form constants
  double cos_amp = 0, sin_amp = 0, u_left = 0, u_right = 0, A = 0, B = 0;

  std::string_view key() const { return problem_key(kind); }
  bool parabolic() const { return is_parabolic(kind); }

  /// Coefficient of -u''.
  double diffusion() const { return kind == ProblemKind::ReactionDiffusion ? epsilon * epsilon : epsilon; }
  /// b(x) as written in the problem's defining equation.
  double b(double x) const {
    switch (kind) {
      case ProblemKind::ConvectionDiffusion: return -(1.0 + x);
      case ProblemKind::ReactionDiffusion: return 0.0;
      default: return 1.0;
    }
  }
  double c(double) const { return 1.0; }
  /// Full first-order coefficient, including the mu scaling of two-parameter kinds.
  double convection(double x) const { return needs_mu(kind) ? *mu * b(x) : b(x); }
};

inline ProblemSpec make_problem(ProblemKind kind, double epsilon, std::optional<double> mu = std::nullopt) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
  if (needs_mu(kind)) {
    if (!mu) throw std::invalid_argument(std::string(problem_key(kind)) + " requires mu");
    if (!(*mu > 0.0 && *mu < 1.0)) throw std::invalid_argument("mu must lie in (0, 1)");
  } else {
    mu.reset();
  }
  ProblemSpec s;
  s.kind = kind;
  s.epsilon = epsilon;
  s.mu = mu;
  const double eps = epsilon;
  if (kind == ProblemKind::TwoParameter) {
    const double m = *mu;
    const double root = std::sqrt(m * m + 4.0 * eps);
    s.m1 = -2.0 / (m + root);  // (mu - root) / (2 eps) without cancellation
    s.m2 = (m + root) / (2.0 * eps);
    s.D = -std::expm1(-root / eps);
    s.E = eps - m - 1.0;
  } else if (kind == ProblemKind::ParabolicTwoParam) {
    const double m = *mu;
    const double pi = std::numbers::pi;
    const double k = eps * pi * pi + 1.0;
    const double den = m * m * pi * pi + k * k;
    s.cos_amp = k / den;
    s.sin_amp = m * pi / den;
    const double root = std::sqrt(m * m + 4.0 * eps);
    s.u_left = 2.0 / (m + root);  // (-mu + root) / (2 eps)
    s.u_right = (m + root) / (2.0 * eps);
    const double denom = -std::expm1(-(s.u_left + s.u_right));
    s.A = -s.cos_amp * (1.0 + std::exp(-s.u_right)) / denom;
    s.B = s.cos_amp * (1.0 + std::exp(-s.u_left)) / denom;
  }
  return s;
}

/// Steady solution, or the spatial factor g of u = exp(-t) g(x) for the
/// parabolic kinds. `T` may be double or any Jet2.
template <class T>
T spatial_profile(const ProblemSpec& s, const T& x) {
  using std::cos;
  using std::exp;
  using std::sin;
  const double eps = s.epsilon;
  switch (s.kind) {
    case ProblemKind::ConvectionDiffusion: {
      T e = exp(x * (-1.0 / eps));
      return 1.0 - x - e + x * e;
    }
    case ProblemKind::ParabolicOneParam:
      return (1.0 - exp((x - 1.0) * (1.0 / eps))) * sin(x);
    case ProblemKind::ReactionDiffusion:
      return (1.0 + std::exp(-1.0 / eps)) - exp(x * (-1.0 / eps)) - exp((x - 1.0) * (1.0 / eps));
    case ProblemKind::TwoParameter: {
      // exp(m1) (exp(1 - m1) - 1) == e - exp(m1)
      const double e1 = std::numbers::e;
      T left = (e1 - std::exp(s.m1)) * exp(x * (-s.m2));
      T right = std::expm1(1.0 - s.m2) * exp((1.0 - x) * s.m1);
      return ((left - right) * (1.0 / s.D) - exp(1.0 - x)) * (1.0 / s.E);
    }
    case ProblemKind::ParabolicTwoParam: {
      const double pi = std::numbers::pi;
      return s.cos_amp * cos(pi * x) + s.sin_amp * sin(pi * x) + s.A * exp(x * (-s.u_left)) + s.B * exp((x - 1.0) * s.u_right);
    }
  }
  throw std::logic_error("unhandled problem kind");
}

inline void check_time(const ProblemSpec& s, const std::optional<double>& t) {
  if (s.parabolic() && !t) throw std::invalid_argument(std::string(s.key()) + " is time dependent; a time is required");
  if (!s.parabolic() && t) throw std::invalid_argument(std::string(s.key()) + " is steady; no time may be given");
}

inline double exact(const ProblemSpec& s, double x, std::optional<double> t = std::nullopt) {
  check_time(s, t);
  const double g = spatial_profile(s, x);
  return s.parabolic() ? std::exp(-t.value_or(0.0)) * g : g;
}

/// (u, u_x, u_xx) of the exact solution.
inline Jet2<double> exact_jet(const ProblemSpec& s, double x, std::optional<double> t = std::nullopt) {
  check_time(s, t);
  Jet2<double> g = spatial_profile(s, seed_jet(x));
  return s.parabolic() ? std::exp(-t.value_or(0.0)) * g : g;
}

/// Spatial operator -k u'' + q(x) u' + c(x) u applied to a jet, for any
/// coefficient type.
template <class S>
S apply_spatial_operator(const ProblemSpec& s, double x, const Jet2<S>& u) {
  return (-s.diffusion()) * u.c2 + s.convection(x) * u.c1 + s.c(x) * u.c0;
}

inline double source(const ProblemSpec& s, double x, std::optional<double> t = std::nullopt) {
  const Jet2<double> u = exact_jet(s, x, t);
  double r = apply_spatial_operator(s, x, u);
  if (s.parabolic()) r += -u.c0;  // u_t = -u
  return r;
}

// ---------------------------------------------------------------------------

enum class Regime { ConvectionDiffusionLike, DiffusionConvectionReactionLike, ReactionDiffusionLike };

inline std::string_view regime_name(Regime r) {
  switch (r) {
    case Regime::ConvectionDiffusionLike: return "convection-diffusion";
    case Regime::DiffusionConvectionReactionLike: return "diffusion-convection-reaction";
    case Regime::ReactionDiffusionLike: return "reaction-diffusion";
  }
  return "?";
}

struct RegimeReport {
  double lambda0 = 0;
  double lambda1 = 0;
  Regime regime = Regime::ReactionDiffusionLike;
  /// False when the governing ratio is below `kScaleSeparation`, i.e. the
  /// regime was chosen by the nearer side rather than by a clear "much less".
  bool separated = true;
};

inline constexpr double kScaleSeparation = 100.0;

/// Decay rates of the layers at x = 0 (lambda0) and x = 1 (lambda1), from the
/// roots of -eps z^2 + mu b z + c = 0 on a 1001-point grid.
template <class BFn, class CFn>
RegimeReport classify_regime(double eps, double mu, BFn&& b, CFn&& c) {
  if (!(eps > 0.0 && mu > 0.0)) throw std::invalid_argument("eps and mu must be positive");
  RegimeReport rep;
  rep.lambda0 = -std::numeric_limits<double>::infinity();
  rep.lambda1 = std::numeric_limits<double>::infinity();
  for (int j = 0; j <= 1000; ++j) {
    const double x = j / 1000.0;
    const double mb = mu * b(x);
    const double cx = c(x);
    const double root = std::sqrt(mb * mb + 4.0 * eps * cx);
    // rationalize whichever root would cancel
    const double l0 = mb > 0.0 ? 2.0 * cx / (mb + root) : (root - mb) / (2.0 * eps);
    const double l1 = mb < 0.0 ? 2.0 * cx / (root - mb) : (mb + root) / (2.0 * eps);
    rep.lambda0 = std::max(rep.lambda0, l0);
    rep.lambda1 = std::min(rep.lambda1, l1);
  }
  const double mu2 = mu * mu;
  if (mu >= 1.0) {
    rep.regime = Regime::ConvectionDiffusionLike;
    rep.separated = kScaleSeparation * eps <= mu;
  } else if (mu2 >= kScaleSeparation * eps) {
    rep.regime = Regime::DiffusionConvectionReactionLike;
  } else if (eps >= kScaleSeparation * mu2) {
    rep.regime = Regime::ReactionDiffusionLike;
  } else {
    rep.regime = mu2 >= eps ? Regime::DiffusionConvectionReactionLike : Regime::ReactionDiffusionLike;
    rep.separated = false;
  }
  return rep;
}

inline RegimeReport classify_regime(const ProblemSpec& s) {
  if (!s.mu) throw std::invalid_argument("regime classification needs a two-parameter problem");
  return classify_regime(s.epsilon, *s.mu, [&](double x) { return s.b(x); }, [&](double x) { return s.c(x); });
}

}  // namespace vpinn
