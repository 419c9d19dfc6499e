#pragma once

/// \file report.hpp
///
/// Error norms on a 1001-point evaluation grid, result tables and the CSV
/// files behind solution, error, loss and surface plots.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vpinn/network.hpp"
#include "vpinn/optim.hpp"
#include "vpinn/problems.hpp"

namespace vpinn {

inline constexpr int kEvalPoints = 1001;

inline std::vector<double> eval_grid(int n = kEvalPoints) {
  if (n < 2) throw std::invalid_argument("evaluation grid needs at least two points");
  std::vector<double> x(n);
  for (int j = 0; j < n; ++j) x[j] = static_cast<double>(j) / (n - 1);
  return x;
}

struct ErrorReport {
  std::string problem;
  double epsilon = 0;
  std::optional<double> mu;
  std::uint64_t seed = 0;
  int adam_epochs = 0;
  int lbfgs_epochs = 0;
  double wall_seconds = 0;
  std::optional<double> time;

  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double max_err = 0;
  double rel_max_err = 0;
  double l2_err = 0;
  double rel_l2_err = 0;
  /// Set when the exact solution vanishes on the grid and the relative
  /// errors are NaN.
  bool zero_norm = false;
  bool aborted = false;
  std::string stop_reason;
};

/// Fills the four error fields from samples on a uniform grid over [0, 1].
/// The L2 norm uses trapezoid weights.
inline void fill_norms(ErrorReport& r, std::span<const double> exact, std::span<const double> approx) {
  if (exact.size() != approx.size() || exact.size() < 2) throw std::invalid_argument("error norms need two equally sized samples of length >= 2");
  const std::size_t n = exact.size();
  const double h = 1.0 / static_cast<double>(n - 1);
  double emax = 0, umax = 0, e2 = 0, u2 = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double w = (j == 0 || j + 1 == n) ? 0.5 * h : h;
    const double e = std::abs(exact[j] - approx[j]);
    emax = std::max(emax, e);
    umax = std::max(umax, std::abs(exact[j]));
    e2 += w * e * e;
    u2 += w * exact[j] * exact[j];
  }
  r.max_err = emax;
  r.l2_err = std::sqrt(e2);
  r.zero_norm = umax == 0.0;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.rel_max_err = r.zero_norm ? nan : emax / umax;
  r.rel_l2_err = u2 == 0.0 ? nan : r.l2_err / std::sqrt(u2);
}

inline std::vector<double> exact_on(const ProblemSpec& spec, std::span<const double> xs, std::optional<double> t) {
  std::vector<double> u;
  u.reserve(xs.size());
  for (double x : xs) u.push_back(exact(spec, x, t));
  return u;
}

/// Errors of `approx`, sampled on `eval_grid(approx.size())`.
inline ErrorReport compute_errors(const ProblemSpec& spec, std::span<const double> approx, std::optional<double> t = std::nullopt) {
  check_time(spec, t);
  ErrorReport r;
  r.problem = std::string(spec.key());
  r.epsilon = spec.epsilon;
  r.mu = spec.mu;
  r.time = t;
  const std::vector<double> xs = eval_grid(static_cast<int>(approx.size()));
  fill_norms(r, exact_on(spec, xs, t), approx);
  return r;
}

template <TrialModel Model>
ErrorReport compute_errors(const ProblemSpec& spec, const Model& model, std::span<const double> theta, std::optional<double> t = std::nullopt) {
  const std::vector<double> xs = eval_grid();
  const JetBatch b = model.evaluate(theta, xs);
  return compute_errors(spec, std::span<const double>(b.v.data(), static_cast<std::size_t>(b.v.size())), t);
}

// ---------------------------------------------------------------------------
// Formatting

/// %.4e, i.e. five significant digits; "nan" for NaN.
inline std::string sci(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4e", v);
  return buf;
}

/// Compact %g form used in file names.
inline std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

struct TableText {
  std::string csv;
  std::string text;
};

/// Rows sorted by descending epsilon (then descending mu).
inline TableText emit_table(std::vector<ErrorReport> reports) {
  if (reports.empty()) throw std::invalid_argument("no reports to tabulate");
  std::stable_sort(reports.begin(), reports.end(), [](const ErrorReport& a, const ErrorReport& b) {
    if (a.epsilon != b.epsilon) return a.epsilon > b.epsilon;
    return a.mu.value_or(0.0) > b.mu.value_or(0.0);
  });
  std::ostringstream csv, txt;
  csv << "epsilon,mu,loss,max,rel_max,l2,rel_l2\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %-12s %-12s %-12s %-12s %-12s %-12s\n", "epsilon", "mu", "loss", "max", "rel_max", "l2", "rel_l2");
  txt << line;
  for (const auto& r : reports) {
    const std::string mu = r.mu ? sci(*r.mu) : "";
    csv << sci(r.epsilon) << ',' << mu << ',' << sci(r.final_loss) << ',' << sci(r.max_err) << ',' << sci(r.rel_max_err) << ',' << sci(r.l2_err)
        << ',' << sci(r.rel_l2_err) << '\n';
    std::snprintf(line, sizeof line, "%-12s %-12s %-12s %-12s %-12s %-12s %-12s\n", sci(r.epsilon).c_str(), mu.c_str(), sci(r.final_loss).c_str(),
                  sci(r.max_err).c_str(), sci(r.rel_max_err).c_str(), sci(r.l2_err).c_str(), sci(r.rel_l2_err).c_str());
    txt << line;
  }
  return {csv.str(), txt.str()};
}

// ---------------------------------------------------------------------------
// Figure data

struct TraceRow {
  int epoch;
  int level;  // 0 for steady runs
  double loss;
  Phase phase;
};

struct SurfacePoint {
  double x, t, exact, vpinn;
};

struct RunArtifacts {
  ErrorReport report;
  std::vector<double> grid, exact, vpinn;
  std::vector<TraceRow> trace;
  std::vector<SurfacePoint> surface;  // parabolic runs only
  bool parabolic = false;
};

/// `{problem}_{eps}_{mu or none}_{kind}.csv`
inline std::string artifact_name(const ErrorReport& r, const std::string& kind) {
  return r.problem + "_" + short_number(r.epsilon) + "_" + (r.mu ? short_number(*r.mu) : std::string("none")) + "_" + kind + ".csv";
}

namespace detail {
inline void write_text(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << body;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// Writes solution, pointwise error and loss trace files, plus the surface
/// file for parabolic runs. Returns the paths written.
inline std::vector<std::filesystem::path> emit_figure_data(const RunArtifacts& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const auto& r = run.report;
  {
    std::ostringstream s, e;
    s << "x,exact,vpinn\n";
    e << "x,abs_error\n";
    for (std::size_t j = 0; j < run.grid.size(); ++j) {
      s << detail::g17(run.grid[j]) << ',' << detail::g17(run.exact[j]) << ',' << detail::g17(run.vpinn[j]) << '\n';
      e << detail::g17(run.grid[j]) << ',' << detail::g17(std::abs(run.exact[j] - run.vpinn[j])) << '\n';
    }
    written.push_back(dir / artifact_name(r, "solution"));
    detail::write_text(written.back(), s.str());
    written.push_back(dir / artifact_name(r, "error"));
    detail::write_text(written.back(), e.str());
  }
  {
    std::ostringstream l;
    l << "epoch,loss,phase,level,flag\n";
    for (std::size_t k = 0; k < run.trace.size(); ++k) {
      const auto& t = run.trace[k];
      const bool last = k + 1 == run.trace.size();
      l << t.epoch << ',' << detail::g17(t.loss) << ',' << (t.phase == Phase::Adam ? "adam" : "lbfgs") << ',' << t.level << ','
        << (last && r.aborted ? "aborted" : "ok") << '\n';
    }
    written.push_back(dir / artifact_name(r, "loss"));
    detail::write_text(written.back(), l.str());
  }
  if (run.parabolic) {
    std::ostringstream s;
    s << "x,t,exact,vpinn\n";
    for (const auto& p : run.surface) s << detail::g17(p.x) << ',' << detail::g17(p.t) << ',' << detail::g17(p.exact) << ',' << detail::g17(p.vpinn) << '\n';
    written.push_back(dir / artifact_name(r, "surface"));
    detail::write_text(written.back(), s.str());
  }
  return written;
}

}  // namespace vpinn
