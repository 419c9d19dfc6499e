#pragma once

/// \file pipeline.hpp
///
/// Run configuration, single runs (steady or parabolic) and table sweeps.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "vpinn/network.hpp"
#include "vpinn/optim.hpp"
#include "vpinn/problems.hpp"
#include "vpinn/reference_tables.hpp"
#include "vpinn/report.hpp"
#include "vpinn/timestepper.hpp"
#include "vpinn/weakform.hpp"

namespace vpinn {

struct RunConfig {
  std::string problem = "cd1";
  double epsilon = 0.1;
  std::optional<double> mu;
  int test_functions = 36;
  int quad_points = 1000;
  std::vector<int> widths = default_widths();
  int adam_epochs = 2000;
  int lbfgs_epochs = 1500;
  /// Adam steps on levels 2..N_t of a parabolic run.
  int level_adam_epochs = 200;
  int time_steps = 100;
  double final_time = 1.0;
  std::uint64_t seed = 1;
  LossMode loss = LossMode::Mse;
  ResidualMode residual = ResidualMode::Strong;
  bool warm_start = true;
  std::string out_dir = "out";

  bool operator==(const RunConfig&) const = default;
};

/// Defaults for one problem kind.
inline RunConfig default_config(ProblemKind kind) {
  RunConfig c;
  c.problem = std::string(problem_key(kind));
  if (is_parabolic(kind)) {
    c.test_functions = 18;
    c.quad_points = 100;
    c.lbfgs_epochs = 1000;
  }
  if (kind == ProblemKind::ReactionDiffusion || kind == ProblemKind::TwoParameter) c.adam_epochs = 0;
  return c;
}

namespace detail {
inline std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw std::invalid_argument(key + ": '" + v + "' is not a number");
  return out;
}

template <class I>
I to_int(const std::string& key, const std::string& v) {
  I out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw std::invalid_argument(key + ": '" + v + "' is not an integer");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument(key + ": '" + v + "' is not a boolean");
}

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// Applies one key=value setting. Unknown keys are errors.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "problem") {
    problem_kind_from_key(value);
    c.problem = value;
  } else if (key == "epsilon") {
    c.epsilon = to_double(key, value);
  } else if (key == "mu") {
    if (value.empty())
      c.mu.reset();
    else
      c.mu = to_double(key, value);
  } else if (key == "test_functions") {
    c.test_functions = to_int<int>(key, value);
  } else if (key == "quad_points") {
    c.quad_points = to_int<int>(key, value);
  } else if (key == "widths") {
    c.widths.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) c.widths.push_back(to_int<int>(key, trim(item)));
  } else if (key == "adam_epochs") {
    c.adam_epochs = to_int<int>(key, value);
  } else if (key == "lbfgs_epochs") {
    c.lbfgs_epochs = to_int<int>(key, value);
  } else if (key == "level_adam_epochs") {
    c.level_adam_epochs = to_int<int>(key, value);
  } else if (key == "time_steps") {
    c.time_steps = to_int<int>(key, value);
  } else if (key == "final_time") {
    c.final_time = to_double(key, value);
  } else if (key == "seed") {
    c.seed = to_int<std::uint64_t>(key, value);
  } else if (key == "loss") {
    c.loss = loss_mode_from_string(value);
  } else if (key == "residual") {
    c.residual = residual_mode_from_string(value);
  } else if (key == "warm_start") {
    c.warm_start = to_bool(key, value);
  } else if (key == "out") {
    c.out_dir = value;
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

/// Flat key=value text; '#' starts a comment. Problem defaults are applied
/// first, so a file only needs the keys it changes.
inline RunConfig parse_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    kv.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  RunConfig c;
  for (const auto& [k, v] : kv)
    if (k == "problem") c = default_config(problem_kind_from_key(v));
  for (const auto& [k, v] : kv) apply_setting(c, k, v);
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline std::string serialize_config(const RunConfig& c) {
  std::string w;
  for (std::size_t i = 0; i < c.widths.size(); ++i) w += (i ? "," : "") + std::to_string(c.widths[i]);
  std::ostringstream o;
  o << "problem=" << c.problem << '\n'
    << "epsilon=" << detail::num(c.epsilon) << '\n'
    << "mu=" << (c.mu ? detail::num(*c.mu) : "") << '\n'
    << "test_functions=" << c.test_functions << '\n'
    << "quad_points=" << c.quad_points << '\n'
    << "widths=" << w << '\n'
    << "adam_epochs=" << c.adam_epochs << '\n'
    << "lbfgs_epochs=" << c.lbfgs_epochs << '\n'
    << "level_adam_epochs=" << c.level_adam_epochs << '\n'
    << "time_steps=" << c.time_steps << '\n'
    << "final_time=" << detail::num(c.final_time) << '\n'
    << "seed=" << c.seed << '\n'
    << "loss=" << to_string(c.loss) << '\n'
    << "residual=" << to_string(c.residual) << '\n'
    << "warm_start=" << (c.warm_start ? "true" : "false") << '\n'
    << "out=" << c.out_dir << '\n';
  return o.str();
}

/// Throws std::invalid_argument describing the first problem found.
inline ProblemSpec validate(const RunConfig& c) {
  const ProblemKind kind = problem_kind_from_key(c.problem);
  if (c.test_functions < 1) throw std::invalid_argument("test_functions must be >= 1");
  if (c.quad_points < 2) throw std::invalid_argument("quad_points must be >= 2");
  if (c.adam_epochs < 0 || c.lbfgs_epochs < 0 || c.level_adam_epochs < 0) throw std::invalid_argument("epoch counts must be >= 0");
  if (c.time_steps < 1) throw std::invalid_argument("time_steps must be >= 1");
  if (!(c.final_time > 0.0)) throw std::invalid_argument("final_time must be > 0");
  if (c.loss == LossMode::Mse && c.residual != ResidualMode::Strong) throw std::invalid_argument("loss=mse requires residual=strong");
  validate_widths(c.widths);
  ProblemSpec spec = make_problem(kind, c.epsilon, needs_mu(kind) ? c.mu : std::nullopt);
  spec.final_time = c.final_time;
  return spec;
}

// ---------------------------------------------------------------------------
// Single run

struct RunOutcome {
  RunArtifacts artifacts;
  std::vector<std::filesystem::path> files;
  std::string level_csv;  // parabolic only
  MlpParams params;
};

inline std::string run_stem(const ErrorReport& r) {
  const std::string name = artifact_name(r, "x");
  return name.substr(0, name.size() - std::string("_x.csv").size());
}

/// Trains, evaluates and (when `write` is set) writes every artifact under
/// `config.out_dir`.
inline RunOutcome run(const RunConfig& config, bool write = true) {
  const ProblemSpec spec = validate(config);
  const auto t0 = std::chrono::steady_clock::now();
  const QuadRule quad = build_quadrature(config.quad_points);
  const HatTable hats = tabulate(build_basis(config.test_functions), quad);
  MlpTrialModel model(config.widths, quad.points);
  const MlpParams init = init_params(config.widths, config.seed);

  RunOutcome out;
  RunArtifacts& art = out.artifacts;
  ErrorReport& rep = art.report;
  const std::vector<double> xs = eval_grid();
  std::vector<double> theta;
  std::optional<double> t_eval;

  if (!spec.parabolic()) {
    TrainSchedule sch;
    sch.adam_epochs = config.adam_epochs;
    sch.lbfgs_epochs = config.lbfgs_epochs;
    sch.seed = config.seed;
    WeakLoss<MlpTrialModel> loss(model, quad, hats, WeakOperator::steady(spec, quad), config.residual, config.loss);
    TrainResult tr = train([&](std::span<const double> th, std::span<double> g) { return loss(th, g); }, init.values, sch);
    theta = std::move(tr.params);
    for (const auto& e : tr.trace) art.trace.push_back({e.epoch, 0, e.loss, e.phase});
    rep.final_loss = tr.final_loss;
    rep.aborted = tr.aborted;
    rep.stop_reason = tr.stop_reason;
  } else {
    ParabolicSchedule sch;
    sch.first.adam_epochs = config.adam_epochs;
    sch.first.lbfgs_epochs = config.lbfgs_epochs;
    sch.later.adam_epochs = config.level_adam_epochs;
    sch.later.lbfgs_epochs = config.lbfgs_epochs;
    sch.warm_start = config.warm_start;
    const TimeGrid grid = make_time_grid(config.time_steps, config.final_time);
    ParabolicResult pr = solve_parabolic(spec, model, quad, hats, grid, init.values, sch, config.residual, config.loss);
    const LevelSolution& last = pr.levels.back();
    theta = last.params;
    t_eval = last.t;
    art.trace = std::move(pr.trace);
    art.parabolic = true;
    for (const auto& lv : pr.levels)
      for (std::size_t q = 0; q < quad.size(); ++q) art.surface.push_back({quad.points[q], lv.t, exact(spec, quad.points[q], lv.t), lv.values[q]});
    rep.final_loss = pr.records.empty() ? std::numeric_limits<double>::quiet_NaN() : pr.records.back().loss_after;
    rep.aborted = pr.aborted;
    rep.stop_reason = pr.stop_reason;
    out.level_csv = level_table(pr);
  }

  const JetBatch b = model.evaluate(theta, xs);
  art.grid = xs;
  art.vpinn.assign(b.v.data(), b.v.data() + b.v.size());
  art.exact = exact_on(spec, xs, t_eval);
  const double loss_kept = rep.final_loss;
  const bool aborted = rep.aborted;
  const std::string reason = rep.stop_reason;
  rep = compute_errors(spec, art.vpinn, t_eval);
  rep.final_loss = loss_kept;
  rep.aborted = aborted;
  rep.stop_reason = reason;
  rep.seed = config.seed;
  rep.adam_epochs = config.adam_epochs;
  rep.lbfgs_epochs = config.lbfgs_epochs;
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.params = MlpParams{config.widths, theta};

  if (write) {
    const std::filesystem::path dir = config.out_dir;
    out.files = emit_figure_data(art, dir);
    const std::string stem = run_stem(rep);
    auto put = [&](const std::string& name, const std::string& body) {
      out.files.push_back(dir / name);
      detail::write_text(out.files.back(), body);
    };
    put(artifact_name(rep, "report"), emit_table({rep}).csv);
    if (art.parabolic) put(artifact_name(rep, "levels"), out.level_csv);
    put(stem + "_params.json", params_to_json(out.params).dump(1) + "\n");
    put(stem + "_config.txt", serialize_config(config));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Table sweeps

struct TableRowResult {
  ReferenceRow reference;
  std::vector<std::optional<ErrorReport>> per_seed;  // empty optional = failed
  std::vector<std::string> errors;
};

struct TableRun {
  int id = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<TableRowResult> rows;
  std::vector<ErrorReport> median;
  std::vector<std::filesystem::path> files;
};

namespace detail {
inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}
}  // namespace detail

inline ErrorReport median_report(const std::vector<ErrorReport>& rs) {
  if (rs.empty()) throw std::invalid_argument("no reports to aggregate");
  ErrorReport m = rs.front();
  auto med = [&](double ErrorReport::*f) {
    std::vector<double> v;
    for (const auto& r : rs) v.push_back(r.*f);
    return detail::median_of(v);
  };
  m.final_loss = med(&ErrorReport::final_loss);
  m.max_err = med(&ErrorReport::max_err);
  m.rel_max_err = med(&ErrorReport::rel_max_err);
  m.l2_err = med(&ErrorReport::l2_err);
  m.rel_l2_err = med(&ErrorReport::rel_l2_err);
  m.wall_seconds = med(&ErrorReport::wall_seconds);
  m.aborted = std::any_of(rs.begin(), rs.end(), [](const ErrorReport& r) { return r.aborted; });
  return m;
}

/// Side-by-side CSV of our medians against the published values.
inline std::string diff_table(const TableRun& t) {
  std::string s = "epsilon,mu,loss,ref_loss,max,ref_max,max_ratio,l2,ref_l2,l2_ratio,status\n";
  for (const auto& row : t.rows) {
    const auto& ref = row.reference;
    const auto it = std::find_if(t.median.begin(), t.median.end(), [&](const ErrorReport& r) { return r.epsilon == ref.epsilon && r.mu == ref.mu; });
    s += sci(ref.epsilon) + "," + (ref.mu ? sci(*ref.mu) : "") + ",";
    if (it == t.median.end()) {
      s += ",";
      s += sci(ref.loss) + ",," + sci(ref.max_err) + ",,," + sci(ref.l2_err) + ",,failed\n";
      continue;
    }
    s += sci(it->final_loss) + "," + sci(ref.loss) + "," + sci(it->max_err) + "," + sci(ref.max_err) + "," + sci(it->max_err / ref.max_err) + "," +
         sci(it->l2_err) + "," + sci(ref.l2_err) + "," + sci(it->l2_err / ref.l2_err) + "," + (row.errors.empty() ? "ok" : "partial") + "\n";
  }
  return s;
}

/// Runs every row of table `id` for every seed with `base` as the template
/// configuration (its problem, epsilon and mu are overwritten). Jobs run on
/// `workers` threads; a failing job is recorded and the sweep continues.
inline TableRun reproduce_table(int id, const std::vector<std::uint64_t>& seeds, const RunConfig& base, int workers = 1, bool write = true) {
  if (seeds.empty()) throw std::invalid_argument("need at least one seed");
  const ReferenceTable ref = reference_table(id);
  TableRun out;
  out.id = id;
  out.seeds = seeds;
  for (const auto& r : ref.rows) out.rows.push_back({r, std::vector<std::optional<ErrorReport>>(seeds.size()), {}});

  struct Job {
    std::size_t row, seed;
  };
  std::vector<Job> jobs;
  for (std::size_t r = 0; r < out.rows.size(); ++r)
    for (std::size_t s = 0; s < seeds.size(); ++s) jobs.push_back({r, s});

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
      const Job job = jobs[j];
      RunConfig c = base;
      c.problem = std::string(problem_key(ref.kind));
      c.epsilon = out.rows[job.row].reference.epsilon;
      c.mu = out.rows[job.row].reference.mu;
      c.seed = seeds[job.seed];
      c.out_dir = (std::filesystem::path(base.out_dir) / ("table" + std::to_string(id)) / ("seed" + std::to_string(c.seed))).string();
      try {
        RunOutcome o = run(c, write);
        std::lock_guard lock(mu);
        out.rows[job.row].per_seed[job.seed] = std::move(o.artifacts.report);
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        out.rows[job.row].errors.push_back("seed " + std::to_string(c.seed) + ": " + e.what());
      }
    }
  };
  std::vector<std::jthread> pool;
  for (int w = 0; w < std::max(1, workers); ++w) pool.emplace_back(worker);
  pool.clear();

  for (const auto& row : out.rows) {
    std::vector<ErrorReport> ok;
    for (const auto& r : row.per_seed)
      if (r) ok.push_back(*r);
    if (!ok.empty()) out.median.push_back(median_report(ok));
  }

  if (write) {
    const std::filesystem::path dir = std::filesystem::path(base.out_dir) / ("table" + std::to_string(id));
    std::filesystem::create_directories(dir);
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      std::vector<ErrorReport> rs;
      for (const auto& row : out.rows)
        if (row.per_seed[s]) rs.push_back(*row.per_seed[s]);
      if (rs.empty()) continue;
      out.files.push_back(dir / ("table" + std::to_string(id) + "_seed" + std::to_string(seeds[s]) + ".csv"));
      detail::write_text(out.files.back(), emit_table(rs).csv);
    }
    if (!out.median.empty()) {
      out.files.push_back(dir / ("table" + std::to_string(id) + "_median.csv"));
      detail::write_text(out.files.back(), emit_table(out.median).csv);
    }
    out.files.push_back(dir / ("table" + std::to_string(id) + "_diff.csv"));
    detail::write_text(out.files.back(), diff_table(out));
  }
  return out;
}

}  // namespace vpinn
