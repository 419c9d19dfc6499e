// vpinn: train VPINN solvers for the benchmark problems and tabulate errors.
//
//   vpinn run --problem cd1 --epsilon 1e-2 --seed 3 --out results
//   vpinn table 4 --seeds 1,2,3 --workers 2

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vpinn/pipeline.hpp"

namespace {

struct Flags {
  std::string config_file;
  std::string problem;
  std::optional<double> epsilon, mu, final_time;
  std::optional<int> test_functions, quad_points, adam_epochs, lbfgs_epochs, level_adam_epochs, time_steps;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> loss, residual, out;
  bool cold_start = false;
};

void add_common(CLI::App& app, Flags& f) {
  app.add_option("--config", f.config_file, "key=value config file; flags override it");
  app.add_option("--epsilon", f.epsilon, "perturbation parameter in (0,1)");
  app.add_option("--mu", f.mu, "second parameter in (0,1) for tp1 and parab2");
  app.add_option("--test-functions", f.test_functions, "number of interior hat functions M");
  app.add_option("--quad-points", f.quad_points, "number of trapezoid points N");
  app.add_option("--adam-epochs", f.adam_epochs, "Adam steps (first level for parabolic problems)");
  app.add_option("--level-adam-epochs", f.level_adam_epochs, "Adam steps on later time levels");
  app.add_option("--lbfgs-epochs", f.lbfgs_epochs, "L-BFGS iterations (per level for parabolic problems)");
  app.add_option("--time-steps", f.time_steps, "backward Euler steps N_t");
  app.add_option("--final-time", f.final_time, "final time T");
  app.add_option("--loss", f.loss, "integral or mse")->check(CLI::IsMember({"integral", "mse"}));
  app.add_option("--residual", f.residual, "strong or ibp")->check(CLI::IsMember({"strong", "ibp"}));
  app.add_option("--out", f.out, "output directory");
  app.add_flag("--cold-start", f.cold_start, "re-initialize the network on every time level");
}

vpinn::RunConfig build_config(const Flags& f, const std::string& problem) {
  vpinn::RunConfig c;
  if (!f.config_file.empty()) {
    c = vpinn::load_config(f.config_file);
    if (!problem.empty()) c.problem = problem;
  } else if (!problem.empty()) {
    c = vpinn::default_config(vpinn::problem_kind_from_key(problem));
  }
  if (f.epsilon) c.epsilon = *f.epsilon;
  if (f.mu) c.mu = *f.mu;
  if (f.test_functions) c.test_functions = *f.test_functions;
  if (f.quad_points) c.quad_points = *f.quad_points;
  if (f.adam_epochs) c.adam_epochs = *f.adam_epochs;
  if (f.level_adam_epochs) c.level_adam_epochs = *f.level_adam_epochs;
  if (f.lbfgs_epochs) c.lbfgs_epochs = *f.lbfgs_epochs;
  if (f.time_steps) c.time_steps = *f.time_steps;
  if (f.final_time) c.final_time = *f.final_time;
  if (f.seed) c.seed = *f.seed;
  if (f.loss) c.loss = vpinn::loss_mode_from_string(*f.loss);
  if (f.residual) c.residual = vpinn::residual_mode_from_string(*f.residual);
  if (f.out) c.out_dir = *f.out;
  if (f.cold_start) c.warm_start = false;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VPINN solver for singularly perturbed benchmark problems"};
  app.require_subcommand(1);

  Flags run_flags;
  CLI::App* run_cmd = app.add_subcommand("run", "train one configuration and write its artifacts");
  run_cmd->add_option("--problem", run_flags.problem, "cd1, parab1, rd1, tp1 or parab2");
  run_cmd->add_option("--seed", run_flags.seed, "initialization seed");
  add_common(*run_cmd, run_flags);

  Flags table_flags;
  int table_id = 0;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int workers = 1;
  CLI::App* table_cmd = app.add_subcommand("table", "rerun every row of a benchmark table and compare with the published values");
  table_cmd->add_option("id", table_id, "table number 1..5")->required()->check(CLI::Range(1, 5));
  table_cmd->add_option("--seeds", seeds, "comma separated seeds")->delimiter(',');
  table_cmd->add_option("--workers", workers, "parallel runs")->check(CLI::PositiveNumber);
  add_common(*table_cmd, table_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      const vpinn::RunConfig c = build_config(run_flags, run_flags.problem);
      vpinn::validate(c);
      const vpinn::RunOutcome o = vpinn::run(c);
      std::cout << vpinn::emit_table({o.artifacts.report}).text;
      if (o.artifacts.report.aborted) std::cerr << "run aborted: " << o.artifacts.report.stop_reason << '\n';
      for (const auto& p : o.files) std::cout << "wrote " << p.string() << '\n';
      return o.artifacts.report.aborted ? 2 : 0;
    }
    const vpinn::ReferenceTable ref = vpinn::reference_table(table_id);
    vpinn::RunConfig base = build_config(table_flags, std::string(vpinn::problem_key(ref.kind)));
    base.mu = ref.rows.front().mu;  // validated per row below
    base.epsilon = ref.rows.front().epsilon;
    vpinn::validate(base);
    const vpinn::TableRun t = vpinn::reproduce_table(table_id, seeds, base, workers);
    std::cout << vpinn::emit_table(t.median).text << '\n' << vpinn::diff_table(t);
    int failures = 0;
    for (const auto& row : t.rows)
      for (const auto& e : row.errors) {
        std::cerr << "row eps=" << row.reference.epsilon << ": " << e << '\n';
        ++failures;
      }
    for (const auto& p : t.files) std::cout << "wrote " << p.string() << '\n';
    return failures ? 2 : 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
