#include <gtest/gtest.h>

#include <filesystem>

#include "support.hpp"

using namespace vpinn;

namespace {
RunConfig tiny(ProblemKind k) {
  RunConfig c = default_config(k);
  c.quad_points = is_parabolic(k) ? 40 : 80;
  c.test_functions = 6;
  c.widths = {1, 5, 5, 1};
  c.adam_epochs = 20;
  c.level_adam_epochs = 5;
  c.lbfgs_epochs = 20;
  c.time_steps = 3;
  c.out_dir = (std::filesystem::temp_directory_path() / "vpinn_pipeline_test").string();
  return c;
}
}  // namespace

TEST(Config, DefaultsPerKind) {
  struct Row {
    ProblemKind k;
    int M, N, adam, lbfgs;
  };
  const Row rows[] = {
      {ProblemKind::ConvectionDiffusion, 36, 1000, 2000, 1500}, {ProblemKind::ReactionDiffusion, 36, 1000, 0, 1500},
      {ProblemKind::TwoParameter, 36, 1000, 0, 1500},           {ProblemKind::ParabolicOneParam, 18, 100, 2000, 1000},
      {ProblemKind::ParabolicTwoParam, 18, 100, 2000, 1000},
  };
  for (const auto& r : rows) {
    const auto c = default_config(r.k);
    EXPECT_EQ(c.test_functions, r.M);
    EXPECT_EQ(c.quad_points, r.N);
    EXPECT_EQ(c.adam_epochs, r.adam);
    EXPECT_EQ(c.lbfgs_epochs, r.lbfgs);
    EXPECT_EQ(c.time_steps, 100);
    EXPECT_EQ(c.level_adam_epochs, 200);
    EXPECT_EQ(c.final_time, 1.0);
    EXPECT_EQ(c.widths, default_widths());
  }
}

TEST(Config, RoundTrip) {
  RunConfig c = default_config(ProblemKind::ParabolicTwoParam);
  c.epsilon = 0.1 / 3;
  c.mu = 1e-3;
  c.seed = 42;
  c.loss = LossMode::Integral;
  c.residual = ResidualMode::IntegratedByParts;
  c.warm_start = false;
  c.widths = {1, 7, 1};
  c.out_dir = "some/dir";
  EXPECT_EQ(parse_config(serialize_config(c)), c);
  const RunConfig d = default_config(ProblemKind::ConvectionDiffusion);
  EXPECT_EQ(parse_config(serialize_config(d)), d);
}

TEST(Config, ParseAppliesProblemDefaultsThenOverrides) {
  const auto c = parse_config("# comment\nepsilon = 0.01\nproblem=parab1\nlbfgs_epochs=7\n");
  EXPECT_EQ(c.problem, "parab1");
  EXPECT_EQ(c.test_functions, 18);
  EXPECT_EQ(c.lbfgs_epochs, 7);
  EXPECT_DOUBLE_EQ(c.epsilon, 0.01);
  EXPECT_THROW(parse_config("bogus=1\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("epsilon=abc\n"), std::invalid_argument);
  EXPECT_THROW(parse_config("just text\n"), std::invalid_argument);
}

TEST(Config, Validation) {
  RunConfig c = default_config(ProblemKind::TwoParameter);
  EXPECT_THROW(validate(c), std::invalid_argument);  // mu missing
  c.mu = 1e-3;
  c.epsilon = 1e-2;
  EXPECT_NO_THROW(validate(c));
  c.test_functions = 0;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = default_config(ProblemKind::ConvectionDiffusion);
  c.residual = ResidualMode::IntegratedByParts;
  EXPECT_THROW(validate(c), std::invalid_argument);  // mse needs strong
  c.loss = LossMode::Integral;
  EXPECT_NO_THROW(validate(c));
  c.problem = "xx";
  EXPECT_THROW(validate(c), std::invalid_argument);
}

TEST(Run, SteadyRunWritesArtifacts) {
  RunConfig c = tiny(ProblemKind::TwoParameter);
  c.epsilon = 1e-2;
  c.mu = 1e-3;
  std::filesystem::remove_all(c.out_dir);
  const auto o = run(c);
  EXPECT_EQ(o.artifacts.report.problem, "tp1");
  ASSERT_TRUE(o.artifacts.report.mu);
  EXPECT_EQ(o.artifacts.trace.size(), 40u);
  for (const auto& f : o.files) EXPECT_TRUE(std::filesystem::exists(f)) << f;
  EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(c.out_dir) / "tp1_0.01_0.001_report.csv"));
  EXPECT_EQ(parse_config(serialize_config(c)), c);
}

TEST(Run, ParabolicRunWritesLevels) {
  RunConfig c = tiny(ProblemKind::ParabolicOneParam);
  const auto o = run(c, false);
  EXPECT_TRUE(o.artifacts.parabolic);
  ASSERT_TRUE(o.artifacts.report.time);
  EXPECT_DOUBLE_EQ(*o.artifacts.report.time, 1.0);
  EXPECT_EQ(o.artifacts.surface.size(), 4u * 40u);
  EXPECT_NE(o.level_csv.find("\n3,"), std::string::npos);
}

TEST(Run, SameSeedSameBytes) {
  RunConfig c = tiny(ProblemKind::ConvectionDiffusion);
  const auto a = run(c, false), b = run(c, false);
  EXPECT_EQ(emit_table({a.artifacts.report}).csv, emit_table({b.artifacts.report}).csv);
  EXPECT_EQ(a.params, b.params);
}

TEST(Table, ReproduceRowsSeedsAndMedian) {
  RunConfig base = tiny(ProblemKind::TwoParameter);
  base.lbfgs_epochs = 5;
  std::filesystem::remove_all(base.out_dir);
  const auto t = reproduce_table(4, {1, 2, 3}, base, 2);
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_DOUBLE_EQ(t.rows[2].reference.epsilon, 1e-3);
  EXPECT_DOUBLE_EQ(*t.rows[2].reference.mu, 1e-4);
  EXPECT_EQ(t.median.size(), 4u);
  // three per-seed tables, the median table and the diff
  EXPECT_EQ(t.files.size(), 5u);
  for (const auto& row : t.rows) {
    std::vector<double> m;
    for (const auto& r : row.per_seed) m.push_back(r->max_err);
    std::sort(m.begin(), m.end());
    const auto it = std::find_if(t.median.begin(), t.median.end(), [&](const ErrorReport& r) { return r.epsilon == row.reference.epsilon; });
    EXPECT_DOUBLE_EQ(it->max_err, m[1]);
  }
  const auto diff = diff_table(t);
  EXPECT_NE(diff.find("2.8932e-04"), std::string::npos);
}

TEST(Table, ParabolicTableUsesFinalTime) {
  RunConfig base = tiny(ProblemKind::ParabolicOneParam);
  base.time_steps = 1;
  const auto t = reproduce_table(2, {1}, base, 1, false);
  ASSERT_EQ(t.rows.size(), 5u);
  ASSERT_TRUE(t.rows[0].per_seed[0]);
  EXPECT_DOUBLE_EQ(*t.rows[0].per_seed[0]->time, 1.0);
  EXPECT_THROW(reproduce_table(6, {1}, base), std::invalid_argument);
}
