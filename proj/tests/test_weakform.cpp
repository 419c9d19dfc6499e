#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "support.hpp"

using namespace vpinn;

TEST(Basis, Definition) {
  EXPECT_THROW(build_basis(0), std::invalid_argument);
  const auto b1 = build_basis(1);
  EXPECT_EQ(b1.value(1, 0.5), 1.0);
  EXPECT_EQ(b1.value(1, 0.0), 0.0);
  EXPECT_EQ(b1.value(1, 1.0), 0.0);
  const auto b3 = build_basis(3);
  EXPECT_EQ(b3.value(2, 0.5), 1.0);
  EXPECT_EQ(b3.value(2, 0.25), 0.0);
  EXPECT_DOUBLE_EQ(b3.value(2, 0.375), 0.5);
  EXPECT_DOUBLE_EQ(build_basis(36).width(), 1.0 / 37);
  EXPECT_DOUBLE_EQ(b3.slope(2, 0.3), 4.0);
  EXPECT_DOUBLE_EQ(b3.slope(2, 0.7), -4.0);
  EXPECT_EQ(b3.slope(2, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(b3.slope(1, 0.0), 4.0);
}

TEST(Basis, PartitionOfUnityOnInterior) {
  const auto b = build_basis(36);
  const double lo = b.node(1), hi = b.node(36);
  for (int s = 0; s < 10000; ++s) {
    const double x = lo + (hi - lo) * s / 9999.0;
    double sum = 0;
    for (int i = 1; i <= 36; ++i) sum += b.value(i, x);
    ASSERT_NEAR(sum, 1.0, 1e-14) << x;
  }
}

TEST(Quadrature, TrapezoidRule) {
  EXPECT_THROW(build_quadrature(1), std::invalid_argument);
  const auto q = build_quadrature(1000);
  double w = 0, ix = 0, ix2 = 0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    w += q.weights[j];
    ix += q.weights[j] * q.points[j];
    ix2 += q.weights[j] * q.points[j] * q.points[j];
    if (j) {
      EXPECT_GT(q.points[j], q.points[j - 1]);
    }
  }
  EXPECT_NEAR(w, 1.0, 1e-13);
  EXPECT_NEAR(ix, 0.5, 1e-14);
  EXPECT_NEAR(ix2, 1.0 / 3, 2e-7);
}

// 999 = 27 * 37, so every mesh node of the 36-hat basis is a grid point and
// the trapezoid integral of a hat is exactly its area h.
TEST(Quadrature, HatsIntegrateExactlyOnAlignedGrid) {
  const auto b = build_basis(36);
  const auto q = build_quadrature(1000);
  const auto t = tabulate(b, q);
  for (int i = 1; i <= 36; ++i) {
    double s = 0;
    for (const auto& e : t.rows[i - 1]) s += q.weights[e.q] * e.v;
    EXPECT_NEAR(s, b.width(), 1e-14);
  }
}

TEST(Weak, LossArithmetic) {
  Tape t;
  std::vector<Var> R{Var::leaf(t, 3.0), Var::leaf(t, 4.0)};
  EXPECT_DOUBLE_EQ(vpinn_loss(t, R).value(), 12.5);
  std::vector<Var> Z{Var::leaf(t, 0.0), Var::leaf(t, 0.0)};
  EXPECT_EQ(vpinn_loss(t, Z).value(), 0.0);
}

TEST(Weak, ZeroNetworkGivesMinusSourceMoments) {
  const auto spec = make_problem(ProblemKind::ConvectionDiffusion, 0.1);
  const auto quad = build_quadrature(1000);
  const auto basis = build_basis(36);
  const auto hats = tabulate(basis, quad);
  Tape tape;
  const TapeMlp net = bind_params(tape, zero_params(default_widths()));
  const auto R = assemble_weak_residuals(tape, net, WeakOperator::steady(spec, quad), quad, hats, ResidualMode::Strong);
  for (int i = 1; i <= 36; ++i) {
    double direct = 0;
    for (std::size_t q = 0; q < quad.size(); ++q) direct -= quad.weights[q] * source(spec, quad.points[q]) * basis.value(i, quad.points[q]);
    EXPECT_NEAR(R[i - 1].value(), direct, 1e-14);
  }
}

namespace {
double exact_trial_loss(const ProblemSpec& spec, int M, int N, ResidualMode mode) {
  const auto quad = build_quadrature(N);
  const auto hats = tabulate(build_basis(M), quad);
  Tape tape;
  const auto R = assemble_weak_residuals(tape, WeakOperator::steady(spec, quad), quad, hats, mode, [&](std::size_t q) {
    const auto j = exact_jet(spec, quad.points[q]);
    return Jet2<Var>{Var::leaf(tape, j.c0), Var::leaf(tape, j.c1), Var::leaf(tape, j.c2)};
  });
  return vpinn_loss(tape, R).value();
}
}  // namespace

TEST(Weak, ExactSolutionAnnihilatesResidual) {
  for (auto k : {ProblemKind::ConvectionDiffusion, ProblemKind::ReactionDiffusion}) {
    for (double eps : {1e-1, 1e-2}) {
      const auto spec = make_problem(k, eps);
      EXPECT_LT(exact_trial_loss(spec, 36, 1000, ResidualMode::Strong), 1e-10) << spec.key() << " " << eps;
    }
  }
  EXPECT_LT(exact_trial_loss(make_problem(ProblemKind::TwoParameter, 1e-2, 1e-3), 36, 1000, ResidualMode::Strong), 1e-10);
}

// Integration by parts moves one derivative onto the hat; boundary terms vanish
// because every hat is zero at x = 0 and x = 1.
TEST(Weak, StrongAndIntegratedByPartsAgreeForSmoothTrial) {
  const auto spec = make_problem(ProblemKind::ConvectionDiffusion, 0.1);
  const auto quad = build_quadrature(1000);
  const auto hats = tabulate(build_basis(36), quad);
  const auto p = init_params(default_widths(), 4);
  Tape tape;
  const TapeMlp net = bind_params(tape, p);
  const auto op = WeakOperator::steady(spec, quad);
  const auto Rs = assemble_weak_residuals(tape, net, op, quad, hats, ResidualMode::Strong);
  const auto Ri = assemble_weak_residuals(tape, net, op, quad, hats, ResidualMode::IntegratedByParts);
  for (std::size_t i = 0; i < Rs.size(); ++i) EXPECT_NEAR(Rs[i].value(), Ri[i].value(), 1e-4);
}

TEST(Weak, LossInvariantUnderTestFunctionPermutation) {
  std::vector<double> r{0.3, -1.2, 2.5, 0.01, -0.7};
  Tape t;
  std::vector<Var> a, b;
  for (double v : r) a.push_back(Var::leaf(t, v));
  std::mt19937 g(1);
  std::shuffle(r.begin(), r.end(), g);
  for (double v : r) b.push_back(Var::leaf(t, v));
  EXPECT_DOUBLE_EQ(vpinn_loss(t, a).value(), vpinn_loss(t, b).value());
}

TEST(Weak, GradientOfTinyNetworkMatchesFiniteDifferences) {
  const auto spec = make_problem(ProblemKind::ConvectionDiffusion, 0.1);
  const auto quad = build_quadrature(50);
  const auto hats = tabulate(build_basis(4), quad);
  const auto p = init_params({1, 2, 1}, 9);
  std::vector<double> g;
  support::tape_loss(spec, quad, hats, p, ResidualMode::Strong, LossMode::Integral, &g);
  const auto fd = support::central_diff(
      [&](std::span<const double> th) {
        MlpParams q = p;
        q.values.assign(th.begin(), th.end());
        return support::tape_loss(spec, quad, hats, q, ResidualMode::Strong, LossMode::Integral);
      },
      p.values);
  EXPECT_LT(support::rel_err(g, fd), 1e-5);
}

// The batched evaluator and the tape agree on value and gradient in every
// loss/residual mode.
TEST(Weak, BatchedLossMatchesTape) {
  const auto quad = build_quadrature(200);
  const auto hats = tabulate(build_basis(9), quad);
  const std::vector<int> w{1, 6, 5, 1};
  const auto p = init_params(w, 12);
  struct Mode {
    ResidualMode r;
    LossMode l;
  };
  for (auto kind : {ProblemKind::ConvectionDiffusion, ProblemKind::ReactionDiffusion}) {
    const auto spec = make_problem(kind, 0.05);
    for (Mode m : {Mode{ResidualMode::Strong, LossMode::Integral}, Mode{ResidualMode::IntegratedByParts, LossMode::Integral},
                   Mode{ResidualMode::Strong, LossMode::Mse}}) {
      std::vector<double> g_tape;
      const double L_tape = support::tape_loss(spec, quad, hats, p, m.r, m.l, &g_tape);
      MlpTrialModel model(w, quad.points);
      WeakLoss<MlpTrialModel> loss(model, quad, hats, WeakOperator::steady(spec, quad), m.r, m.l);
      std::vector<double> g(p.values.size());
      const double L = loss(p.values, g);
      EXPECT_NEAR(L, L_tape, 1e-12 * std::max(1.0, L_tape));
      EXPECT_LT(support::rel_err(g, g_tape), 1e-10);
      EXPECT_DOUBLE_EQ(loss.value(p.values), L);
    }
  }
}

TEST(Weak, MseRequiresStrongResidual) {
  const auto quad = build_quadrature(20);
  const auto hats = tabulate(build_basis(3), quad);
  MlpTrialModel model({1, 2, 1}, quad.points);
  EXPECT_THROW(WeakLoss<MlpTrialModel>(model, quad, hats, WeakOperator::steady(make_problem(ProblemKind::ConvectionDiffusion, 0.1), quad),
                                       ResidualMode::IntegratedByParts, LossMode::Mse),
               std::invalid_argument);
  EXPECT_EQ(loss_mode_from_string(to_string(LossMode::Mse)), LossMode::Mse);
  EXPECT_EQ(residual_mode_from_string(to_string(ResidualMode::IntegratedByParts)), ResidualMode::IntegratedByParts);
  EXPECT_THROW(loss_mode_from_string("l1"), std::invalid_argument);
}

TEST(Weak, OperatorKindChecks) {
  const auto quad = build_quadrature(20);
  std::vector<double> prev(20, 0.0), short_prev(5, 0.0);
  EXPECT_THROW(WeakOperator::steady(make_problem(ProblemKind::ParabolicOneParam, 0.1), quad), std::invalid_argument);
  EXPECT_THROW(WeakOperator::backward_euler(make_problem(ProblemKind::ConvectionDiffusion, 0.1), quad, 0.1, 0.1, prev), std::invalid_argument);
  EXPECT_THROW(WeakOperator::backward_euler(make_problem(ProblemKind::ParabolicOneParam, 0.1), quad, 0.1, 0.1, short_prev), std::invalid_argument);
}
