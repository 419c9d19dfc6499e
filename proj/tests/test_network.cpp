#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "support.hpp"

using namespace vpinn;

TEST(Network, DefaultArchitecture) {
  EXPECT_EQ(default_widths(), (std::vector<int>{1, 20, 20, 20, 20, 1}));
  EXPECT_EQ(parameter_count(default_widths()), 40u + 3 * 420u + 21u);
  EXPECT_EQ(parameter_count(default_widths()), 1321u);
  EXPECT_EQ(init_params(default_widths(), 1).values.size(), 1321u);
}

TEST(Network, ValidatesWidths) {
  EXPECT_THROW(validate_widths(std::vector<int>{1}), std::invalid_argument);
  EXPECT_THROW(validate_widths(std::vector<int>{2, 3, 1}), std::invalid_argument);
  EXPECT_THROW(validate_widths(std::vector<int>{1, 0, 1}), std::invalid_argument);
}

TEST(Network, InitIsSeededAndBounded) {
  const auto a = init_params(default_widths(), 5), b = init_params(default_widths(), 5), c = init_params(default_widths(), 6);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (std::size_t k = 0; k < a.layer_count(); ++k) {
    const double bound = std::sqrt(6.0 / (a.fan_in(k) + a.fan_out(k)));
    for (int r = 0; r < a.fan_out(k); ++r) {
      EXPECT_EQ(a.bias(k, r), 0.0);
      for (int col = 0; col < a.fan_in(k); ++col) EXPECT_LE(std::abs(a.weight(k, r, col)), bound);
    }
  }
}

TEST(Network, HardConstraintVanishesAtBoundary) {
  const auto p = init_params(default_widths(), 3);
  EXPECT_EQ(trial(p, seed_jet(0.0)).c0, 0.0);
  EXPECT_EQ(trial(p, seed_jet(1.0)).c0, 0.0);
}

// A 1-1-1 network written out by hand: NN(x) = w2 tanh(w1 x + b1) + b2.
TEST(Network, HandComputedTinyNetwork) {
  MlpParams p = zero_params({1, 1, 1});
  p.values = {0.8, -0.2, 1.5, 0.3};
  const double x = 0.4, z = 0.8 * x - 0.2, h = std::tanh(z), s = 1 - h * h;
  const Jet2<double> nn = mlp_forward(p, seed_jet(x));
  EXPECT_NEAR(nn.c0, 1.5 * h + 0.3, 1e-15);
  EXPECT_NEAR(nn.c1, 1.5 * s * 0.8, 1e-15);
  EXPECT_NEAR(nn.c2, 1.5 * (-2 * h * s) * 0.64, 1e-15);
}

TEST(Network, BatchedForwardMatchesScalar) {
  const auto p = init_params(default_widths(), 11);
  const std::vector<double> xs{0.0, 0.013, 0.5, 0.77, 1.0};
  MlpTrialModel m(default_widths(), xs);
  const JetBatch& b = m.forward(p.values);
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const auto t = trial(p, seed_jet(xs[j]));
    EXPECT_NEAR(b.v[j], t.c0, 1e-13);
    EXPECT_NEAR(b.d1[j], t.c1, 1e-12);
    EXPECT_NEAR(b.d2[j], t.c2, 1e-11);
  }
}

TEST(Network, BatchedGradientMatchesTape) {
  const std::vector<int> w{1, 4, 3, 1};
  const auto p = init_params(w, 2);
  const std::vector<double> xs{0.1, 0.35, 0.6, 0.95};
  const std::vector<double> av{0.3, -1.0, 0.2, 0.7}, a1{1.1, 0.4, -0.5, 0.0}, a2{-0.2, 0.9, 0.3, 1.4};

  Tape tape;
  TapeMlp net = bind_params(tape, p);
  std::vector<std::pair<NodeRef, double>> seeds;
  Var acc = Var::leaf(tape, 0.0);
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const auto t = trial(net, seed_jet(tape, xs[j]));
    acc = acc + av[j] * t.c0 + a1[j] * t.c1 + a2[j] * t.c2;
  }
  const auto g_tape = tape.backward(acc.ref(), net.refs());

  MlpTrialModel m(w, xs);
  m.forward(p.values);
  JetBatch adj(4);
  for (int j = 0; j < 4; ++j) {
    adj.v[j] = av[j];
    adj.d1[j] = a1[j];
    adj.d2[j] = a2[j];
  }
  std::vector<double> g(p.values.size());
  m.backward(adj, g);
  EXPECT_LT(support::rel_err(g, g_tape), 1e-12);
}

TEST(Network, BinaryAndJsonSnapshotsRoundTrip) {
  const auto p = init_params(default_widths(), 8);
  const auto path = std::filesystem::temp_directory_path() / "vpinn_params_test.bin";
  save_params_binary(path.string(), p);
  EXPECT_EQ(std::filesystem::file_size(path), 1321u * 8);
  EXPECT_EQ(load_params_binary(path.string(), default_widths()), p);
  EXPECT_THROW(load_params_binary(path.string(), {1, 20, 1}), std::runtime_error);
  std::filesystem::remove(path);
  EXPECT_EQ(params_from_json(params_to_json(p)), p);
}

TEST(Network, ParameterCountMismatchThrows) {
  const std::vector<double> xs{0.5};
  MlpTrialModel m(default_widths(), xs);
  std::vector<double> wrong(10);
  EXPECT_THROW(m.forward(wrong), std::invalid_argument);
}
