#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "fastmix/model.hpp"
#include "support.hpp"

using namespace fastmix;

TEST(Model, SingleNodeGrid) {
  const auto m = make_grid(1, 1, 1.0, 2.0, Interaction::mixed, 7);
  EXPECT_EQ(m.size(), 1);
  EXPECT_EQ(m.num_edges(), 0);
  EXPECT_GE(m.field(0), -1.0);
  EXPECT_LE(m.field(0), 1.0);
}

TEST(Model, GridEdgeCount) {
  const auto m = make_grid(8, 8, 1.0, 1.0, Interaction::mixed, 1);
  EXPECT_EQ(m.size(), 64);
  EXPECT_EQ(m.num_edges(), 112);
  for (const auto& e : m.edges()) {
    const int dr = std::abs(e.i / 8 - e.j / 8), dc = std::abs(e.i % 8 - e.j % 8);
    EXPECT_EQ(dr + dc, 1);
  }
}

TEST(Model, ZeroEdgeStrength) {
  const auto m = make_grid(3, 3, 1.0, 0.0, Interaction::attractive, 3);
  EXPECT_EQ(m.beta().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Model, AttractiveWeightsAreNonnegative) {
  const auto m = make_grid(5, 5, 1.0, 2.0, Interaction::attractive, 9);
  for (int e = 0; e < m.num_edges(); ++e) {
    EXPECT_GE(m.coupling(e), 0.0);
    EXPECT_LE(m.coupling(e), 2.0);
  }
}

TEST(Model, RandomGraphExtremes) {
  EXPECT_EQ(make_random_graph(10, 0.0, 1.0, 1.0, Interaction::mixed, 1).num_edges(), 0);
  EXPECT_EQ(make_random_graph(10, 1.0, 1.0, 1.0, Interaction::mixed, 1).num_edges(), 45);
}

TEST(Model, RandomGraphMeanEdgeCount) {
  double sum = 0.0;
  const int seeds = 1000;
  for (int s = 0; s < seeds; ++s)
    sum += make_random_graph(10, 0.3, 1.0, 1.0, Interaction::mixed, static_cast<std::uint64_t>(s)).num_edges();
  const double se = std::sqrt(45 * 0.3 * 0.7 / seeds);
  EXPECT_NEAR(sum / seeds, 13.5, 3.0 * se);
}

TEST(Model, GeneratorsAreReproducible) {
  const auto a = make_grid(4, 5, 1.0, 2.0, Interaction::mixed, 42);
  const auto b = make_grid(4, 5, 1.0, 2.0, Interaction::mixed, 42);
  EXPECT_EQ(a.params(), b.params());
  const auto c = make_random_graph(10, 0.5, 1.0, 2.0, Interaction::mixed, 42);
  const auto d = make_random_graph(10, 0.5, 1.0, 2.0, Interaction::mixed, 42);
  EXPECT_EQ(c.edges(), d.edges());
  EXPECT_EQ(c.params(), d.params());
  EXPECT_NE(a.params(), make_grid(4, 5, 1.0, 2.0, Interaction::mixed, 43).params());
}

TEST(Model, InvariantsHold) {
  const auto m = make_random_graph(12, 0.4, 1.0, 3.0, Interaction::mixed, 5);
  EXPECT_EQ(m.beta(), m.beta().transpose());
  for (int i = 0; i < m.size(); ++i) EXPECT_EQ(m.beta()(i, i), 0.0);
  const auto z = m.mask();
  for (int i = 0; i < m.size(); ++i) {
    EXPECT_EQ(z.z(i, i), 1.0);
    for (int j = 0; j < m.size(); ++j)
      if (i != j) EXPECT_EQ(z.z(i, j) == 0.0, m.has_edge(i, j));
  }
  MatrixXd bad = m.beta();
  int a = -1, b = -1;
  for (int i = 0; i < m.size() && a < 0; ++i)
    for (int j = i + 1; j < m.size(); ++j)
      if (!m.has_edge(i, j)) {
        a = i;
        b = j;
        break;
      }
  ASSERT_GE(a, 0);
  bad(a, b) = bad(b, a) = 0.3;
  IsingModel copy = m;
  EXPECT_THROW(copy.set_beta(bad), std::invalid_argument);
}

TEST(Model, EdgeOrderIsLexicographic) {
  const auto m = make_random_graph(9, 0.6, 1.0, 1.0, Interaction::mixed, 11);
  for (int e = 0; e + 1 < m.num_edges(); ++e) {
    EXPECT_LT(m.edge(e).i, m.edge(e).j);
    EXPECT_TRUE(m.edge(e) < m.edge(e + 1));
  }
}

TEST(Model, DependencyBound) {
  IsingModel zero(4, {{0, 1}, {1, 2}});
  EXPECT_EQ(dependency_bound(zero).cwiseAbs().maxCoeff(), 0.0);

  IsingModel one(2, {{0, 1}});
  one.set_coupling(0, 1.0);
  EXPECT_NEAR(dependency_bound(one)(0, 1), 0.761594, 1e-6);
  EXPECT_NEAR(dependency_bound(one)(1, 0), std::tanh(1.0), 1e-15);

  auto grid = make_grid(8, 8, 0.0, 0.0, Interaction::mixed, 0);
  for (int e = 0; e < grid.num_edges(); ++e) grid.set_coupling(e, -0.3);
  const MatrixXd adj = grid.beta().cwiseAbs() / 0.3;
  EXPECT_LE((dependency_bound(grid) - std::tanh(0.3) * adj).cwiseAbs().maxCoeff(), 1e-15);

  const auto m = make_random_graph(10, 0.5, 1.0, 3.0, Interaction::mixed, 2);
  const MatrixXd r = dependency_bound(m);
  EXPECT_TRUE(((r - m.beta().cwiseAbs()).array() <= 0.0).all());
  EXPECT_EQ(r, r.transpose());
  EXPECT_EQ(r.diagonal().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Model, SpectralNormValues) {
  EXPECT_NEAR(spectral_norm(MatrixXd::Identity(5, 5)), 1.0, 1e-14);
  EXPECT_EQ(spectral_norm(MatrixXd::Zero(4, 4)), 0.0);
  auto grid = make_grid(8, 8, 0.0, 0.0, Interaction::mixed, 0);
  for (int e = 0; e < grid.num_edges(); ++e) grid.set_coupling(e, 1.0);
  EXPECT_NEAR(spectral_norm(grid.beta()), 4.0 * std::cos(std::numbers::pi / 9.0), 1e-12);
}

TEST(Model, SpectralNormMatchesPowerIteration) {
  Rng rng(123);
  for (int t = 0; t < 20; ++t) {
    const MatrixXd s = oracle::random_symmetric(10, rng);
    const MatrixXd g = oracle::random_matrix(10, rng);
    EXPECT_NEAR(spectral_norm(s) / oracle::power_iteration_norm(s), 1.0, 1e-8);
    EXPECT_NEAR(spectral_norm(g) / oracle::power_iteration_norm(g), 1.0, 1e-8);
  }
}

TEST(Model, MixingTimeBound) {
  EXPECT_NEAR(mixing_time_bound(64, 0.5, 0.01), 128.0 * std::log(6400.0), 1e-9);
  EXPECT_TRUE(std::isinf(mixing_time_bound(64, 1.2, 0.01)));
  IsingModel free(10, {{0, 1}});
  EXPECT_NEAR(mixing_time_bound(free, 0.1), 10.0 * std::log(100.0), 1e-12);
  EXPECT_NEAR(mixing_time_bound(free, 0.1), 46.05, 0.01);

  auto grid = make_grid(8, 8, 0.0, 0.0, Interaction::mixed, 0);
  const double beta = std::atanh(0.5 / (4.0 * std::cos(std::numbers::pi / 9.0)));
  for (int e = 0; e < grid.num_edges(); ++e) grid.set_coupling(e, beta);
  EXPECT_NEAR(mixing_time_bound(grid, 0.01), 128.0 * std::log(6400.0), 1e-8);
  for (int e = 0; e < grid.num_edges(); ++e) grid.set_coupling(e, 2.0);
  EXPECT_TRUE(std::isinf(mixing_time_bound(grid, 0.01)));
  EXPECT_THROW(mixing_time_bound(grid, 1.0), std::invalid_argument);
}

TEST(Model, FeatureDotProducts) {
  const auto m = make_random_graph(7, 0.5, 1.0, 2.0, Interaction::mixed, 4);
  const SpinConfig ones(7, 1);
  EXPECT_NEAR(dot(param_vector(m), features(m, ones)), m.beta().sum() / 2.0 + m.alpha().sum(), 1e-12);

  IsingModel single(1, {});
  single.set_field(0, 0.7);
  EXPECT_DOUBLE_EQ(dot(param_vector(single), features(single, {-1})), -0.7);

  IsingModel pair(2, {{0, 1}});
  pair.set_coupling(0, 0.5);
  EXPECT_DOUBLE_EQ(dot(param_vector(pair), features(pair, {1, -1})), -0.5);
  EXPECT_THROW(dot(VectorXd::Zero(2), VectorXd::Zero(3)), std::invalid_argument);
}

TEST(Model, FeatureLayout) {
  const auto m = make_grid(2, 3, 1.0, 1.0, Interaction::mixed, 1);
  Rng rng(5);
  SpinConfig x(6);
  for (auto& v : x) v = rng.spin();
  const VectorXd f = features(m, x);
  ASSERT_EQ(f.size(), m.num_edges() + 6);
  for (int e = 0; e < m.num_edges(); ++e) EXPECT_EQ(f(e), x[m.edge(e).i] * x[m.edge(e).j]);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(f(m.num_edges() + i), x[i]);
  EXPECT_TRUE((f.array().abs() == 1.0).all());
}

TEST(Model, SpinFlipSymmetry) {
  Rng rng(77);
  for (int t = 0; t < 50; ++t) {
    auto m = make_random_graph(8, 0.5, 1.0, 2.0, Interaction::mixed, static_cast<std::uint64_t>(t));
    SpinConfig x(8), y(8);
    for (int i = 0; i < 8; ++i) {
      x[i] = rng.spin();
      y[i] = -x[i];
    }
    const double before = energy(m, x);
    m.set_alpha(-m.alpha());
    EXPECT_NEAR(energy(m, y), before, 1e-12);
  }
}

TEST(Model, RejectsBadConfigs) {
  const auto m = make_grid(2, 2, 1.0, 1.0, Interaction::mixed, 1);
  EXPECT_THROW(check_config(m, {1, 0, 1, 1}), std::invalid_argument);
  EXPECT_THROW(check_config(m, {1, 1, 1}), std::invalid_argument);
  EXPECT_NO_THROW(check_config(m, {1, -1, 1, -1}));
}

TEST(Model, TextRoundTrip) {
  const auto m = make_random_graph(9, 0.4, 1.0, 3.0, Interaction::mixed, 8);
  std::stringstream ss;
  write_model(ss, m);
  const auto back = read_model(ss);
  EXPECT_EQ(back.edges(), m.edges());
  EXPECT_EQ(back.params(), m.params());
}

TEST(Model, TextFormatErrors) {
  std::istringstream missing("field 0 1.0\n");
  EXPECT_THROW(read_model(missing), std::runtime_error);
  std::istringstream bad_index("ising 2\nedge 0 5 1.0\n");
  EXPECT_THROW(read_model(bad_index), std::runtime_error);
  std::istringstream bad_number("ising 2\nfield 0 abc\n");
  EXPECT_THROW(read_model(bad_number), std::runtime_error);
  std::istringstream ok("# comment\nising 2\nfield 1 0.25\nedge 0 1 -0.5\n");
  const auto m = read_model(ok);
  EXPECT_EQ(m.num_edges(), 1);
  EXPECT_EQ(m.coupling(0), -0.5);
  EXPECT_EQ(m.field(1), 0.25);
}

TEST(Model, DetectGrid) {
  const auto g = detect_grid(make_grid(3, 5, 1.0, 1.0, Interaction::mixed, 1));
  ASSERT_TRUE(g.has_value());
  EXPECT_EQ(g->rows * g->cols, 15);
  EXPECT_FALSE(detect_grid(make_random_graph(10, 1.0, 1.0, 1.0, Interaction::mixed, 1)).has_value());
}
