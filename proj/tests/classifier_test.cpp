#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "test_util.hpp"
#include "zbcae/lbfgs.hpp"
#include "zbcae/random.hpp"
#include "zbcae/svm.hpp"

using zbcae::LbfgsConfig;
using zbcae::LbfgsStop;
using zbcae::Tensor;
namespace svm = zbcae::svm;

namespace {

// Scalar evaluation of the objective straight from its definition.
double objective_oracle(const Tensor& w, const Tensor& b, const Tensor& x, const std::vector<std::size_t>& y,
                        double lambda) {
  const std::size_t classes = b.size(), dim = x.extent(1);
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t d = 0; d < dim; ++d) total += lambda * w.at(c, d) * w.at(c, d);
    for (std::size_t i = 0; i < y.size(); ++i) {
      double s = b[c];
      for (std::size_t d = 0; d < dim; ++d) s += w.at(c, d) * x.at(i, d);
      const double t = y[i] == c ? 1.0 : -1.0;
      const double m = std::max(0.0, 1.0 - t * s);
      total += m * m;
    }
  }
  return total;
}

struct Problem {
  Tensor w, b, x;
  std::vector<std::size_t> y;
};

Problem random_problem(std::uint64_t seed, std::size_t n = 15, std::size_t dim = 4, std::size_t classes = 3) {
  Problem p{testutil::random_tensor({classes, dim}, seed, -0.7, 0.7), testutil::random_tensor({classes}, seed + 1),
            testutil::random_tensor({n, dim}, seed + 2, -2.0, 2.0), {}};
  for (std::size_t i = 0; i < n; ++i) p.y.push_back((i * 7 + seed) % classes);
  return p;
}

// Gaussian blobs around the given centres, class-interleaved.
void blobs(std::size_t n, const std::vector<std::pair<double, double>>& centres, double sigma, std::uint64_t seed,
           Tensor& x, std::vector<std::size_t>& y) {
  zbcae::Rng rng(seed);
  x = Tensor({n, 2});
  y.clear();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % centres.size();
    x.at(i, 0) = centres[c].first + sigma * rng.normal();
    x.at(i, 1) = centres[c].second + sigma * rng.normal();
    y.push_back(c);
  }
}

}  // namespace

TEST(SquaredHingeTest, ZeroModelWithoutRegularizer) {
  const Problem p = random_problem(1, 10, 3, 4);
  const auto v = svm::squared_hinge_objective(Tensor({4, 3}), Tensor({4}), p.x, p.y, 0.0);
  EXPECT_EQ(v.value, 4.0 * 10.0);
}

TEST(SquaredHingeTest, SingleSampleHandEvaluation) {
  const Tensor x({1, 1}, {1.0});
  const std::vector<std::size_t> y{0};
  const auto v = svm::squared_hinge_objective(Tensor({2, 1}), Tensor({2}), x, y, 1.0);
  EXPECT_EQ(v.value, 2.0);
  EXPECT_EQ(v.grad_weights.at(0, 0), -2.0);
  EXPECT_EQ(v.grad_weights.at(1, 0), 2.0);
  EXPECT_EQ(v.grad_biases[0], -2.0);
  EXPECT_EQ(v.grad_biases[1], 2.0);
}

TEST(SquaredHingeTest, InactiveHingeGivesZero) {
  const Tensor x({2, 1}, {-1.0, 1.0});
  const std::vector<std::size_t> y{0, 1};
  const Tensor w({2, 1}, {-3.0, 3.0});
  const auto v = svm::squared_hinge_objective(w, Tensor({2}), x, y, 0.0);
  EXPECT_EQ(v.value, 0.0);
  for (double g : v.grad_weights.data()) EXPECT_EQ(g, 0.0);
  for (double g : v.grad_biases.data()) EXPECT_EQ(g, 0.0);
}

TEST(SquaredHingeTest, Errors) {
  const Problem p = random_problem(2);
  std::vector<std::size_t> bad = p.y;
  bad[3] = 3;
  EXPECT_THROW(svm::squared_hinge_objective(p.w, p.b, p.x, bad, 1.0), zbcae::ShapeError);
  EXPECT_THROW(svm::squared_hinge_objective(Tensor({3, 5}), p.b, p.x, p.y, 1.0), zbcae::ShapeError);
  EXPECT_THROW(svm::squared_hinge_objective(p.w, p.b, p.x, std::vector<std::size_t>{0, 1}, 1.0), zbcae::ShapeError);
}

TEST(SquaredHingeTest, ValueMatchesOracleAndGradientMatchesDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Problem p = random_problem(10 * seed);
    const double lambda = 0.5 + seed * 0.25;
    const auto v = svm::squared_hinge_objective(p.w, p.b, p.x, p.y, lambda);
    EXPECT_NEAR(v.value, objective_oracle(p.w, p.b, p.x, p.y, lambda), 1e-12 * v.value);
    auto f = [&] { return objective_oracle(p.w, p.b, p.x, p.y, lambda); };
    for (std::size_t i = 0; i < p.w.size(); ++i) {
      EXPECT_LT(oracle::rel_error(v.grad_weights[i], oracle::central_difference(f, p.w[i], 1e-6)), 1e-6);
    }
    for (std::size_t i = 0; i < p.b.size(); ++i) {
      EXPECT_LT(oracle::rel_error(v.grad_biases[i], oracle::central_difference(f, p.b[i], 1e-6)), 1e-6);
    }
  }
}

TEST(SquaredHingeTest, MidpointConvexity) {
  const Problem base = random_problem(77, 20, 5, 3);
  for (std::uint64_t pair = 0; pair < 100; ++pair) {
    const Tensor w1 = testutil::random_tensor({3, 5}, 1000 + pair, -2.0, 2.0);
    const Tensor b1 = testutil::random_tensor({3}, 2000 + pair, -2.0, 2.0);
    const Tensor w2 = testutil::random_tensor({3, 5}, 3000 + pair, -2.0, 2.0);
    const Tensor b2 = testutil::random_tensor({3}, 4000 + pair, -2.0, 2.0);
    Tensor wm(w1.shape()), bm(b1.shape());
    for (std::size_t i = 0; i < wm.size(); ++i) wm[i] = 0.5 * (w1[i] + w2[i]);
    for (std::size_t i = 0; i < bm.size(); ++i) bm[i] = 0.5 * (b1[i] + b2[i]);
    const double f1 = svm::squared_hinge_objective(w1, b1, base.x, base.y, 1.0).value;
    const double f2 = svm::squared_hinge_objective(w2, b2, base.x, base.y, 1.0).value;
    const double fm = svm::squared_hinge_objective(wm, bm, base.x, base.y, 1.0).value;
    EXPECT_LE(fm, 0.5 * f1 + 0.5 * f2 + 1e-9);
  }
}

TEST(LbfgsTest, IsotropicQuadratic) {
  const std::vector<double> c{3.0, -1.0};
  auto f = [&](std::span<const double> x, std::span<double> g) {
    double v = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      g[i] = x[i] - c[i];
      v += 0.5 * g[i] * g[i];
    }
    return v;
  };
  const auto r = zbcae::lbfgs_minimize(f, {0.0, 0.0}, LbfgsConfig{});
  EXPECT_LE(r.iterations, 5u);
  EXPECT_NEAR(r.x[0], 3.0, 1e-6);
  EXPECT_NEAR(r.x[1], -1.0, 1e-6);
  EXPECT_EQ(r.reason, LbfgsStop::gradient_tolerance);
}

TEST(LbfgsTest, StationaryStart) {
  auto f = [](std::span<const double> x, std::span<double> g) {
    g[0] = 2.0 * x[0];
    return x[0] * x[0];
  };
  const auto r = zbcae::lbfgs_minimize(f, {0.0}, LbfgsConfig{});
  EXPECT_EQ(r.iterations, 0u);
  EXPECT_EQ(r.x[0], 0.0);
  EXPECT_EQ(r.reason, LbfgsStop::gradient_tolerance);
}

TEST(LbfgsTest, Rosenbrock) {
  auto f = [](std::span<const double> x, std::span<double> g) {
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  const auto r = zbcae::lbfgs_minimize(f, {-1.2, 1.0}, LbfgsConfig{});
  EXPECT_LT(r.value, 1e-8);
  EXPECT_NEAR(r.x[0], 1.0, 1e-3);
  EXPECT_NEAR(r.x[1], 1.0, 1e-3);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1]);
}

TEST(LbfgsTest, StrictlyConvexQuadraticMatchesLinearSolve) {
  // f(x) = 1/2 x'Ax - b'x with A = M'M + n I; minimiser solves A x = b.
  const std::size_t n = 8;
  zbcae::Rng rng(2024);
  std::vector<std::vector<double>> m(n, std::vector<double>(n)), a(n, std::vector<double>(n, 0.0));
  for (auto& row : m)
    for (double& v : row) v = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) a[i][j] += m[k][i] * m[k][j];
      if (i == j) a[i][j] += 1.0;
    }
  std::vector<double> b(n);
  for (double& v : b) v = rng.uniform(-5.0, 5.0);
  auto f = [&](std::span<const double> x, std::span<double> g) {
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double ax = 0.0;
      for (std::size_t j = 0; j < n; ++j) ax += a[i][j] * x[j];
      g[i] = ax - b[i];
      v += 0.5 * x[i] * ax - b[i] * x[i];
    }
    return v;
  };
  LbfgsConfig cfg;
  cfg.grad_tol = 1e-10;
  cfg.rel_loss_tol = 1e-16;
  const auto r = zbcae::lbfgs_minimize(f, std::vector<double>(n, 0.0), cfg);
  const auto exact = oracle::solve(a, b);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(r.x[i], exact[i], 1e-6);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1]);
}

TEST(LbfgsTest, NonFiniteStartThrows) {
  auto f = [](std::span<const double>, std::span<double> g) {
    g[0] = 0.0;
    return std::numeric_limits<double>::quiet_NaN();
  };
  EXPECT_THROW(zbcae::lbfgs_minimize(f, {1.0}, LbfgsConfig{}), zbcae::NumericalError);
}

TEST(LbfgsTest, LineSearchFailureReturnsBestSoFar) {
  // The reported gradient points uphill, so no step satisfies Armijo.
  auto f = [](std::span<const double> x, std::span<double> g) {
    g[0] = -2.0 * x[0];
    return x[0] * x[0];
  };
  const auto r = zbcae::lbfgs_minimize(f, {1.0}, LbfgsConfig{});
  EXPECT_EQ(r.reason, LbfgsStop::line_search_failed);
  EXPECT_EQ(r.x[0], 1.0);
  EXPECT_EQ(r.value, 1.0);
}

TEST(LbfgsTest, MaxIterations) {
  auto f = [](std::span<const double> x, std::span<double> g) {
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  LbfgsConfig cfg;
  cfg.max_iters = 3;
  const auto r = zbcae::lbfgs_minimize(f, {-1.2, 1.0}, cfg);
  EXPECT_EQ(r.reason, LbfgsStop::max_iterations);
  EXPECT_EQ(r.iterations, 3u);
}

TEST(TrainSvmTest, SeparableBlobs) {
  Tensor x;
  std::vector<std::size_t> y;
  const std::vector<std::pair<double, double>> centres{{0, 0}, {10, 0}, {0, 10}};
  blobs(200, centres, 1.0, 5, x, y);
  // Margin check: every point is nearer its own centre than any other, so
  // the classes are separated by the Voronoi boundaries (linear).
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto dist = [&](std::size_t c) {
      return std::hypot(x.at(i, 0) - centres[c].first, x.at(i, 1) - centres[c].second);
    };
    for (std::size_t c = 0; c < 3; ++c) {
      if (c != y[i]) {
        ASSERT_LT(dist(y[i]), dist(c));
      }
    }
  }
  const auto model = svm::train_svm(x, y, 3, svm::SvmTrainConfig{});
  EXPECT_EQ(model.lambda, 1.0);
  const auto pred = svm::predict_all(model, x);
  EXPECT_GE(svm::top1_accuracy(pred, y), 0.99);
}

TEST(TrainSvmTest, OneDimensionalSeparation) {
  const Tensor x({2, 1}, {-1.0, 1.0});
  const std::vector<std::size_t> y{0, 1};
  const auto model = svm::train_svm(x, y, 2, svm::SvmTrainConfig{});
  EXPECT_EQ(svm::predict(model, std::vector<double>{-1.0}), 0u);
  EXPECT_EQ(svm::predict(model, std::vector<double>{1.0}), 1u);
  // Class-1 scorer: sign(w x + b) separates the two points.
  const double s_neg = model.weights[1] * -1.0 + model.biases[1];
  const double s_pos = model.weights[1] * 1.0 + model.biases[1];
  EXPECT_LT(s_neg, 0.0);
  EXPECT_GT(s_pos, 0.0);
}

TEST(TrainSvmTest, DeterministicAndValidated) {
  const Problem p = random_problem(3, 12, 3, 3);
  const auto a = svm::train_svm(p.x, p.y, 3, svm::SvmTrainConfig{});
  const auto b = svm::train_svm(p.x, p.y, 3, svm::SvmTrainConfig{});
  EXPECT_TRUE(zbcae::bitwise_equal(a.weights, b.weights));
  EXPECT_TRUE(zbcae::bitwise_equal(a.biases, b.biases));
  EXPECT_EQ(a.class_names, (std::vector<std::string>{"class_0", "class_1", "class_2"}));
  EXPECT_THROW(svm::train_svm(p.x, p.y, 1, svm::SvmTrainConfig{}), zbcae::ConfigError);
  EXPECT_THROW(svm::train_svm(Tensor({2, 3}), std::vector<std::size_t>{0, 1}, 3, svm::SvmTrainConfig{}),
               zbcae::ShapeError);
}

TEST(PredictTest, Examples) {
  svm::SvmModel m{Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2}), {"a", "b"}, 1.0};
  EXPECT_EQ(svm::predict(m, std::vector<double>{5, 1}), 0u);
  EXPECT_EQ(svm::predict(m, std::vector<double>{1, 5}), 1u);
  svm::SvmModel zero{Tensor({3, 2}), Tensor({3}), {"a", "b", "c"}, 1.0};
  EXPECT_EQ(svm::predict(zero, std::vector<double>{-4, 9}), 0u);
  EXPECT_THROW(svm::predict(m, std::vector<double>{1, 2, 3}), zbcae::ShapeError);
}

TEST(PredictTest, PositiveScalingPreservesPredictions) {
  svm::SvmModel m{testutil::random_tensor({4, 3}, 1), testutil::random_tensor({4}, 2), {"a", "b", "c", "d"}, 1.0};
  const Tensor x = testutil::random_tensor({50, 3}, 3, -3.0, 3.0);
  const auto base = svm::predict_all(m, x);
  for (double scale : {0.01, 2.0, 1e3}) {
    svm::SvmModel s = m;
    for (double& v : s.weights.data()) v *= scale;
    for (double& v : s.biases.data()) v *= scale;
    EXPECT_EQ(svm::predict_all(s, x), base);
  }
}

TEST(Top1Test, Examples) {
  const std::vector<std::size_t> labels{0, 1, 2, 1};
  EXPECT_EQ(svm::top1_accuracy(labels, labels), 1.0);
  EXPECT_EQ(svm::top1_accuracy(std::vector<std::size_t>{1, 2, 0, 0}, labels), 0.0);
  EXPECT_EQ(svm::top1_accuracy(std::vector<std::size_t>{0, 1, 2, 0}, labels), 0.75);
  EXPECT_THROW(svm::top1_accuracy(std::vector<std::size_t>{0}, labels), zbcae::ShapeError);
  EXPECT_THROW(svm::top1_accuracy(std::vector<std::size_t>{}, std::vector<std::size_t>{}), zbcae::ShapeError);
}
