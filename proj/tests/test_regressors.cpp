#include "railmarkov/regressors.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "railmarkov/rng.hpp"

using namespace railmarkov;

namespace {

Matrix random_matrix(Rng& rng, std::size_t n, std::size_t d) {
  Matrix x(n, d);
  for (double& v : x.a) v = rng.uniform(-10.0, 10.0);
  return x;
}

std::vector<double> random_vector(Rng& rng, std::size_t n) {
  std::vector<double> y(n);
  for (double& v : y) v = rng.uniform(-50.0, 50.0);
  return y;
}

double l2(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST(Tree, ConstantTargetIsSingleLeaf) {
  Matrix x = Matrix::from_rows({{1.0}, {2.0}, {3.0}});
  std::vector<double> y = {5, 5, 5};
  ForestParams p;
  p.features_per_split = 1.0;
  Rng rng(0);
  RegressionTree tree = fit_tree(x, y, p, rng);
  ASSERT_EQ(tree.nodes.size(), 1u);
  EXPECT_EQ(tree.predict({7.0}), 5.0);
}

TEST(Tree, SeparablePairSplitsBetweenValues) {
  Matrix x = Matrix::from_rows({{0.0}, {1.0}});
  std::vector<double> y = {0, 10};
  ForestParams p;
  p.features_per_split = 1.0;
  Rng rng(0);
  RegressionTree tree = fit_tree(x, y, p, rng);
  ASSERT_EQ(tree.nodes.size(), 3u);
  EXPECT_GT(tree.nodes[0].threshold, 0.0);
  EXPECT_LT(tree.nodes[0].threshold, 1.0);
  EXPECT_EQ(tree.predict({0.0}), 0.0);
  EXPECT_EQ(tree.predict({1.0}), 10.0);
  EXPECT_EQ(tree.predict({-5.0}), 0.0);
  EXPECT_EQ(tree.predict({5.0}), 10.0);
}

TEST(Tree, MemorizesDistinctRows) {
  Rng rng(123);
  for (int round = 0; round < 10; ++round) {
    Matrix x = random_matrix(rng, 50, 4);
    std::vector<double> y = random_vector(rng, 50);
    ForestParams p;
    p.features_per_split = 1.0;  // full features, no bootstrap, unlimited depth
    Rng fit_rng(0);
    RegressionTree tree = fit_tree(x, y, p, fit_rng);
    for (std::size_t r = 0; r < x.rows; ++r) {
      std::vector<double> row(x.row(r), x.row(r) + x.cols);
      ASSERT_EQ(tree.predict(row), y[r]);
    }
  }
}

TEST(Tree, DimensionMismatchErrors) {
  Matrix x = Matrix::from_rows({{1.0}, {2.0}});
  std::vector<double> y = {1, 2, 3};
  ForestParams p;
  Rng rng(0);
  EXPECT_THROW(fit_tree(x, y, p, rng), Error);
}

TEST(Forest, SingleTreeNoBootstrapEqualsFitTree) {
  Rng rng(7);
  Matrix x = random_matrix(rng, 30, 3);
  std::vector<double> y = random_vector(rng, 30);

  ForestParams p;
  p.n_trees = 1;
  p.bootstrap = false;
  p.seed = 99;
  Forest forest = fit_forest(x, y, p);

  Rng tree_rng(derive_seed(99, 0));  // the forest derives per-tree streams this way
  RegressionTree tree = fit_tree(x, y, p, tree_rng);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> q = random_vector(rng, 3);
    EXPECT_EQ(predict_forest(forest, q), tree.predict(q));
  }
}

TEST(Forest, ConstantTargetPredictsConstant) {
  Rng rng(11);
  Matrix x = random_matrix(rng, 20, 2);
  std::vector<double> y(20, 42.0);
  Forest forest = fit_forest(x, y, {});
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(predict_forest(forest, random_vector(rng, 2)), 42.0);
  }
}

TEST(Forest, DeterministicGivenSeed) {
  Rng rng(5);
  Matrix x = random_matrix(rng, 40, 5);
  std::vector<double> y = random_vector(rng, 40);
  ForestParams p;
  p.n_trees = 25;
  p.seed = 1234;
  Forest a = fit_forest(x, y, p);
  Forest b = fit_forest(x, y, p);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> q = random_vector(rng, 5);
    double pa = predict_forest(a, q);
    EXPECT_EQ(pa, predict_forest(b, q));  // bitwise
  }
}

TEST(Forest, PredictionBoundedByTrainingTargets) {
  Rng rng(21);
  for (int round = 0; round < 5; ++round) {
    Matrix x = random_matrix(rng, 35, 4);
    std::vector<double> y = random_vector(rng, 35);
    double lo = *std::min_element(y.begin(), y.end());
    double hi = *std::max_element(y.begin(), y.end());
    ForestParams p;
    p.n_trees = 15;
    p.seed = std::uint64_t(round);
    Forest forest = fit_forest(x, y, p);
    for (int i = 0; i < 40; ++i) {
      std::vector<double> q = random_vector(rng, 4);
      for (double& v : q) v *= 10;  // well outside the training box
      double pred = predict_forest(forest, q);
      EXPECT_GE(pred, lo);
      EXPECT_LE(pred, hi);
    }
  }
}

TEST(Forest, RowPermutationInvariantWithoutBootstrap) {
  Rng rng(3);
  Matrix x = random_matrix(rng, 25, 3);
  std::vector<double> y = random_vector(rng, 25);

  std::vector<std::size_t> perm(25);
  std::iota(perm.begin(), perm.end(), 0);
  Rng shuffler(77);
  shuffler.shuffle(perm);
  Matrix xp(25, 3);
  std::vector<double> yp(25);
  for (std::size_t i = 0; i < 25; ++i) {
    for (std::size_t c = 0; c < 3; ++c) xp.at(i, c) = x.at(perm[i], c);
    yp[i] = y[perm[i]];
  }

  ForestParams p;
  p.n_trees = 8;
  p.bootstrap = false;
  p.seed = 10;
  Forest a = fit_forest(x, y, p);
  Forest b = fit_forest(xp, yp, p);
  for (int i = 0; i < 30; ++i) {
    std::vector<double> q = random_vector(rng, 3);
    EXPECT_EQ(predict_forest(a, q), predict_forest(b, q));
  }

  // ridge is permutation invariant as well (canonical-order accumulation)
  RidgeModel ra = fit_ridge(x, y, {});
  RidgeModel rb = fit_ridge(xp, yp, {});
  ASSERT_EQ(ra.weights.size(), rb.weights.size());
  for (std::size_t i = 0; i < ra.weights.size(); ++i) {
    EXPECT_EQ(ra.weights[i], rb.weights[i]);
  }
  EXPECT_EQ(ra.intercept, rb.intercept);
}

TEST(Forest, RejectsBadInput) {
  Matrix empty;
  EXPECT_THROW(fit_forest(empty, {}, {}), Error);
  Matrix x = Matrix::from_rows({{1.0}});
  ForestParams p;
  p.n_trees = 0;
  EXPECT_THROW(fit_forest(x, {1.0}, p), Error);
}

TEST(Ridge, IdentityInterpolatesWithoutRegularization) {
  Matrix x = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
  std::vector<double> y = {3, 7};
  RidgeOptions opt;
  opt.lambda = 0.0;
  opt.standardize = false;
  opt.intercept = false;
  RidgeModel m = fit_ridge(x, y, opt);
  ASSERT_EQ(m.weights.size(), 2u);
  EXPECT_NEAR(m.weights[0], 3.0, 1e-12);
  EXPECT_NEAR(m.weights[1], 7.0, 1e-12);
  EXPECT_NEAR(predict_ridge(m, {1.0, 0.0}), 3.0, 1e-12);
}

TEST(Ridge, HandSolvedShrinkage) {
  // X = [[1],[1]], y = (2,4), lambda = 1: w = X'y / (X'X + 1) = 6 / 3 = 2
  Matrix x = Matrix::from_rows({{1.0}, {1.0}});
  std::vector<double> y = {2, 4};
  RidgeOptions opt;
  opt.lambda = 1.0;
  opt.standardize = false;
  opt.intercept = false;
  RidgeModel m = fit_ridge(x, y, opt);
  EXPECT_NEAR(m.weights[0], 2.0, 1e-12);
}

TEST(Ridge, ConstantTargetGivesZeroWeights) {
  Rng rng(17);
  Matrix x = random_matrix(rng, 12, 3);
  std::vector<double> y(12, 9.5);
  for (double lambda : {0.0, 0.5, 10.0}) {
    RidgeOptions opt;
    opt.lambda = lambda;
    RidgeModel m = fit_ridge(x, y, opt);
    for (double w : m.weights) EXPECT_NEAR(w, 0.0, 1e-9);
    EXPECT_NEAR(m.intercept, 9.5, 1e-12);
    EXPECT_NEAR(predict_ridge(m, random_vector(rng, 3)), 9.5, 1e-7);
  }
}

TEST(Ridge, NormalEquationResidualWithinTolerance) {
  Rng rng(29);
  for (int round = 0; round < 25; ++round) {
    std::size_t n = 5 + rng.below(40);
    std::size_t d = 1 + rng.below(8);
    Matrix x = random_matrix(rng, n, d);
    std::vector<double> y = random_vector(rng, n);
    RidgeOptions opt;
    opt.lambda = rng.uniform(0.0, 5.0);
    RidgeModel m = fit_ridge(x, y, opt);
    RidgeResidual res = ridge_normal_residual(m, x, y);
    EXPECT_LE(res.residual_inf, 1e-8 * (1.0 + res.rhs_inf));
  }
}

TEST(Ridge, LambdaMonotonicallyShrinksWeights) {
  Rng rng(41);
  for (int round = 0; round < 20; ++round) {
    std::size_t n = 8 + rng.below(30);
    std::size_t d = 1 + rng.below(6);
    Matrix x = random_matrix(rng, n, d);
    std::vector<double> y = random_vector(rng, n);
    double l1 = rng.uniform(0.0, 2.0);
    double l2v = l1 + rng.uniform(0.1, 5.0);
    RidgeOptions o1, o2;
    o1.lambda = l1;
    o2.lambda = l2v;
    double n1 = l2(fit_ridge(x, y, o1).weights);
    double n2 = l2(fit_ridge(x, y, o2).weights);
    EXPECT_LE(n2, n1 + 1e-9);
  }
}

TEST(Ridge, MatchesLeastSquaresOracleAtLambdaZero) {
  Rng rng(53);
  for (int round = 0; round < 30; ++round) {
    std::size_t n = 10 + rng.below(40);
    std::size_t d = 1 + rng.below(6);
    std::vector<std::vector<double>> rows(n, std::vector<double>(d));
    std::vector<double> y(n);
    for (auto& r : rows) {
      for (double& v : r) v = rng.uniform(-5.0, 5.0);
    }
    for (double& v : y) v = rng.uniform(-20.0, 20.0);

    Matrix x = Matrix::from_rows(rows);
    RidgeOptions opt;
    opt.lambda = 0.0;
    opt.standardize = false;
    opt.intercept = false;
    RidgeModel m = fit_ridge(x, y, opt);
    std::vector<double> w = oracle::solve_normal_equations(rows, y, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      EXPECT_NEAR(m.weights[i], w[i], 1e-6 * (1.0 + std::abs(w[i])));
    }
  }
}

TEST(Ridge, SingularSystemFallsBackToMinimumNorm) {
  // duplicated column makes X'X singular at lambda = 0
  Matrix x = Matrix::from_rows({{1.0, 1.0}, {2.0, 2.0}, {3.0, 3.0}});
  std::vector<double> y = {2, 4, 6};
  RidgeOptions opt;
  opt.lambda = 0.0;
  opt.standardize = false;
  opt.intercept = false;
  RidgeModel m = fit_ridge(x, y, opt);
  // fitted values must still reproduce y; min-norm splits weight evenly
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_NEAR(predict_ridge(m, {double(r + 1), double(r + 1)}), y[r], 1e-9);
  }
  EXPECT_NEAR(m.weights[0], m.weights[1], 1e-9);
}

TEST(Ridge, RejectsNonFiniteInput) {
  Matrix x = Matrix::from_rows({{1.0}, {std::nan("")}});
  EXPECT_THROW(fit_ridge(x, {1.0, 2.0}, {}), Error);
  Matrix ok = Matrix::from_rows({{1.0}, {2.0}});
  EXPECT_THROW(fit_ridge(ok, {1.0, std::numeric_limits<double>::infinity()}, {}), Error);
}

TEST(Serialization, ForestAndRidgeRoundTrip) {
  Rng rng(61);
  Matrix x = random_matrix(rng, 30, 4);
  std::vector<double> y = random_vector(rng, 30);
  ForestParams p;
  p.n_trees = 10;
  p.seed = 3;
  Forest forest = fit_forest(x, y, p);
  Forest loaded = forest_from_json(forest_to_json(forest));

  RidgeModel ridge = fit_ridge(x, y, {});
  RidgeModel ridge_loaded = RidgeModel::from_json(ridge.to_json());

  for (int i = 0; i < 25; ++i) {
    std::vector<double> q = random_vector(rng, 4);
    EXPECT_EQ(predict_forest(forest, q), predict_forest(loaded, q));
    EXPECT_EQ(predict_ridge(ridge, q), predict_ridge(ridge_loaded, q));
  }
}
