#include "sdfeel/model_math.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "sdfeel/errors.hpp"
#include "test_util.hpp"

namespace sdfeel {
namespace {

using testing::feature_matrix;
using testing::logistic_task;
using testing::quadratic_task;
using testing::random_batch;
using testing::random_model;
using testing::to_eigen;

// Independent least-squares solution: (X^T X / n + reg I) w = X^T b / n.
Eigen::VectorXd normal_equations(const SampleBatch& b, double reg) {
  const Eigen::MatrixXd x = feature_matrix(b);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(b.labels.data(), b.size());
  const double n = static_cast<double>(b.size());
  Eigen::MatrixXd a = x.transpose() * x / n;
  a.diagonal().array() += reg;
  return a.ldlt().solve(x.transpose() * y / n);
}

TEST(ModelVector, ArithmeticAndNorms) {
  ModelVector a(std::vector<double>{1, 2, 3});
  ModelVector b(std::vector<double>{4, 5, 6});
  EXPECT_EQ(a + b, ModelVector(std::vector<double>{5, 7, 9}));
  EXPECT_EQ(b - a, ModelVector(std::vector<double>{3, 3, 3}));
  EXPECT_EQ(2.0 * a, ModelVector(std::vector<double>{2, 4, 6}));
  EXPECT_DOUBLE_EQ(dot(a, b), 32.0);
  EXPECT_DOUBLE_EQ(squared_norm(a), 14.0);
  EXPECT_DOUBLE_EQ(squared_distance(a, b), 27.0);
  axpy(0.5, b, a);
  EXPECT_EQ(a, ModelVector(std::vector<double>{3, 4.5, 6}));
  EXPECT_THROW(dot(a, ModelVector(2)), DimensionError);
}

TEST(ModelVector, FiniteCheck) {
  ModelVector v(3, 1.0);
  EXPECT_TRUE(v.all_finite());
  v[1] = std::nan("");
  EXPECT_FALSE(v.all_finite());
}

TEST(TaskSpec, ParameterCountAndValidation) {
  EXPECT_EQ(quadratic_task(7).parameter_count(), 7u);
  EXPECT_EQ(logistic_task(4, 3).parameter_count(), 15u);
  EXPECT_THROW(logistic_task(4, 1).validate(), ConfigError);
  EXPECT_THROW(quadratic_task(0).validate(), ConfigError);
  EXPECT_EQ(parse_task_kind("logistic"), TaskKind::kLogistic);
  EXPECT_THROW(parse_task_kind("resnet"), ConfigError);
}

TEST(QuadraticTask, GradientVanishesAtNormalEquationsOptimum) {
  std::mt19937_64 rng(1);
  for (double reg : {0.0, 0.1}) {
    const TaskSpec task = quadratic_task(5, reg);
    const SampleBatch data = random_batch(task, 200, rng);
    const Eigen::VectorXd w_star = normal_equations(data, reg);
    ModelVector w(std::vector<double>(w_star.data(), w_star.data() + w_star.size()));
    const ModelVector g = evaluate_gradient(task, w, data);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], 0.0, 1e-10);
  }
}

TEST(QuadraticTask, ClosedFormOptimumMatchesOracle) {
  std::mt19937_64 rng(2);
  const TaskSpec task = quadratic_task(6, 0.05);
  const SampleBatch data = random_batch(task, 150, rng);
  const Eigen::VectorXd expected = normal_equations(data, 0.05);
  const ModelVector ours = quadratic_optimum(task, data);
  for (std::size_t i = 0; i < ours.size(); ++i) EXPECT_NEAR(ours[i], expected(i), 1e-10);
}

TEST(QuadraticTask, IdentityFeaturesGiveNegativeLabels) {
  // One sample with x = 1: grad at 0 is x (x.0 - b) = -b.
  const TaskSpec task = quadratic_task(1);
  SampleBatch data{1, {1.0}, {2.5}, {0}};
  EXPECT_EQ(evaluate_gradient(task, ModelVector(1), data)[0], -2.5);

  // For an n x n identity the mean over rows divides by n.
  const TaskSpec task3 = quadratic_task(3);
  SampleBatch eye{3, {1, 0, 0, 0, 1, 0, 0, 0, 1}, {3.0, -6.0, 9.0}, {0, 0, 0}};
  const ModelVector g = evaluate_gradient(task3, ModelVector(3), eye);
  EXPECT_DOUBLE_EQ(g[0], -1.0);
  EXPECT_DOUBLE_EQ(g[1], 2.0);
  EXPECT_DOUBLE_EQ(g[2], -3.0);
}

TEST(QuadraticTask, GradientIsAffine) {
  std::mt19937_64 rng(3);
  const TaskSpec task = quadratic_task(4, 0.2);
  const SampleBatch data = random_batch(task, 50, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelVector w1 = random_model(4, rng), w2 = random_model(4, rng);
    const double a = std::uniform_real_distribution<double>(-1.0, 2.0)(rng);
    const ModelVector mix = a * w1 + (1.0 - a) * w2;
    const ModelVector lhs = evaluate_gradient(task, mix, data);
    const ModelVector rhs = a * evaluate_gradient(task, w1, data) + (1.0 - a) * evaluate_gradient(task, w2, data);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(lhs[i], rhs[i], 1e-9 * std::max(1.0, std::abs(rhs[i])));
  }
}

TEST(QuadraticTask, OptimumBeatsRandomModels) {
  std::mt19937_64 rng(4);
  const TaskSpec task = quadratic_task(5, 0.01);
  const SampleBatch data = random_batch(task, 100, rng);
  const double best = evaluate_loss(task, quadratic_optimum(task, data), data);
  for (int i = 0; i < 100; ++i) EXPECT_LE(best, evaluate_loss(task, random_model(5, rng), data));
}

TEST(Gradients, FiniteDifferencesAgree) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const TaskSpec q = quadratic_task(6, 0.1);
    const SampleBatch qd = random_batch(q, 40, rng);
    EXPECT_LT(finite_difference_check(q, random_model(6, rng), qd, 1e-5), 1e-6);

    const TaskSpec l = logistic_task(5, 4, 0.01);
    const SampleBatch ld = random_batch(l, 40, rng);
    EXPECT_LT(finite_difference_check(l, random_model(l.parameter_count(), rng), ld, 1e-5), 1e-4);
  }
}

TEST(Gradients, ConstantLossHasZeroDeviation) {
  const TaskSpec task = quadratic_task(3);
  SampleBatch zeros{3, std::vector<double>(12, 0.0), std::vector<double>(4, 0.0), std::vector<int>(4, 0)};
  std::mt19937_64 rng(6);
  EXPECT_EQ(finite_difference_check(task, random_model(3, rng), zeros, 1e-5), 0.0);
}

TEST(Gradients, RowSubsetMatchesSubsetBatch) {
  std::mt19937_64 rng(7);
  const TaskSpec task = logistic_task(3, 3, 0.0);
  const SampleBatch data = random_batch(task, 30, rng);
  const std::vector<std::size_t> rows{1, 4, 9, 22};
  const ModelVector w = random_model(task.parameter_count(), rng);
  ModelVector g1, g2;
  const double l1 = evaluate_loss_and_gradient(task, w, data, rows, &g1);
  const double l2 = evaluate_loss_and_gradient(task, w, subset(data, rows), &g2);
  EXPECT_DOUBLE_EQ(l1, l2);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_DOUBLE_EQ(g1[i], g2[i]);
}

TEST(Loss, DeterministicBitForBit) {
  std::mt19937_64 rng(8);
  const TaskSpec task = logistic_task(4, 3, 0.1);
  const SampleBatch data = random_batch(task, 60, rng);
  const ModelVector w = random_model(task.parameter_count(), rng);
  const double a = evaluate_loss(task, w, data);
  const double b = evaluate_loss(task, w, data);
  EXPECT_EQ(std::memcmp(&a, &b, sizeof(double)), 0);
}

TEST(Loss, LogisticAtZeroIsLogC) {
  std::mt19937_64 rng(9);
  const TaskSpec task = logistic_task(3, 5);
  const SampleBatch data = random_batch(task, 20, rng);
  EXPECT_NEAR(evaluate_loss(task, ModelVector(task.parameter_count()), data), std::log(5.0), 1e-14);
}

TEST(Loss, ShapeMismatchThrows) {
  std::mt19937_64 rng(10);
  const TaskSpec task = quadratic_task(3);
  const SampleBatch data = random_batch(task, 5, rng);
  EXPECT_THROW(evaluate_loss(task, ModelVector(4), data), DimensionError);
}

TEST(Smoothness, QuadraticIsLargestGramEigenvalue) {
  std::mt19937_64 rng(11);
  const TaskSpec task = quadratic_task(5, 0.3);
  const SampleBatch data = random_batch(task, 80, rng);
  const Eigen::MatrixXd x = feature_matrix(data);
  const Eigen::MatrixXd gram = x.transpose() * x / 80.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  EXPECT_NEAR(smoothness_constant(task, data), eig.eigenvalues().maxCoeff() + 0.3, 1e-10);
}

TEST(Smoothness, LogisticBoundMatchesOracleAndDominatesCurvature) {
  std::mt19937_64 rng(12);
  const TaskSpec task = logistic_task(3, 3, 0.0);
  const SampleBatch data = random_batch(task, 50, rng);
  Eigen::MatrixXd xt(50, 4);
  xt.leftCols(3) = feature_matrix(data);
  xt.col(3).setOnes();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(xt.transpose() * xt / 50.0);
  const double l = smoothness_constant(task, data);
  EXPECT_NEAR(l, 0.5 * eig.eigenvalues().maxCoeff(), 1e-10);

  // Gradient differences never exceed L times the model distance.
  for (int trial = 0; trial < 50; ++trial) {
    const ModelVector a = random_model(task.parameter_count(), rng), b = random_model(task.parameter_count(), rng);
    const double lhs = std::sqrt(squared_distance(evaluate_gradient(task, a, data), evaluate_gradient(task, b, data)));
    EXPECT_LE(lhs, l * std::sqrt(squared_distance(a, b)) * (1 + 1e-12));
  }
}

TEST(Accuracy, CountsArgmaxMatches) {
  const TaskSpec task = logistic_task(1, 2);
  // Weights (1, -1), biases 0: class 0 when x > 0.
  ModelVector w(std::vector<double>{1.0, -1.0, 0.0, 0.0});
  SampleBatch data{1, {1.0, -1.0, 2.0, -3.0}, {0, 1, 1, 1}, {0, 1, 1, 1}};
  EXPECT_DOUBLE_EQ(classification_accuracy(task, w, data), 0.75);
}

}  // namespace
}  // namespace sdfeel
