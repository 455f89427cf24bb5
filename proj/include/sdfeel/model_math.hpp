#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sdfeel/linalg.hpp"

namespace sdfeel {

// Dense parameter vector. Every binary operation requires equal lengths and
// throws DimensionError otherwise.
class ModelVector {
 public:
  ModelVector() = default;
  explicit ModelVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  explicit ModelVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& data() const { return values_; }

  bool all_finite() const;

  ModelVector& operator+=(const ModelVector& other);
  ModelVector& operator-=(const ModelVector& other);
  ModelVector& operator*=(double s);

  // Bitwise element equality.
  bool operator==(const ModelVector&) const = default;

 private:
  std::vector<double> values_;
};

ModelVector operator+(ModelVector a, const ModelVector& b);
ModelVector operator-(ModelVector a, const ModelVector& b);
ModelVector operator*(double s, ModelVector v);

void require_same_size(const ModelVector& a, const ModelVector& b, std::string_view context);

// y += a * x
void axpy(double a, const ModelVector& x, ModelVector& y);
double dot(const ModelVector& a, const ModelVector& b);
double squared_norm(const ModelVector& v);
double squared_distance(const ModelVector& a, const ModelVector& b);

// Features are row-major (size() x feature_dim). `labels` carries the
// regression target; `classes` carries the class index used by the logistic
// loss and by stratified partitioning.
struct SampleBatch {
  std::size_t feature_dim = 0;
  std::vector<double> features;
  std::vector<double> labels;
  std::vector<int> classes;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * feature_dim, feature_dim}; }
  void validate() const;
};

SampleBatch subset(const SampleBatch& data, std::span<const std::size_t> rows);

enum class TaskKind { kQuadratic, kLogistic };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

// Quadratic: F(w) = (1/2n) sum_j (x_j . w - b_j)^2 + (reg/2) |w|^2, M = feature_dim.
// Logistic: softmax cross-entropy with class weights (num_classes x feature_dim,
// row-major) followed by num_classes biases, plus (reg/2) |w|^2.
struct TaskSpec {
  TaskKind kind = TaskKind::kQuadratic;
  std::size_t feature_dim = 1;
  std::size_t num_classes = 2;
  double regularization = 0.0;

  std::size_t parameter_count() const;
  void validate() const;
};

double evaluate_loss(const TaskSpec& task, const ModelVector& model, const SampleBatch& data);
ModelVector evaluate_gradient(const TaskSpec& task, const ModelVector& model, const SampleBatch& data);

// Mean loss and gradient over the given rows. `gradient` may be null.
double evaluate_loss_and_gradient(const TaskSpec& task, const ModelVector& model, const SampleBatch& data,
                                  std::span<const std::size_t> rows, ModelVector* gradient);
double evaluate_loss_and_gradient(const TaskSpec& task, const ModelVector& model, const SampleBatch& data,
                                  ModelVector* gradient);

// Max over coordinates of |analytic - central_difference| / max(1, |analytic|, |central_difference|).
double finite_difference_check(const TaskSpec& task, const ModelVector& model, const SampleBatch& data, double step);

// Fraction of rows whose arg-max logit matches the class. Logistic only.
double classification_accuracy(const TaskSpec& task, const ModelVector& model, const SampleBatch& data);

// Minimiser of the quadratic task over `data` via the normal equations.
// Throws ValidationError when the regularised Gram matrix is singular.
ModelVector quadratic_optimum(const TaskSpec& task, const SampleBatch& data);

// Smoothness constant L. Exact (largest Gram eigenvalue + reg) for the
// quadratic task; for logistic the standard softmax Hessian bound
// 0.5 * lambda_max(E[x~ x~^T]) + reg with x~ = (x, 1).
double smoothness_constant(const TaskSpec& task, const SampleBatch& data);

}  // namespace sdfeel
