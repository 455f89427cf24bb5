#include "sdfeel/model_math.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sdfeel/errors.hpp"

namespace sdfeel {

bool ModelVector::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

ModelVector& ModelVector::operator+=(const ModelVector& other) {
  require_same_size(*this, other, "operator+=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ModelVector& ModelVector::operator-=(const ModelVector& other) {
  require_same_size(*this, other, "operator-=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

ModelVector& ModelVector::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

ModelVector operator+(ModelVector a, const ModelVector& b) { return a += b; }
ModelVector operator-(ModelVector a, const ModelVector& b) { return a -= b; }
ModelVector operator*(double s, ModelVector v) { return v *= s; }

void require_same_size(const ModelVector& a, const ModelVector& b, std::string_view context) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(context) + ": model dimension mismatch (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
  }
}

void axpy(double a, const ModelVector& x, ModelVector& y) {
  require_same_size(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

double dot(const ModelVector& a, const ModelVector& b) {
  require_same_size(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(const ModelVector& v) { return dot(v, v); }

double squared_distance(const ModelVector& a, const ModelVector& b) {
  require_same_size(a, b, "squared_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void SampleBatch::validate() const {
  if (labels.empty()) throw ConfigError("sample batch is empty");
  if (feature_dim == 0) throw ConfigError("sample batch has zero feature_dim");
  if (features.size() != labels.size() * feature_dim || classes.size() != labels.size())
    throw DimensionError("sample batch arrays have inconsistent lengths");
}

SampleBatch subset(const SampleBatch& data, std::span<const std::size_t> rows) {
  SampleBatch out;
  out.feature_dim = data.feature_dim;
  out.features.reserve(rows.size() * data.feature_dim);
  out.labels.reserve(rows.size());
  out.classes.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= data.size()) throw DimensionError("subset row out of range");
    const auto x = data.row(r);
    out.features.insert(out.features.end(), x.begin(), x.end());
    out.labels.push_back(data.labels[r]);
    out.classes.push_back(data.classes[r]);
  }
  return out;
}

std::string_view to_string(TaskKind kind) { return kind == TaskKind::kQuadratic ? "quadratic" : "logistic"; }

TaskKind parse_task_kind(std::string_view name) {
  if (name == "quadratic") return TaskKind::kQuadratic;
  if (name == "logistic") return TaskKind::kLogistic;
  throw ConfigError("unknown task kind '" + std::string(name) + "' (expected quadratic|logistic)");
}

std::size_t TaskSpec::parameter_count() const {
  return kind == TaskKind::kQuadratic ? feature_dim : num_classes * (feature_dim + 1);
}

void TaskSpec::validate() const {
  if (feature_dim == 0) throw ConfigError("task.feature_dim must be positive");
  if (kind == TaskKind::kLogistic && num_classes < 2) throw ConfigError("task.num_classes must be >= 2");
  if (!(regularization >= 0.0) || !std::isfinite(regularization))
    throw ConfigError("task.regularization must be finite and >= 0");
}

namespace {

void check_shapes(const TaskSpec& task, const ModelVector& model, const SampleBatch& data) {
  if (model.size() != task.parameter_count())
    throw DimensionError("model has " + std::to_string(model.size()) + " parameters, task expects " +
                         std::to_string(task.parameter_count()));
  if (data.feature_dim != task.feature_dim)
    throw DimensionError("data feature_dim " + std::to_string(data.feature_dim) + " does not match task " +
                         std::to_string(task.feature_dim));
  if (data.size() == 0) throw ConfigError("empty sample batch");
}

// Accumulates the unregularised per-sample loss (and gradient) of one row.
double accumulate_row(const TaskSpec& task, const ModelVector& model, const SampleBatch& data, std::size_t r,
                      std::vector<double>& logits, ModelVector* gradient) {
  const auto x = data.row(r);
  const std::size_t f = task.feature_dim;
  if (task.kind == TaskKind::kQuadratic) {
    double pred = 0.0;
    for (std::size_t j = 0; j < f; ++j) pred += x[j] * model[j];
    const double residual = pred - data.labels[r];
    if (gradient) {
      for (std::size_t j = 0; j < f; ++j) (*gradient)[j] += residual * x[j];
    }
    return 0.5 * residual * residual;
  }

  const std::size_t c = task.num_classes;
  const std::size_t bias = c * f;
  double max_logit = -INFINITY;
  for (std::size_t k = 0; k < c; ++k) {
    double z = model[bias + k];
    for (std::size_t j = 0; j < f; ++j) z += model[k * f + j] * x[j];
    logits[k] = z;
    max_logit = std::max(max_logit, z);
  }
  double denom = 0.0;
  for (std::size_t k = 0; k < c; ++k) denom += std::exp(logits[k] - max_logit);
  const double log_norm = max_logit + std::log(denom);
  const auto label = static_cast<std::size_t>(data.classes[r]);
  if (label >= c) throw DimensionError("class index out of range for logistic task");
  if (gradient) {
    for (std::size_t k = 0; k < c; ++k) {
      const double coeff = std::exp(logits[k] - log_norm) - (k == label ? 1.0 : 0.0);
      for (std::size_t j = 0; j < f; ++j) (*gradient)[k * f + j] += coeff * x[j];
      (*gradient)[bias + k] += coeff;
    }
  }
  return log_norm - logits[label];
}

template <typename RowRange>
double loss_and_gradient_impl(const TaskSpec& task, const ModelVector& model, const SampleBatch& data,
                              const RowRange& rows, std::size_t count, ModelVector* gradient) {
  check_shapes(task, model, data);
  if (count == 0) throw ConfigError("empty mini-batch");
  if (gradient) *gradient = ModelVector(model.size());
  std::vector<double> logits(task.kind == TaskKind::kLogistic ? task.num_classes : 0);
  double loss = 0.0;
  for (std::size_t r : rows) loss += accumulate_row(task, model, data, r, logits, gradient);
  const double inv_n = 1.0 / static_cast<double>(count);
  loss *= inv_n;
  if (gradient) *gradient *= inv_n;
  if (task.regularization > 0.0) {
    loss += 0.5 * task.regularization * squared_norm(model);
    if (gradient) axpy(task.regularization, model, *gradient);
  }
  return loss;
}

struct AllRows {
  std::size_t n;
  struct Iter {
    std::size_t i;
    std::size_t operator*() const { return i; }
    Iter& operator++() {
      ++i;
      return *this;
    }
    bool operator!=(const Iter& o) const { return i != o.i; }
  };
  Iter begin() const { return {0}; }
  Iter end() const { return {n}; }
};

}  // namespace

double evaluate_loss_and_gradient(const TaskSpec& task, const ModelVector& model, const SampleBatch& data,
                                  std::span<const std::size_t> rows, ModelVector* gradient) {
  for (std::size_t r : rows)
    if (r >= data.size()) throw DimensionError("mini-batch row out of range");
  return loss_and_gradient_impl(task, model, data, rows, rows.size(), gradient);
}

double evaluate_loss_and_gradient(const TaskSpec& task, const ModelVector& model, const SampleBatch& data,
                                  ModelVector* gradient) {
  return loss_and_gradient_impl(task, model, data, AllRows{data.size()}, data.size(), gradient);
}

double evaluate_loss(const TaskSpec& task, const ModelVector& model, const SampleBatch& data) {
  return evaluate_loss_and_gradient(task, model, data, nullptr);
}

ModelVector evaluate_gradient(const TaskSpec& task, const ModelVector& model, const SampleBatch& data) {
  ModelVector g;
  evaluate_loss_and_gradient(task, model, data, &g);
  return g;
}

double finite_difference_check(const TaskSpec& task, const ModelVector& model, const SampleBatch& data, double step) {
  if (!(step > 0.0)) throw ConfigError("finite-difference step must be positive");
  const ModelVector analytic = evaluate_gradient(task, model, data);
  double worst = 0.0;
  ModelVector probe = model;
  for (std::size_t i = 0; i < model.size(); ++i) {
    probe[i] = model[i] + step;
    const double up = evaluate_loss(task, probe, data);
    probe[i] = model[i] - step;
    const double down = evaluate_loss(task, probe, data);
    probe[i] = model[i];
    const double numeric = (up - down) / (2.0 * step);
    const double scale = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
  }
  return worst;
}

double classification_accuracy(const TaskSpec& task, const ModelVector& model, const SampleBatch& data) {
  if (task.kind != TaskKind::kLogistic) throw ConfigError("accuracy is defined for the logistic task only");
  check_shapes(task, model, data);
  const std::size_t f = task.feature_dim;
  const std::size_t c = task.num_classes;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto x = data.row(r);
    std::size_t best = 0;
    double best_logit = -INFINITY;
    for (std::size_t k = 0; k < c; ++k) {
      double z = model[c * f + k];
      for (std::size_t j = 0; j < f; ++j) z += model[k * f + j] * x[j];
      if (z > best_logit) {
        best_logit = z;
        best = k;
      }
    }
    if (static_cast<int>(best) == data.classes[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

DenseMatrix second_moment(const SampleBatch& data, bool append_one) {
  const std::size_t f = data.feature_dim + (append_one ? 1 : 0);
  DenseMatrix gram(f, f);
  std::vector<double> x(f, 1.0);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto row = data.row(r);
    std::copy(row.begin(), row.end(), x.begin());
    for (std::size_t i = 0; i < f; ++i)
      for (std::size_t j = 0; j < f; ++j) gram(i, j) += x[i] * x[j];
  }
  const double inv_n = 1.0 / static_cast<double>(data.size());
  DenseMatrix scaled(f, f);
  for (std::size_t i = 0; i < f; ++i)
    for (std::size_t j = 0; j < f; ++j) scaled(i, j) = gram(i, j) * inv_n;
  return scaled;
}

}  // namespace

ModelVector quadratic_optimum(const TaskSpec& task, const SampleBatch& data) {
  if (task.kind != TaskKind::kQuadratic) throw ConfigError("closed-form optimum exists for the quadratic task only");
  check_shapes(task, ModelVector(task.parameter_count()), data);
  DenseMatrix a = second_moment(data, false);
  for (std::size_t i = 0; i < task.feature_dim; ++i) a(i, i) += task.regularization;
  std::vector<double> rhs(task.feature_dim, 0.0);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto x = data.row(r);
    for (std::size_t j = 0; j < task.feature_dim; ++j) rhs[j] += x[j] * data.labels[r];
  }
  for (double& v : rhs) v /= static_cast<double>(data.size());
  return ModelVector(cholesky_solve(a, rhs));
}

double smoothness_constant(const TaskSpec& task, const SampleBatch& data) {
  check_shapes(task, ModelVector(task.parameter_count()), data);
  if (task.kind == TaskKind::kQuadratic) {
    return symmetric_eigenvalues(second_moment(data, false)).front() + task.regularization;
  }
  return 0.5 * symmetric_eigenvalues(second_moment(data, true)).front() + task.regularization;
}

}  // namespace sdfeel
