#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sdfeel {

// Small dense row-major matrix. Sized for mixing matrices (D <= 64) and
// Gram matrices of desk-scale tasks.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  const std::vector<double>& data() const { return data_; }

  DenseMatrix transposed() const;

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b);

double max_abs_asymmetry(const DenseMatrix& m);

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
// descending. Only the upper triangle's symmetric part is meaningful.
std::vector<double> symmetric_eigenvalues(const DenseMatrix& m, double tol = 1e-14, int max_sweeps = 100);

// Largest singular value (spectral norm).
double operator_norm(const DenseMatrix& m);

// Solves A x = b for symmetric positive definite A. Throws ValidationError
// when A is not numerically positive definite.
std::vector<double> cholesky_solve(const DenseMatrix& a, std::span<const double> b);

}  // namespace sdfeel
