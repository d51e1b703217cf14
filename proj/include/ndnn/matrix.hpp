#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ndnn {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Rows index the batch, columns the
/// feature dimension.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  /// Row-wise literal, e.g. Matrix::from_rows({{1, 2}, {3, 4}}).
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_str() const;

  bool operator==(const Matrix& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a[m×k] · b[k×n]
Matrix matmul(const Matrix& a, const Matrix& b);
/// a[m×k] · b[n×k]ᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a[k×m]ᵀ · b[k×n]
Matrix matmul_tn(const Matrix& a, const Matrix& b);

/// Per-column sums over rows.
Vector column_sums(const Matrix& x);

struct RowStats {
  Vector mean;
  Vector var;  // biased: divides by rows
};

/// Per-column mean and biased variance over the rows of x.
RowStats row_stats(const Matrix& x);

/// Columns [begin, begin + count) of x.
Matrix slice_cols(const Matrix& x, std::size_t begin, std::size_t count);
/// [a | b] column-wise concatenation; rows must agree.
Matrix concat_cols(const Matrix& a, const Matrix& b);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

/// a += s · b
void axpy(Matrix& a, double s, const Matrix& b);
void axpy(Vector& a, double s, const Vector& b);

double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& a);

}  // namespace ndnn
