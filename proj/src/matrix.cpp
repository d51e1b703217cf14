#include "ndnn/matrix.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "ndnn/error.hpp"

namespace ndnn {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) { return ConstMap(m.data(), m.rows(), m.cols()); }
MutMap view(Matrix& m) { return MutMap(m.data(), m.rows(), m.cols()); }

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw UsageError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                   b.shape_str());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  NDNN_REQUIRE(data_.size() == rows_ * cols_, "Matrix: data length " +
                                                  std::to_string(data_.size()) +
                                                  " != " + shape_str());
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    NDNN_REQUIRE(row.size() == c, "Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::shape_str() const {
  std::ostringstream os;
  os << '[' << rows_ << "x" << cols_ << ']';
  return os.str();
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  if (a.cols() == 0) return out;
  view(out).noalias() = view(a) * view(b);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  Matrix out(a.rows(), b.rows());
  if (a.cols() == 0) return out;
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) shape_error("matmul_tn", a, b);
  Matrix out(a.cols(), b.cols());
  if (a.rows() == 0) return out;
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

Vector column_sums(const Matrix& x) {
  Vector s(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) s[c] += row[c];
  }
  return s;
}

RowStats row_stats(const Matrix& x) {
  NDNN_REQUIRE(x.rows() >= 1 && x.cols() >= 1, "row_stats: empty matrix " + x.shape_str());
  const double n = static_cast<double>(x.rows());
  RowStats st;
  st.mean = column_sums(x);
  for (auto& m : st.mean) m /= n;
  // two-pass so a constant column gives exactly zero variance
  st.var.assign(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double d = row[c] - st.mean[c];
      st.var[c] += d * d;
    }
  }
  for (auto& v : st.var) v /= n;
  return st;
}

Matrix slice_cols(const Matrix& x, std::size_t begin, std::size_t count) {
  NDNN_REQUIRE(begin + count <= x.cols(), "slice_cols: range exceeds " + x.shape_str());
  Matrix out(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto src = x.row(r).subspan(begin, count);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) shape_error("concat_cols", a, b);
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) shape_error("operator+", a, b);
  Matrix out = a;
  axpy(out, 1.0, b);
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) shape_error("operator-", a, b);
  Matrix out = a;
  axpy(out, -1.0, b);
  return out;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (auto& v : out.values()) v *= s;
  return out;
}

void axpy(Matrix& a, double s, const Matrix& b) {
  if (!a.same_shape(b)) shape_error("axpy", a, b);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += s * bv[i];
}

void axpy(Vector& a, double s, const Vector& b) {
  NDNN_REQUIRE(a.size() == b.size(), "axpy: vector length mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) shape_error("max_abs_diff", a, b);
  double m = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, std::abs(av[i] - bv[i]));
  return m;
}

bool all_finite(const Matrix& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace ndnn
