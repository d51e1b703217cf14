#include <doctest.h>

#include <cmath>

#include "ndnn/error.hpp"
#include "ndnn/layers.hpp"
#include "test_support.hpp"

using namespace ndnn;
using namespace ndnn::test;

namespace {

// Scalar probe L = Σ w ⊙ y with fixed random weights, so dL/dy = w.
double probe(const Matrix& y, const Matrix& w) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * w.values()[i];
  return s;
}

}  // namespace

TEST_CASE("dense forward and finite-difference backward") {
  DenseParams p{random_matrix(3, 4, 1), {0.1, -0.2, 0.3}};
  Matrix x = random_matrix(5, 4, 2);
  const Matrix w = random_matrix(5, 3, 3);

  const auto fwd = dense_forward(x, p);
  CHECK(fwd.y(0, 1) == doctest::Approx(x(0, 0) * p.W(1, 0) + x(0, 1) * p.W(1, 1) +
                                        x(0, 2) * p.W(1, 2) + x(0, 3) * p.W(1, 3) - 0.2));
  const auto bwd = dense_backward(w, fwd.cache, p);

  auto loss = [&] { return probe(dense_forward(x, p).y, w); };
  CHECK(max_rel_err(bwd.dx.values(), numeric_grad(x.values(), loss)) < 1e-7);
  CHECK(max_rel_err(bwd.grad.W.values(), numeric_grad(p.W.values(), loss)) < 1e-7);
  CHECK(max_rel_err(bwd.grad.b, numeric_grad(p.b, loss)) < 1e-7);
  CHECK_THROWS_AS(dense_forward(Matrix(2, 3), p), UsageError);
}

TEST_CASE("relu") {
  const auto f = relu_forward(Matrix::from_rows({{-1, 0, 2}}));
  CHECK(f.y == Matrix::from_rows({{0, 0, 2}}));
  CHECK(relu_backward(Matrix::from_rows({{5, 5, 5}}), f.cache) == Matrix::from_rows({{0, 0, 5}}));
}

TEST_CASE("batchnorm train mode normalizes each column") {
  const Matrix x = 10.0 * random_matrix(256, 6, 4) + Matrix(256, 6, 3.0);
  const auto f = batchnorm_forward(x, BatchNormParams::identity(6), Mode::Train);
  const RowStats s = row_stats(f.y);
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(std::abs(s.mean[j]) < 1e-9);
    CHECK(std::abs(s.var[j] - 1.0) < 1e-6);
  }
}

TEST_CASE("batchnorm running statistics") {
  const Matrix x = Matrix::from_rows({{1, 0}, {3, 0}});
  BatchNormParams p = BatchNormParams::identity(2);
  const auto f = batchnorm_forward(x, p, Mode::Train);
  // mean 2, biased var 1; momentum 0.1 toward the batch.
  CHECK(f.running_mean[0] == doctest::Approx(0.2));
  CHECK(f.running_var[0] == doctest::Approx(0.9 + 0.1 * 1.0));
  CHECK(f.running_var[1] == doctest::Approx(0.9));

  p.running_mean = {2, 0};
  p.running_var = {4, 1};
  const auto e = batchnorm_forward(x, p, Mode::Eval);
  CHECK(e.y(1, 0) == doctest::Approx(1.0 / std::sqrt(4 + 1e-5)));
  CHECK(e.running_mean == p.running_mean);
}

TEST_CASE("batchnorm backward matches finite differences") {
  for (Mode mode : {Mode::Train, Mode::Eval}) {
    CAPTURE(static_cast<int>(mode));
    Matrix x = random_matrix(6, 3, 5);
    BatchNormParams p = BatchNormParams::identity(3);
    p.gamma = {1.5, -0.5, 0.7};
    p.beta = {0.1, 0.2, -0.3};
    p.running_mean = {0.3, -0.1, 0.0};
    p.running_var = {2.0, 0.5, 1.0};
    const Matrix w = random_matrix(6, 3, 6);
    const auto f = batchnorm_forward(x, p, mode);
    const auto b = batchnorm_backward(w, f.cache, p);
    auto loss = [&] { return probe(batchnorm_forward(x, p, mode).y, w); };
    CHECK(max_rel_err(b.dx.values(), numeric_grad(x.values(), loss)) < 1e-6);
    CHECK(max_rel_err(b.dgamma, numeric_grad(p.gamma, loss)) < 1e-6);
    CHECK(max_rel_err(b.dbeta, numeric_grad(p.beta, loss)) < 1e-6);
  }
}

TEST_CASE("inverted dropout keeps the expectation") {
  RngStream rng(11);
  const std::size_t n = 1000000;
  const auto f = dropout_forward(Matrix(1000, 1000, 1.0), 0.2, Mode::Train, rng);
  double sum = 0;
  std::size_t zeros = 0;
  for (double v : f.y.values()) {
    sum += v;
    if (v == 0.0) ++zeros;
    else CHECK_EQ(v, 1.0 / 0.8);
  }
  CHECK(std::abs(sum / n - 1.0) < 0.003);
  CHECK(std::abs(static_cast<double>(zeros) / n - 0.2) < 0.003);

  // The backward pass reuses the same mask.
  const Matrix g = dropout_backward(Matrix(1000, 1000, 2.0), f.cache);
  for (std::size_t i = 0; i < n; i += 997) CHECK(g.values()[i] == 2.0 * f.y.values()[i]);
}

TEST_CASE("dropout is the identity in eval mode and at rate 0") {
  const Matrix x = random_matrix(4, 4, 1);
  RngStream a(1), b(1);
  CHECK(dropout_forward(x, 0.5, Mode::Eval, a).y == x);
  CHECK(dropout_forward(x, 0.0, Mode::Train, a).y == x);
  CHECK(a.next_u64() == b.next_u64());
  CHECK_THROWS_AS(dropout_forward(x, 1.0, Mode::Train, a), UsageError);
}

TEST_CASE("softmax rows sum to one") {
  const Matrix z = 30.0 * random_matrix(50, 30, 7);
  const Matrix p = softmax(z);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0;
    for (double v : p.row(r)) s += v;
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  const Matrix big = softmax(Matrix::from_rows({{1000, 0}, {-1000, -1000}}));
  CHECK(all_finite(big));
  CHECK(big(0, 0) == 1.0);
  CHECK(big(1, 0) == 0.5);
}

TEST_CASE("softmax backward matches finite differences") {
  Matrix z = random_matrix(3, 5, 8);
  const Matrix w = random_matrix(3, 5, 9);
  const Matrix dz = softmax_backward(softmax(z), w);
  auto loss = [&] { return probe(softmax(z), w); };
  CHECK(max_rel_err(dz.values(), numeric_grad(z.values(), loss)) < 1e-7);
}

TEST_CASE("nll fixtures") {
  const auto a = softmax_nll(Matrix::from_rows({{0, 0}}), {0});
  CHECK(std::abs(a.loss - std::log(2.0)) < 1e-12);

  const auto b = softmax_nll(Matrix::from_rows({{1000, 0}}), {1});
  CHECK(std::abs(b.loss - 1000.0) < 1e-12);

  // probabilities 1/4 and 3/4 in the first row, 1/2 and 1/2 in the second
  const Matrix z = Matrix::from_rows({{0, std::log(3.0)}, {2, 2}});
  const auto c = softmax_nll(z, {1, 0});
  CHECK(std::abs(c.loss - (-std::log(0.75) + std::log(2.0)) / 2) < 1e-12);
  const Matrix g = softmax_nll_grad(c.probs, {1, 0});
  CHECK(std::abs(g(0, 0) - 0.125) < 1e-12);
  CHECK(std::abs(g(0, 1) + 0.125) < 1e-12);
  CHECK(std::abs(g(1, 0) + 0.25) < 1e-12);
  CHECK(std::abs(g(1, 1) - 0.25) < 1e-12);

  CHECK_THROWS_AS(softmax_nll(z, {2, 0}), UsageError);
  CHECK_THROWS_AS(softmax_nll(z, {0}), UsageError);
}

TEST_CASE("nll gradient matches finite differences") {
  Matrix z = random_matrix(4, 6, 10);
  const Labels t{0, 5, 2, 2};
  const Matrix g = softmax_nll_grad(softmax_nll(z, t).probs, t);
  auto loss = [&] { return softmax_nll(z, t).loss; };
  CHECK(max_rel_err(g.values(), numeric_grad(z.values(), loss)) < 1e-7);
}

TEST_CASE("mse fixtures") {
  CHECK(mse(Matrix::from_rows({{1, 1}}), Matrix::from_rows({{0, 0}})) == 2.0);
  const Matrix p = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix t = Matrix::from_rows({{0, 0}, {1, 1}});
  // (1 + 4 + 4 + 9) / 2 rows
  CHECK(std::abs(mse(p, t) - 9.0) < 1e-12);
  const Matrix g = mse_grad(p, t);
  CHECK(max_abs_diff(g, Matrix::from_rows({{1, 2}, {2, 3}})) < 1e-12);
  CHECK_THROWS_AS(mse(p, Matrix(2, 3)), UsageError);
}

TEST_CASE("mse gradient matches finite differences") {
  Matrix p = random_matrix(5, 4, 12);
  const Matrix t = random_matrix(5, 4, 13);
  const Matrix g = mse_grad(p, t);
  auto loss = [&] { return mse(p, t); };
  CHECK(max_rel_err(g.values(), numeric_grad(p.values(), loss)) < 1e-7);
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  CHECK(argmax_rows(Matrix::from_rows({{1, 3, 3}, {2, 2, 2}, {0, -1, 5}})) == Labels{1, 0, 2});
}
