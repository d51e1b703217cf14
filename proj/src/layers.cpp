#include "ndnn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "ndnn/error.hpp"

namespace ndnn {

DenseForward dense_forward(Matrix x, const DenseParams& p) {
  NDNN_REQUIRE(x.cols() == p.in_dim(), "dense: input " + x.shape_str() + " vs weights " +
                                           p.W.shape_str());
  NDNN_REQUIRE(p.b.size() == p.out_dim(), "dense: bias length mismatch");
  Matrix y = matmul_nt(x, p.W);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += p.b[c];
  }
  return {std::move(y), DenseCache{std::move(x)}};
}

DenseBackward dense_backward(const Matrix& dy, const DenseCache& cache, const DenseParams& p,
                             bool need_dx) {
  NDNN_REQUIRE(dy.rows() == cache.x.rows() && dy.cols() == p.out_dim(),
               "dense_backward: upstream gradient " + dy.shape_str() + " does not match cache");
  DenseBackward out;
  out.grad.W = matmul_tn(dy, cache.x);
  out.grad.b = column_sums(dy);
  if (need_dx) out.dx = matmul(dy, p.W);
  return out;
}

ReluForward relu_forward(Matrix x) {
  Matrix y = x;
  for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
  return {std::move(y), ReluCache{std::move(x)}};
}

Matrix relu_backward(const Matrix& dy, const ReluCache& cache) {
  NDNN_REQUIRE(dy.same_shape(cache.x), "relu_backward: shape mismatch");
  Matrix dx = dy;
  auto d = dx.values();
  auto x = cache.x.values();
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!(x[i] > 0.0)) d[i] = 0.0;
  return dx;
}

BatchNormParams BatchNormParams::identity(std::size_t dim, double momentum, double eps) {
  BatchNormParams p;
  p.gamma.assign(dim, 1.0);
  p.beta.assign(dim, 0.0);
  p.running_mean.assign(dim, 0.0);
  p.running_var.assign(dim, 1.0);
  p.momentum = momentum;
  p.eps = eps;
  return p;
}

BatchNormForward batchnorm_forward(const Matrix& x, const BatchNormParams& p, Mode mode) {
  const std::size_t d = p.dim();
  NDNN_REQUIRE(x.cols() == d, "batchnorm: input " + x.shape_str() + " vs dim " +
                                  std::to_string(d));
  NDNN_REQUIRE(p.eps > 0.0, "batchnorm: eps must be > 0");
  NDNN_REQUIRE(p.momentum > 0.0 && p.momentum <= 1.0, "batchnorm: momentum must be in (0,1]");

  BatchNormForward out;
  out.cache.mode = mode;
  out.running_mean = p.running_mean;
  out.running_var = p.running_var;

  Vector mean, var;
  if (mode == Mode::Train) {
    NDNN_REQUIRE(x.rows() >= 2, "batchnorm: train mode needs at least 2 rows, got " +
                                    std::to_string(x.rows()));
    RowStats st = row_stats(x);
    mean = std::move(st.mean);
    var = std::move(st.var);
    for (std::size_t c = 0; c < d; ++c) {
      out.running_mean[c] = (1.0 - p.momentum) * p.running_mean[c] + p.momentum * mean[c];
      out.running_var[c] = (1.0 - p.momentum) * p.running_var[c] + p.momentum * var[c];
    }
  } else {
    mean = p.running_mean;
    var = p.running_var;
  }

  out.cache.inv_std.resize(d);
  for (std::size_t c = 0; c < d; ++c) out.cache.inv_std[c] = 1.0 / std::sqrt(var[c] + p.eps);

  out.cache.xhat = Matrix(x.rows(), d);
  out.y = Matrix(x.rows(), d);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    auto hr = out.cache.xhat.row(r);
    auto yr = out.y.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      hr[c] = (xr[c] - mean[c]) * out.cache.inv_std[c];
      yr[c] = p.gamma[c] * hr[c] + p.beta[c];
    }
  }
  return out;
}

BatchNormBackward batchnorm_backward(const Matrix& dy, const BatchNormCache& cache,
                                     const BatchNormParams& p) {
  const std::size_t d = p.dim();
  NDNN_REQUIRE(dy.same_shape(cache.xhat), "batchnorm_backward: shape mismatch");
  const std::size_t n = dy.rows();

  BatchNormBackward out;
  out.dgamma.assign(d, 0.0);
  out.dbeta.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    auto g = dy.row(r);
    auto h = cache.xhat.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      out.dgamma[c] += g[c] * h[c];
      out.dbeta[c] += g[c];
    }
  }

  out.dx = Matrix(n, d);
  if (cache.mode == Mode::Eval) {
    for (std::size_t r = 0; r < n; ++r) {
      auto g = dy.row(r);
      auto o = out.dx.row(r);
      for (std::size_t c = 0; c < d; ++c) o[c] = g[c] * p.gamma[c] * cache.inv_std[c];
    }
    return out;
  }

  // dxhat = dy·gamma; dx = inv_std/N · (N·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
  // Σdxhat = gamma·dbeta and Σ(dxhat·xhat) = gamma·dgamma.
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    auto g = dy.row(r);
    auto h = cache.xhat.row(r);
    auto o = out.dx.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      const double gm = p.gamma[c];
      o[c] = gm * cache.inv_std[c] *
             (g[c] - inv_n * out.dbeta[c] - h[c] * inv_n * out.dgamma[c]);
    }
  }
  return out;
}

DropoutForward dropout_forward(Matrix x, double rate, Mode mode, RngStream& rng) {
  NDNN_REQUIRE(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
  DropoutForward out;
  if (mode == Mode::Eval || rate == 0.0) {
    out.y = std::move(x);
    return out;
  }
  const double keep = 1.0 - rate;
  const double scale = 1.0 / keep;
  out.cache.scale.resize(x.size());
  auto v = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double s = rng.uniform() < keep ? scale : 0.0;
    out.cache.scale[i] = s;
    v[i] *= s;
  }
  out.y = std::move(x);
  return out;
}

Matrix dropout_backward(Matrix dy, const DropoutCache& cache) {
  if (cache.scale.empty()) return dy;
  NDNN_REQUIRE(cache.scale.size() == dy.size(), "dropout_backward: shape mismatch");
  auto v = dy.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= cache.scale[i];
  return dy;
}

Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto z = logits.row(r);
    auto o = p.row(r);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
      o[c] = std::exp(z[c] - mx);
      sum += o[c];
    }
    for (auto& v : o) v /= sum;
  }
  return p;
}

Matrix softmax_backward(const Matrix& probs, const Matrix& dprobs) {
  NDNN_REQUIRE(probs.same_shape(dprobs), "softmax_backward: shape mismatch");
  Matrix dz(probs.rows(), probs.cols());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto p = probs.row(r);
    auto g = dprobs.row(r);
    double dot = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) dot += p[c] * g[c];
    auto o = dz.row(r);
    for (std::size_t c = 0; c < p.size(); ++c) o[c] = p[c] * (g[c] - dot);
  }
  return dz;
}

namespace {

void check_labels(const Matrix& m, const Labels& targets, const char* op) {
  NDNN_REQUIRE(targets.size() == m.rows(), std::string(op) + ": " +
                                               std::to_string(targets.size()) +
                                               " labels for " + m.shape_str());
  for (auto t : targets)
    NDNN_REQUIRE(t < m.cols(), std::string(op) + ": label " + std::to_string(t) +
                                   " out of range [0, " + std::to_string(m.cols()) + ")");
}

}  // namespace

SoftmaxNll softmax_nll(const Matrix& logits, const Labels& targets) {
  check_labels(logits, targets, "softmax_nll");
  NDNN_REQUIRE(logits.rows() >= 1, "softmax_nll: empty batch");
  SoftmaxNll out;
  out.probs = Matrix(logits.rows(), logits.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto z = logits.row(r);
    auto o = out.probs.row(r);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
      o[c] = std::exp(z[c] - mx);
      sum += o[c];
    }
    // log-sum-exp form keeps the loss finite when the target probability underflows
    total += std::log(sum) - (z[targets[r]] - mx);
    for (auto& v : o) v /= sum;
  }
  out.loss = total / static_cast<double>(logits.rows());
  return out;
}

Matrix softmax_nll_grad(const Matrix& probs, const Labels& targets) {
  check_labels(probs, targets, "softmax_nll_grad");
  Matrix g = probs;
  const double inv_n = 1.0 / static_cast<double>(probs.rows());
  for (std::size_t r = 0; r < g.rows(); ++r) g(r, targets[r]) -= 1.0;
  for (auto& v : g.values()) v *= inv_n;
  return g;
}

double mse(const Matrix& pred, const Matrix& target) {
  NDNN_REQUIRE(pred.same_shape(target), "mse: shapes " + pred.shape_str() + " and " +
                                            target.shape_str());
  NDNN_REQUIRE(pred.rows() >= 1, "mse: empty batch");
  double s = 0.0;
  auto a = pred.values();
  auto b = target.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.rows());
}

Matrix mse_grad(const Matrix& pred, const Matrix& target) {
  NDNN_REQUIRE(pred.same_shape(target), "mse_grad: shapes " + pred.shape_str() + " and " +
                                            target.shape_str());
  Matrix g = pred - target;
  const double s = 2.0 / static_cast<double>(pred.rows());
  for (auto& v : g.values()) v *= s;
  return g;
}

Labels argmax_rows(const Matrix& m) {
  Labels out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    out[r] = static_cast<std::uint32_t>(best);
  }
  return out;
}

}  // namespace ndnn
