#pragma once

#include <cstdint>
#include <vector>

#include "ndnn/matrix.hpp"
#include "ndnn/rng.hpp"

namespace ndnn {

enum class Mode { Train, Eval };

using Labels = std::vector<std::uint32_t>;

// ---- dense ---------------------------------------------------------------

struct DenseParams {
  Matrix W;  // [out × in]
  Vector b;  // [out]

  std::size_t in_dim() const { return W.cols(); }
  std::size_t out_dim() const { return W.rows(); }
};

struct DenseCache {
  Matrix x;
};

struct DenseForward {
  Matrix y;
  DenseCache cache;
};

struct DenseBackward {
  Matrix dx;
  DenseParams grad;  // dW, db
};

/// y = x Wᵀ + b
DenseForward dense_forward(Matrix x, const DenseParams& p);
DenseBackward dense_backward(const Matrix& dy, const DenseCache& cache, const DenseParams& p,
                             bool need_dx = true);

// ---- relu ----------------------------------------------------------------

struct ReluCache {
  Matrix x;  // pre-activation
};

struct ReluForward {
  Matrix y;
  ReluCache cache;
};

ReluForward relu_forward(Matrix x);
Matrix relu_backward(const Matrix& dy, const ReluCache& cache);

// ---- batch normalization -------------------------------------------------

struct BatchNormParams {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  std::size_t dim() const { return gamma.size(); }
  static BatchNormParams identity(std::size_t dim, double momentum = 0.1, double eps = 1e-5);
};

struct BatchNormCache {
  Mode mode = Mode::Eval;
  Matrix xhat;
  Vector inv_std;
};

struct BatchNormForward {
  Matrix y;
  BatchNormCache cache;
  // Running statistics after this call. Unchanged from the inputs in eval mode.
  Vector running_mean;
  Vector running_var;
};

struct BatchNormBackward {
  Matrix dx;
  Vector dgamma;
  Vector dbeta;
};

/// Train mode normalizes with minibatch statistics (biased variance) and
/// folds them into the running averages; eval mode uses the running averages.
BatchNormForward batchnorm_forward(const Matrix& x, const BatchNormParams& p, Mode mode);
/// Train-mode caches get the full gradient through the batch mean and variance.
BatchNormBackward batchnorm_backward(const Matrix& dy, const BatchNormCache& cache,
                                     const BatchNormParams& p);

// ---- dropout -------------------------------------------------------------

struct DropoutCache {
  // Per-entry multiplier (0 or 1/(1-rate)); empty means identity.
  std::vector<double> scale;
};

struct DropoutForward {
  Matrix y;
  DropoutCache cache;
};

/// Inverted dropout. Eval mode and rate 0 are the identity and draw nothing.
DropoutForward dropout_forward(Matrix x, double rate, Mode mode, RngStream& rng);
Matrix dropout_backward(Matrix dy, const DropoutCache& cache);

// ---- output heads and losses ---------------------------------------------

/// Row-wise softmax with max subtraction.
Matrix softmax(const Matrix& logits);

/// Given p = softmax(z) and ∂L/∂p, returns ∂L/∂z.
Matrix softmax_backward(const Matrix& probs, const Matrix& dprobs);

struct SoftmaxNll {
  Matrix probs;
  double loss = 0.0;
};

/// loss = -(1/N) Σ log probs[n, target_n]
SoftmaxNll softmax_nll(const Matrix& logits, const Labels& targets);
/// ∂loss/∂logits = (probs - onehot)/N
Matrix softmax_nll_grad(const Matrix& probs, const Labels& targets);

/// loss = (1/N) Σ_n ‖pred_n - target_n‖²
double mse(const Matrix& pred, const Matrix& target);
/// ∂loss/∂pred = 2(pred - target)/N
Matrix mse_grad(const Matrix& pred, const Matrix& target);

/// Per-row argmax, ties to the lowest index.
Labels argmax_rows(const Matrix& m);

}  // namespace ndnn
