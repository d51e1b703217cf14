#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ndnn/layers.hpp"

namespace ndnn {

enum class HeadKind { Linear, Softmax };

struct HeadSpec {
  std::string name;
  std::size_t dim = 0;
  HeadKind kind = HeadKind::Linear;

  bool operator==(const HeadSpec&) const = default;
};

/// Feed-forward DNN: hidden blocks dense → batchnorm → ReLU → dropout, then
/// zero or more output heads on the last hidden layer. With no heads the
/// network output is the last hidden activation (used for shared trunks).
struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::vector<HeadSpec> heads;
  double dropout_rate = 0.0;
  bool use_batchnorm = true;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  void validate() const;
  std::size_t output_count() const { return heads.empty() ? 1 : heads.size(); }
  std::size_t output_dim(std::size_t i) const;
  /// Total doubles held by MlpParams, including batch-norm running statistics.
  std::size_t parameter_count() const;

  bool operator==(const MlpSpec&) const = default;
};

struct HiddenLayer {
  DenseParams dense;
  BatchNormParams bn;  // empty vectors when batch norm is disabled
};

struct MlpParams {
  MlpSpec spec;
  std::vector<HiddenLayer> hidden;
  std::vector<DenseParams> heads;

  /// Number of doubles actually allocated.
  std::size_t allocated_size() const;
};

/// Visit every tensor in a fixed order: per hidden layer W, b, gamma, beta,
/// running_mean, running_var; then per head W, b. `trainable` is false for
/// running statistics.
void for_each_tensor(MlpParams& p,
                     const std::function<void(const std::string& name, std::span<double> data,
                                              bool trainable)>& fn);
void for_each_tensor(const MlpParams& p,
                     const std::function<void(const std::string& name,
                                              std::span<const double> data, bool trainable)>& fn);

/// Glorot weights, zero biases, gamma = 1, beta = 0, running mean 0 / var 1.
MlpParams build_mlp(const MlpSpec& spec, RngStream& rng);

/// Same shapes as p, all zeros (running statistics included).
MlpParams zeros_like(const MlpParams& p);

struct HiddenCache {
  DenseCache dense;
  BatchNormCache bn;
  ReluCache relu;
  DropoutCache dropout;
};

struct ForwardTrace {
  Mode mode = Mode::Eval;
  std::size_t batch = 0;
  std::vector<HiddenCache> hidden;
  std::vector<DenseCache> heads;
  // Per output: linear head values, softmax head probabilities, or the last
  // hidden activation for a headless trunk.
  std::vector<Matrix> outputs;
  // Pre-softmax values of every head (equal to outputs for linear heads).
  std::vector<Matrix> logits;
  // Batch-norm running statistics produced by this call, per hidden layer.
  std::vector<Vector> new_running_mean;
  std::vector<Vector> new_running_var;
};

ForwardTrace mlp_forward(const Matrix& x, const MlpParams& params, Mode mode, RngStream& rng);

struct MlpBackward {
  MlpParams grads;  // running statistics are zero
  Matrix input_grad;
};

/// head_grads[i] is ∂L/∂(pre-activation of head i): the linear output for a
/// linear head, the logits for a softmax head, the last hidden activation for a
/// trunk. An empty matrix means zero gradient for that head.
MlpBackward mlp_backward(const std::vector<Matrix>& head_grads, const ForwardTrace& trace,
                         const MlpParams& params, bool need_input_grad = true);

/// θ' = θ − eta·g for every trainable tensor; running statistics copied over.
[[nodiscard]] MlpParams sgd_step(const MlpParams& params, const MlpParams& grads, double eta);

/// acc += s · g over trainable tensors.
void accumulate(MlpParams& acc, double s, const MlpParams& g);

/// Copy batch-norm running statistics produced by a train-mode forward pass.
void commit_running_stats(MlpParams& params, const ForwardTrace& trace);

}  // namespace ndnn
