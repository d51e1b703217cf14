#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ndnn/netgraph.hpp"
#include "ndnn/samples.hpp"

namespace ndnn {

enum class TopLevelScale { One, OneMinusLambda };

struct TrainConfig {
  double eta0 = 0.08;
  double lambda = 0.1;
  std::size_t batch_size = 128;
  std::size_t levels = 3;
  double dropout = 0.2;
  double lr_halving_threshold = 0.001;  // relative dev-FER improvement
  std::size_t patience = 4;
  std::size_t max_epochs = 15;
  double mono_loss_weight = 1.0;  // α in NLL_cd + α·NLL_mono
  TopLevelScale top_level_scale = TopLevelScale::One;
  bool deep_cross_grads = false;
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct Targets {
  const Matrix& clean;
  const Labels& cd;
  const Labels& mono;
};

inline Targets targets_of(const Samples& s) { return {s.clean, s.cd, s.mono}; }

struct LevelLosses {
  std::vector<double> mse;
  std::vector<double> nll_cd;
  std::vector<double> nll_mono;
};

LevelLosses compute_losses(const GraphTrace& trace, const Targets& targets);

/// Own gradients per level plus the cross gradients each level receives from
/// the level above (absent for the top level). Cross gradients are the
/// derivative of the next level's combined loss MSE + NLL_cd + α·NLL_mono with
/// respect to this level's parameters; with deep_cross_grads the losses of all
/// higher levels are included and back-propagated through every lower network.
struct GradientSet {
  std::vector<MlpParams> own_se;  // ∂MSE_ℓ/∂θ_{SE_ℓ}
  std::vector<MlpParams> own_sr;  // ∂(NLL_cd,ℓ + α·NLL_mono,ℓ)/∂θ_{SR_ℓ}
  std::vector<std::optional<MlpParams>> cross_se;  // g_{SR_{ℓ+1}→SE_ℓ} (+ residual skip)
  std::vector<std::optional<MlpParams>> cross_sr;  // g_{SE_{ℓ+1}→SR_ℓ}
};

GradientSet backprop_through_network(const GraphTrace& trace, const Targets& targets,
                                     const GraphParams& params, const TrainConfig& config);

/// θ_ℓ ← θ_ℓ − η[(1−λ)·own + λ·cross] below the top level; the top level
/// steps along its own gradient scaled by 1 or (1−λ) per config.
GraphParams apply_updates(const GraphParams& params, const GradientSet& grads, double eta,
                          double lambda, TopLevelScale top = TopLevelScale::One);

// ---- evaluation -----------------------------------------------------------

struct LevelMetrics {
  std::optional<double> mse;
  double nll_cd = 0.0;
  std::optional<double> nll_mono;
  double fer_cd = 0.0;
  std::optional<double> fer_mono;
};

double frame_error_rate(const Labels& predicted, const Labels& truth);

/// Accumulates sample-weighted means of per-batch metrics.
class MetricAccumulator {
 public:
  void add(const std::vector<LevelMetrics>& batch, std::size_t n);
  std::vector<LevelMetrics> mean() const;

 private:
  std::vector<LevelMetrics> sum_;
  std::size_t count_ = 0;
};

// ---- trainable systems ----------------------------------------------------

struct NamedNetwork {
  std::string name;
  MlpParams params;
};

/// Everything needed to rebuild a trained system.
struct Checkpoint {
  std::string system;
  GraphSpec spec;
  std::vector<NamedNetwork> networks;
};

/// A model the training loop can drive: the network of DNNs or a baseline.
class TrainableSystem {
 public:
  virtual ~TrainableSystem() = default;

  virtual std::string kind() const = 0;
  /// Number of decodable recognition levels.
  virtual std::size_t levels() const = 0;
  /// One synchronous SGD step. Returns train-mode metrics of the batch.
  virtual std::vector<LevelMetrics> train_step(const Samples& batch, double eta,
                                               const RngStream& dropout) = 0;
  /// Eval-mode metrics per level.
  virtual std::vector<LevelMetrics> evaluate(const Samples& data) const = 0;
  /// Eval-mode cd decisions per level for windowed noisy inputs.
  virtual std::vector<Labels> decode(const Matrix& noisy) const = 0;
  virtual const GraphSpec& graph_spec() const = 0;
  virtual std::unique_ptr<TrainableSystem> clone() const = 0;
  virtual Checkpoint checkpoint() const = 0;
};

/// The unrolled network of DNNs trained with back-propagation through network.
class GraphSystem final : public TrainableSystem {
 public:
  GraphSystem(GraphParams params, TrainConfig config);

  std::string kind() const override;
  std::size_t levels() const override { return params_.levels(); }
  std::vector<LevelMetrics> train_step(const Samples& batch, double eta,
                                       const RngStream& dropout) override;
  std::vector<LevelMetrics> evaluate(const Samples& data) const override;
  std::vector<Labels> decode(const Matrix& noisy) const override;
  const GraphSpec& graph_spec() const override { return params_.spec; }
  std::unique_ptr<TrainableSystem> clone() const override;
  Checkpoint checkpoint() const override;

  const GraphParams& params() const { return params_; }
  GraphParams& params() { return params_; }

 private:
  GraphParams params_;
  TrainConfig config_;
};

std::vector<LevelMetrics> graph_metrics(const GraphTrace& trace, const Samples& batch);

// ---- schedule and loop ----------------------------------------------------

/// Learning-rate halving on small relative dev-FER improvement, with
/// patience-based early stopping.
class LrSchedule {
 public:
  LrSchedule(double eta0, double halving_threshold, std::size_t patience);

  struct Decision {
    bool improved = false;  // new best dev FER
    bool halved = false;
    bool stop = false;
    double next_eta = 0.0;
  };

  /// Report the dev FER measured after an epoch trained at eta().
  Decision observe(double dev_fer);

  double eta() const { return eta_; }
  double best() const { return best_; }
  std::size_t epochs_since_best() const { return since_best_; }

 private:
  double eta_;
  double threshold_;
  std::size_t patience_;
  double best_;
  std::size_t since_best_ = 0;
  std::size_t epochs_ = 0;
};

struct EpochReport {
  std::size_t epoch = 0;
  double eta = 0.0;
  std::vector<LevelMetrics> train;
  std::vector<LevelMetrics> dev;
  double seconds = 0.0;

  /// Top-level dev cd FER, the model-selection metric.
  double dev_fer() const { return dev.back().fer_cd; }
};

struct TrainResult {
  std::unique_ptr<TrainableSystem> best;
  std::vector<EpochReport> reports;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochReport&, const TrainableSystem&, bool best)>;

/// Shuffled minibatch SGD with dev-FER model selection. Partial final batches
/// smaller than 2 samples are dropped.
TrainResult train_loop(const Samples& train, const Samples& dev, TrainableSystem& system,
                       const TrainConfig& config, const EpochCallback& on_epoch = {});

/// CSV rows `epoch,eta,split,level,mse,nll_cd,nll_mono,fer,seconds`.
std::string epoch_csv_header();
std::string epoch_csv_rows(const EpochReport& r);

// ---- whole-system gradient check -----------------------------------------

struct GradCheckEntry {
  std::string term;     // e.g. "own SE_1", "cross SR_0"
  std::string tensor;   // e.g. "hidden0.W"
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // entries whose perturbation crossed a ReLU kink
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// The small graph used by default: D=2, ctx 5→3, M=3, C=6, one hidden layer of 4.
GraphSpec tiny_graph_spec(std::size_t levels, bool residual);

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  std::size_t batch = 8;
  // Applied to the analytic gradients before comparison (test hook).
  std::function<void(GradientSet&)> corrupt;
};

/// Compares every term of backprop_through_network against central finite
/// differences of the matching scalar loss, in train mode with fixed dropout
/// masks.
GradCheckReport grad_check(const GraphSpec& spec, const TrainConfig& config,
                           const GradCheckOptions& options = {});

}  // namespace ndnn
