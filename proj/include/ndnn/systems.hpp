#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ndnn/trainer.hpp"

namespace ndnn {

/// Names accepted by make_system, in report order.
const std::vector<std::string>& system_names();

/// Single SR-style DNN on the central ctx_out noisy frames, cd head only.
class SingleDnnSystem final : public TrainableSystem {
 public:
  SingleDnnSystem(const GraphSpec& spec, const RngStream& init);
  SingleDnnSystem(GraphSpec spec, MlpParams net);

  std::string kind() const override { return "single-dnn"; }
  std::size_t levels() const override { return 1; }
  std::vector<LevelMetrics> train_step(const Samples& batch, double eta,
                                       const RngStream& dropout) override;
  std::vector<LevelMetrics> evaluate(const Samples& data) const override;
  std::vector<Labels> decode(const Matrix& noisy) const override;
  const GraphSpec& graph_spec() const override { return spec_; }
  std::unique_ptr<TrainableSystem> clone() const override;
  Checkpoint checkpoint() const override;

  const MlpParams& network() const { return net_; }

 private:
  GraphSpec spec_;
  MlpParams net_;
};

/// One DNN on the noisy context window whose first ⌈H/2⌉ hidden layers are
/// shared; the remaining layers form an SE branch (linear, MSE) and an SR
/// branch (cd softmax, NLL). The two losses are summed.
class MultitaskSystem final : public TrainableSystem {
 public:
  MultitaskSystem(const GraphSpec& spec, const RngStream& init);
  MultitaskSystem(GraphSpec spec, MlpParams trunk, MlpParams se_branch, MlpParams sr_branch);

  std::string kind() const override { return "multitask"; }
  std::size_t levels() const override { return 1; }
  std::vector<LevelMetrics> train_step(const Samples& batch, double eta,
                                       const RngStream& dropout) override;
  std::vector<LevelMetrics> evaluate(const Samples& data) const override;
  std::vector<Labels> decode(const Matrix& noisy) const override;
  const GraphSpec& graph_spec() const override { return spec_; }
  std::unique_ptr<TrainableSystem> clone() const override;
  Checkpoint checkpoint() const override;

 private:
  struct Pass {
    ForwardTrace trunk, se, sr;
  };
  Pass forward(const Matrix& noisy, Mode mode, const RngStream& rng) const;
  std::vector<LevelMetrics> metrics(const Pass& p, const Samples& batch) const;

  GraphSpec spec_;
  MlpParams trunk_, se_, sr_;
};

/// SE → SR cascade. SR steps on its own loss; SE steps on
/// (1−λ)·∂MSE + λ·∂(SR loss) back-propagated through SR.
class JointSeSrSystem final : public TrainableSystem {
 public:
  JointSeSrSystem(const GraphSpec& spec, const TrainConfig& config, const RngStream& init);
  JointSeSrSystem(GraphSpec spec, TrainConfig config, MlpParams se, MlpParams sr);

  std::string kind() const override { return "joint-se-sr"; }
  std::size_t levels() const override { return 1; }
  std::vector<LevelMetrics> train_step(const Samples& batch, double eta,
                                       const RngStream& dropout) override;
  std::vector<LevelMetrics> evaluate(const Samples& data) const override;
  std::vector<Labels> decode(const Matrix& noisy) const override;
  const GraphSpec& graph_spec() const override { return spec_; }
  std::unique_ptr<TrainableSystem> clone() const override;
  Checkpoint checkpoint() const override;

  const MlpParams& se() const { return se_; }
  const MlpParams& sr() const { return sr_; }

 private:
  GraphSpec spec_;
  TrainConfig config_;
  MlpParams se_, sr_;
};

/// Graph spec for a corpus and training config: level count and dropout
/// from the config, hidden layout from `hidden`.
GraphSpec make_graph_spec(std::size_t feat_dim, std::size_t n_mono, std::size_t n_cd,
                          const TrainConfig& config, std::vector<std::size_t> hidden,
                          bool residual = false, std::size_t ctx_in = 21, std::size_t ctx_out = 11);

/// Fresh system of the named kind. Parameters come from rng substreams
/// labelled by the kind, so different systems never share initial weights.
std::unique_ptr<TrainableSystem> make_system(const std::string& kind, const GraphSpec& spec,
                                             const TrainConfig& config, const RngStream& init);

/// Rebuild a trained system from its checkpoint.
std::unique_ptr<TrainableSystem> system_from_checkpoint(const Checkpoint& ckpt,
                                                        const TrainConfig& config);

}  // namespace ndnn
