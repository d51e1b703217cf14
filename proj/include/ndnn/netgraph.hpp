#pragma once

#include <optional>
#include <vector>

#include "ndnn/mlp.hpp"

namespace ndnn {

/// Wiring of the unrolled speech-enhancement / speech-recognition network.
///
/// Level 0: SE_0 sees the noisy context window, SR_0 sees its central
/// ctx_out frames. Level ℓ ≥ 1: SR_ℓ sees the enhanced output of SE_{ℓ-1};
/// SE_ℓ sees the noisy window concatenated with SR_{ℓ-1}'s monophone
/// posteriors. In residual mode SE_ℓ (ℓ ≥ 1) predicts a correction R̂_ℓ and
/// the enhanced output is x̂_ℓ = x̂_{ℓ-1} − R̂_ℓ.
struct GraphSpec {
  std::size_t levels = 3;
  std::size_t feat_dim = 13;
  std::size_t ctx_in = 21;
  std::size_t ctx_out = 11;
  std::size_t n_mono = 10;
  std::size_t n_cd = 30;
  std::vector<std::size_t> se_hidden{128, 128, 128};
  std::vector<std::size_t> sr_hidden{128, 128, 128};
  double se_dropout = 0.2;
  double sr_dropout = 0.2;
  bool use_batchnorm = true;
  bool residual = false;

  void validate() const;

  std::size_t noisy_dim() const { return ctx_in * feat_dim; }
  std::size_t enhanced_dim() const { return ctx_out * feat_dim; }
  std::size_t se_input_dim(std::size_t level) const {
    return noisy_dim() + (level == 0 ? 0 : n_mono);
  }
  /// Column offset of the central ctx_out frames inside a noisy window.
  std::size_t center_offset() const { return (ctx_in - ctx_out) / 2 * feat_dim; }

  MlpSpec se_spec(std::size_t level) const;
  MlpSpec sr_spec() const;

  bool operator==(const GraphSpec&) const = default;
};

/// Head indices of an SR network.
inline constexpr std::size_t kCdHead = 0;
inline constexpr std::size_t kMonoHead = 1;

struct GraphParams {
  GraphSpec spec;
  std::vector<MlpParams> se;
  std::vector<MlpParams> sr;

  std::size_t levels() const { return se.size(); }
};

/// Builds all 2L networks with independent parameters. Network k draws its
/// weights from rng.split(k), with SE_ℓ = 2ℓ and SR_ℓ = 2ℓ + 1.
GraphParams assemble_graph(const GraphSpec& spec, const RngStream& rng);

/// Index of a network's child RNG stream (init and per-batch dropout).
inline std::uint64_t se_stream(std::size_t level) { return 2 * level; }
inline std::uint64_t sr_stream(std::size_t level) { return 2 * level + 1; }

struct GraphTrace {
  Mode mode = Mode::Eval;
  std::size_t batch = 0;
  std::vector<ForwardTrace> se;
  std::vector<ForwardTrace> sr;
  // x̂_{SE_ℓ}: [N × ctx_out·D]
  std::vector<Matrix> enhanced;

  const Matrix& se_head(std::size_t level) const { return se.at(level).outputs.at(0); }
  const Matrix& cd_probs(std::size_t level) const { return sr.at(level).outputs.at(kCdHead); }
  const Matrix& mono_probs(std::size_t level) const {
    return sr.at(level).outputs.at(kMonoHead);
  }
  std::size_t levels() const { return se.size(); }
};

/// Central ctx_out frames of each noisy window.
Matrix center_frames(const Matrix& noisy_ctx, const GraphSpec& spec);

/// Forward pass through every level. `rng` is the per-minibatch dropout
/// stream; network k uses rng.split(k).
GraphTrace graph_forward(const Matrix& noisy_ctx, const GraphParams& params, Mode mode,
                         const RngStream& rng);

/// ŷ^mono_{SR_ℓ}
const Matrix& monophone_posteriors(const GraphTrace& trace, std::size_t level);

/// Argmax of the context-dependent head at `level`, ties to the lowest class.
Labels decode(const GraphTrace& trace, std::size_t level);

/// Copies batch-norm running statistics from a train-mode trace into params.
void commit_running_stats(GraphParams& params, const GraphTrace& trace);

// ---- reverse sweep --------------------------------------------------------

/// Gradient seed for one loss at one level.
struct LossSeed {
  enum class Kind { Enhancement, Recognition } kind = Kind::Enhancement;
  std::size_t level = 0;
  Matrix d_enhanced;  // Enhancement: ∂loss/∂x̂_ℓ
  Matrix d_cd;        // Recognition: ∂loss/∂(cd logits)
  Matrix d_mono;      // Recognition: ∂loss/∂(mono logits)
};

/// Gradients of one seeded loss with respect to every network it reaches.
struct SweepResult {
  std::vector<std::optional<MlpParams>> se;
  std::vector<std::optional<MlpParams>> sr;
};

/// Back-propagates a loss seeded at `seed.level` through the graph, stopping
/// at networks below `lowest_level`. lowest_level == seed.level yields the
/// loss's own-network gradient; seed.level − 1 adds one level of cross
/// gradients; 0 back-propagates through every connected lower-level network.
SweepResult reverse_sweep(const GraphTrace& trace, const GraphParams& params,
                          const LossSeed& seed, std::size_t lowest_level);

}  // namespace ndnn
