#include "ndnn/systems.hpp"

#include <algorithm>

#include "ndnn/error.hpp"

namespace ndnn {

const std::vector<std::string>& system_names() {
  static const std::vector<std::string> names = {"single-dnn", "multitask", "joint-se-sr",
                                                 "netdnn", "netdnn-residual"};
  return names;
}

namespace {

constexpr std::size_t kEvalChunk = 2048;

MlpSpec single_spec(const GraphSpec& spec) {
  MlpSpec s = spec.sr_spec();
  s.heads = {{"cd", spec.n_cd, HeadKind::Softmax}};
  return s;
}

template <class F>
std::vector<LevelMetrics> evaluate_chunked(const Samples& data, F&& chunk_metrics) {
  NDNN_REQUIRE(!data.empty(), "evaluate: empty data");
  MetricAccumulator acc;
  for (std::size_t b = 0; b < data.size(); b += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, data.size() - b);
    Samples chunk = data.range(b, n);
    acc.add(chunk_metrics(chunk), n);
  }
  return acc.mean();
}

const MlpParams& find_network(const Checkpoint& c, const std::string& name) {
  for (const auto& n : c.networks)
    if (n.name == name) return n.params;
  throw FormatError("checkpoint for '" + c.system + "' has no network '" + name + "'");
}

}  // namespace

// ---- single DNN -----------------------------------------------------------

SingleDnnSystem::SingleDnnSystem(const GraphSpec& spec, const RngStream& init) : spec_(spec) {
  RngStream rng = init.split(0);
  net_ = build_mlp(single_spec(spec_), rng);
}

SingleDnnSystem::SingleDnnSystem(GraphSpec spec, MlpParams net)
    : spec_(std::move(spec)), net_(std::move(net)) {
  NDNN_REQUIRE(net_.spec == single_spec(spec_), "single-dnn: network does not match spec");
}

std::vector<LevelMetrics> SingleDnnSystem::train_step(const Samples& batch, double eta,
                                                      const RngStream& dropout) {
  RngStream rng = dropout.split(0);
  auto trace = mlp_forward(center_frames(batch.noisy, spec_), net_, Mode::Train, rng);
  const auto& logits = trace.logits[0];
  auto nll = softmax_nll(logits, batch.cd);
  auto back = mlp_backward({softmax_nll_grad(nll.probs, batch.cd)}, trace, net_, false);
  net_ = sgd_step(net_, back.grads, eta);
  commit_running_stats(net_, trace);

  LevelMetrics m;
  m.nll_cd = nll.loss;
  m.fer_cd = frame_error_rate(argmax_rows(logits), batch.cd);
  return {m};
}

std::vector<LevelMetrics> SingleDnnSystem::evaluate(const Samples& data) const {
  return evaluate_chunked(data, [&](const Samples& chunk) {
    RngStream unused(0);
    auto trace = mlp_forward(center_frames(chunk.noisy, spec_), net_, Mode::Eval, unused);
    LevelMetrics m;
    m.nll_cd = softmax_nll(trace.logits[0], chunk.cd).loss;
    m.fer_cd = frame_error_rate(argmax_rows(trace.logits[0]), chunk.cd);
    return std::vector<LevelMetrics>{m};
  });
}

std::vector<Labels> SingleDnnSystem::decode(const Matrix& noisy) const {
  RngStream unused(0);
  return {argmax_rows(mlp_forward(center_frames(noisy, spec_), net_, Mode::Eval, unused).logits[0])};
}

std::unique_ptr<TrainableSystem> SingleDnnSystem::clone() const {
  return std::make_unique<SingleDnnSystem>(*this);
}

Checkpoint SingleDnnSystem::checkpoint() const { return {kind(), spec_, {{"sr", net_}}}; }

// ---- multitask ------------------------------------------------------------

namespace {

struct MultitaskSpecs {
  MlpSpec trunk, se, sr;
};

MultitaskSpecs multitask_specs(const GraphSpec& spec) {
  const auto& h = spec.sr_hidden;
  NDNN_REQUIRE(h.size() >= 2, "multitask: needs at least two hidden layers to split");
  const std::size_t shared = (h.size() + 1) / 2;
  MultitaskSpecs s;
  s.trunk.input_dim = spec.noisy_dim();
  s.trunk.hidden_dims.assign(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(shared));
  s.trunk.dropout_rate = spec.sr_dropout;
  s.trunk.use_batchnorm = spec.use_batchnorm;

  s.se.input_dim = s.trunk.hidden_dims.back();
  s.se.hidden_dims.assign(h.begin() + static_cast<std::ptrdiff_t>(shared), h.end());
  s.se.dropout_rate = spec.sr_dropout;
  s.se.use_batchnorm = spec.use_batchnorm;
  s.sr = s.se;
  s.se.heads = {{"enh", spec.enhanced_dim(), HeadKind::Linear}};
  s.sr.heads = {{"cd", spec.n_cd, HeadKind::Softmax}};
  return s;
}

}  // namespace

MultitaskSystem::MultitaskSystem(const GraphSpec& spec, const RngStream& init) : spec_(spec) {
  auto s = multitask_specs(spec_);
  RngStream r0 = init.split(0), r1 = init.split(1), r2 = init.split(2);
  trunk_ = build_mlp(s.trunk, r0);
  se_ = build_mlp(s.se, r1);
  sr_ = build_mlp(s.sr, r2);
}

MultitaskSystem::MultitaskSystem(GraphSpec spec, MlpParams trunk, MlpParams se, MlpParams sr)
    : spec_(std::move(spec)), trunk_(std::move(trunk)), se_(std::move(se)), sr_(std::move(sr)) {
  auto s = multitask_specs(spec_);
  NDNN_REQUIRE(trunk_.spec == s.trunk && se_.spec == s.se && sr_.spec == s.sr,
               "multitask: networks do not match spec");
}

MultitaskSystem::Pass MultitaskSystem::forward(const Matrix& noisy, Mode mode,
                                               const RngStream& rng) const {
  RngStream r0 = rng.split(0), r1 = rng.split(1), r2 = rng.split(2);
  Pass p;
  p.trunk = mlp_forward(noisy, trunk_, mode, r0);
  p.se = mlp_forward(p.trunk.outputs[0], se_, mode, r1);
  p.sr = mlp_forward(p.trunk.outputs[0], sr_, mode, r2);
  return p;
}

std::vector<LevelMetrics> MultitaskSystem::metrics(const Pass& p, const Samples& batch) const {
  LevelMetrics m;
  m.mse = mse(p.se.outputs[0], batch.clean);
  m.nll_cd = softmax_nll(p.sr.logits[0], batch.cd).loss;
  m.fer_cd = frame_error_rate(argmax_rows(p.sr.logits[0]), batch.cd);
  return {m};
}

std::vector<LevelMetrics> MultitaskSystem::train_step(const Samples& batch, double eta,
                                                      const RngStream& dropout) {
  Pass p = forward(batch.noisy, Mode::Train, dropout);
  auto m = metrics(p, batch);
  auto se_b = mlp_backward({mse_grad(p.se.outputs[0], batch.clean)}, p.se, se_);
  auto sr_b = mlp_backward({softmax_nll_grad(p.sr.outputs[0], batch.cd)}, p.sr, sr_);
  auto trunk_b = mlp_backward({se_b.input_grad + sr_b.input_grad}, p.trunk, trunk_, false);
  trunk_ = sgd_step(trunk_, trunk_b.grads, eta);
  se_ = sgd_step(se_, se_b.grads, eta);
  sr_ = sgd_step(sr_, sr_b.grads, eta);
  commit_running_stats(trunk_, p.trunk);
  commit_running_stats(se_, p.se);
  commit_running_stats(sr_, p.sr);
  return m;
}

std::vector<LevelMetrics> MultitaskSystem::evaluate(const Samples& data) const {
  return evaluate_chunked(data, [&](const Samples& chunk) {
    return metrics(forward(chunk.noisy, Mode::Eval, RngStream(0)), chunk);
  });
}

std::vector<Labels> MultitaskSystem::decode(const Matrix& noisy) const {
  return {argmax_rows(forward(noisy, Mode::Eval, RngStream(0)).sr.logits[0])};
}

std::unique_ptr<TrainableSystem> MultitaskSystem::clone() const {
  return std::make_unique<MultitaskSystem>(*this);
}

Checkpoint MultitaskSystem::checkpoint() const {
  return {kind(), spec_, {{"trunk", trunk_}, {"se_branch", se_}, {"sr_branch", sr_}}};
}

// ---- joint SE-SR ----------------------------------------------------------

JointSeSrSystem::JointSeSrSystem(const GraphSpec& spec, const TrainConfig& config,
                                 const RngStream& init)
    : spec_(spec), config_(config) {
  RngStream r0 = init.split(0), r1 = init.split(1);
  se_ = build_mlp(spec_.se_spec(0), r0);
  sr_ = build_mlp(spec_.sr_spec(), r1);
}

JointSeSrSystem::JointSeSrSystem(GraphSpec spec, TrainConfig config, MlpParams se, MlpParams sr)
    : spec_(std::move(spec)), config_(config), se_(std::move(se)), sr_(std::move(sr)) {
  NDNN_REQUIRE(se_.spec == spec_.se_spec(0) && sr_.spec == spec_.sr_spec(),
               "joint-se-sr: networks do not match spec");
}

std::vector<LevelMetrics> JointSeSrSystem::train_step(const Samples& batch, double eta,
                                                      const RngStream& dropout) {
  RngStream r0 = dropout.split(0), r1 = dropout.split(1);
  auto se_t = mlp_forward(batch.noisy, se_, Mode::Train, r0);
  const Matrix& enhanced = se_t.outputs[0];
  auto sr_t = mlp_forward(enhanced, sr_, Mode::Train, r1);

  LevelMetrics m;
  m.mse = mse(enhanced, batch.clean);
  m.nll_cd = softmax_nll(sr_t.logits[kCdHead], batch.cd).loss;
  m.nll_mono = softmax_nll(sr_t.logits[kMonoHead], batch.mono).loss;
  m.fer_cd = frame_error_rate(argmax_rows(sr_t.logits[kCdHead]), batch.cd);
  m.fer_mono = frame_error_rate(argmax_rows(sr_t.logits[kMonoHead]), batch.mono);

  auto sr_b = mlp_backward({softmax_nll_grad(sr_t.outputs[kCdHead], batch.cd),
                            config_.mono_loss_weight *
                                softmax_nll_grad(sr_t.outputs[kMonoHead], batch.mono)},
                           sr_t, sr_);
  // The SE backward is linear in its head gradient, so one pass gives
  // (1−λ)·∂MSE/∂θ + λ·∂(SR loss)/∂θ.
  const double lambda = config_.lambda;
  Matrix se_head = (1.0 - lambda) * mse_grad(enhanced, batch.clean);
  axpy(se_head, lambda, sr_b.input_grad);
  auto se_b = mlp_backward({se_head}, se_t, se_, false);

  se_ = sgd_step(se_, se_b.grads, eta);
  sr_ = sgd_step(sr_, sr_b.grads, eta);
  commit_running_stats(se_, se_t);
  commit_running_stats(sr_, sr_t);
  return {m};
}

std::vector<LevelMetrics> JointSeSrSystem::evaluate(const Samples& data) const {
  return evaluate_chunked(data, [&](const Samples& chunk) {
    RngStream unused(0);
    auto se_t = mlp_forward(chunk.noisy, se_, Mode::Eval, unused);
    auto sr_t = mlp_forward(se_t.outputs[0], sr_, Mode::Eval, unused);
    LevelMetrics m;
    m.mse = mse(se_t.outputs[0], chunk.clean);
    m.nll_cd = softmax_nll(sr_t.logits[kCdHead], chunk.cd).loss;
    m.nll_mono = softmax_nll(sr_t.logits[kMonoHead], chunk.mono).loss;
    m.fer_cd = frame_error_rate(argmax_rows(sr_t.logits[kCdHead]), chunk.cd);
    m.fer_mono = frame_error_rate(argmax_rows(sr_t.logits[kMonoHead]), chunk.mono);
    return std::vector<LevelMetrics>{m};
  });
}

std::vector<Labels> JointSeSrSystem::decode(const Matrix& noisy) const {
  RngStream unused(0);
  auto se_t = mlp_forward(noisy, se_, Mode::Eval, unused);
  return {argmax_rows(mlp_forward(se_t.outputs[0], sr_, Mode::Eval, unused).logits[kCdHead])};
}

std::unique_ptr<TrainableSystem> JointSeSrSystem::clone() const {
  return std::make_unique<JointSeSrSystem>(*this);
}

Checkpoint JointSeSrSystem::checkpoint() const {
  return {kind(), spec_, {{"se", se_}, {"sr", sr_}}};
}

// ---- factories ------------------------------------------------------------

GraphSpec make_graph_spec(std::size_t feat_dim, std::size_t n_mono, std::size_t n_cd,
                          const TrainConfig& config, std::vector<std::size_t> hidden,
                          bool residual, std::size_t ctx_in, std::size_t ctx_out) {
  GraphSpec s;
  s.levels = config.levels;
  s.feat_dim = feat_dim;
  s.ctx_in = ctx_in;
  s.ctx_out = ctx_out;
  s.n_mono = n_mono;
  s.n_cd = n_cd;
  s.se_hidden = hidden;
  s.sr_hidden = std::move(hidden);
  s.se_dropout = config.dropout;
  s.sr_dropout = config.dropout;
  s.residual = residual;
  s.validate();
  return s;
}

std::unique_ptr<TrainableSystem> make_system(const std::string& kind, const GraphSpec& spec,
                                             const TrainConfig& config, const RngStream& init) {
  const RngStream rng = init.substream(kind);
  if (kind == "single-dnn") return std::make_unique<SingleDnnSystem>(spec, rng);
  if (kind == "multitask") return std::make_unique<MultitaskSystem>(spec, rng);
  if (kind == "joint-se-sr") return std::make_unique<JointSeSrSystem>(spec, config, rng);
  if (kind == "netdnn" || kind == "netdnn-residual") {
    GraphSpec g = spec;
    g.residual = kind == "netdnn-residual";
    return std::make_unique<GraphSystem>(assemble_graph(g, rng), config);
  }
  throw UsageError("unknown system '" + kind + "'");
}

std::unique_ptr<TrainableSystem> system_from_checkpoint(const Checkpoint& c,
                                                        const TrainConfig& config) {
  if (c.system == "single-dnn")
    return std::make_unique<SingleDnnSystem>(c.spec, find_network(c, "sr"));
  if (c.system == "multitask")
    return std::make_unique<MultitaskSystem>(c.spec, find_network(c, "trunk"),
                                             find_network(c, "se_branch"),
                                             find_network(c, "sr_branch"));
  if (c.system == "joint-se-sr")
    return std::make_unique<JointSeSrSystem>(c.spec, config, find_network(c, "se"),
                                             find_network(c, "sr"));
  if (c.system == "netdnn" || c.system == "netdnn-residual") {
    GraphParams p;
    p.spec = c.spec;
    if (p.spec.residual != (c.system == "netdnn-residual"))
      throw FormatError("checkpoint: residual flag disagrees with system name");
    for (std::size_t l = 0; l < c.spec.levels; ++l) {
      p.se.push_back(find_network(c, "se" + std::to_string(l)));
      p.sr.push_back(find_network(c, "sr" + std::to_string(l)));
      if (p.se.back().spec != c.spec.se_spec(l) || p.sr.back().spec != c.spec.sr_spec())
        throw FormatError("checkpoint: network shapes disagree with graph spec at level " +
                          std::to_string(l));
    }
    TrainConfig cfg = config;
    cfg.levels = c.spec.levels;
    return std::make_unique<GraphSystem>(std::move(p), cfg);
  }
  throw FormatError("checkpoint: unknown system '" + c.system + "'");
}

}  // namespace ndnn
