#include "ndnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "ndnn/error.hpp"

namespace ndnn {

void TrainConfig::validate() const {
  NDNN_REQUIRE(eta0 > 0.0, "TrainConfig: eta0 must be > 0");
  NDNN_REQUIRE(lambda >= 0.0 && lambda <= 1.0, "TrainConfig: lambda must be in [0,1]");
  NDNN_REQUIRE(batch_size >= 2, "TrainConfig: batch_size must be >= 2 (batch norm)");
  NDNN_REQUIRE(levels >= 1, "TrainConfig: levels must be >= 1");
  NDNN_REQUIRE(dropout >= 0.0 && dropout < 1.0, "TrainConfig: dropout must be in [0,1)");
  NDNN_REQUIRE(patience >= 1, "TrainConfig: patience must be >= 1");
  NDNN_REQUIRE(max_epochs >= 1, "TrainConfig: max_epochs must be >= 1");
  NDNN_REQUIRE(mono_loss_weight >= 0.0, "TrainConfig: mono_loss_weight must be >= 0");
  NDNN_REQUIRE(lr_halving_threshold >= 0.0, "TrainConfig: lr_halving_threshold must be >= 0");
}

// ---- Samples --------------------------------------------------------------

Samples Samples::gather(std::span<const std::size_t> idx) const {
  Samples s;
  s.noisy = Matrix(idx.size(), noisy.cols());
  s.clean = Matrix(idx.size(), clean.cols());
  s.cd.resize(idx.size());
  s.mono.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::size_t r = idx[i];
    NDNN_REQUIRE(r < size(), "Samples::gather: index out of range");
    std::copy(noisy.row(r).begin(), noisy.row(r).end(), s.noisy.row(i).begin());
    std::copy(clean.row(r).begin(), clean.row(r).end(), s.clean.row(i).begin());
    s.cd[i] = cd[r];
    s.mono[i] = mono[r];
  }
  return s;
}

Samples Samples::range(std::size_t begin, std::size_t count) const {
  NDNN_REQUIRE(begin + count <= size(), "Samples::range: out of range");
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), begin);
  return gather(idx);
}

// ---- losses and gradients -------------------------------------------------

LevelLosses compute_losses(const GraphTrace& trace, const Targets& targets) {
  LevelLosses out;
  for (std::size_t l = 0; l < trace.levels(); ++l) {
    out.mse.push_back(mse(trace.enhanced[l], targets.clean));
    out.nll_cd.push_back(softmax_nll(trace.sr[l].logits[kCdHead], targets.cd).loss);
    out.nll_mono.push_back(softmax_nll(trace.sr[l].logits[kMonoHead], targets.mono).loss);
  }
  return out;
}

namespace {

LossSeed enhancement_seed(const GraphTrace& trace, const Targets& targets, std::size_t level) {
  LossSeed s;
  s.kind = LossSeed::Kind::Enhancement;
  s.level = level;
  s.d_enhanced = mse_grad(trace.enhanced[level], targets.clean);
  return s;
}

LossSeed recognition_seed(const GraphTrace& trace, const Targets& targets, std::size_t level,
                          double alpha) {
  LossSeed s;
  s.kind = LossSeed::Kind::Recognition;
  s.level = level;
  s.d_cd = softmax_nll_grad(trace.cd_probs(level), targets.cd);
  s.d_mono = alpha * softmax_nll_grad(trace.mono_probs(level), targets.mono);
  return s;
}

void accumulate_into(std::optional<MlpParams>& acc, const std::optional<MlpParams>& g) {
  if (!g) return;
  if (!acc) {
    acc = *g;
  } else {
    accumulate(*acc, 1.0, *g);
  }
}

}  // namespace

GradientSet backprop_through_network(const GraphTrace& trace, const Targets& targets,
                                     const GraphParams& params, const TrainConfig& config) {
  const std::size_t L = trace.levels();
  NDNN_REQUIRE(L == params.levels(), "backprop_through_network: trace/params level mismatch");
  NDNN_REQUIRE(targets.clean.rows() == trace.batch && targets.cd.size() == trace.batch &&
                   targets.mono.size() == trace.batch,
               "backprop_through_network: targets do not match the traced batch");

  GradientSet g;
  g.own_se.resize(L);
  g.own_sr.resize(L);
  g.cross_se.resize(L);
  g.cross_sr.resize(L);

  for (std::size_t l = 0; l < L; ++l) {
    std::size_t lowest = l;
    if (l >= 1) lowest = config.deep_cross_grads ? 0 : l - 1;

    auto enh = reverse_sweep(trace, params, enhancement_seed(trace, targets, l), lowest);
    auto rec = reverse_sweep(
        trace, params, recognition_seed(trace, targets, l, config.mono_loss_weight), lowest);

    g.own_se[l] = std::move(*enh.se[l]);
    g.own_sr[l] = std::move(*rec.sr[l]);
    for (std::size_t k = lowest; k < l; ++k) {
      accumulate_into(g.cross_se[k], enh.se[k]);
      accumulate_into(g.cross_se[k], rec.se[k]);
      accumulate_into(g.cross_sr[k], enh.sr[k]);
      accumulate_into(g.cross_sr[k], rec.sr[k]);
    }
  }
  return g;
}

namespace {

MlpParams step_network(const MlpParams& p, const MlpParams& own,
                       const std::optional<MlpParams>& cross, double eta, double own_weight,
                       double cross_weight) {
  MlpParams next = p;
  accumulate(next, -eta * own_weight, own);
  if (cross && cross_weight != 0.0) accumulate(next, -eta * cross_weight, *cross);
  return next;
}

}  // namespace

GraphParams apply_updates(const GraphParams& params, const GradientSet& grads, double eta,
                          double lambda, TopLevelScale top) {
  const std::size_t L = params.levels();
  NDNN_REQUIRE(grads.own_se.size() == L && grads.own_sr.size() == L,
               "apply_updates: gradient set does not match parameters");
  NDNN_REQUIRE(lambda >= 0.0 && lambda <= 1.0, "apply_updates: lambda must be in [0,1]");
  GraphParams next;
  next.spec = params.spec;
  for (std::size_t l = 0; l < L; ++l) {
    const bool is_top = l + 1 == L;
    const double own_w =
        is_top ? (top == TopLevelScale::One ? 1.0 : 1.0 - lambda) : 1.0 - lambda;
    const double cross_w = is_top ? 0.0 : lambda;
    if (!is_top)
      NDNN_REQUIRE(grads.cross_se[l] && grads.cross_sr[l],
                   "apply_updates: missing cross gradient at level " + std::to_string(l));
    next.se.push_back(
        step_network(params.se[l], grads.own_se[l], grads.cross_se[l], eta, own_w, cross_w));
    next.sr.push_back(
        step_network(params.sr[l], grads.own_sr[l], grads.cross_sr[l], eta, own_w, cross_w));
  }
  return next;
}

// ---- metrics --------------------------------------------------------------

double frame_error_rate(const Labels& predicted, const Labels& truth) {
  NDNN_REQUIRE(predicted.size() == truth.size(), "frame_error_rate: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) wrong += predicted[i] != truth[i];
  return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

void MetricAccumulator::add(const std::vector<LevelMetrics>& batch, std::size_t n) {
  const double w = static_cast<double>(n);
  if (sum_.empty()) {
    sum_.resize(batch.size());
    for (std::size_t l = 0; l < batch.size(); ++l) {
      if (batch[l].mse) sum_[l].mse = 0.0;
      if (batch[l].nll_mono) sum_[l].nll_mono = 0.0;
      if (batch[l].fer_mono) sum_[l].fer_mono = 0.0;
    }
  }
  NDNN_REQUIRE(batch.size() == sum_.size(), "MetricAccumulator: level count changed");
  for (std::size_t l = 0; l < batch.size(); ++l) {
    auto& s = sum_[l];
    const auto& b = batch[l];
    if (s.mse && b.mse) *s.mse += w * *b.mse;
    s.nll_cd += w * b.nll_cd;
    if (s.nll_mono && b.nll_mono) *s.nll_mono += w * *b.nll_mono;
    s.fer_cd += w * b.fer_cd;
    if (s.fer_mono && b.fer_mono) *s.fer_mono += w * *b.fer_mono;
  }
  count_ += n;
}

std::vector<LevelMetrics> MetricAccumulator::mean() const {
  std::vector<LevelMetrics> m = sum_;
  if (count_ == 0) return m;
  const double inv = 1.0 / static_cast<double>(count_);
  for (auto& l : m) {
    if (l.mse) *l.mse *= inv;
    l.nll_cd *= inv;
    if (l.nll_mono) *l.nll_mono *= inv;
    l.fer_cd *= inv;
    if (l.fer_mono) *l.fer_mono *= inv;
  }
  return m;
}

std::vector<LevelMetrics> graph_metrics(const GraphTrace& trace, const Samples& batch) {
  auto losses = compute_losses(trace, targets_of(batch));
  std::vector<LevelMetrics> m(trace.levels());
  for (std::size_t l = 0; l < trace.levels(); ++l) {
    m[l].mse = losses.mse[l];
    m[l].nll_cd = losses.nll_cd[l];
    m[l].nll_mono = losses.nll_mono[l];
    m[l].fer_cd = frame_error_rate(decode(trace, l), batch.cd);
    m[l].fer_mono = frame_error_rate(argmax_rows(trace.sr[l].logits[kMonoHead]), batch.mono);
  }
  return m;
}

// ---- GraphSystem ----------------------------------------------------------

GraphSystem::GraphSystem(GraphParams params, TrainConfig config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
}

std::string GraphSystem::kind() const {
  return params_.spec.residual ? "netdnn-residual" : "netdnn";
}

std::vector<LevelMetrics> GraphSystem::train_step(const Samples& batch, double eta,
                                                  const RngStream& dropout) {
  GraphTrace trace = graph_forward(batch.noisy, params_, Mode::Train, dropout);
  GradientSet grads = backprop_through_network(trace, targets_of(batch), params_, config_);
  auto metrics = graph_metrics(trace, batch);
  params_ = apply_updates(params_, grads, eta, config_.lambda, config_.top_level_scale);
  commit_running_stats(params_, trace);
  return metrics;
}

namespace {
constexpr std::size_t kEvalChunk = 2048;
}

std::vector<LevelMetrics> GraphSystem::evaluate(const Samples& data) const {
  NDNN_REQUIRE(!data.empty(), "evaluate: empty data");
  MetricAccumulator acc;
  const RngStream unused(0);
  for (std::size_t b = 0; b < data.size(); b += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, data.size() - b);
    Samples chunk = data.range(b, n);
    auto trace = graph_forward(chunk.noisy, params_, Mode::Eval, unused);
    acc.add(graph_metrics(trace, chunk), n);
  }
  return acc.mean();
}

std::vector<Labels> GraphSystem::decode(const Matrix& noisy) const {
  auto trace = graph_forward(noisy, params_, Mode::Eval, RngStream(0));
  std::vector<Labels> out;
  for (std::size_t l = 0; l < trace.levels(); ++l) out.push_back(ndnn::decode(trace, l));
  return out;
}

std::unique_ptr<TrainableSystem> GraphSystem::clone() const {
  return std::make_unique<GraphSystem>(*this);
}

Checkpoint GraphSystem::checkpoint() const {
  Checkpoint c;
  c.system = kind();
  c.spec = params_.spec;
  for (std::size_t l = 0; l < params_.levels(); ++l) {
    c.networks.push_back({"se" + std::to_string(l), params_.se[l]});
    c.networks.push_back({"sr" + std::to_string(l), params_.sr[l]});
  }
  return c;
}

// ---- schedule -------------------------------------------------------------

LrSchedule::LrSchedule(double eta0, double halving_threshold, std::size_t patience)
    : eta_(eta0), threshold_(halving_threshold), patience_(patience), best_(0.0) {
  NDNN_REQUIRE(eta0 > 0.0, "LrSchedule: eta0 must be > 0");
  NDNN_REQUIRE(patience >= 1, "LrSchedule: patience must be >= 1");
}

LrSchedule::Decision LrSchedule::observe(double dev_fer) {
  Decision d;
  ++epochs_;
  if (epochs_ == 1) {
    best_ = dev_fer;
    d.improved = true;
  } else {
    const double rel = best_ > 0.0 ? (best_ - dev_fer) / best_ : 0.0;
    d.improved = dev_fer < best_;
    if (d.improved) {
      best_ = dev_fer;
      since_best_ = 0;
    } else {
      ++since_best_;
    }
    if (rel < threshold_) {
      eta_ *= 0.5;
      d.halved = true;
    }
  }
  d.stop = since_best_ >= patience_;
  d.next_eta = eta_;
  return d;
}

// ---- training loop --------------------------------------------------------

TrainResult train_loop(const Samples& train, const Samples& dev, TrainableSystem& system,
                       const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  NDNN_REQUIRE(!train.empty(), "train_loop: empty train split");
  NDNN_REQUIRE(!dev.empty(), "train_loop: empty dev split");

  const RngStream root(config.seed);
  const RngStream shuffle_root = root.substream("shuffle");
  const RngStream dropout_root = root.substream("dropout");

  LrSchedule schedule(config.eta0, config.lr_halving_threshold, config.patience);
  TrainResult result;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    RngStream shuffle = shuffle_root.split(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    const RngStream epoch_dropout = dropout_root.split(epoch);
    MetricAccumulator acc;
    const double eta = schedule.eta();
    std::size_t batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - b);
      if (n < 2) break;
      Samples batch = train.gather(std::span<const std::size_t>(order).subspan(b, n));
      acc.add(system.train_step(batch, eta, epoch_dropout.split(batch_index++)), n);
    }

    EpochReport rep;
    rep.epoch = epoch;
    rep.eta = eta;
    rep.train = acc.mean();
    rep.dev = system.evaluate(dev);
    rep.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    auto decision = schedule.observe(rep.dev_fer());
    if (decision.improved) {
      result.best = system.clone();
      result.best_epoch = epoch;
    }
    result.reports.push_back(rep);
    if (on_epoch) on_epoch(rep, system, decision.improved);
    if (decision.stop) break;
  }
  return result;
}

std::string epoch_csv_header() { return "epoch,eta,split,level,mse,nll_cd,nll_mono,fer,seconds"; }

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

std::string epoch_csv_rows(const EpochReport& r) {
  std::ostringstream os;
  auto emit = [&](const char* split, const std::vector<LevelMetrics>& ms) {
    for (std::size_t l = 0; l < ms.size(); ++l) {
      const auto& m = ms[l];
      os << r.epoch << ',' << fmt(r.eta) << ',' << split << ',' << l << ',' << fmt(m.mse) << ','
         << fmt(m.nll_cd) << ',' << fmt(m.nll_mono) << ',' << fmt(m.fer_cd) << ','
         << fmt(r.seconds) << '\n';
    }
  };
  emit("train", r.train);
  emit("dev", r.dev);
  return os.str();
}

// ---- gradient check -------------------------------------------------------

GraphSpec tiny_graph_spec(std::size_t levels, bool residual) {
  GraphSpec s;
  s.levels = levels;
  s.feat_dim = 2;
  s.ctx_in = 5;
  s.ctx_out = 3;
  s.n_mono = 3;
  s.n_cd = 6;
  s.se_hidden = {4};
  s.sr_hidden = {4};
  s.se_dropout = 0.2;
  s.sr_dropout = 0.2;
  s.residual = residual;
  return s;
}

namespace {

std::vector<std::uint8_t> relu_signature(const GraphTrace& t) {
  std::vector<std::uint8_t> sig;
  auto add = [&](const ForwardTrace& f) {
    for (const auto& h : f.hidden)
      for (double v : h.relu.x.values()) sig.push_back(v > 0.0);
  };
  for (const auto& f : t.se) add(f);
  for (const auto& f : t.sr) add(f);
  return sig;
}

void jitter(MlpParams& p, RngStream& rng) {
  for_each_tensor(p, [&](const std::string& name, std::span<double> d, bool trainable) {
    if (!trainable) return;
    const bool is_weight = name.ends_with(".W");
    for (auto& v : d)
      if (!is_weight) v += 0.1 * rng.normal();
  });
}

struct Term {
  std::string label;
  bool se = true;
  std::size_t level = 0;
  const MlpParams* analytic = nullptr;
  std::function<double(const LevelLosses&)> loss;
};

}  // namespace

GradCheckReport grad_check(const GraphSpec& spec, const TrainConfig& config,
                           const GradCheckOptions& options) {
  spec.validate();
  const RngStream root(config.seed);
  RngStream init = root.substream("init");
  GraphParams params = assemble_graph(spec, init);
  RngStream jit = root.substream("jitter");
  for (auto& p : params.se) jitter(p, jit);
  for (auto& p : params.sr) jitter(p, jit);

  RngStream data = root.substream("data");
  Samples batch;
  batch.noisy = gaussian(data, 0.0, 1.0, options.batch, spec.noisy_dim());
  batch.clean = gaussian(data, 0.0, 1.0, options.batch, spec.enhanced_dim());
  for (std::size_t i = 0; i < options.batch; ++i) {
    batch.cd.push_back(static_cast<std::uint32_t>(data.below(spec.n_cd)));
    batch.mono.push_back(static_cast<std::uint32_t>(data.below(spec.n_mono)));
  }
  const Targets targets = targets_of(batch);
  const RngStream dropout = root.substream("dropout");
  const double alpha = config.mono_loss_weight;

  GraphTrace base = graph_forward(batch.noisy, params, Mode::Train, dropout);
  const auto base_sig = relu_signature(base);
  GradientSet grads = backprop_through_network(base, targets, params, config);
  if (options.corrupt) options.corrupt(grads);

  const std::size_t L = spec.levels;
  auto total = [alpha](const LevelLosses& l, std::size_t k) {
    return l.mse[k] + l.nll_cd[k] + alpha * l.nll_mono[k];
  };

  std::vector<Term> terms;
  for (std::size_t l = 0; l < L; ++l) {
    terms.push_back({"own SE_" + std::to_string(l), true, l, &grads.own_se[l],
                     [l](const LevelLosses& x) { return x.mse[l]; }});
    terms.push_back({"own SR_" + std::to_string(l), false, l, &grads.own_sr[l],
                     [l, alpha](const LevelLosses& x) {
                       return x.nll_cd[l] + alpha * x.nll_mono[l];
                     }});
  }
  for (std::size_t k = 0; k + 1 < L; ++k) {
    const std::size_t hi = config.deep_cross_grads ? L : k + 2;
    auto cross_loss = [k, hi, total](const LevelLosses& x) {
      double s = 0.0;
      for (std::size_t l = k + 1; l < hi; ++l) s += total(x, l);
      return s;
    };
    NDNN_REQUIRE(grads.cross_se[k] && grads.cross_sr[k],
                 "grad_check: missing cross gradient at level " + std::to_string(k));
    terms.push_back({"cross SE_" + std::to_string(k), true, k, &*grads.cross_se[k], cross_loss});
    terms.push_back({"cross SR_" + std::to_string(k), false, k, &*grads.cross_sr[k], cross_loss});
  }

  // Gradients whose true value is exactly zero (dense biases feeding batch
  // norm) show finite-difference round-off near 1e-10; the floor keeps that
  // noise from reading as relative error.
  constexpr double kFloor = 1e-5;
  GradCheckReport report;
  report.tolerance = options.tolerance;

  for (const auto& term : terms) {
    MlpParams& net = term.se ? params.se[term.level] : params.sr[term.level];
    std::vector<std::pair<std::string, std::span<double>>> live;
    for_each_tensor(net, [&](const std::string& name, std::span<double> d, bool trainable) {
      if (trainable) live.emplace_back(name, d);
    });
    std::vector<std::span<const double>> analytic;
    for_each_tensor(*term.analytic,
                    [&](const std::string&, std::span<const double> d, bool trainable) {
                      if (trainable) analytic.push_back(d);
                    });
    NDNN_REQUIRE(analytic.size() == live.size(), "grad_check: gradient layout mismatch");

    for (std::size_t t = 0; t < live.size(); ++t) {
      GradCheckEntry e;
      e.term = term.label;
      e.tensor = live[t].first;
      auto values = live[t].second;
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + options.step;
        auto tp = graph_forward(batch.noisy, params, Mode::Train, dropout);
        values[i] = saved - options.step;
        auto tm = graph_forward(batch.noisy, params, Mode::Train, dropout);
        values[i] = saved;
        if (relu_signature(tp) != base_sig || relu_signature(tm) != base_sig) {
          ++e.skipped;
          continue;
        }
        const double numeric =
            (term.loss(compute_losses(tp, targets)) - term.loss(compute_losses(tm, targets))) /
            (2.0 * options.step);
        const double a = analytic[t][i];
        const double rel =
            std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kFloor});
        e.max_rel_err = std::max(e.max_rel_err, rel);
        ++e.checked;
      }
      report.max_rel_err = std::max(report.max_rel_err, e.max_rel_err);
      report.entries.push_back(std::move(e));
    }
  }
  report.pass = report.max_rel_err < options.tolerance;
  return report;
}

}  // namespace ndnn
