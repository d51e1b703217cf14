#include "ndnn/netgraph.hpp"

#include "ndnn/error.hpp"

namespace ndnn {

void GraphSpec::validate() const {
  NDNN_REQUIRE(levels >= 1, "GraphSpec: levels must be >= 1");
  NDNN_REQUIRE(feat_dim >= 1, "GraphSpec: feat_dim must be >= 1");
  NDNN_REQUIRE(ctx_in % 2 == 1 && ctx_out % 2 == 1, "GraphSpec: ctx_in and ctx_out must be odd");
  NDNN_REQUIRE(ctx_out <= ctx_in, "GraphSpec: ctx_out must not exceed ctx_in");
  NDNN_REQUIRE(n_mono >= 1 && n_cd >= n_mono, "GraphSpec: need n_cd >= n_mono >= 1");
  NDNN_REQUIRE(!se_hidden.empty() && !sr_hidden.empty(),
               "GraphSpec: SE and SR networks need at least one hidden layer");
}

MlpSpec GraphSpec::se_spec(std::size_t level) const {
  MlpSpec s;
  s.input_dim = se_input_dim(level);
  s.hidden_dims = se_hidden;
  s.heads = {{"enh", enhanced_dim(), HeadKind::Linear}};
  s.dropout_rate = se_dropout;
  s.use_batchnorm = use_batchnorm;
  return s;
}

MlpSpec GraphSpec::sr_spec() const {
  MlpSpec s;
  s.input_dim = enhanced_dim();
  s.hidden_dims = sr_hidden;
  s.heads = {{"cd", n_cd, HeadKind::Softmax}, {"mono", n_mono, HeadKind::Softmax}};
  s.dropout_rate = sr_dropout;
  s.use_batchnorm = use_batchnorm;
  return s;
}

GraphParams assemble_graph(const GraphSpec& spec, const RngStream& rng) {
  spec.validate();
  GraphParams p;
  p.spec = spec;
  for (std::size_t l = 0; l < spec.levels; ++l) {
    RngStream se_rng = rng.split(se_stream(l));
    RngStream sr_rng = rng.split(sr_stream(l));
    p.se.push_back(build_mlp(spec.se_spec(l), se_rng));
    p.sr.push_back(build_mlp(spec.sr_spec(), sr_rng));
  }
  return p;
}

Matrix center_frames(const Matrix& noisy_ctx, const GraphSpec& spec) {
  NDNN_REQUIRE(noisy_ctx.cols() == spec.noisy_dim(),
               "center_frames: input " + noisy_ctx.shape_str() + " expects " +
                   std::to_string(spec.noisy_dim()) + " columns");
  return slice_cols(noisy_ctx, spec.center_offset(), spec.enhanced_dim());
}

GraphTrace graph_forward(const Matrix& noisy_ctx, const GraphParams& params, Mode mode,
                         const RngStream& rng) {
  const auto& spec = params.spec;
  NDNN_REQUIRE(params.se.size() == spec.levels && params.sr.size() == spec.levels,
               "graph_forward: parameters do not match spec levels");
  NDNN_REQUIRE(noisy_ctx.cols() == spec.noisy_dim(),
               "graph_forward: input " + noisy_ctx.shape_str() + " expects " +
                   std::to_string(spec.noisy_dim()) + " columns");

  GraphTrace t;
  t.mode = mode;
  t.batch = noisy_ctx.rows();
  for (std::size_t l = 0; l < spec.levels; ++l) {
    RngStream se_rng = rng.split(se_stream(l));
    RngStream sr_rng = rng.split(sr_stream(l));

    Matrix sr_in = l == 0 ? center_frames(noisy_ctx, spec) : t.enhanced[l - 1];
    t.sr.push_back(mlp_forward(sr_in, params.sr[l], mode, sr_rng));

    if (l == 0) {
      t.se.push_back(mlp_forward(noisy_ctx, params.se[l], mode, se_rng));
    } else {
      Matrix se_in = concat_cols(noisy_ctx, t.mono_probs(l - 1));
      t.se.push_back(mlp_forward(se_in, params.se[l], mode, se_rng));
    }

    if (spec.residual && l >= 1) {
      t.enhanced.push_back(t.enhanced[l - 1] - t.se_head(l));
    } else {
      t.enhanced.push_back(t.se_head(l));
    }
  }
  return t;
}

const Matrix& monophone_posteriors(const GraphTrace& trace, std::size_t level) {
  NDNN_REQUIRE(level < trace.levels(), "monophone_posteriors: level " + std::to_string(level) +
                                           " out of range for " +
                                           std::to_string(trace.levels()) + " levels");
  return trace.mono_probs(level);
}

Labels decode(const GraphTrace& trace, std::size_t level) {
  NDNN_REQUIRE(level < trace.levels(), "decode: level " + std::to_string(level) +
                                           " out of range for " +
                                           std::to_string(trace.levels()) + " levels");
  return argmax_rows(trace.sr[level].logits[kCdHead]);
}

void commit_running_stats(GraphParams& params, const GraphTrace& trace) {
  for (std::size_t l = 0; l < trace.levels(); ++l) {
    commit_running_stats(params.se[l], trace.se[l]);
    commit_running_stats(params.sr[l], trace.sr[l]);
  }
}

namespace {

void add_into(Matrix& acc, const Matrix& g) {
  if (acc.empty()) {
    acc = g;
  } else {
    axpy(acc, 1.0, g);
  }
}

void add_into(std::optional<MlpParams>& acc, MlpParams g) {
  if (!acc) {
    acc = std::move(g);
  } else {
    accumulate(*acc, 1.0, g);
  }
}

}  // namespace

SweepResult reverse_sweep(const GraphTrace& trace, const GraphParams& params,
                          const LossSeed& seed, std::size_t lowest_level) {
  const auto& spec = params.spec;
  const std::size_t L = trace.levels();
  NDNN_REQUIRE(L == params.levels(), "reverse_sweep: trace does not match parameters");
  NDNN_REQUIRE(seed.level < L, "reverse_sweep: seed level out of range");
  NDNN_REQUIRE(lowest_level <= seed.level, "reverse_sweep: lowest_level above seed level");

  SweepResult out;
  out.se.resize(L);
  out.sr.resize(L);

  std::vector<Matrix> d_enh(L);   // ∂/∂x̂_k
  std::vector<Matrix> d_mono(L);  // ∂/∂(mono posteriors of SR_k)

  if (seed.kind == LossSeed::Kind::Enhancement) {
    NDNN_REQUIRE(seed.d_enhanced.same_shape(trace.enhanced[seed.level]),
                 "reverse_sweep: enhancement seed shape " + seed.d_enhanced.shape_str());
    d_enh[seed.level] = seed.d_enhanced;
  }

  for (std::size_t k = seed.level + 1; k-- > lowest_level;) {
    const bool push_down = k >= 1 && k - 1 >= lowest_level;

    // SR_k
    Matrix g_cd, g_mono;
    if (seed.kind == LossSeed::Kind::Recognition && k == seed.level) {
      g_cd = seed.d_cd;
      g_mono = seed.d_mono;
    }
    if (!d_mono[k].empty()) add_into(g_mono, softmax_backward(trace.mono_probs(k), d_mono[k]));
    if (!g_cd.empty() || !g_mono.empty()) {
      auto b = mlp_backward({g_cd, g_mono}, trace.sr[k], params.sr[k], push_down);
      add_into(out.sr[k], std::move(b.grads));
      if (push_down) add_into(d_enh[k - 1], b.input_grad);
    }

    // SE_k
    if (!d_enh[k].empty()) {
      const bool residual = spec.residual && k >= 1;
      Matrix head_grad = residual ? -1.0 * d_enh[k] : d_enh[k];
      auto b = mlp_backward({head_grad}, trace.se[k], params.se[k], push_down);
      add_into(out.se[k], std::move(b.grads));
      if (push_down) {
        add_into(d_mono[k - 1], slice_cols(b.input_grad, spec.noisy_dim(), spec.n_mono));
        if (residual) add_into(d_enh[k - 1], d_enh[k]);
      }
    }
  }
  return out;
}

}  // namespace ndnn
