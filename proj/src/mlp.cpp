#include "ndnn/mlp.hpp"

#include "ndnn/error.hpp"

namespace ndnn {

void MlpSpec::validate() const {
  NDNN_REQUIRE(input_dim >= 1, "MlpSpec: input_dim must be >= 1");
  NDNN_REQUIRE(!hidden_dims.empty(), "MlpSpec: at least one hidden layer required");
  for (auto h : hidden_dims) NDNN_REQUIRE(h >= 1, "MlpSpec: hidden dims must be >= 1");
  for (const auto& h : heads) NDNN_REQUIRE(h.dim >= 1, "MlpSpec: head '" + h.name + "' has dim 0");
  NDNN_REQUIRE(dropout_rate >= 0.0 && dropout_rate < 1.0, "MlpSpec: dropout must be in [0,1)");
  if (use_batchnorm) {
    NDNN_REQUIRE(bn_eps > 0.0, "MlpSpec: bn_eps must be > 0");
    NDNN_REQUIRE(bn_momentum > 0.0 && bn_momentum <= 1.0, "MlpSpec: bn_momentum not in (0,1]");
  }
}

std::size_t MlpSpec::output_dim(std::size_t i) const {
  if (heads.empty()) return hidden_dims.back();
  return heads.at(i).dim;
}

std::size_t MlpSpec::parameter_count() const {
  std::size_t n = 0;
  std::size_t prev = input_dim;
  for (auto h : hidden_dims) {
    n += prev * h + h;
    if (use_batchnorm) n += 4 * h;
    prev = h;
  }
  for (const auto& head : heads) n += prev * head.dim + head.dim;
  return n;
}

std::size_t MlpParams::allocated_size() const {
  std::size_t n = 0;
  for_each_tensor(*this, [&](const std::string&, std::span<const double> d, bool) { n += d.size(); });
  return n;
}

void for_each_tensor(
    MlpParams& p,
    const std::function<void(const std::string&, std::span<double>, bool)>& fn) {
  for (std::size_t i = 0; i < p.hidden.size(); ++i) {
    const std::string pre = "hidden" + std::to_string(i) + ".";
    auto& l = p.hidden[i];
    fn(pre + "W", l.dense.W.values(), true);
    fn(pre + "b", l.dense.b, true);
    if (!l.bn.gamma.empty()) {
      fn(pre + "gamma", l.bn.gamma, true);
      fn(pre + "beta", l.bn.beta, true);
      fn(pre + "running_mean", l.bn.running_mean, false);
      fn(pre + "running_var", l.bn.running_var, false);
    }
  }
  for (std::size_t i = 0; i < p.heads.size(); ++i) {
    const std::string pre = "head." + p.spec.heads[i].name + ".";
    fn(pre + "W", p.heads[i].W.values(), true);
    fn(pre + "b", p.heads[i].b, true);
  }
}

void for_each_tensor(
    const MlpParams& p,
    const std::function<void(const std::string&, std::span<const double>, bool)>& fn) {
  for_each_tensor(const_cast<MlpParams&>(p),
                  [&](const std::string& name, std::span<double> d, bool t) {
                    fn(name, std::span<const double>(d), t);
                  });
}

MlpParams build_mlp(const MlpSpec& spec, RngStream& rng) {
  spec.validate();
  MlpParams p;
  p.spec = spec;
  std::size_t prev = spec.input_dim;
  for (auto h : spec.hidden_dims) {
    HiddenLayer layer;
    layer.dense.W = glorot_init(prev, h, rng);
    layer.dense.b.assign(h, 0.0);
    if (spec.use_batchnorm) layer.bn = BatchNormParams::identity(h, spec.bn_momentum, spec.bn_eps);
    p.hidden.push_back(std::move(layer));
    prev = h;
  }
  for (const auto& head : spec.heads) {
    DenseParams d;
    d.W = glorot_init(prev, head.dim, rng);
    d.b.assign(head.dim, 0.0);
    p.heads.push_back(std::move(d));
  }
  return p;
}

MlpParams zeros_like(const MlpParams& p) {
  MlpParams z = p;
  for_each_tensor(z, [](const std::string&, std::span<double> d, bool) {
    std::fill(d.begin(), d.end(), 0.0);
  });
  return z;
}

namespace {

void check_trace(const ForwardTrace& trace, const MlpParams& params) {
  NDNN_REQUIRE(trace.hidden.size() == params.hidden.size() &&
                   trace.heads.size() == params.heads.size() &&
                   trace.outputs.size() == params.spec.output_count(),
               "mlp_backward: trace does not belong to these parameters");
  for (std::size_t i = 0; i < params.hidden.size(); ++i)
    NDNN_REQUIRE(trace.hidden[i].dense.x.cols() == params.hidden[i].dense.in_dim() &&
                     trace.hidden[i].dense.x.rows() == trace.batch,
                 "mlp_backward: stale trace for hidden layer " + std::to_string(i));
  for (std::size_t i = 0; i < params.heads.size(); ++i)
    NDNN_REQUIRE(trace.heads[i].x.cols() == params.heads[i].in_dim(),
                 "mlp_backward: stale trace for head " + params.spec.heads[i].name);
}

}  // namespace

ForwardTrace mlp_forward(const Matrix& x, const MlpParams& params, Mode mode, RngStream& rng) {
  const auto& spec = params.spec;
  NDNN_REQUIRE(x.cols() == spec.input_dim, "mlp_forward: input " + x.shape_str() +
                                               " but network expects " +
                                               std::to_string(spec.input_dim) + " columns");
  ForwardTrace t;
  t.mode = mode;
  t.batch = x.rows();
  t.hidden.resize(params.hidden.size());

  Matrix h = x;
  for (std::size_t i = 0; i < params.hidden.size(); ++i) {
    const auto& layer = params.hidden[i];
    auto& c = t.hidden[i];
    auto d = dense_forward(std::move(h), layer.dense);
    c.dense = std::move(d.cache);
    Matrix a = std::move(d.y);
    if (spec.use_batchnorm) {
      auto bn = batchnorm_forward(a, layer.bn, mode);
      c.bn = std::move(bn.cache);
      t.new_running_mean.push_back(std::move(bn.running_mean));
      t.new_running_var.push_back(std::move(bn.running_var));
      a = std::move(bn.y);
    }
    auto r = relu_forward(std::move(a));
    c.relu = std::move(r.cache);
    auto dr = dropout_forward(std::move(r.y), spec.dropout_rate, mode, rng);
    c.dropout = std::move(dr.cache);
    h = std::move(dr.y);
  }

  if (params.heads.empty()) {
    t.outputs.push_back(h);
    return t;
  }
  for (std::size_t i = 0; i < params.heads.size(); ++i) {
    auto d = dense_forward(h, params.heads[i]);
    t.heads.push_back(std::move(d.cache));
    if (spec.heads[i].kind == HeadKind::Softmax) {
      t.outputs.push_back(softmax(d.y));
    } else {
      t.outputs.push_back(d.y);
    }
    t.logits.push_back(std::move(d.y));
  }
  return t;
}

MlpBackward mlp_backward(const std::vector<Matrix>& head_grads, const ForwardTrace& trace,
                         const MlpParams& params, bool need_input_grad) {
  check_trace(trace, params);
  const auto& spec = params.spec;
  NDNN_REQUIRE(head_grads.size() == spec.output_count(),
               "mlp_backward: expected " + std::to_string(spec.output_count()) +
                   " head gradients, got " + std::to_string(head_grads.size()));

  MlpBackward out;
  out.grads.spec = spec;
  out.grads.hidden.resize(params.hidden.size());
  out.grads.heads.resize(params.heads.size());

  const std::size_t last = spec.hidden_dims.back();
  Matrix dh(trace.batch, last);
  if (params.heads.empty()) {
    if (!head_grads[0].empty()) {
      NDNN_REQUIRE(head_grads[0].rows() == trace.batch && head_grads[0].cols() == last,
                   "mlp_backward: trunk gradient shape " + head_grads[0].shape_str());
      dh = head_grads[0];
    }
  } else {
    for (std::size_t i = 0; i < params.heads.size(); ++i) {
      const auto& g = head_grads[i];
      if (g.empty()) {
        out.grads.heads[i].W = Matrix(params.heads[i].W.rows(), params.heads[i].W.cols());
        out.grads.heads[i].b.assign(params.heads[i].b.size(), 0.0);
        continue;
      }
      NDNN_REQUIRE(g.rows() == trace.batch && g.cols() == spec.heads[i].dim,
                   "mlp_backward: gradient for head '" + spec.heads[i].name + "' has shape " +
                       g.shape_str());
      auto b = dense_backward(g, trace.heads[i], params.heads[i]);
      out.grads.heads[i] = std::move(b.grad);
      axpy(dh, 1.0, b.dx);
    }
  }

  for (std::size_t k = params.hidden.size(); k-- > 0;) {
    const auto& layer = params.hidden[k];
    const auto& c = trace.hidden[k];
    auto& g = out.grads.hidden[k];
    Matrix d = dropout_backward(std::move(dh), c.dropout);
    d = relu_backward(d, c.relu);
    if (spec.use_batchnorm) {
      auto bn = batchnorm_backward(d, c.bn, layer.bn);
      g.bn.gamma = std::move(bn.dgamma);
      g.bn.beta = std::move(bn.dbeta);
      g.bn.running_mean.assign(layer.bn.dim(), 0.0);
      g.bn.running_var.assign(layer.bn.dim(), 0.0);
      g.bn.momentum = layer.bn.momentum;
      g.bn.eps = layer.bn.eps;
      d = std::move(bn.dx);
    }
    const bool need_dx = k > 0 || need_input_grad;
    auto db = dense_backward(d, c.dense, layer.dense, need_dx);
    g.dense = std::move(db.grad);
    dh = std::move(db.dx);
  }
  if (need_input_grad) out.input_grad = std::move(dh);
  return out;
}

MlpParams sgd_step(const MlpParams& params, const MlpParams& grads, double eta) {
  NDNN_REQUIRE(eta > 0.0, "sgd_step: eta must be > 0");
  MlpParams next = params;
  accumulate(next, -eta, grads);
  return next;
}

void accumulate(MlpParams& acc, double s, const MlpParams& g) {
  std::vector<std::span<const double>> src;
  for_each_tensor(g, [&](const std::string&, std::span<const double> d, bool trainable) {
    if (trainable) src.push_back(d);
  });
  std::size_t i = 0;
  for_each_tensor(acc, [&](const std::string& name, std::span<double> d, bool trainable) {
    if (!trainable) return;
    NDNN_REQUIRE(i < src.size() && src[i].size() == d.size(),
                 "accumulate: gradient shape mismatch at " + name);
    for (std::size_t j = 0; j < d.size(); ++j) d[j] += s * src[i][j];
    ++i;
  });
  NDNN_REQUIRE(i == src.size(), "accumulate: gradient has extra tensors");
}

void commit_running_stats(MlpParams& params, const ForwardTrace& trace) {
  if (trace.mode != Mode::Train || !params.spec.use_batchnorm) return;
  NDNN_REQUIRE(trace.new_running_mean.size() == params.hidden.size(),
               "commit_running_stats: trace does not match parameters");
  for (std::size_t i = 0; i < params.hidden.size(); ++i) {
    params.hidden[i].bn.running_mean = trace.new_running_mean[i];
    params.hidden[i].bn.running_var = trace.new_running_var[i];
  }
}

}  // namespace ndnn
