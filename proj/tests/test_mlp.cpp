#include <doctest.h>

#include "ndnn/error.hpp"
#include "ndnn/mlp.hpp"
#include "test_support.hpp"

using namespace ndnn;
using namespace ndnn::test;

namespace {

MlpSpec two_head_spec(double dropout) {
  MlpSpec s;
  s.input_dim = 5;
  s.hidden_dims = {6, 4};
  s.heads = {{"reg", 3, HeadKind::Linear}, {"cls", 4, HeadKind::Softmax}};
  s.dropout_rate = dropout;
  return s;
}

}  // namespace

TEST_CASE("parameter count") {
  const MlpSpec s = two_head_spec(0.0);
  // (5*6+6) + 4*6 + (6*4+4) + 4*4 + (4*3+3) + (4*4+4)
  CHECK(s.parameter_count() == 36 + 24 + 28 + 16 + 15 + 20);
  RngStream rng(1);
  CHECK(build_mlp(s, rng).allocated_size() == s.parameter_count());

  MlpSpec no_bn = s;
  no_bn.use_batchnorm = false;
  CHECK(no_bn.parameter_count() == 36 + 28 + 15 + 20);
  CHECK(build_mlp(no_bn, rng).allocated_size() == no_bn.parameter_count());

  MlpSpec trunk = s;
  trunk.heads.clear();
  CHECK(trunk.output_count() == 1);
  CHECK(trunk.output_dim(0) == 4);
}

TEST_CASE("spec validation") {
  MlpSpec s = two_head_spec(0.0);
  s.hidden_dims.clear();
  CHECK_THROWS_AS(s.validate(), UsageError);
  s = two_head_spec(1.0);
  CHECK_THROWS_AS(s.validate(), UsageError);
}

TEST_CASE("build_mlp initial values") {
  RngStream rng(2);
  const MlpParams p = build_mlp(two_head_spec(0.0), rng);
  for (const auto& h : p.hidden) {
    CHECK(max_abs(Matrix(1, h.dense.b.size(), h.dense.b)) == 0.0);
    for (double g : h.bn.gamma) CHECK(g == 1.0);
    for (double v : h.bn.running_var) CHECK(v == 1.0);
  }
  CHECK(p.hidden[0].dense.W.rows() == 6);
  CHECK(p.hidden[0].dense.W.cols() == 5);
  CHECK(max_abs(p.hidden[0].dense.W) <= std::sqrt(6.0 / 11.0));
}

TEST_CASE("softmax head outputs are probabilities and logits are kept") {
  RngStream rng(3);
  const MlpParams p = build_mlp(two_head_spec(0.0), rng);
  const auto t = mlp_forward(random_matrix(8, 5, 4), p, Mode::Eval, rng);
  REQUIRE(t.outputs.size() == 2);
  CHECK(t.outputs[0] == t.logits[0]);
  CHECK(max_abs_diff(t.outputs[1], softmax(t.logits[1])) == 0.0);
}

TEST_CASE("mlp backward matches finite differences with fixed dropout masks") {
  for (double rate : {0.0, 0.3}) {
    CAPTURE(rate);
    RngStream init(5);
    MlpParams p = build_mlp(two_head_spec(rate), init);
    for (auto& h : p.hidden) {
      h.bn.gamma = {1.2, 0.8, 1.1, 0.9, 1.3, 0.7};
      h.bn.gamma.resize(h.dense.out_dim());
      h.bn.beta.assign(h.dense.out_dim(), 0.1);
    }
    Matrix x = random_matrix(10, 5, 6);
    const Matrix t = random_matrix(10, 3, 7);
    const Labels y{0, 1, 2, 3, 0, 1, 2, 3, 0, 1};
    const RngStream masks(8);

    auto loss = [&] {
      RngStream r = masks;
      const auto tr = mlp_forward(x, p, Mode::Train, r);
      return mse(tr.outputs[0], t) + softmax_nll(tr.logits[1], y).loss;
    };
    RngStream r = masks;
    const auto tr = mlp_forward(x, p, Mode::Train, r);
    const auto b = mlp_backward(
        {mse_grad(tr.outputs[0], t), softmax_nll_grad(tr.outputs[1], y)}, tr, p);

    CHECK(max_rel_err(b.input_grad.values(), numeric_grad(x.values(), loss)) < 1e-5);
    std::vector<std::span<double>> analytic;
    for_each_tensor(const_cast<MlpParams&>(b.grads),
                    [&](const std::string&, std::span<double> d, bool trainable) {
                      if (trainable) analytic.push_back(d);
                    });
    std::size_t k = 0;
    for_each_tensor(p, [&](const std::string& name, std::span<double> d, bool trainable) {
      if (!trainable) return;
      CAPTURE(name);
      CHECK(max_rel_err(analytic[k++], numeric_grad(d, loss)) < 1e-5);
    });
  }
}

TEST_CASE("empty head gradient means no contribution") {
  RngStream rng(9);
  const MlpParams p = build_mlp(two_head_spec(0.0), rng);
  const Matrix x = random_matrix(6, 5, 10);
  const auto tr = mlp_forward(x, p, Mode::Train, rng);
  const Matrix g0 = random_matrix(6, 3, 11);
  const auto a = mlp_backward({g0, Matrix()}, tr, p);
  const auto b = mlp_backward({g0, Matrix(6, 4, 0.0)}, tr, p);
  CHECK(max_abs_diff(a.input_grad, b.input_grad) == 0.0);
  CHECK(max_abs_diff(a.grads.heads[1].W, b.grads.heads[1].W) == 0.0);
}

TEST_CASE("sgd_step, accumulate and running statistics") {
  RngStream rng(12);
  const MlpParams p = build_mlp(two_head_spec(0.0), rng);
  MlpParams g = zeros_like(p);
  g.heads[0].b = {1.0, 2.0, 3.0};
  g.hidden[0].bn.running_mean.assign(6, 100.0);  // not trainable, must be ignored
  const MlpParams q = sgd_step(p, g, 0.5);
  CHECK(q.heads[0].b == Vector{-0.5, -1.0, -1.5});
  CHECK(q.hidden[0].bn.running_mean == p.hidden[0].bn.running_mean);

  MlpParams acc = zeros_like(p);
  accumulate(acc, 2.0, g);
  accumulate(acc, -1.0, g);
  CHECK(acc.heads[0].b == g.heads[0].b);

  MlpParams live = p;
  const auto tr = mlp_forward(random_matrix(16, 5, 13, 3.0), live, Mode::Train, rng);
  commit_running_stats(live, tr);
  CHECK(live.hidden[0].bn.running_mean == tr.new_running_mean[0]);
  CHECK(live.hidden[1].bn.running_var == tr.new_running_var[1]);
  CHECK(live.hidden[0].bn.running_mean != p.hidden[0].bn.running_mean);
}

TEST_CASE("eval mode is deterministic and draws nothing") {
  RngStream rng(14);
  const MlpParams p = build_mlp(two_head_spec(0.5), rng);
  const Matrix x = random_matrix(4, 5, 15);
  RngStream a(1), b(2);
  CHECK(mlp_forward(x, p, Mode::Eval, a).outputs[0] == mlp_forward(x, p, Mode::Eval, b).outputs[0]);
}
