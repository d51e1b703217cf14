#include <doctest.h>

#include "ndnn/error.hpp"
#include "ndnn/trainer.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace ndnn;

namespace {

TrainConfig tiny_config(std::size_t levels) {
  TrainConfig c;
  c.levels = levels;
  c.batch_size = 16;
  return c;
}

}  // namespace

TEST_CASE("gradient check passes for every configuration") {
  for (std::size_t L : {1, 2, 3})
    for (bool residual : {false, true})
      for (bool deep : {false, true}) {
        CAPTURE(L);
        CAPTURE(residual);
        CAPTURE(deep);
        TrainConfig cfg = tiny_config(L);
        cfg.deep_cross_grads = deep;
        const auto r = grad_check(tiny_graph_spec(L, residual), cfg);
        CHECK(r.pass);
        CHECK(r.max_rel_err < 1e-4);
        std::size_t checked = 0;
        for (const auto& e : r.entries) checked += e.checked;
        CHECK(checked > 0);
      }
}

TEST_CASE("gradient check covers own and cross terms") {
  const auto r = grad_check(tiny_graph_spec(3, false), tiny_config(3));
  bool own_se2 = false, cross_sr0 = false, cross_se1 = false;
  for (const auto& e : r.entries) {
    own_se2 |= e.term == "own SE_2";
    cross_sr0 |= e.term == "cross SR_0";
    cross_se1 |= e.term == "cross SE_1";
  }
  CHECK(own_se2);
  CHECK(cross_sr0);
  CHECK(cross_se1);
}

TEST_CASE("gradient check catches corrupted gradients") {
  GradCheckOptions opt;
  opt.corrupt = [](GradientSet& g) { g.cross_se[0]->hidden[0].dense.W(0, 0) += 1e-3; };
  const auto r = grad_check(tiny_graph_spec(2, false), tiny_config(2), opt);
  CHECK_FALSE(r.pass);

  GradCheckOptions strict;
  strict.tolerance = 0.0;
  CHECK_FALSE(grad_check(tiny_graph_spec(1, false), tiny_config(1), strict).pass);
}

TEST_CASE("lambda = 0 decouples the networks") {
  for (bool residual : {false, true}) {
    CAPTURE(residual);
    const GraphSpec spec = tiny_graph_spec(3, residual);
    const Samples train = oracle::synthetic_samples(spec, 100, 1);
    const Samples dev = oracle::synthetic_samples(spec, 20, 2);
    CHECK(oracle::decoupling_max_diff(spec, tiny_config(3), train, dev) < 1e-10);
  }
}

TEST_CASE("lambda > 0 couples the networks") {
  const GraphSpec spec = tiny_graph_spec(2, false);
  const Samples train = oracle::synthetic_samples(spec, 64, 3);
  const Samples dev = oracle::synthetic_samples(spec, 16, 4);
  TrainConfig cfg = tiny_config(2);
  cfg.max_epochs = 1;
  const RngStream init(cfg.seed + 1000);
  GraphSystem sys(assemble_graph(spec, init), cfg);
  train_loop(train, dev, sys, cfg);
  const auto ref = oracle::independent_epoch(spec, cfg, init, train);
  CHECK(oracle::max_param_diff(sys.params().se[0], ref[0]) > 1e-6);
  CHECK(oracle::max_param_diff(sys.params().sr[0], ref[1]) > 1e-6);
}

TEST_CASE("apply_updates weights own and cross gradients") {
  const GraphSpec spec = tiny_graph_spec(2, false);
  const GraphParams p = assemble_graph(spec, RngStream(5));
  GradientSet g;
  for (std::size_t l = 0; l < 2; ++l) {
    g.own_se.push_back(zeros_like(p.se[l]));
    g.own_sr.push_back(zeros_like(p.sr[l]));
    g.own_se[l].heads[0].b.assign(g.own_se[l].heads[0].b.size(), 1.0);
    g.own_sr[l].heads[0].b.assign(g.own_sr[l].heads[0].b.size(), 1.0);
  }
  g.cross_se = {zeros_like(p.se[0]), std::nullopt};
  g.cross_sr = {zeros_like(p.sr[0]), std::nullopt};
  g.cross_se[0]->heads[0].b.assign(p.se[0].heads[0].b.size(), 2.0);

  const GraphParams q = apply_updates(p, g, 0.08, 0.1);
  // below the top: -0.08 * (0.9 * 1 + 0.1 * 2)
  CHECK(q.se[0].heads[0].b[0] == doctest::Approx(-0.088).epsilon(1e-12));
  CHECK(q.sr[0].heads[0].b[0] == doctest::Approx(-0.072).epsilon(1e-12));
  CHECK(q.se[1].heads[0].b[0] == doctest::Approx(-0.08).epsilon(1e-12));
  const GraphParams r = apply_updates(p, g, 0.08, 0.1, TopLevelScale::OneMinusLambda);
  CHECK(r.se[1].heads[0].b[0] == doctest::Approx(-0.072).epsilon(1e-12));

  GradientSet missing = g;
  missing.cross_sr[0].reset();
  CHECK_THROWS_AS(apply_updates(p, missing, 0.08, 0.1), UsageError);
}

TEST_CASE("schedule scripts") {
  for (const auto& s : oracle::schedule_scripts()) {
    CAPTURE(s.name);
    CHECK(oracle::run_schedule_script(s) == "");
  }
}

TEST_CASE("schedule bookkeeping") {
  LrSchedule s(0.08, 0.001, 4);
  auto d = s.observe(0.5);
  CHECK(d.improved);
  CHECK_FALSE(d.halved);
  d = s.observe(0.6);
  CHECK_FALSE(d.improved);
  CHECK(d.halved);
  CHECK(s.best() == 0.5);
  CHECK(s.epochs_since_best() == 1);
  CHECK_THROWS_AS(LrSchedule(0.0, 0.001, 4), UsageError);
}

TEST_CASE("frame error rate and metric accumulation") {
  CHECK(frame_error_rate({1, 2, 3, 4}, {1, 0, 3, 0}) == 0.5);
  CHECK_THROWS_AS(frame_error_rate({1}, {1, 2}), UsageError);
  MetricAccumulator acc;
  LevelMetrics a, b;
  a.fer_cd = 0.2;
  b.fer_cd = 0.5;
  acc.add({a}, 3);
  acc.add({b}, 1);
  CHECK(acc.mean()[0].fer_cd == doctest::Approx(0.275));
  CHECK_FALSE(acc.mean()[0].mse.has_value());
}

TEST_CASE("training reports are reproducible") {
  const GraphSpec spec = tiny_graph_spec(2, false);
  const Samples train = oracle::synthetic_samples(spec, 96, 6);
  const Samples dev = oracle::synthetic_samples(spec, 32, 7);
  TrainConfig cfg = tiny_config(2);
  cfg.max_epochs = 3;
  auto run = [&] {
    GraphSystem sys(assemble_graph(spec, RngStream(8)), cfg);
    auto res = train_loop(train, dev, sys, cfg);
    std::string csv;
    for (auto r : res.reports) {
      r.seconds = 0;
      csv += epoch_csv_rows(r);
    }
    return std::make_pair(csv, res.best_epoch);
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  CHECK(a.first.find("nan") == std::string::npos);
}

TEST_CASE("train_loop keeps the best dev epoch and stops on patience") {
  const GraphSpec spec = tiny_graph_spec(1, false);
  const Samples train = oracle::synthetic_samples(spec, 64, 9);
  const Samples dev = oracle::synthetic_samples(spec, 32, 10);
  TrainConfig cfg = tiny_config(1);
  cfg.max_epochs = 40;
  cfg.patience = 2;
  GraphSystem sys(assemble_graph(spec, RngStream(11)), cfg);
  const auto res = train_loop(train, dev, sys, cfg);
  REQUIRE(res.best);
  CHECK(res.reports.size() < 40);
  double best = 1.0;
  std::size_t best_epoch = 0;
  for (const auto& r : res.reports)
    if (r.dev_fer() < best) {
      best = r.dev_fer();
      best_epoch = r.epoch;
    }
  CHECK(res.best_epoch == best_epoch);
  CHECK(res.best->evaluate(dev).back().fer_cd == best);
  CHECK(res.reports.size() - best_epoch == cfg.patience);
}

TEST_CASE("epoch csv layout") {
  CHECK(epoch_csv_header() == "epoch,eta,split,level,mse,nll_cd,nll_mono,fer,seconds");
  EpochReport r;
  r.epoch = 2;
  r.eta = 0.04;
  LevelMetrics m;
  m.fer_cd = 0.25;
  r.train = {m};
  r.dev = {m};
  const std::string rows = epoch_csv_rows(r);
  CHECK(rows.find("2,0.04,train,0,,") == 0);
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 2);
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = TrainConfig{};
  c.lambda = 1.5;
  CHECK_THROWS_AS(c.validate(), UsageError);
}
