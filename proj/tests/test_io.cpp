#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ndnn/config_io.hpp"
#include "ndnn/error.hpp"
#include "ndnn/experiment.hpp"
#include "ndnn/serialize.hpp"
#include "ndnn/systems.hpp"
#include "test_support.hpp"

using namespace ndnn;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ndnn_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

DataConfig tiny_data() {
  DataConfig c;
  c.corpus.n_train = 12;
  c.corpus.n_dev = 4;
  c.corpus.n_test = 4;
  c.corpus.frames_per_utt = 60;
  return c;
}

ExperimentSpec tiny_experiment(const std::string& system) {
  ExperimentSpec s;
  s.system = system;
  s.hidden = {8, 8};
  s.train.max_epochs = 2;
  s.train.batch_size = 64;
  s.train.levels = 2;
  return s;
}

}  // namespace

TEST_CASE("config readers reject unknown keys and keep defaults") {
  CorpusConfig c = json::parse(R"({"n_train": 7})").get<CorpusConfig>();
  CHECK(c.n_train == 7);
  CHECK(c.n_mono == 10);
  CHECK_THROWS_AS(json::parse(R"({"n_trian": 7})").get<CorpusConfig>(), UsageError);
  CHECK_THROWS_AS(json::parse(R"({"n_train": "x"})").get<CorpusConfig>(), UsageError);
  CHECK_THROWS_AS(json::parse(R"({"lamda": 0.2})").get<TrainConfig>(), UsageError);
  CHECK_THROWS_AS(json::parse(R"({"noise_color": "pink"})").get<ContaminationConfig>(), UsageError);
  CHECK_THROWS_AS(json::parse(R"({"corpus": {}, "extra": 1})").get<DataConfig>(), UsageError);
  CHECK_THROWS_AS(json::parse(R"({"sytem": "netdnn"})").get<ExperimentSpec>(), UsageError);
}

TEST_CASE("configs survive a json round trip") {
  CorpusConfig c;
  c.dwell_p = 0.3;
  c.mean_offset = 1.5;
  CHECK(json(c).get<CorpusConfig>() == c);

  ContaminationConfig k;
  k.snr_db = INFINITY;
  k.noise_color = NoiseColor::SlowlyVarying;
  const json kj = k;
  CHECK(kj["snr_db"].is_null());
  CHECK(kj.get<ContaminationConfig>() == k);

  TrainConfig t;
  t.lambda = 0.3;
  t.top_level_scale = TopLevelScale::OneMinusLambda;
  t.deep_cross_grads = true;
  CHECK(json(t).get<TrainConfig>() == t);

  GraphSpec g;
  g.residual = true;
  g.se_hidden = {4, 5};
  CHECK(json(g).get<GraphSpec>() == g);
}

TEST_CASE("experiment presets and overrides") {
  const auto p = json::parse(R"({"preset": "paper-timit", "train": {"lambda": 0.2}})")
                     .get<ExperimentSpec>();
  CHECK(p.hidden == std::vector<std::size_t>{1024, 1024, 1024, 1024});
  CHECK(p.train.lambda == 0.2);
  CHECK(p.train.eta0 == 0.08);
  CHECK(preset("desk").hidden == std::vector<std::size_t>{128, 128, 128});
  CHECK_THROWS_AS(preset("huge"), UsageError);

  ExperimentSpec s;
  s.system = "nope";
  CHECK_THROWS_AS(s.validate(), UsageError);

  auto e = json::parse(R"({"se_dropout": 0.0})").get<ExperimentSpec>();
  const GraphSpec g = e.graph_spec(13, 10, 30);
  CHECK(g.se_dropout == 0.0);
  CHECK(g.sr_dropout == 0.2);
  CHECK(g.levels == 3);
}

TEST_CASE("mlp blobs round trip and reject damage") {
  MlpSpec s;
  s.input_dim = 4;
  s.hidden_dims = {3};
  s.heads = {{"cd", 2, HeadKind::Softmax}};
  RngStream rng(1);
  MlpParams p = build_mlp(s, rng);
  p.hidden[0].bn.running_mean = {0.1, 0.2, 0.3};
  const std::string blob = encode_mlp(p);
  const MlpParams q = decode_mlp(blob);
  CHECK(encode_mlp(q) == blob);
  CHECK(q.hidden[0].dense.W == p.hidden[0].dense.W);
  CHECK(q.hidden[0].bn.running_mean == p.hidden[0].bn.running_mean);
  CHECK(q.spec == p.spec);
  CHECK_THROWS_AS(decode_mlp(blob.substr(0, blob.size() - 1)), FormatError);
  CHECK_THROWS_AS(decode_mlp("NDNNMLP"), FormatError);
}

TEST_CASE("checkpoints rebuild every system") {
  const GraphSpec g = make_graph_spec(2, 3, 6, TrainConfig{}, {4, 4}, false, 5, 3);
  const Matrix x = test::random_matrix(7, g.noisy_dim(), 2);
  for (const auto& name : system_names()) {
    CAPTURE(name);
    GraphSpec spec = g;
    spec.residual = name == "netdnn-residual";
    auto sys = make_system(name, spec, TrainConfig{}, RngStream(3));
    const Checkpoint c = sys->checkpoint();
    const Checkpoint back = decode_checkpoint(encode_checkpoint(c));
    CHECK(back.system == name);
    CHECK(back.spec == spec);
    const auto rebuilt = system_from_checkpoint(back, TrainConfig{});
    CHECK(rebuilt->kind() == name);
    CHECK(rebuilt->decode(x) == sys->decode(x));
    CHECK(rebuilt->levels() == sys->levels());
  }
  Checkpoint bad = make_system("netdnn", g, TrainConfig{}, RngStream(3))->checkpoint();
  bad.system = "unknown";
  CHECK_THROWS(system_from_checkpoint(bad, TrainConfig{}));
}

TEST_CASE("system decode agrees with evaluate") {
  const GraphSpec g = make_graph_spec(2, 3, 6, TrainConfig{}, {4, 4}, false, 5, 3);
  Samples s;
  s.noisy = test::random_matrix(9, g.noisy_dim(), 4);
  s.clean = test::random_matrix(9, g.enhanced_dim(), 5);
  s.cd = {0, 1, 2, 3, 4, 5, 0, 1, 2};
  s.mono = {0, 0, 1, 1, 2, 2, 0, 0, 1};
  for (const auto& name : system_names()) {
    CAPTURE(name);
    auto sys = make_system(name, g, TrainConfig{}, RngStream(6));
    const auto labels = sys->decode(s.noisy);
    const auto metrics = sys->evaluate(s);
    REQUIRE(labels.size() == metrics.size());
    for (std::size_t l = 0; l < labels.size(); ++l)
      CHECK(frame_error_rate(labels[l], s.cd) == doctest::Approx(metrics[l].fer_cd).epsilon(1e-12));
  }
}

TEST_CASE("multitask shares the first half of the hidden layers") {
  GraphSpec g = make_graph_spec(2, 3, 6, TrainConfig{}, {4, 4, 4}, false, 5, 3);
  const auto sys = make_system("multitask", g, TrainConfig{}, RngStream(7));
  const Checkpoint c = sys->checkpoint();
  REQUIRE(c.networks.size() == 3);
  CHECK(c.networks[0].params.spec.hidden_dims.size() == 2);  // ⌈3/2⌉ shared
  CHECK(c.networks[1].params.spec.hidden_dims.size() == 1);
  CHECK(c.networks[2].params.spec.hidden_dims.size() == 1);
}

TEST_CASE("gen-data, train, eval and compare on a tiny corpus") {
  const fs::path dir = temp_dir("pipeline");
  const json manifest = gen_data(tiny_data(), dir / "data");
  for (const char* s : kSplitNames) CHECK(fs::exists(split_path(dir / "data", s)));
  CHECK(manifest.at("splits").at("train").at("frames") == 12 * 60);
  CHECK(manifest.at("splits").at("train").at("samples_ctx21") == 12 * 40);
  CHECK(std::abs(manifest.at("splits").at("dev").at("measured_snr_db").at("min").get<double>() -
                 10.0) < 0.01);
  CHECK(manifest.at("config").at("corpus").at("n_train") == 12);

  const SplitData data = load_splits(dir / "data");
  CHECK(data.train.size() == 12 * 40);

  const RunResult r = run_training(tiny_experiment("netdnn"), data, dir / "run");
  for (const char* f : {"manifest.json", "epochs.csv", "checkpoint.ndnn", "metrics.json"})
    CHECK(fs::exists(dir / "run" / f));
  CHECK(r.test.size() == 2);
  const json m = evaluate_checkpoint(dir / "run" / "checkpoint.ndnn", dir / "data");
  CHECK(m.at("levels").size() == 2);
  CHECK(m.at("levels").at(1).at("fer_cd").get<double>() == r.test[1].fer_cd);
  const json one = evaluate_checkpoint(dir / "run" / "checkpoint.ndnn", dir / "data", "dev", 0);
  CHECK(one.at("levels").size() == 1);
  CHECK_THROWS_AS(evaluate_checkpoint(dir / "run" / "checkpoint.ndnn", dir / "data", "dev", 5),
                  UsageError);

  std::ifstream csv(dir / "run" / "epochs.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == epoch_csv_header());

  const auto report = compare(tiny_experiment("netdnn"), data, {1, 2}, dir / "cmp", 1, {},
                              {"single-dnn", "netdnn"});
  CHECK(fs::exists(dir / "cmp" / "summary.csv"));
  CHECK(fs::exists(dir / "cmp" / "runs" / "netdnn-seed2" / "checkpoint.ndnn"));
  REQUIRE(report.find("netdnn", "1"));
  CHECK(report.find("netdnn", "top")->fer_cd == report.find("netdnn", "1")->fer_cd);
  CHECK(report.find("single-dnn")->fer_cd.size() == 2);
  CHECK(report.find("single-dnn", "0") == nullptr);

  // Runs are independent of the worker count.
  const auto threaded = compare(tiny_experiment("netdnn"), data, {1, 2}, {}, 2, {},
                                {"single-dnn", "netdnn"});
  CHECK(threaded.runs_csv().size() > 0);
  CHECK(threaded.find("netdnn", "0")->fer_cd == report.find("netdnn", "0")->fer_cd);
  fs::remove_all(dir);
}
