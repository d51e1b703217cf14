#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ndnn/datagen.hpp"
#include "ndnn/error.hpp"
#include "ndnn/serialize.hpp"

using namespace ndnn;
namespace fs = std::filesystem;

namespace {

CorpusConfig small_corpus() {
  CorpusConfig c;
  c.n_train = 40;
  c.n_dev = 8;
  c.n_test = 8;
  return c;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ndnn_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("fir taps are normalized exponentials") {
  ContaminationConfig c;
  const auto h = c.taps();
  REQUIRE(h.size() == 8);
  double s = 0;
  for (double x : h) s += x;
  CHECK(std::abs(s - 1.0) < 1e-12);
  for (std::size_t k = 1; k < h.size(); ++k) CHECK(h[k] / h[k - 1] == doctest::Approx(0.5));
  c.fir_len = 0;
  CHECK_THROWS_AS(c.taps(), UsageError);
}

TEST_CASE("labels and emission structure") {
  CorpusConfig c = small_corpus();
  const Dataset ds = gen_clean(c, 10, RngStream(1));
  CHECK(ds.n_cd() == 30);
  const Matrix means = emission_means(c);
  for (const auto& u : ds.utterances) {
    CHECK(u.frames == 200);
    CHECK(u.noisy == u.clean);
    for (std::size_t t = 0; t < u.frames; ++t) {
      CHECK(u.mono[t] == u.cd[t] / 3);
      // states of a phone are visited left to right
      if (t > 0 && u.mono[t] == u.mono[t - 1]) CHECK(u.cd[t] >= u.cd[t - 1]);
    }
  }

  c.emission_std = 0.0;
  const Dataset exact = gen_clean(c, 3, RngStream(2));
  for (const auto& u : exact.utterances)
    for (std::size_t t = 0; t < u.frames; ++t)
      for (std::size_t d = 0; d < 13; ++d)
        CHECK(u.clean[t * 13 + d] == static_cast<float>(means(u.cd[t], d)));
}

TEST_CASE("mean offset shifts every mean") {
  CorpusConfig a = small_corpus(), b = small_corpus();
  b.mean_offset = 2.5;
  const Matrix ma = emission_means(a), mb = emission_means(b);
  for (std::size_t i = 0; i < ma.rows(); ++i)
    for (std::size_t j = 0; j < ma.cols(); ++j) CHECK(mb(i, j) - ma(i, j) == doctest::Approx(2.5));
}

TEST_CASE("phone dwell follows the shifted geometric law") {
  for (double p : {0.2, 0.5}) {
    CAPTURE(p);
    CorpusConfig c = small_corpus();
    c.dwell_p = p;
    const Dataset ds = gen_clean(c, 600, RngStream(3));  // 1.2e5 frames
    double total = 0;
    std::size_t runs = 0;
    for (const auto& u : ds.utterances) {
      std::size_t start = 0;
      for (std::size_t t = 1; t < u.frames; ++t)
        if (u.mono[t] != u.mono[t - 1]) {
          total += static_cast<double>(t - start);
          ++runs;
          start = t;
        }
      // the final run is cut by the utterance end and is left out
    }
    CHECK(total / runs == doctest::Approx(c.mean_dwell()).epsilon(0.05));
  }
}

TEST_CASE("identity contamination") {
  CorpusConfig c = small_corpus();
  const Dataset clean = gen_clean(c, 3, RngStream(4));
  ContaminationConfig id;
  id.fir_len = 1;
  id.snr_db = INFINITY;
  const Dataset out = contaminate(clean, id, RngStream(5));
  for (const auto& u : out.utterances) CHECK(u.noisy == u.clean);
}

TEST_CASE("reverberation preserves a constant signal") {
  Utterance u;
  u.frames = 30;
  u.clean.assign(30 * 2, 3.0f);
  ContaminationConfig c;
  c.decay = 0.9;
  c.fir_len = 10;
  const auto r = reverberate(u, 2, c.taps());
  for (std::size_t t = 9; t < 30; ++t) CHECK(r[t * 2] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(r[0] < 3.0);
}

TEST_CASE("per-utterance snr") {
  for (NoiseColor color : {NoiseColor::Iid, NoiseColor::SlowlyVarying}) {
    CorpusConfig c = small_corpus();
    ContaminationConfig k;
    k.noise_color = color;
    const Corpus corpus = generate_corpus(c, k);
    for (const Dataset* ds : {&corpus.train, &corpus.dev, &corpus.test})
      for (const auto& u : ds->utterances) CHECK(std::abs(measured_snr_db(u, 13, k) - 10.0) < 0.01);
    k.snr_db = 0.0;
    const Dataset loud = contaminate(corpus.dev, k, RngStream(6));
    CHECK(std::abs(measured_snr_db(loud.utterances[0], 13, k)) < 0.01);
  }
}

TEST_CASE("windowing counts") {
  CorpusConfig c = small_corpus();
  Dataset ds = gen_clean(c, 3, RngStream(7));
  CHECK(window(ds).samples.size() == 3 * 180);

  ds.utterances[0].frames = 21;
  ds.utterances[0].clean.resize(21 * 13);
  ds.utterances[0].noisy.resize(21 * 13);
  ds.utterances[1].frames = 20;
  ds.utterances[1].clean.resize(20 * 13);
  ds.utterances[1].noisy.resize(20 * 13);
  const auto w = window(ds);
  CHECK(w.samples.size() == 1 + 180);
  CHECK(w.skipped_utterances == 1);
  CHECK(w.samples.noisy.cols() == 21 * 13);
  CHECK(w.samples.clean.cols() == 11 * 13);
  CHECK(window(ds, 5, 3).samples.size() == 17 + 16 + 196);
  CHECK_THROWS_AS(window(ds, 4, 3), UsageError);
}

TEST_CASE("window alignment and normalization") {
  CorpusConfig c = small_corpus();
  const Dataset ds = gen_clean(c, 1, RngStream(8));
  const auto& u = ds.utterances[0];
  const auto s = window(ds, 5, 3).samples;
  // row 0 is centred on frame 2
  CHECK(s.cd[0] == u.cd[2]);
  CHECK(s.noisy(0, 0) == static_cast<double>(u.noisy[0]));
  CHECK(s.noisy(0, 4 * 13 + 12) == static_cast<double>(u.noisy[4 * 13 + 12]));
  CHECK(s.clean(0, 0) == static_cast<double>(u.clean[1 * 13]));

  Normalization n;
  n.mean.assign(13, 1.0);
  n.std.assign(13, 2.0);
  const auto z = window(ds, 5, 3, n).samples;
  CHECK(z.noisy(0, 0) == doctest::Approx((u.noisy[0] - 1.0) / 2.0));
}

TEST_CASE("corpus uses the clean train statistics everywhere") {
  const Corpus c = generate_corpus(small_corpus(), {});
  REQUIRE(c.train.norm);
  CHECK(*c.train.norm == clean_statistics(c.train));
  CHECK(*c.dev.norm == *c.train.norm);
  CHECK(covers_all_states(c.train));
  const auto s = window(c.train).samples;
  double m = 0, v = 0;
  for (std::size_t r = 0; r < s.size(); ++r) {
    m += s.clean(r, 0);
    v += s.clean(r, 0) * s.clean(r, 0);
  }
  CHECK(std::abs(m / s.size()) < 0.05);
  CHECK(v / s.size() == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("fixed seed reproduces the corpus byte for byte") {
  const fs::path dir = temp_dir("repro");
  const Corpus a = generate_corpus(small_corpus(), {});
  const Corpus b = generate_corpus(small_corpus(), {});
  write_dataset(dir / "a.ds", a.train);
  write_dataset(dir / "b.ds", b.train);
  CHECK(read_file(dir / "a.ds") == read_file(dir / "b.ds"));

  CorpusConfig other = small_corpus();
  other.seed = 2;
  write_dataset(dir / "c.ds", generate_corpus(other, {}).train);
  CHECK(read_file(dir / "a.ds") != read_file(dir / "c.ds"));
  fs::remove_all(dir);
}

TEST_CASE("dataset round trip is exact") {
  const fs::path dir = temp_dir("roundtrip");
  const Corpus c = generate_corpus(small_corpus(), {});
  write_dataset(dir / "dev.ds", c.dev);
  const Dataset back = read_dataset(dir / "dev.ds");
  CHECK(back == c.dev);
  CHECK(back.config_json == c.dev.config_json);
  write_dataset(dir / "again.ds", back);
  CHECK(read_file(dir / "dev.ds") == read_file(dir / "again.ds"));
  fs::remove_all(dir);
}

TEST_CASE("damaged dataset files are rejected") {
  const fs::path dir = temp_dir("damaged");
  const Corpus c = generate_corpus(small_corpus(), {});
  write_dataset(dir / "ok.ds", c.test);
  const std::string bytes = read_file(dir / "ok.ds");

  write_file(dir / "short.ds", bytes.substr(0, bytes.size() - 7));
  CHECK_THROWS_AS(read_dataset(dir / "short.ds"), FormatError);

  std::string bad = bytes;
  bad[0] = 'X';
  write_file(dir / "magic.ds", bad);
  CHECK_THROWS_AS(read_dataset(dir / "magic.ds"), FormatError);

  write_file(dir / "long.ds", bytes + "junk");
  CHECK_THROWS_AS(read_dataset(dir / "long.ds"), FormatError);

  CHECK_THROWS(read_dataset(dir / "missing.ds"));
  fs::remove_all(dir);
}
