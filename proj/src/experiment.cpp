#include "ndnn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "ndnn/config_io.hpp"
#include "ndnn/error.hpp"
#include "ndnn/serialize.hpp"

namespace ndnn {

using json = nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// sample standard deviation; 0 for fewer than two values
double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string fmt(double v, const char* f = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

// ---- data -----------------------------------------------------------------

void to_json(json& j, const DataConfig& c) {
  j = {{"corpus", c.corpus}, {"contamination", c.contamination}};
}

void from_json(const json& j, DataConfig& c) {
  NDNN_REQUIRE(j.is_object(), "data config: expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (key != "corpus" && key != "contamination")
      throw UsageError("data config: unknown key '" + key + "'");
  if (j.contains("corpus")) c.corpus = j.at("corpus").get<CorpusConfig>();
  if (j.contains("contamination")) c.contamination = j.at("contamination").get<ContaminationConfig>();
}

fs::path split_path(const fs::path& data_dir, const std::string& split) {
  return data_dir / (split + ".ds");
}

json gen_data(const DataConfig& config, const fs::path& out) {
  const Corpus corpus = generate_corpus(config.corpus, config.contamination);
  fs::create_directories(out);
  json splits = json::object();
  const Dataset* parts[] = {&corpus.train, &corpus.dev, &corpus.test};
  for (int i = 0; i < 3; ++i) {
    const Dataset& ds = *parts[i];
    const auto path = split_path(out, kSplitNames[i]);
    write_dataset(path, ds);
    double lo = INFINITY, hi = -INFINITY, sum = 0.0;
    for (const auto& u : ds.utterances) {
      const double snr = measured_snr_db(u, ds.feat_dim, config.contamination);
      lo = std::min(lo, snr);
      hi = std::max(hi, snr);
      sum += snr;
    }
    std::size_t samples = 0;
    for (const auto& u : ds.utterances)
      if (u.frames >= 21) samples += u.frames - 20;
    json snr = nullptr;
    if (std::isfinite(config.contamination.snr_db))
      snr = {{"min", lo}, {"max", hi}, {"mean", sum / static_cast<double>(ds.utterances.size())}};
    splits[kSplitNames[i]] = {{"file", path.filename().string()},
                              {"utterances", ds.utterances.size()},
                              {"frames", ds.total_frames()},
                              {"samples_ctx21", samples},
                              {"measured_snr_db", snr}};
  }
  json manifest = {{"format", "NDNN-DS1"},
                   {"config", config},
                   {"feat_dim", config.corpus.feat_dim},
                   {"n_mono", config.corpus.n_mono},
                   {"n_cd", config.corpus.n_cd()},
                   {"coverage_retries", corpus.coverage_retries},
                   {"splits", splits}};
  write_json(out / "manifest.json", manifest);
  return manifest;
}

SplitData window_splits(const Dataset& train, const Dataset& dev, const Dataset& test,
                        std::size_t ctx_in, std::size_t ctx_out) {
  for (const Dataset* d : {&dev, &test})
    if (d->feat_dim != train.feat_dim || d->n_mono != train.n_mono ||
        d->states_per_phone != train.states_per_phone)
      throw FormatError("splits disagree on feature or label dimensions");
  SplitData s;
  s.feat_dim = train.feat_dim;
  s.n_mono = train.n_mono;
  s.n_cd = train.n_cd();
  // every split uses the train normalization
  const auto norm = train.norm;
  s.train = window(train, ctx_in, ctx_out, norm).samples;
  s.dev = window(dev, ctx_in, ctx_out, norm).samples;
  s.test = window(test, ctx_in, ctx_out, norm).samples;
  if (s.train.empty() || s.dev.empty() || s.test.empty())
    throw FormatError("a split has no windowed samples");
  return s;
}

SplitData load_splits(const fs::path& data_dir, std::size_t ctx_in, std::size_t ctx_out) {
  return window_splits(read_dataset(split_path(data_dir, "train")),
                       read_dataset(split_path(data_dir, "dev")),
                       read_dataset(split_path(data_dir, "test")), ctx_in, ctx_out);
}

// ---- experiment spec --------------------------------------------------------

void ExperimentSpec::validate() const {
  const auto& names = system_names();
  NDNN_REQUIRE(std::find(names.begin(), names.end(), system) != names.end(),
               "unknown system '" + system + "'");
  train.validate();
  NDNN_REQUIRE(!hidden.empty(), "experiment: at least one hidden layer required");
  for (auto d : {se_dropout, sr_dropout})
    NDNN_REQUIRE(!d || (*d >= 0.0 && *d < 1.0), "experiment: dropout must lie in [0, 1)");
}

GraphSpec ExperimentSpec::graph_spec(std::size_t feat_dim, std::size_t n_mono,
                                     std::size_t n_cd) const {
  GraphSpec g = make_graph_spec(feat_dim, n_mono, n_cd, train, hidden,
                                system == "netdnn-residual", ctx_in, ctx_out);
  if (se_dropout) g.se_dropout = *se_dropout;
  if (sr_dropout) g.sr_dropout = *sr_dropout;
  g.validate();
  return g;
}

void to_json(json& j, const ExperimentSpec& s) {
  j = {{"system", s.system},
       {"train", s.train},
       {"hidden", s.hidden},
       {"se_dropout", s.se_dropout ? json(*s.se_dropout) : json(nullptr)},
       {"sr_dropout", s.sr_dropout ? json(*s.sr_dropout) : json(nullptr)},
       {"ctx_in", s.ctx_in},
       {"ctx_out", s.ctx_out}};
}

void from_json(const json& j, ExperimentSpec& s) {
  NDNN_REQUIRE(j.is_object(), "experiment: expected a JSON object");
  if (j.contains("preset")) s = preset(j.at("preset").get<std::string>());
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "preset") continue;
      if (key == "system") {
        s.system = v.get<std::string>();
      } else if (key == "train") {
        s.train = v.get<TrainConfig>();
      } else if (key == "hidden") {
        s.hidden = v.get<std::vector<std::size_t>>();
      } else if (key == "se_dropout") {
        s.se_dropout = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      } else if (key == "sr_dropout") {
        s.sr_dropout = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      } else if (key == "ctx_in") {
        s.ctx_in = v.get<std::size_t>();
      } else if (key == "ctx_out") {
        s.ctx_out = v.get<std::size_t>();
      } else {
        throw UsageError("experiment: unknown key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw UsageError("experiment." + key + ": " + e.what());
    }
  }
}

ExperimentSpec preset(const std::string& name) {
  ExperimentSpec s;
  if (name == "desk") return s;
  if (name == "paper-timit") {
    s.hidden = {1024, 1024, 1024, 1024};
    return s;
  }
  throw UsageError("unknown preset '" + name + "' (expected desk or paper-timit)");
}

// ---- training ----------------------------------------------------------------

json metrics_json(const std::vector<LevelMetrics>& m) {
  json levels = json::array();
  for (std::size_t l = 0; l < m.size(); ++l) {
    const auto& x = m[l];
    levels.push_back({{"level", l},
                      {"fer_cd", x.fer_cd},
                      {"fer_mono", x.fer_mono ? json(*x.fer_mono) : json(nullptr)},
                      {"nll_cd", x.nll_cd},
                      {"nll_mono", x.nll_mono ? json(*x.nll_mono) : json(nullptr)},
                      {"mse", x.mse ? json(*x.mse) : json(nullptr)}});
  }
  return levels;
}

RunResult run_training(const ExperimentSpec& spec, const SplitData& data, const fs::path& out,
                       const Logger& log) {
  spec.validate();
  const GraphSpec graph = spec.graph_spec(data.feat_dim, data.n_mono, data.n_cd);
  const RngStream init = RngStream(spec.train.seed).substream("init");
  auto system = make_system(spec.system, graph, spec.train, init);

  std::ofstream csv;
  if (!out.empty()) {
    fs::create_directories(out);
    write_json(out / "manifest.json", {{"experiment", spec}, {"graph", graph}});
    csv.open(out / "epochs.csv", std::ios::binary);
    if (!csv) throw FormatError("cannot write " + (out / "epochs.csv").string());
    csv << epoch_csv_header() << '\n';
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto on_epoch = [&](const EpochReport& r, const TrainableSystem& s, bool best) {
    if (csv.is_open()) {
      csv << epoch_csv_rows(r);
      csv.flush();
    }
    if (best && !out.empty()) write_checkpoint(out / "checkpoint.ndnn", s.checkpoint());
    if (log) {
      std::string line = spec.system + " seed " + std::to_string(spec.train.seed) + " epoch " +
                         std::to_string(r.epoch) + " eta " + fmt(r.eta, "%g") + " dev fer";
      for (const auto& m : r.dev) line += " " + fmt(m.fer_cd, "%.4f");
      line += " (" + fmt(r.seconds, "%.1f") + "s)" + (best ? " *" : "");
      log(line);
    }
  };
  TrainResult tr = train_loop(data.train, data.dev, *system, spec.train, on_epoch);

  RunResult r;
  r.system = spec.system;
  r.seed = spec.train.seed;
  r.reports = std::move(tr.reports);
  r.best_epoch = tr.best_epoch;
  r.test = tr.best->evaluate(data.test);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.model = std::move(tr.best);
  if (!out.empty())
    write_json(out / "metrics.json", {{"system", r.system},
                                      {"seed", r.seed},
                                      {"best_epoch", r.best_epoch},
                                      {"epochs", r.reports.size()},
                                      {"split", "test"},
                                      {"levels", metrics_json(r.test)}});
  return r;
}

json evaluate_checkpoint(const fs::path& checkpoint, const fs::path& data_dir,
                         const std::string& split, std::optional<std::size_t> level) {
  NDNN_REQUIRE(split == "train" || split == "dev" || split == "test",
               "eval: split must be train, dev or test");
  const Checkpoint ckpt = read_checkpoint(checkpoint);
  const Dataset train = read_dataset(split_path(data_dir, "train"));
  const Dataset ds = split == "train" ? train : read_dataset(split_path(data_dir, split));
  const GraphSpec& g = ckpt.spec;
  if (ds.feat_dim != g.feat_dim || ds.n_mono != g.n_mono || ds.n_cd() != g.n_cd)
    throw FormatError("eval: checkpoint and data dimensions disagree");
  const Samples samples = window(ds, g.ctx_in, g.ctx_out, train.norm).samples;
  NDNN_REQUIRE(!samples.empty(), "eval: split has no windowed samples");

  const auto system = system_from_checkpoint(ckpt, TrainConfig{});
  auto metrics = system->evaluate(samples);
  if (level) {
    NDNN_REQUIRE(*level < metrics.size(), "eval: level " + std::to_string(*level) +
                                              " out of range (system has " +
                                              std::to_string(metrics.size()) + ")");
  }
  json levels = metrics_json(metrics);
  if (level) levels = json::array({levels[*level]});
  return {{"system", ckpt.system}, {"split", split}, {"samples", samples.size()},
          {"levels", levels}};
}

// ---- comparison ----------------------------------------------------------------

double ComparisonRow::mean_cd() const { return mean_of(fer_cd); }
double ComparisonRow::std_cd() const { return std_of(fer_cd); }
double ComparisonRow::mean_mono() const { return mean_of(fer_mono); }

const ComparisonRow* ComparisonReport::find(const std::string& system,
                                            const std::string& level) const {
  for (const auto& r : rows)
    if (r.system == system && r.level == level) return &r;
  return nullptr;
}

std::string ComparisonReport::summary_csv() const {
  std::ostringstream os;
  os << "system,level,seeds,fer_cd_mean,fer_cd_std,fer_mono_mean,fer_mono_std\n";
  for (const auto& r : rows) {
    os << r.system << ',' << r.level << ',' << r.fer_cd.size() << ',' << fmt(r.mean_cd(), "%.10g")
       << ',' << fmt(r.std_cd(), "%.10g") << ',';
    if (!r.fer_mono.empty())
      os << fmt(r.mean_mono(), "%.10g") << ',' << fmt(std_of(r.fer_mono), "%.10g");
    else
      os << ',';
    os << '\n';
  }
  return os.str();
}

std::string ComparisonReport::runs_csv() const {
  std::ostringstream os;
  os << "system,level,seed,fer_cd,fer_mono,train_seconds\n";
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.fer_cd.size(); ++i) {
      os << r.system << ',' << r.level << ',' << seeds[i] << ',' << fmt(r.fer_cd[i], "%.10g") << ',';
      if (i < r.fer_mono.size()) os << fmt(r.fer_mono[i], "%.10g");
      os << ',' << fmt(r.seconds[i], "%.3f") << '\n';
    }
  return os.str();
}

std::string ComparisonReport::table() const {
  std::vector<std::vector<std::string>> cells = {
      {"system", "level", "cd FER mean", "cd FER std", "mono FER mean", "seeds"}};
  for (const auto& r : rows)
    cells.push_back({r.system, r.level, fmt(100.0 * r.mean_cd(), "%.2f%%"),
                     fmt(100.0 * r.std_cd(), "%.2f"),
                     r.fer_mono.empty() ? "-" : fmt(100.0 * r.mean_mono(), "%.2f%%"),
                     std::to_string(r.fer_cd.size())});
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream os;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t c = 0; c < cells[i].size(); ++c) {
      const auto& s = cells[i][c];
      // text columns left-aligned, numbers right-aligned
      if (c < 2)
        os << s << std::string(width[c] - s.size(), ' ');
      else
        os << std::string(width[c] - s.size(), ' ') << s;
      os << (c + 1 < cells[i].size() ? "  " : "\n");
    }
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      os << std::string(total - 2, '-') << '\n';
    }
  }
  return os.str();
}

ComparisonReport compare(const ExperimentSpec& base, const SplitData& data,
                         const std::vector<std::uint64_t>& seeds, const fs::path& out,
                         std::size_t threads, const Logger& log,
                         std::vector<std::string> systems) {
  NDNN_REQUIRE(!seeds.empty(), "compare: seeds must be non-empty");
  if (systems.empty()) systems = system_names();
  base.validate();

  struct Job {
    std::string system;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto seed : seeds)
    for (const auto& s : systems) jobs.push_back({s, seed});

  struct Outcome {
    std::vector<LevelMetrics> test;
    double seconds = 0.0;
  };
  std::vector<Outcome> outcomes(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::mutex log_mutex;
  Logger safe_log;
  if (log)
    safe_log = [&](const std::string& line) {
      std::lock_guard lock(log_mutex);
      log(line);
    };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
      try {
        ExperimentSpec spec = base;
        spec.system = jobs[i].system;
        spec.train.seed = jobs[i].seed;
        const fs::path dir =
            out.empty() ? fs::path{}
                        : out / "runs" / (jobs[i].system + "-seed" + std::to_string(jobs[i].seed));
        RunResult r = run_training(spec, data, dir, safe_log);
        outcomes[i] = {std::move(r.test), r.seconds};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, jobs.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  ComparisonReport report;
  report.seeds = seeds;
  auto row = [&](const std::string& system, const std::string& level) -> ComparisonRow& {
    for (auto& r : report.rows)
      if (r.system == system && r.level == level) return r;
    report.rows.push_back({system, level, {}, {}, {}});
    return report.rows.back();
  };
  // row order: systems in report order, per-level rows after each multi-level top row
  for (const auto& s : systems) {
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].system != s) continue;
      const auto& m = outcomes[i].test;
      auto add = [&](ComparisonRow& r, const LevelMetrics& x) {
        r.fer_cd.push_back(x.fer_cd);
        if (x.fer_mono) r.fer_mono.push_back(*x.fer_mono);
        r.seconds.push_back(outcomes[i].seconds);
      };
      add(row(s, "top"), m.back());
      if (m.size() > 1)
        for (std::size_t l = 0; l < m.size(); ++l) add(row(s, std::to_string(l)), m[l]);
    }
  }

  if (!out.empty()) {
    fs::create_directories(out);
    write_file(out / "summary.csv", report.summary_csv());
    write_file(out / "runs.csv", report.runs_csv());
    write_file(out / "report.txt", report.table());
    write_json(out / "manifest.json",
               {{"experiment", base}, {"seeds", seeds}, {"systems", systems}});
  }
  return report;
}

}  // namespace ndnn
