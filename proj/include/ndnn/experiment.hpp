#pragma once

// Experiment harness behind the CLI: corpus generation with manifests,
// training runs with epoch logs and checkpoints, evaluation and the
// multi-seed system comparison.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ndnn/datagen.hpp"
#include "ndnn/systems.hpp"
#include "ndnn/trainer.hpp"

namespace ndnn {

namespace fs = std::filesystem;

struct DataConfig {
  CorpusConfig corpus;
  ContaminationConfig contamination;
};

void to_json(nlohmann::json& j, const DataConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);

/// Writes train/dev/test NDNN-DS1 files and manifest.json into `out`.
/// Returns the manifest.
nlohmann::json gen_data(const DataConfig& config, const fs::path& out);

inline constexpr const char* kSplitNames[] = {"train", "dev", "test"};
fs::path split_path(const fs::path& data_dir, const std::string& split);

struct ExperimentSpec {
  std::string system = "netdnn";
  TrainConfig train;
  std::vector<std::size_t> hidden = {128, 128, 128};
  std::optional<double> se_dropout;  // default: train.dropout
  std::optional<double> sr_dropout;
  std::size_t ctx_in = 21;
  std::size_t ctx_out = 11;

  void validate() const;
  /// Graph spec for a corpus with the given dimensions.
  GraphSpec graph_spec(std::size_t feat_dim, std::size_t n_mono, std::size_t n_cd) const;
};

void to_json(nlohmann::json& j, const ExperimentSpec& s);
void from_json(const nlohmann::json& j, ExperimentSpec& s);

/// Named presets: "desk" (3×128) and "paper-timit" (4×1024).
ExperimentSpec preset(const std::string& name);

/// Windowed splits of one data directory.
struct SplitData {
  std::size_t feat_dim = 0;
  std::size_t n_mono = 0;
  std::size_t n_cd = 0;
  Samples train, dev, test;
};

SplitData load_splits(const fs::path& data_dir, std::size_t ctx_in = 21, std::size_t ctx_out = 11);
/// Window in-memory datasets; all three must agree on dimensions.
SplitData window_splits(const Dataset& train, const Dataset& dev, const Dataset& test,
                        std::size_t ctx_in = 21, std::size_t ctx_out = 11);

using Logger = std::function<void(const std::string&)>;

struct RunResult {
  std::string system;
  std::uint64_t seed = 0;
  std::vector<EpochReport> reports;
  std::size_t best_epoch = 0;
  std::vector<LevelMetrics> test;  // per decodable level, eval mode
  double seconds = 0.0;
  std::unique_ptr<TrainableSystem> model;
};

/// Train one system. With a non-empty `out`, writes epochs.csv,
/// checkpoint.ndnn (best dev epoch), metrics.json and manifest.json.
RunResult run_training(const ExperimentSpec& spec, const SplitData& data,
                       const fs::path& out = {}, const Logger& log = {});

/// JSON view of per-level metrics.
nlohmann::json metrics_json(const std::vector<LevelMetrics>& m);

/// Evaluate a checkpoint on one split; `level` restricts the output to one
/// level of a multi-level system.
nlohmann::json evaluate_checkpoint(const fs::path& checkpoint, const fs::path& data_dir,
                                   const std::string& split = "test",
                                   std::optional<std::size_t> level = std::nullopt);

struct ComparisonRow {
  std::string system;  // e.g. "netdnn"
  std::string level;   // "top" or the level index
  std::vector<double> fer_cd;  // one per seed
  std::vector<double> fer_mono;
  std::vector<double> seconds;
  double mean_cd() const;
  double std_cd() const;
  double mean_mono() const;
};

struct ComparisonReport {
  std::vector<std::uint64_t> seeds;
  std::vector<ComparisonRow> rows;
  const ComparisonRow* find(const std::string& system, const std::string& level = "top") const;
  std::string summary_csv() const;
  std::string runs_csv() const;
  std::string table() const;
};

/// Train every system in `systems` (default: all five) for every seed.
/// Runs may execute on up to `threads` worker threads; each run is
/// sequential and deterministic, so the report does not depend on it.
ComparisonReport compare(const ExperimentSpec& base, const SplitData& data,
                         const std::vector<std::uint64_t>& seeds, const fs::path& out = {},
                         std::size_t threads = 1, const Logger& log = {},
                         std::vector<std::string> systems = {});

}  // namespace ndnn
