#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ndnn/rng.hpp"
#include "ndnn/samples.hpp"

namespace ndnn {

struct CorpusConfig {
  std::size_t n_mono = 10;
  std::size_t states_per_phone = 3;
  std::size_t feat_dim = 13;
  std::size_t n_train = 300;
  std::size_t n_dev = 60;
  std::size_t n_test = 60;
  std::size_t frames_per_utt = 200;
  // Phone dwell = states_per_phone + Geometric(p) extra frames (support {0,1,...}).
  double dwell_p = 0.2;
  double mean_scale = 1.0;
  // Constant added to every mean in every dimension (a shared DC level).
  double mean_offset = 0.0;
  double emission_std = 1.5;
  std::uint64_t seed = 1;

  std::size_t n_cd() const { return n_mono * states_per_phone; }
  double mean_dwell() const { return static_cast<double>(states_per_phone) + (1.0 - dwell_p) / dwell_p; }
  void validate() const;
  bool operator==(const CorpusConfig&) const = default;
};

enum class NoiseColor { Iid, SlowlyVarying };

struct ContaminationConfig {
  std::size_t fir_len = 8;
  double decay = 0.5;
  double snr_db = 10.0;  // +infinity disables noise
  NoiseColor noise_color = NoiseColor::Iid;

  void validate() const;
  /// Normalized taps h_k ∝ decay^k, Σh = 1.
  std::vector<double> taps() const;
  bool operator==(const ContaminationConfig&) const = default;
};

struct Utterance {
  std::size_t frames = 0;
  std::vector<float> noisy;  // [frames × D], row-major
  std::vector<float> clean;  // [frames × D]
  std::vector<std::uint16_t> cd;
  std::vector<std::uint16_t> mono;
};

/// Per-dimension feature normalization (x − mean) / std.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> std;
  bool operator==(const Normalization&) const = default;
};

struct Dataset {
  std::size_t feat_dim = 0;
  std::size_t states_per_phone = 0;
  std::size_t n_mono = 0;
  std::vector<Utterance> utterances;
  std::optional<Normalization> norm;
  std::string config_json = "{}";  // generator settings echoed into the file header

  std::size_t n_cd() const { return n_mono * states_per_phone; }
  std::size_t total_frames() const;
  bool operator==(const Dataset&) const;
};

/// Phone-state emission means [n_cd × D], drawn once per corpus seed.
Matrix emission_means(const CorpusConfig& config);

/// Clean utterances (noisy = clean). Phone sequence from a uniform Markov chain
/// without self-loops; each phone's dwell is split left-to-right over its
/// sub-states; frames are the state mean plus Gaussian emission noise.
Dataset gen_clean(const CorpusConfig& config, std::size_t n_utt, const RngStream& rng);

/// Feature-space reverberation (normalized exponential FIR, zero-padded) and
/// additive noise scaled to the target SNR per utterance. Labels and clean
/// features are left unchanged.
Dataset contaminate(const Dataset& clean, const ContaminationConfig& config, const RngStream& rng);

/// Measured 10·log10(‖reverb‖²/‖noisy − reverb‖²) of one utterance.
double measured_snr_db(const Utterance& u, std::size_t feat_dim, const ContaminationConfig& config);

/// Reverberant (noise-free) version of one utterance's clean features.
std::vector<double> reverberate(const Utterance& u, std::size_t feat_dim,
                                const std::vector<double>& taps);

/// Mean and (biased) std of clean features per dimension.
Normalization clean_statistics(const Dataset& ds);

struct WindowedSamples {
  Samples samples;
  std::size_t skipped_utterances = 0;  // shorter than ctx_in
};

/// One sample per frame with full left/right context. Inputs are noisy frames
/// [t−ctx_in/2, t+ctx_in/2] flattened frame-major; targets are clean frames
/// [t−ctx_out/2, t+ctx_out/2]. Applies ds.norm (or `norm` when given).
WindowedSamples window(const Dataset& ds, std::size_t ctx_in = 21, std::size_t ctx_out = 11,
                       const std::optional<Normalization>& norm = std::nullopt);

struct Corpus {
  Dataset train;
  Dataset dev;
  Dataset test;
  std::size_t coverage_retries = 0;
};

/// Train/dev/test splits, contaminated, sharing one set of emission means and
/// the normalization of the clean train split. The train split is regenerated
/// with a derived stream until every phone-state occurs.
Corpus generate_corpus(const CorpusConfig& corpus, const ContaminationConfig& contamination);

bool covers_all_states(const Dataset& ds);

/// NDNN-DS1 container.
void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace ndnn
