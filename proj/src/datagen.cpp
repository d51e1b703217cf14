#include "ndnn/datagen.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "ndnn/config_io.hpp"
#include "ndnn/error.hpp"

namespace ndnn {

using json = nlohmann::json;

void CorpusConfig::validate() const {
  NDNN_REQUIRE(n_mono >= 1 && states_per_phone >= 1 && feat_dim >= 1,
               "CorpusConfig: n_mono, states_per_phone and feat_dim must be >= 1");
  NDNN_REQUIRE(n_cd() <= 65535, "CorpusConfig: too many classes for 16-bit labels");
  NDNN_REQUIRE(frames_per_utt >= 1, "CorpusConfig: frames_per_utt must be >= 1");
  NDNN_REQUIRE(dwell_p > 0.0 && dwell_p <= 1.0, "CorpusConfig: dwell_p must be in (0,1]");
  NDNN_REQUIRE(mean_scale >= 0.0 && emission_std >= 0.0,
               "CorpusConfig: mean_scale and emission_std must be >= 0");
}

void ContaminationConfig::validate() const {
  NDNN_REQUIRE(fir_len >= 1, "ContaminationConfig: fir_len must be >= 1");
  NDNN_REQUIRE(decay >= 0.0, "ContaminationConfig: decay must be >= 0");
  NDNN_REQUIRE(!std::isnan(snr_db), "ContaminationConfig: snr_db is NaN");
}

std::vector<double> ContaminationConfig::taps() const {
  validate();
  std::vector<double> h(fir_len);
  double s = 0.0;
  double v = 1.0;
  for (auto& x : h) {
    x = v;
    s += v;
    v *= decay;
  }
  for (auto& x : h) x /= s;
  return h;
}

std::size_t Dataset::total_frames() const {
  std::size_t n = 0;
  for (const auto& u : utterances) n += u.frames;
  return n;
}

bool Dataset::operator==(const Dataset& o) const {
  if (feat_dim != o.feat_dim || states_per_phone != o.states_per_phone || n_mono != o.n_mono ||
      norm != o.norm || utterances.size() != o.utterances.size())
    return false;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const auto& a = utterances[i];
    const auto& b = o.utterances[i];
    // bitwise comparison so that round trips are checked exactly
    if (a.frames != b.frames || a.cd != b.cd || a.mono != b.mono ||
        a.noisy.size() != b.noisy.size() || a.clean.size() != b.clean.size())
      return false;
    if (std::memcmp(a.noisy.data(), b.noisy.data(), a.noisy.size() * sizeof(float)) != 0 ||
        std::memcmp(a.clean.data(), b.clean.data(), a.clean.size() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

Matrix emission_means(const CorpusConfig& config) {
  config.validate();
  RngStream rng = RngStream(config.seed).substream("data").substream("means");
  return gaussian(rng, config.mean_offset, config.mean_scale, config.n_cd(), config.feat_dim);
}

namespace {

Utterance gen_utterance(const CorpusConfig& c, const Matrix& means, RngStream& rng) {
  const std::size_t T = c.frames_per_utt;
  const std::size_t D = c.feat_dim;
  const std::size_t S = c.states_per_phone;
  Utterance u;
  u.frames = T;
  u.clean.resize(T * D);
  u.cd.resize(T);
  u.mono.resize(T);

  std::size_t phone = rng.below(c.n_mono);
  std::size_t t = 0;
  while (t < T) {
    std::size_t dwell = S;
    while (rng.uniform() >= c.dwell_p) ++dwell;
    const std::size_t base = dwell / S;
    const std::size_t extra = dwell % S;
    for (std::size_t s = 0; s < S && t < T; ++s) {
      const std::size_t len = base + (s < extra ? 1 : 0);
      const std::size_t cd = phone * S + s;
      for (std::size_t k = 0; k < len && t < T; ++k, ++t) {
        u.cd[t] = static_cast<std::uint16_t>(cd);
        u.mono[t] = static_cast<std::uint16_t>(phone);
        for (std::size_t d = 0; d < D; ++d)
          u.clean[t * D + d] =
              static_cast<float>(means(cd, d) + c.emission_std * rng.normal());
      }
    }
    if (c.n_mono > 1) {
      const std::size_t next = rng.below(c.n_mono - 1);
      phone = next >= phone ? next + 1 : next;
    }
  }
  u.noisy = u.clean;
  return u;
}

}  // namespace

Dataset gen_clean(const CorpusConfig& config, std::size_t n_utt, const RngStream& rng) {
  config.validate();
  const Matrix means = emission_means(config);
  Dataset ds;
  ds.feat_dim = config.feat_dim;
  ds.states_per_phone = config.states_per_phone;
  ds.n_mono = config.n_mono;
  ds.utterances.reserve(n_utt);
  for (std::size_t i = 0; i < n_utt; ++i) {
    RngStream u_rng = rng.split(i);
    ds.utterances.push_back(gen_utterance(config, means, u_rng));
  }
  return ds;
}

std::vector<double> reverberate(const Utterance& u, std::size_t D, const std::vector<double>& h) {
  std::vector<double> out(u.frames * D, 0.0);
  for (std::size_t t = 0; t < u.frames; ++t)
    for (std::size_t k = 0; k < h.size() && k <= t; ++k)
      for (std::size_t d = 0; d < D; ++d)
        out[t * D + d] += h[k] * static_cast<double>(u.clean[(t - k) * D + d]);
  return out;
}

Dataset contaminate(const Dataset& clean, const ContaminationConfig& config, const RngStream& rng) {
  config.validate();
  const auto h = config.taps();
  const std::size_t D = clean.feat_dim;
  Dataset out = clean;
  for (std::size_t i = 0; i < out.utterances.size(); ++i) {
    auto& u = out.utterances[i];
    const auto reverb = reverberate(u, D, h);
    std::vector<double> noise(reverb.size(), 0.0);
    if (std::isfinite(config.snr_db)) {
      RngStream n_rng = rng.split(i);
      if (config.noise_color == NoiseColor::Iid) {
        for (auto& v : noise) v = n_rng.normal();
      } else {
        // AR(1) per dimension with unit stationary variance
        constexpr double a = 0.95;
        const double innov = std::sqrt(1.0 - a * a);
        for (std::size_t d = 0; d < D; ++d) {
          double state = n_rng.normal();
          for (std::size_t t = 0; t < u.frames; ++t) {
            noise[t * D + d] = state;
            state = a * state + innov * n_rng.normal();
          }
        }
      }
      double e_sig = 0.0, e_noise = 0.0;
      for (std::size_t j = 0; j < reverb.size(); ++j) {
        e_sig += reverb[j] * reverb[j];
        e_noise += noise[j] * noise[j];
      }
      const double gain =
          e_noise > 0.0 ? std::sqrt(e_sig / (e_noise * std::pow(10.0, config.snr_db / 10.0)))
                        : 0.0;
      for (auto& v : noise) v *= gain;
    }
    for (std::size_t j = 0; j < reverb.size(); ++j)
      u.noisy[j] = static_cast<float>(reverb[j] + noise[j]);
  }
  return out;
}

double measured_snr_db(const Utterance& u, std::size_t D, const ContaminationConfig& config) {
  const auto reverb = reverberate(u, D, config.taps());
  double e_sig = 0.0, e_noise = 0.0;
  for (std::size_t j = 0; j < reverb.size(); ++j) {
    const double n = static_cast<double>(u.noisy[j]) - reverb[j];
    e_sig += reverb[j] * reverb[j];
    e_noise += n * n;
  }
  if (e_noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(e_sig / e_noise);
}

Normalization clean_statistics(const Dataset& ds) {
  const std::size_t D = ds.feat_dim;
  Normalization n;
  n.mean.assign(D, 0.0);
  n.std.assign(D, 0.0);
  const double total = static_cast<double>(ds.total_frames());
  NDNN_REQUIRE(total > 0, "clean_statistics: empty dataset");
  for (const auto& u : ds.utterances)
    for (std::size_t j = 0; j < u.clean.size(); ++j) n.mean[j % D] += u.clean[j];
  for (auto& m : n.mean) m /= total;
  for (const auto& u : ds.utterances)
    for (std::size_t j = 0; j < u.clean.size(); ++j) {
      const double d = u.clean[j] - n.mean[j % D];
      n.std[j % D] += d * d;
    }
  for (auto& s : n.std) s = std::sqrt(s / total);
  for (auto& s : n.std)
    if (s == 0.0) s = 1.0;
  return n;
}

WindowedSamples window(const Dataset& ds, std::size_t ctx_in, std::size_t ctx_out,
                       const std::optional<Normalization>& norm_override) {
  NDNN_REQUIRE(ctx_in % 2 == 1 && ctx_out % 2 == 1, "window: context sizes must be odd");
  NDNN_REQUIRE(ctx_out <= ctx_in, "window: ctx_out must not exceed ctx_in");
  const std::size_t D = ds.feat_dim;
  const auto& norm = norm_override ? norm_override : ds.norm;
  if (norm)
    NDNN_REQUIRE(norm->mean.size() == D && norm->std.size() == D,
                 "window: normalization dimension mismatch");

  WindowedSamples out;
  std::size_t n = 0;
  for (const auto& u : ds.utterances) {
    if (u.frames < ctx_in) {
      ++out.skipped_utterances;
      continue;
    }
    n += u.frames - ctx_in + 1;
  }
  auto& s = out.samples;
  s.noisy = Matrix(n, ctx_in * D);
  s.clean = Matrix(n, ctx_out * D);
  s.cd.resize(n);
  s.mono.resize(n);

  auto value = [&](float v, std::size_t d) {
    return norm ? (static_cast<double>(v) - norm->mean[d]) / norm->std[d]
                : static_cast<double>(v);
  };

  const std::size_t half_in = ctx_in / 2;
  const std::size_t half_out = ctx_out / 2;
  std::size_t row = 0;
  for (const auto& u : ds.utterances) {
    if (u.frames < ctx_in) continue;
    for (std::size_t t = half_in; t + half_in < u.frames; ++t, ++row) {
      auto in = s.noisy.row(row);
      for (std::size_t f = 0; f < ctx_in; ++f)
        for (std::size_t d = 0; d < D; ++d)
          in[f * D + d] = value(u.noisy[(t - half_in + f) * D + d], d);
      auto tgt = s.clean.row(row);
      for (std::size_t f = 0; f < ctx_out; ++f)
        for (std::size_t d = 0; d < D; ++d)
          tgt[f * D + d] = value(u.clean[(t - half_out + f) * D + d], d);
      s.cd[row] = u.cd[t];
      s.mono[row] = u.mono[t];
    }
  }
  return out;
}

bool covers_all_states(const Dataset& ds) {
  std::vector<bool> seen(ds.n_cd(), false);
  for (const auto& u : ds.utterances)
    for (auto c : u.cd) seen[c] = true;
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

Corpus generate_corpus(const CorpusConfig& cc, const ContaminationConfig& contam) {
  cc.validate();
  contam.validate();
  const RngStream data = RngStream(cc.seed).substream("data");
  const RngStream noise = RngStream(cc.seed).substream("noise");

  Corpus c;
  Dataset train_clean = gen_clean(cc, cc.n_train, data.substream("train"));
  while (!covers_all_states(train_clean)) {
    ++c.coverage_retries;
    NDNN_REQUIRE(c.coverage_retries < 100,
                 "generate_corpus: train split cannot cover every phone state; enlarge it");
    train_clean = gen_clean(cc, cc.n_train, data.substream("train").split(c.coverage_retries));
  }
  c.train = contaminate(train_clean, contam, noise.substream("train"));
  c.dev = contaminate(gen_clean(cc, cc.n_dev, data.substream("dev")), contam,
                      noise.substream("dev"));
  c.test = contaminate(gen_clean(cc, cc.n_test, data.substream("test")), contam,
                       noise.substream("test"));

  const Normalization norm = clean_statistics(c.train);
  json echo = {{"corpus", cc}, {"contamination", contam}};
  echo["coverage_retries"] = c.coverage_retries;
  for (Dataset* ds : {&c.train, &c.dev, &c.test}) {
    ds->norm = norm;
    ds->config_json = echo.dump();
  }
  return c;
}

// ---- NDNN-DS1 -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'N', 'D', 'N', 'N', 'D', 'S', '1', '\0'};

static_assert(std::endian::native == std::endian::little,
              "dataset I/O assumes a little-endian host");

template <class T>
void put(std::ostream& os, const T* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(T)));
}

template <class T>
void get(std::istream& is, T* p, std::size_t n, const std::filesystem::path& path) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) throw FormatError("read_dataset: truncated payload in " + path.string());
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  json h;
  h["format"] = "NDNN-DS1";
  h["D"] = ds.feat_dim;
  h["S"] = ds.states_per_phone;
  h["M"] = ds.n_mono;
  h["C"] = ds.n_cd();
  h["utterances"] = ds.utterances.size();
  std::vector<std::size_t> frames;
  for (const auto& u : ds.utterances) frames.push_back(u.frames);
  h["frames"] = frames;
  h["config"] = json::parse(ds.config_json);
  if (ds.norm) h["norm"] = {{"mean", ds.norm->mean}, {"std", ds.norm->std}};
  const std::string header = h.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("write_dataset: cannot open " + path.string());
  os.write(kMagic, sizeof kMagic);
  const auto len = static_cast<std::uint32_t>(header.size());
  put(os, &len, 1);
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& u : ds.utterances) {
    put(os, u.noisy.data(), u.noisy.size());
    put(os, u.clean.data(), u.clean.size());
    put(os, u.cd.data(), u.cd.size());
    put(os, u.mono.data(), u.mono.size());
  }
  if (!os) throw FormatError("write_dataset: write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("read_dataset: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw FormatError("read_dataset: bad magic in " + path.string());
  std::uint32_t len = 0;
  get(is, &len, 1, path);
  std::string header(len, '\0');
  is.read(header.data(), len);
  if (!is) throw FormatError("read_dataset: truncated header in " + path.string());

  Dataset ds;
  std::vector<std::size_t> frames;
  try {
    const json h = json::parse(header);
    if (h.at("format") != "NDNN-DS1") throw FormatError("read_dataset: unknown format tag");
    ds.feat_dim = h.at("D").get<std::size_t>();
    ds.states_per_phone = h.at("S").get<std::size_t>();
    ds.n_mono = h.at("M").get<std::size_t>();
    if (h.at("C").get<std::size_t>() != ds.n_cd())
      throw FormatError("read_dataset: C != M·S in " + path.string());
    frames = h.at("frames").get<std::vector<std::size_t>>();
    if (h.at("utterances").get<std::size_t>() != frames.size())
      throw FormatError("read_dataset: utterance count does not match frame table");
    ds.config_json = h.value("config", json::object()).dump();
    if (h.contains("norm")) {
      Normalization n;
      n.mean = h["norm"].at("mean").get<std::vector<double>>();
      n.std = h["norm"].at("std").get<std::vector<double>>();
      if (n.mean.size() != ds.feat_dim || n.std.size() != ds.feat_dim)
        throw FormatError("read_dataset: normalization has wrong dimension");
      ds.norm = std::move(n);
    }
  } catch (const json::exception& e) {
    throw FormatError("read_dataset: bad header in " + path.string() + ": " + e.what());
  }
  if (ds.feat_dim == 0 || ds.n_mono == 0 || ds.states_per_phone == 0)
    throw FormatError("read_dataset: zero dimension in header");

  ds.utterances.resize(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto& u = ds.utterances[i];
    u.frames = frames[i];
    u.noisy.resize(u.frames * ds.feat_dim);
    u.clean.resize(u.frames * ds.feat_dim);
    u.cd.resize(u.frames);
    u.mono.resize(u.frames);
    get(is, u.noisy.data(), u.noisy.size(), path);
    get(is, u.clean.data(), u.clean.size(), path);
    get(is, u.cd.data(), u.cd.size(), path);
    get(is, u.mono.data(), u.mono.size(), path);
    for (std::size_t t = 0; t < u.frames; ++t) {
      if (u.cd[t] >= ds.n_cd() || u.mono[t] >= ds.n_mono ||
          u.mono[t] != u.cd[t] / ds.states_per_phone)
        throw FormatError("read_dataset: inconsistent labels in " + path.string());
    }
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw FormatError("read_dataset: trailing bytes after payload in " + path.string());
  return ds;
}

}  // namespace ndnn
