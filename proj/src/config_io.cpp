#include "ndnn/config_io.hpp"

#include <cmath>
#include <limits>
#include <set>

#include "ndnn/error.hpp"

namespace ndnn {

using json = nlohmann::json;

namespace {

/// Reads known keys from an object and rejects everything else.
class StrictReader {
 public:
  StrictReader(const json& j, std::string what) : j_(j), what_(std::move(what)) {
    NDNN_REQUIRE(j.is_object(), what_ + ": expected a JSON object");
  }
  ~StrictReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw UsageError(what_ + ": unknown key '" + key + "'");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw UsageError(what_ + "." + key + ": " + e.what());
    }
  }

  // null → +infinity
  void read_extended(const char* key, double& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if (v.is_null()) {
      out = std::numeric_limits<double>::infinity();
    } else if (v.is_string() && (v == "inf" || v == "+inf")) {
      out = std::numeric_limits<double>::infinity();
    } else {
      NDNN_REQUIRE(v.is_number(), what_ + "." + key + ": expected a number");
      out = v.get<double>();
    }
  }

 private:
  const json& j_;
  std::string what_;
  std::set<std::string> seen_;
};

}  // namespace

void to_json(json& j, const CorpusConfig& c) {
  j = {{"n_mono", c.n_mono},
       {"states_per_phone", c.states_per_phone},
       {"feat_dim", c.feat_dim},
       {"n_train", c.n_train},
       {"n_dev", c.n_dev},
       {"n_test", c.n_test},
       {"frames_per_utt", c.frames_per_utt},
       {"dwell_p", c.dwell_p},
       {"mean_scale", c.mean_scale},
       {"mean_offset", c.mean_offset},
       {"emission_std", c.emission_std},
       {"seed", c.seed}};
}

void from_json(const json& j, CorpusConfig& c) {
  StrictReader r(j, "corpus");
  r.read("n_mono", c.n_mono);
  r.read("states_per_phone", c.states_per_phone);
  r.read("feat_dim", c.feat_dim);
  r.read("n_train", c.n_train);
  r.read("n_dev", c.n_dev);
  r.read("n_test", c.n_test);
  r.read("frames_per_utt", c.frames_per_utt);
  r.read("dwell_p", c.dwell_p);
  r.read("mean_scale", c.mean_scale);
  r.read("mean_offset", c.mean_offset);
  r.read("emission_std", c.emission_std);
  r.read("seed", c.seed);
}

void to_json(json& j, const ContaminationConfig& c) {
  j = {{"fir_len", c.fir_len},
       {"decay", c.decay},
       {"snr_db", std::isfinite(c.snr_db) ? json(c.snr_db) : json(nullptr)},
       {"noise_color", c.noise_color == NoiseColor::Iid ? "iid" : "slowly-varying"}};
}

void from_json(const json& j, ContaminationConfig& c) {
  StrictReader r(j, "contamination");
  r.read("fir_len", c.fir_len);
  r.read("decay", c.decay);
  r.read_extended("snr_db", c.snr_db);
  std::string color = c.noise_color == NoiseColor::Iid ? "iid" : "slowly-varying";
  r.read("noise_color", color);
  if (color == "iid") {
    c.noise_color = NoiseColor::Iid;
  } else if (color == "slowly-varying") {
    c.noise_color = NoiseColor::SlowlyVarying;
  } else {
    throw UsageError("contamination.noise_color: expected 'iid' or 'slowly-varying'");
  }
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"eta0", c.eta0},
       {"lambda", c.lambda},
       {"batch_size", c.batch_size},
       {"levels", c.levels},
       {"dropout", c.dropout},
       {"lr_halving_threshold", c.lr_halving_threshold},
       {"patience", c.patience},
       {"max_epochs", c.max_epochs},
       {"mono_loss_weight", c.mono_loss_weight},
       {"top_level_scale", c.top_level_scale == TopLevelScale::One ? "one" : "one-minus-lambda"},
       {"deep_cross_grads", c.deep_cross_grads},
       {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  StrictReader r(j, "train");
  r.read("eta0", c.eta0);
  r.read("lambda", c.lambda);
  r.read("batch_size", c.batch_size);
  r.read("levels", c.levels);
  r.read("dropout", c.dropout);
  r.read("lr_halving_threshold", c.lr_halving_threshold);
  r.read("patience", c.patience);
  r.read("max_epochs", c.max_epochs);
  r.read("mono_loss_weight", c.mono_loss_weight);
  std::string top = c.top_level_scale == TopLevelScale::One ? "one" : "one-minus-lambda";
  r.read("top_level_scale", top);
  if (top == "one") {
    c.top_level_scale = TopLevelScale::One;
  } else if (top == "one-minus-lambda") {
    c.top_level_scale = TopLevelScale::OneMinusLambda;
  } else {
    throw UsageError("train.top_level_scale: expected 'one' or 'one-minus-lambda'");
  }
  r.read("deep_cross_grads", c.deep_cross_grads);
  r.read("seed", c.seed);
}

void to_json(json& j, const HeadSpec& h) {
  j = {{"name", h.name}, {"dim", h.dim}, {"kind", h.kind == HeadKind::Linear ? "linear" : "softmax"}};
}

void from_json(const json& j, HeadSpec& h) {
  StrictReader r(j, "head");
  r.read("name", h.name);
  r.read("dim", h.dim);
  std::string kind = "linear";
  r.read("kind", kind);
  NDNN_REQUIRE(kind == "linear" || kind == "softmax", "head.kind: expected 'linear' or 'softmax'");
  h.kind = kind == "linear" ? HeadKind::Linear : HeadKind::Softmax;
}

void to_json(json& j, const MlpSpec& s) {
  j = {{"input_dim", s.input_dim},     {"hidden_dims", s.hidden_dims},
       {"heads", s.heads},             {"dropout_rate", s.dropout_rate},
       {"use_batchnorm", s.use_batchnorm}, {"bn_momentum", s.bn_momentum},
       {"bn_eps", s.bn_eps}};
}

void from_json(const json& j, MlpSpec& s) {
  StrictReader r(j, "mlp");
  r.read("input_dim", s.input_dim);
  r.read("hidden_dims", s.hidden_dims);
  r.read("heads", s.heads);
  r.read("dropout_rate", s.dropout_rate);
  r.read("use_batchnorm", s.use_batchnorm);
  r.read("bn_momentum", s.bn_momentum);
  r.read("bn_eps", s.bn_eps);
}

void to_json(json& j, const GraphSpec& s) {
  j = {{"levels", s.levels},       {"feat_dim", s.feat_dim},
       {"ctx_in", s.ctx_in},       {"ctx_out", s.ctx_out},
       {"n_mono", s.n_mono},       {"n_cd", s.n_cd},
       {"se_hidden", s.se_hidden}, {"sr_hidden", s.sr_hidden},
       {"se_dropout", s.se_dropout}, {"sr_dropout", s.sr_dropout},
       {"use_batchnorm", s.use_batchnorm}, {"residual", s.residual}};
}

void from_json(const json& j, GraphSpec& s) {
  StrictReader r(j, "graph");
  r.read("levels", s.levels);
  r.read("feat_dim", s.feat_dim);
  r.read("ctx_in", s.ctx_in);
  r.read("ctx_out", s.ctx_out);
  r.read("n_mono", s.n_mono);
  r.read("n_cd", s.n_cd);
  r.read("se_hidden", s.se_hidden);
  r.read("sr_hidden", s.sr_hidden);
  r.read("se_dropout", s.se_dropout);
  r.read("sr_dropout", s.sr_dropout);
  r.read("use_batchnorm", s.use_batchnorm);
  r.read("residual", s.residual);
}

}  // namespace ndnn
