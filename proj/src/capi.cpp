#include "ndnn/ndnn.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include <json.hpp>

#include "ndnn/config_io.hpp"
#include "ndnn/error.hpp"
#include "ndnn/experiment.hpp"
#include "ndnn/serialize.hpp"

using json = nlohmann::json;

struct ndnn_context {
  std::string last_error;
  unsigned threads = 1;
  ndnn_log_fn log = nullptr;
  void* log_user = nullptr;

  ndnn::Logger logger() const {
    if (!log) return {};
    return [fn = log, user = log_user](const std::string& line) { fn(line.c_str(), user); };
  }
};

struct ndnn_model {
  ndnn::Checkpoint checkpoint;
  std::unique_ptr<ndnn::TrainableSystem> system;
};

struct ndnn_dataset {
  ndnn::Dataset data;
};

namespace {

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void put(char** out, const json& j) {
  if (out) *out = dup_string(j.dump(2));
}

json parse_config(const char* text) {
  if (!text || !*text) return json::object();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ndnn::UsageError(std::string("invalid JSON: ") + e.what());
  }
}

template <class F>
ndnn_status guarded(ndnn_context* ctx, F&& body) {
  if (!ctx) return NDNN_ERR_USAGE;
  ctx->last_error.clear();
  try {
    return body();
  } catch (const ndnn::UsageError& e) {
    ctx->last_error = e.what();
    return NDNN_ERR_USAGE;
  } catch (const ndnn::FormatError& e) {
    ctx->last_error = e.what();
    return NDNN_ERR_FORMAT;
  } catch (const json::exception& e) {
    ctx->last_error = e.what();
    return NDNN_ERR_USAGE;
  } catch (const std::filesystem::filesystem_error& e) {
    ctx->last_error = e.what();
    return NDNN_ERR_FORMAT;
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
    return NDNN_ERR_INTERNAL;
  } catch (...) {
    ctx->last_error = "unknown error";
    return NDNN_ERR_INTERNAL;
  }
}

void require_arg(const void* p, const char* name) {
  if (!p) throw ndnn::UsageError(std::string(name) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* ndnn_version(void) { return "1.0.0"; }

ndnn_status ndnn_context_create(ndnn_context** out) {
  if (!out) return NDNN_ERR_USAGE;
  *out = new (std::nothrow) ndnn_context();
  return *out ? NDNN_OK : NDNN_ERR_INTERNAL;
}

void ndnn_context_destroy(ndnn_context* ctx) { delete ctx; }

ndnn_status ndnn_context_set_threads(ndnn_context* ctx, unsigned threads) {
  return guarded(ctx, [&] {
    if (threads == 0) throw ndnn::UsageError("threads must be at least 1");
    ctx->threads = threads;
    return NDNN_OK;
  });
}

ndnn_status ndnn_context_set_log(ndnn_context* ctx, ndnn_log_fn fn, void* user) {
  return guarded(ctx, [&] {
    ctx->log = fn;
    ctx->log_user = user;
    return NDNN_OK;
  });
}

const char* ndnn_last_error(const ndnn_context* ctx) {
  return ctx ? ctx->last_error.c_str() : "null context";
}

void ndnn_string_free(char* s) { std::free(s); }

ndnn_status ndnn_gen_data(ndnn_context* ctx, const char* config_json, const char* out_dir,
                          char** manifest_json) {
  return guarded(ctx, [&] {
    require_arg(out_dir, "out_dir");
    const auto config = parse_config(config_json).get<ndnn::DataConfig>();
    put(manifest_json, ndnn::gen_data(config, out_dir));
    return NDNN_OK;
  });
}

ndnn_status ndnn_train(ndnn_context* ctx, const char* experiment_json, const char* data_dir,
                       const char* out_dir, char** metrics_json) {
  return guarded(ctx, [&] {
    require_arg(data_dir, "data_dir");
    const auto spec = parse_config(experiment_json).get<ndnn::ExperimentSpec>();
    spec.validate();
    const auto data = ndnn::load_splits(data_dir, spec.ctx_in, spec.ctx_out);
    const auto r = ndnn::run_training(spec, data, out_dir ? out_dir : "", ctx->logger());
    put(metrics_json, {{"system", r.system},
                       {"seed", r.seed},
                       {"best_epoch", r.best_epoch},
                       {"epochs", r.reports.size()},
                       {"seconds", r.seconds},
                       {"split", "test"},
                       {"levels", ndnn::metrics_json(r.test)}});
    return NDNN_OK;
  });
}

ndnn_status ndnn_eval(ndnn_context* ctx, const char* checkpoint, const char* data_dir,
                      const char* split, int level, char** metrics_json) {
  return guarded(ctx, [&] {
    require_arg(checkpoint, "checkpoint");
    require_arg(data_dir, "data_dir");
    std::optional<std::size_t> lvl;
    if (level >= 0) lvl = static_cast<std::size_t>(level);
    put(metrics_json,
        ndnn::evaluate_checkpoint(checkpoint, data_dir, split ? split : "test", lvl));
    return NDNN_OK;
  });
}

ndnn_status ndnn_gradcheck(ndnn_context* ctx, const char* options_json, char** report_json) {
  return guarded(ctx, [&] {
    const json j = parse_config(options_json);
    std::size_t levels = 3;
    bool residual = false;
    ndnn::TrainConfig config;
    ndnn::GradCheckOptions opt;
    for (const auto& [key, v] : j.items()) {
      if (key == "levels") levels = v.get<std::size_t>();
      else if (key == "residual") residual = v.get<bool>();
      else if (key == "deep_cross_grads") config.deep_cross_grads = v.get<bool>();
      else if (key == "tolerance") opt.tolerance = v.get<double>();
      else if (key == "step") opt.step = v.get<double>();
      else if (key == "batch") opt.batch = v.get<std::size_t>();
      else if (key == "seed") config.seed = v.get<std::uint64_t>();
      else throw ndnn::UsageError("gradcheck: unknown key '" + key + "'");
    }
    NDNN_REQUIRE(levels >= 1, "gradcheck: levels must be at least 1");
    NDNN_REQUIRE(opt.step > 0.0, "gradcheck: step must be positive");
    NDNN_REQUIRE(opt.batch >= 2, "gradcheck: batch must be at least 2");
    config.levels = levels;
    const auto report = ndnn::grad_check(ndnn::tiny_graph_spec(levels, residual), config, opt);
    json entries = json::array();
    for (const auto& e : report.entries)
      entries.push_back({{"term", e.term},
                         {"tensor", e.tensor},
                         {"max_rel_err", e.max_rel_err},
                         {"checked", e.checked},
                         {"skipped", e.skipped}});
    put(report_json, {{"levels", levels},
                      {"residual", residual},
                      {"deep_cross_grads", config.deep_cross_grads},
                      {"step", opt.step},
                      {"tolerance", report.tolerance},
                      {"max_rel_err", report.max_rel_err},
                      {"pass", report.pass},
                      {"entries", entries}});
    return report.pass ? NDNN_OK : NDNN_ERR_CHECK;
  });
}

ndnn_status ndnn_compare(ndnn_context* ctx, const char* experiment_json, const char* data_dir,
                         const uint64_t* seeds, size_t n_seeds, const char* out_dir,
                         char** report_json) {
  return guarded(ctx, [&] {
    require_arg(data_dir, "data_dir");
    NDNN_REQUIRE(seeds && n_seeds > 0, "compare: at least one seed required");
    const auto spec = parse_config(experiment_json).get<ndnn::ExperimentSpec>();
    const auto data = ndnn::load_splits(data_dir, spec.ctx_in, spec.ctx_out);
    const std::vector<std::uint64_t> seed_list(seeds, seeds + n_seeds);
    const auto report = ndnn::compare(spec, data, seed_list, out_dir ? out_dir : "",
                                      ctx->threads, ctx->logger());
    json rows = json::array();
    for (const auto& r : report.rows)
      rows.push_back({{"system", r.system},
                      {"level", r.level},
                      {"fer_cd", r.fer_cd},
                      {"fer_mono", r.fer_mono},
                      {"fer_cd_mean", r.mean_cd()},
                      {"fer_cd_std", r.std_cd()}});
    put(report_json, {{"seeds", report.seeds}, {"rows", rows}, {"table", report.table()}});
    return NDNN_OK;
  });
}

ndnn_status ndnn_model_load(ndnn_context* ctx, const char* checkpoint, ndnn_model** out) {
  return guarded(ctx, [&] {
    require_arg(checkpoint, "checkpoint");
    require_arg(out, "out");
    auto m = std::make_unique<ndnn_model>();
    m->checkpoint = ndnn::read_checkpoint(checkpoint);
    m->system = ndnn::system_from_checkpoint(m->checkpoint, ndnn::TrainConfig{});
    *out = m.release();
    return NDNN_OK;
  });
}

void ndnn_model_free(ndnn_model* model) { delete model; }

ndnn_status ndnn_model_info(ndnn_context* ctx, const ndnn_model* model, char** info_json) {
  return guarded(ctx, [&] {
    require_arg(model, "model");
    std::size_t params = 0;
    json nets = json::array();
    for (const auto& n : model->checkpoint.networks) {
      params += n.params.spec.parameter_count();
      nets.push_back(n.name);
    }
    put(info_json, {{"system", model->checkpoint.system},
                    {"levels", model->system->levels()},
                    {"graph", model->checkpoint.spec},
                    {"networks", nets},
                    {"parameters", params}});
    return NDNN_OK;
  });
}

ndnn_status ndnn_dataset_load(ndnn_context* ctx, const char* path, ndnn_dataset** out) {
  return guarded(ctx, [&] {
    require_arg(path, "path");
    require_arg(out, "out");
    auto d = std::make_unique<ndnn_dataset>();
    d->data = ndnn::read_dataset(path);
    *out = d.release();
    return NDNN_OK;
  });
}

void ndnn_dataset_free(ndnn_dataset* ds) { delete ds; }

ndnn_status ndnn_dataset_info(ndnn_context* ctx, const ndnn_dataset* ds, char** info_json) {
  return guarded(ctx, [&] {
    require_arg(ds, "dataset");
    const auto& d = ds->data;
    put(info_json, {{"utterances", d.utterances.size()},
                    {"frames", d.total_frames()},
                    {"feat_dim", d.feat_dim},
                    {"n_mono", d.n_mono},
                    {"n_cd", d.n_cd()},
                    {"normalized", d.norm.has_value()}});
    return NDNN_OK;
  });
}

ndnn_status ndnn_model_evaluate(ndnn_context* ctx, const ndnn_model* model,
                                const ndnn_dataset* ds, char** metrics_json) {
  return guarded(ctx, [&] {
    require_arg(model, "model");
    require_arg(ds, "dataset");
    const auto& g = model->system->graph_spec();
    const auto& d = ds->data;
    if (d.feat_dim != g.feat_dim || d.n_mono != g.n_mono || d.n_cd() != g.n_cd)
      throw ndnn::FormatError("model and dataset dimensions disagree");
    const auto samples = ndnn::window(d, g.ctx_in, g.ctx_out).samples;
    NDNN_REQUIRE(!samples.empty(), "dataset has no windowed samples");
    put(metrics_json, {{"system", model->checkpoint.system},
                       {"samples", samples.size()},
                       {"levels", ndnn::metrics_json(model->system->evaluate(samples))}});
    return NDNN_OK;
  });
}

ndnn_status ndnn_model_decode(ndnn_context* ctx, const ndnn_model* model, const double* inputs,
                              size_t rows, size_t cols, int level, uint32_t* labels) {
  return guarded(ctx, [&] {
    require_arg(model, "model");
    require_arg(inputs, "inputs");
    require_arg(labels, "labels");
    const auto& g = model->system->graph_spec();
    NDNN_REQUIRE(cols == g.noisy_dim(), "decode: expected " + std::to_string(g.noisy_dim()) +
                                            " columns, got " + std::to_string(cols));
    NDNN_REQUIRE(rows > 0, "decode: no rows");
    const std::size_t levels = model->system->levels();
    NDNN_REQUIRE(level < static_cast<int>(levels), "decode: level out of range");
    ndnn::Matrix x(rows, cols);
    std::memcpy(x.values().data(), inputs, rows * cols * sizeof(double));
    const auto decoded = model->system->decode(x);
    const auto& pick = decoded[level < 0 ? levels - 1 : static_cast<std::size_t>(level)];
    std::copy(pick.begin(), pick.end(), labels);
    return NDNN_OK;
  });
}

}  // extern "C"
