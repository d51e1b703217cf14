// ndnn: command-line front end over the C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ndnn/ndnn.h"

using json = nlohmann::json;

namespace {

struct Global {
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  bool quiet = false;
};

json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return json::parse(ss.str());
}

// Owns the context and the output string of one call.
class Session {
 public:
  explicit Session(const Global& g) {
    if (ndnn_context_create(&ctx_) != NDNN_OK) throw std::runtime_error("out of memory");
    ndnn_context_set_threads(ctx_, g.threads);
    if (!g.quiet)
      ndnn_context_set_log(
          ctx_, [](const char* line, void*) { std::fprintf(stderr, "%s\n", line); }, nullptr);
  }
  ~Session() {
    ndnn_string_free(out_);
    ndnn_context_destroy(ctx_);
  }
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  ndnn_context* ctx() { return ctx_; }
  char** out() { return &out_; }
  std::string output() const { return out_ ? out_ : ""; }

  int finish(ndnn_status st) {
    if (st != NDNN_OK && st != NDNN_ERR_CHECK)
      std::fprintf(stderr, "error: %s\n", ndnn_last_error(ctx_));
    return static_cast<int>(st);
  }

 private:
  ndnn_context* ctx_ = nullptr;
  char* out_ = nullptr;
};

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> v;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    v.push_back(std::stoul(item));
  }
  return v;
}

std::string format_value(const json& v, const char* f, double scale = 1.0) {
  if (v.is_null()) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, f, scale * v.get<double>());
  return buf;
}

void print_metrics(const json& m) {
  std::printf("%-6s %9s %9s %10s\n", "level", "cd FER", "mono FER", "SE MSE");
  for (const auto& l : m.at("levels"))
    std::printf("%-6d %9s %9s %10s\n", l.at("level").get<int>(),
                format_value(l.at("fer_cd"), "%.2f%%", 100.0).c_str(),
                format_value(l.at("fer_mono"), "%.2f%%", 100.0).c_str(),
                format_value(l.at("mse"), "%.4f").c_str());
}

// Experiment options shared by train and compare.
struct ExperimentFlags {
  std::string config;
  std::string preset;
  std::optional<std::size_t> levels, batch, epochs, patience;
  std::optional<double> lambda, eta0, dropout;
  std::string hidden;
  bool residual = false;

  void add(CLI::App* app, bool with_residual) {
    app->add_option("--config", config, "Experiment JSON (keys: system, train, hidden, se_dropout, sr_dropout, preset)");
    app->add_option("--preset", preset, "Named preset: desk (3x128) or paper-timit (4x1024)");
    app->add_option("--levels", levels, "Levels of the network of DNNs");
    app->add_option("--lambda", lambda, "Weight of gradients from the level above");
    app->add_option("--eta0", eta0, "Initial learning rate");
    app->add_option("--batch", batch, "Minibatch size");
    app->add_option("--dropout", dropout, "Dropout rate of hidden layers");
    app->add_option("--epochs", epochs, "Maximum number of epochs");
    app->add_option("--patience", patience, "Epochs without improvement before stopping");
    app->add_option("--hidden", hidden, "Hidden layer sizes, e.g. 128,128,128");
    if (with_residual) app->add_flag("--residual", residual, "Use the residual network of DNNs");
  }

  json build(const Global& g, const std::optional<std::string>& system) const {
    json j = config.empty() ? json::object() : load_json_file(config);
    if (!preset.empty()) j["preset"] = preset;
    if (system) j["system"] = *system;
    if (residual) {
      if (!j.contains("system") || j["system"] == "netdnn") j["system"] = "netdnn-residual";
      else if (j["system"] != "netdnn-residual")
        throw CLI::ValidationError("--residual", "only applies to netdnn");
    }
    json& t = j["train"];
    if (t.is_null()) t = json::object();
    if (levels) t["levels"] = *levels;
    if (lambda) t["lambda"] = *lambda;
    if (eta0) t["eta0"] = *eta0;
    if (batch) t["batch_size"] = *batch;
    if (dropout) t["dropout"] = *dropout;
    if (epochs) t["max_epochs"] = *epochs;
    if (patience) t["patience"] = *patience;
    if (g.seed) t["seed"] = *g.seed;
    if (!hidden.empty()) j["hidden"] = parse_sizes(hidden);
    return j;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network of deep neural networks for joint speech enhancement and recognition"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--seed", g.seed, "Seed for data generation, initialization and shuffling");
  app.add_option("--threads", g.threads, "Worker threads for compare")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  std::string gen_config, gen_out;
  gen->add_option("--config", gen_config, "Data JSON (keys: corpus, contamination)");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train one system");
  std::optional<std::string> system;
  std::string train_data, train_out;
  ExperimentFlags train_flags;
  train->add_option("--system", system, "single-dnn, multitask, joint-se-sr, netdnn or netdnn-residual");
  train->add_option("--data", train_data, "Data directory from gen-data")->required();
  train->add_option("--out", train_out, "Run directory")->required();
  train_flags.add(train, true);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint per level");
  std::string ckpt, eval_data, split = "test", eval_out;
  int level = -1;
  eval->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  eval->add_option("--data", eval_data, "Data directory")->required();
  eval->add_option("--split", split, "train, dev or test");
  eval->add_option("--level", level, "Report a single level");
  eval->add_option("--out", eval_out, "Also write the metrics JSON here");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of all gradients");
  std::size_t gc_levels = 3;
  bool gc_residual = false, gc_deep = false;
  double gc_tol = 1e-4, gc_step = 1e-5;
  gc->add_option("--levels", gc_levels, "Levels of the tiny graph");
  gc->add_flag("--residual", gc_residual, "Residual mode");
  gc->add_flag("--deep", gc_deep, "Untruncated cross gradients");
  gc->add_option("--tolerance", gc_tol, "Maximum relative error");
  gc->add_option("--step", gc_step, "Central-difference step");

  // compare
  auto* cmp = app.add_subcommand("compare", "Train all systems over several seeds");
  std::string cmp_data, cmp_out, seeds_text = "1,2,3,4,5";
  ExperimentFlags cmp_flags;
  cmp->add_option("--data", cmp_data, "Data directory")->required();
  cmp->add_option("--seeds", seeds_text, "Comma-separated seeds");
  cmp->add_option("--out", cmp_out, "Report directory")->required();
  cmp_flags.add(cmp, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(NDNN_ERR_USAGE);
  }

  try {
    Session s(g);
    if (*gen) {
      json cfg = gen_config.empty() ? json::object() : load_json_file(gen_config);
      if (g.seed) cfg["corpus"]["seed"] = *g.seed;
      const auto st = ndnn_gen_data(s.ctx(), cfg.dump().c_str(), gen_out.c_str(), s.out());
      if (st == NDNN_OK && !g.quiet) {
        const json m = json::parse(s.output());
        for (const auto& [name, sp] : m.at("splits").items()) {
          std::printf("%-5s %4zu utterances %7zu frames", name.c_str(),
                      sp.at("utterances").get<std::size_t>(), sp.at("frames").get<std::size_t>());
          if (!sp.at("measured_snr_db").is_null())
            std::printf("  SNR %.4f dB (min %.4f, max %.4f)",
                        sp.at("measured_snr_db").at("mean").get<double>(),
                        sp.at("measured_snr_db").at("min").get<double>(),
                        sp.at("measured_snr_db").at("max").get<double>());
          std::printf("\n");
        }
      }
      return s.finish(st);
    }
    if (*train) {
      const json spec = train_flags.build(g, system);
      const auto st = ndnn_train(s.ctx(), spec.dump().c_str(), train_data.c_str(),
                                 train_out.c_str(), s.out());
      if (st == NDNN_OK) print_metrics(json::parse(s.output()));
      return s.finish(st);
    }
    if (*eval) {
      const auto st = ndnn_eval(s.ctx(), ckpt.c_str(), eval_data.c_str(), split.c_str(), level,
                                s.out());
      if (st == NDNN_OK) {
        print_metrics(json::parse(s.output()));
        if (!eval_out.empty()) std::ofstream(eval_out) << s.output() << "\n";
      }
      return s.finish(st);
    }
    if (*gc) {
      json opt = {{"levels", gc_levels}, {"residual", gc_residual}, {"deep_cross_grads", gc_deep},
                  {"tolerance", gc_tol},  {"step", gc_step}};
      if (g.seed) opt["seed"] = *g.seed;
      const auto st = ndnn_gradcheck(s.ctx(), opt.dump().c_str(), s.out());
      if (st == NDNN_OK || st == NDNN_ERR_CHECK) {
        const json r = json::parse(s.output());
        if (!g.quiet)
          for (const auto& e : r.at("entries"))
            std::printf("%-12s %-18s %.3e\n", e.at("term").get<std::string>().c_str(),
                        e.at("tensor").get<std::string>().c_str(), e.at("max_rel_err").get<double>());
        std::printf("gradcheck L=%zu residual=%s: max rel err %.3e (tolerance %.0e) %s\n", gc_levels,
                    gc_residual ? "on" : "off", r.at("max_rel_err").get<double>(), gc_tol,
                    r.at("pass").get<bool>() ? "PASS" : "FAIL");
      }
      return s.finish(st);
    }
    if (*cmp) {
      std::vector<std::uint64_t> seeds;
      for (auto v : parse_sizes(seeds_text)) seeds.push_back(v);
      const json spec = cmp_flags.build(g, std::nullopt);
      const auto st = ndnn_compare(s.ctx(), spec.dump().c_str(), cmp_data.c_str(), seeds.data(),
                                   seeds.size(), cmp_out.c_str(), s.out());
      if (st == NDNN_OK) std::printf("%s", json::parse(s.output()).at("table").get<std::string>().c_str());
      return s.finish(st);
    }
  } catch (const CLI::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(NDNN_ERR_USAGE);
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(NDNN_ERR_USAGE);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(NDNN_ERR_USAGE);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(NDNN_ERR_FORMAT);
  }
  return 0;
}
