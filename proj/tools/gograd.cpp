// Command-line front end: configure, run, and validate gradient-estimation
// experiments; write traces and reports under an output directory.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gograd/config.hpp"
#include "gograd/experiments.hpp"
#include "gograd/graph.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool timing = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config) {
  auto* opt = cmd->add_option("--config", args.config_path,
                              "TOML (or JSON) configuration file");
  if (needs_config) opt->required();
  cmd->add_option("--set", args.overrides,
                  "key=value override (repeatable)");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "seed override (wins over GO_GRAD_SEED)");
  cmd->add_option("--threads", args.threads, "worker threads (default 1)");
  cmd->add_flag("--timing", args.timing,
                "record measured wall-clock in trace.csv (breaks byte-for-byte "
                "reproducibility of the timing column)");
}

gograd::ExperimentConfig resolve_config(const CommonArgs& args,
                                        const std::string& experiment) {
  std::vector<std::string> overrides;
  overrides.push_back("experiment=\"" + experiment + "\"");
  for (const auto& ov : args.overrides) overrides.push_back(ov);
  auto cfg = gograd::load_experiment_config(args.config_path, overrides);
  if (const char* env = std::getenv("GO_GRAD_SEED");
      env != nullptr && !args.seed) {
    cfg.seed = std::strtoull(env, nullptr, 10);
  }
  if (args.seed) cfg.seed = *args.seed;
  cfg.threads = args.threads;
  cfg.validate();
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

void persist_config(const gograd::ExperimentConfig& cfg,
                    const fs::path& out_dir) {
  write_file(out_dir / "config.resolved.json",
             gograd::resolved_config_json(cfg));
}

int run_toy(const CommonArgs& args, const std::string& experiment) {
  auto cfg = resolve_config(args, experiment);
  fs::create_directories(args.out_dir);
  persist_config(cfg, args.out_dir);
  const auto results = experiment == "gamma_toy" ? gograd::run_gamma_toy(cfg)
                                                 : gograd::run_nb_toy(cfg);
  for (size_t i = 0; i < results.size(); ++i) {
    const auto& res = results[i];
    const fs::path tagged =
        fs::path(args.out_dir) / ("trace_" + res.estimator + ".csv");
    gograd::write_trace_csv(tagged.string(), res.trace, args.timing);
    if (i == 0) {
      gograd::write_trace_csv((fs::path(args.out_dir) / "trace.csv").string(),
                              res.trace, args.timing);
    }
    std::fprintf(stdout, "%s: estimator=%s final_kl=%.6g\n",
                 experiment.c_str(), res.estimator.c_str(), res.final_kl);
  }
  return 0;
}

int run_vae(const CommonArgs& args) {
  auto cfg = resolve_config(args, "bernoulli_vae");
  fs::create_directories(args.out_dir);
  persist_config(cfg, args.out_dir);
  const auto res = gograd::run_bernoulli_vae(cfg);
  gograd::write_trace_csv((fs::path(args.out_dir) / "trace.csv").string(),
                          res.trace, args.timing);
  nlohmann::json rep = nlohmann::json::array();
  bool all_ok = true;
  for (const auto& cp : res.checkpoints) {
    rep.push_back({{"iteration", cp.iteration},
                   {"within_5se", cp.within_5se},
                   {"probe_mean", cp.probe_mean},
                   {"probe_se", cp.probe_se},
                   {"enumeration", cp.enumeration}});
    all_ok = all_ok && cp.within_5se;
  }
  write_file(fs::path(args.out_dir) / "report.json", rep.dump(2));
  std::fprintf(stdout, "bernoulli_vae: %zu checkpoints, oracle match: %s\n",
               res.checkpoints.size(), all_ok ? "yes" : "NO");
  return 0;
}

int run_suite(const CommonArgs& args) {
  gograd::ExperimentConfig cfg;
  if (!args.config_path.empty()) {
    cfg = resolve_config(args, "unbiasedness_suite");
  } else {
    std::vector<std::string> overrides;
    overrides.push_back("experiment=\"unbiasedness_suite\"");
    for (const auto& ov : args.overrides) overrides.push_back(ov);
    cfg = gograd::parse_experiment_config("", "toml", overrides);
    if (const char* env = std::getenv("GO_GRAD_SEED");
        env != nullptr && !args.seed) {
      cfg.seed = std::strtoull(env, nullptr, 10);
    }
    if (args.seed) cfg.seed = *args.seed;
    cfg.threads = args.threads;
    cfg.validate();
  }
  fs::create_directories(args.out_dir);
  persist_config(cfg, args.out_dir);
  const auto rows = gograd::run_unbiasedness_suite(cfg);
  write_file(fs::path(args.out_dir) / "report.json",
             gograd::suite_report_json(rows));
  size_t passed = 0;
  for (const auto& r : rows) passed += r.pass ? 1 : 0;
  std::fprintf(stdout, "suite: %zu/%zu rows pass\n", passed, rows.size());
  if (passed != rows.size()) {
    std::fprintf(stderr,
                 "error: numerical failure: %zu suite row(s) outside their "
                 "5-SE bands (see report.json)\n",
                 rows.size() - passed);
    return 2;
  }
  return 0;
}

struct GraphArgs {
  std::string graph_path;
  std::string integrand = "sum";
  std::string weights_prefix;
  long samples = 1000;
};

gograd::IntegrandSpec registry_integrand(const std::string& name) {
  gograd::IntegrandSpec f;
  if (name == "sum") {
    f.eval = [](std::span<const double> y) {
      double acc = 0.0;
      for (double v : y) acc += v;
      return acc;
    };
    f.grad = [](std::span<const double> y) {
      return std::vector<double>(y.size(), 1.0);
    };
  } else if (name == "sumsq") {
    f.eval = [](std::span<const double> y) {
      double acc = 0.0;
      for (double v : y) acc += v * v;
      return acc;
    };
    f.grad = [](std::span<const double> y) {
      std::vector<double> g(y.size());
      for (size_t i = 0; i < y.size(); ++i) g[i] = 2.0 * y[i];
      return g;
    };
  } else if (name == "exp_neg_sq") {
    f.eval = [](std::span<const double> y) {
      double acc = 0.0;
      for (double v : y) acc += v * v;
      return std::exp(-acc / 10.0);
    };
    f.grad = [](std::span<const double> y) {
      double acc = 0.0;
      for (double v : y) acc += v * v;
      const double e = std::exp(-acc / 10.0);
      std::vector<double> g(y.size());
      for (size_t i = 0; i < y.size(); ++i) g[i] = -0.2 * y[i] * e;
      return g;
    };
  } else {
    throw gograd::ConfigError(
        "integrand: unknown name '" + name +
        "' (registry: sum, sumsq, exp_neg_sq)");
  }
  return f;
}

int run_graph(const CommonArgs& args, const GraphArgs& gargs) {
  std::ifstream in(gargs.graph_path);
  if (!in) {
    throw gograd::ConfigError("graph: cannot open '" + gargs.graph_path + "'");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  const auto graph = gograd::StochasticGraph::from_json(ss.str());

  std::uint64_t seed = 0;
  if (const char* env = std::getenv("GO_GRAD_SEED")) {
    seed = std::strtoull(env, nullptr, 10);
  }
  if (args.seed) seed = *args.seed;
  gograd::RngStream rng(seed);

  fs::create_directories(args.out_dir);
  std::vector<double> weights;
  if (!gargs.weights_prefix.empty()) {
    weights = gograd::read_weights(graph, gargs.weights_prefix + ".bin",
                                   gargs.weights_prefix + ".json");
  } else {
    gograd::RngStream wrng = rng.substream(0);
    weights = graph.init_weights(wrng);
  }
  // Persist the weights actually used, so the run can be replayed.
  gograd::write_weights(graph, weights,
                        (fs::path(args.out_dir) / "weights.bin").string(),
                        (fs::path(args.out_dir) / "weights.json").string());

  const auto f = registry_integrand(gargs.integrand);
  gograd::RngStream sample_rng = rng.substream(1);
  const auto est =
      gograd::deep_go_gradient(graph, f, gargs.samples, weights, sample_rng);

  nlohmann::json j;
  j["estimator"] = est.estimator;
  j["n_samples"] = est.n_samples;
  j["integrand"] = gargs.integrand;
  j["seed"] = seed;
  j["per_param"] = est.per_param;
  write_file(fs::path(args.out_dir) / "estimate.json", j.dump(2));
  std::fprintf(stdout, "graph-run: %ld samples, %d weights\n", gargs.samples,
               graph.weight_count());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GO-gradient experiment runner"};
  app.require_subcommand(1);

  CommonArgs toy_gamma_args, toy_nb_args, vae_args, suite_args, graph_args;
  GraphArgs graph_extra;

  auto* toy_gamma = app.add_subcommand("toy-gamma", "gamma posterior toy");
  add_common(toy_gamma, toy_gamma_args, true);
  auto* toy_nb = app.add_subcommand("toy-nb", "negative-binomial toy");
  add_common(toy_nb, toy_nb_args, true);
  auto* vae = app.add_subcommand("vae", "bernoulli-latent VAE oracle study");
  add_common(vae, vae_args, true);
  auto* suite = app.add_subcommand("suite", "unbiasedness suite");
  add_common(suite, suite_args, false);
  auto* graph = app.add_subcommand("graph-run", "deep estimate on a graph");
  add_common(graph, graph_args, false);
  graph->add_option("--graph", graph_extra.graph_path, "graph JSON document")
      ->required();
  graph->add_option("--integrand", graph_extra.integrand,
                    "integrand from the named registry");
  graph->add_option("--weights", graph_extra.weights_prefix,
                    "weight checkpoint prefix (expects .bin and .json)");
  graph->add_option("--samples", graph_extra.samples, "Monte Carlo samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (toy_gamma->parsed()) return run_toy(toy_gamma_args, "gamma_toy");
    if (toy_nb->parsed()) return run_toy(toy_nb_args, "nb_toy");
    if (vae->parsed()) return run_vae(vae_args);
    if (suite->parsed()) return run_suite(suite_args);
    if (graph->parsed()) return run_graph(graph_args, graph_extra);
  } catch (const gograd::NumericalError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const gograd::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
