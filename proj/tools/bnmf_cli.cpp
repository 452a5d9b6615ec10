// bnmf: Bayesian NMF fits and experiment sweeps from the command line.
//
// Subcommands: fit, convergence, noise, sparsity, validate-data.
// Option values come from --config (JSON) when given, with command-line flags
// taking precedence; the fully resolved configuration is echoed into the run
// manifest. Result tables are deterministic under (config, seed); wall-clock
// timings go to a separate timings table and the manifest.
//
// Exit codes: 0 success, 2 config/validation, 3 I/O, 4 numerical failure.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bnmf/data.hpp"
#include "bnmf/errors.hpp"
#include "bnmf/harness.hpp"
#include "bnmf/report.hpp"
#include "bnmf/samplers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

struct Options {
  std::string dataset;
  std::string format = "u.data";
  std::vector<std::string> models = {"GRRN"};
  std::vector<std::size_t> k_list = {10};
  std::vector<double> fractions;
  std::vector<double> noises;
  std::size_t iterations = 500;
  std::size_t burn_in = 400;
  std::size_t repeats = 10;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::size_t min_observed = 0;
  std::size_t threads = 0;

  // hyperparameter overrides; unset means the model default
  std::optional<double> alpha_sigma, beta_sigma, mu_mu, tau_mu, a, b,
      alpha_lambda, beta_lambda, beta_lambda_scale, gee_lambda, gtt_mu, gtt_tau;
};

const std::vector<std::string> kConfigKeys = {
    "schema_version", "dataset",  "format",  "models",       "k",
    "fractions",      "noise",    "iterations", "burn_in",   "repeats",
    "seed",           "out",      "min_observed", "hyper"};
const std::vector<std::string> kHyperKeys = {
    "alpha_sigma", "beta_sigma", "mu_mu",      "tau_mu",
    "a",           "b",          "alpha_lambda", "beta_lambda",
    "beta_lambda_scale", "gee_lambda", "gtt_mu", "gtt_tau"};

void apply_config_file(const std::string& path, Options& opt) {
  std::ifstream in(path);
  if (!in) throw bnmf::IoError("cannot open config: " + path);
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& e) {
    throw bnmf::ValidationError("config parse error: " + std::string(e.what()));
  }
  if (!cfg.is_object()) throw bnmf::ValidationError("config must be an object");
  for (const auto& [key, value] : cfg.items()) {
    if (std::find(kConfigKeys.begin(), kConfigKeys.end(), key) ==
        kConfigKeys.end())
      throw bnmf::ValidationError("unknown config key: " + key);
  }
  auto get = [&cfg](const char* key) { return cfg.contains(key); };
  if (get("dataset")) opt.dataset = cfg["dataset"].get<std::string>();
  if (get("format")) opt.format = cfg["format"].get<std::string>();
  if (get("models")) opt.models = cfg["models"].get<std::vector<std::string>>();
  if (get("k")) opt.k_list = cfg["k"].get<std::vector<std::size_t>>();
  if (get("fractions"))
    opt.fractions = cfg["fractions"].get<std::vector<double>>();
  if (get("noise")) opt.noises = cfg["noise"].get<std::vector<double>>();
  if (get("iterations")) opt.iterations = cfg["iterations"].get<std::size_t>();
  if (get("burn_in")) opt.burn_in = cfg["burn_in"].get<std::size_t>();
  if (get("repeats")) opt.repeats = cfg["repeats"].get<std::size_t>();
  if (get("seed")) opt.seed = cfg["seed"].get<std::uint64_t>();
  if (get("out")) opt.out_dir = cfg["out"].get<std::string>();
  if (get("min_observed"))
    opt.min_observed = cfg["min_observed"].get<std::size_t>();
  if (get("hyper")) {
    const json& h = cfg["hyper"];
    if (!h.is_object())
      throw bnmf::ValidationError("config hyper must be an object");
    for (const auto& [key, value] : h.items()) {
      if (std::find(kHyperKeys.begin(), kHyperKeys.end(), key) ==
          kHyperKeys.end())
        throw bnmf::ValidationError("unknown hyper key: " + key);
    }
    auto set = [&h](const char* key, std::optional<double>& dst) {
      if (h.contains(key)) dst = h[key].get<double>();
    };
    set("alpha_sigma", opt.alpha_sigma);
    set("beta_sigma", opt.beta_sigma);
    set("mu_mu", opt.mu_mu);
    set("tau_mu", opt.tau_mu);
    set("a", opt.a);
    set("b", opt.b);
    set("alpha_lambda", opt.alpha_lambda);
    set("beta_lambda", opt.beta_lambda);
    set("beta_lambda_scale", opt.beta_lambda_scale);
    set("gee_lambda", opt.gee_lambda);
    set("gtt_mu", opt.gtt_mu);
    set("gtt_tau", opt.gtt_tau);
  }
}

bnmf::HyperParams build_hyper(const Options& opt) {
  bnmf::HyperParams h;
  if (opt.alpha_sigma) h.alpha_sigma = *opt.alpha_sigma;
  if (opt.beta_sigma) h.beta_sigma = *opt.beta_sigma;
  if (opt.mu_mu) h.mu_mu = *opt.mu_mu;
  if (opt.tau_mu) h.tau_mu = *opt.tau_mu;
  if (opt.a) h.a = *opt.a;
  if (opt.b) h.b = *opt.b;
  if (opt.alpha_lambda) h.alpha_lambda = *opt.alpha_lambda;
  if (opt.beta_lambda) h.beta_lambda = *opt.beta_lambda;
  if (opt.beta_lambda_scale) h.beta_lambda_scale = *opt.beta_lambda_scale;
  if (opt.gee_lambda) h.gee_lambda = *opt.gee_lambda;
  if (opt.gtt_mu) h.gtt_mu = *opt.gtt_mu;
  if (opt.gtt_tau) h.gtt_tau = *opt.gtt_tau;
  h.validate();
  return h;
}

json hyper_json(const bnmf::HyperParams& h) {
  json j;
  j["alpha_sigma"] = h.alpha_sigma;
  j["beta_sigma"] = h.beta_sigma;
  j["mu_mu"] = h.mu_mu;
  j["tau_mu"] = h.tau_mu;
  j["a"] = h.a;
  j["b"] = h.b;
  j["alpha_lambda"] = h.alpha_lambda;
  if (h.beta_lambda)
    j["beta_lambda"] = *h.beta_lambda;
  else
    j["beta_lambda"] = nullptr;  // resolved per fit as scale * sqrt(m0/K)
  j["beta_lambda_scale"] = h.beta_lambda_scale;
  j["gee_lambda"] = h.gee_lambda;
  j["gtt_mu"] = h.gtt_mu;
  j["gtt_tau"] = h.gtt_tau;
  return j;
}

struct LoadedData {
  bnmf::ObservedMatrix data;
  json manifest;  // dataset block
};

LoadedData load_dataset(const Options& opt) {
  if (opt.dataset.empty())
    throw bnmf::ValidationError("no dataset path given (--dataset)");
  const auto fmt = bnmf::ratings_format_from_string(opt.format);
  bnmf::ObservedMatrix data = bnmf::load_ratings(opt.dataset, fmt);
  json block;
  block["path"] = opt.dataset;
  block["format"] = opt.format;
  block["checksum_fnv1a64"] = bnmf::to_hex(bnmf::fnv1a64_file(opt.dataset));
  block["rows_raw"] = data.rows();
  block["cols_raw"] = data.cols();
  block["observed_raw"] = data.observed_count;
  if (opt.min_observed > 0) {
    data = bnmf::clean_min_observed(data, opt.min_observed);
    block["min_observed"] = opt.min_observed;
    block["rows"] = data.rows();
    block["cols"] = data.cols();
    block["observed"] = data.observed_count;
  } else {
    block["rows"] = data.rows();
    block["cols"] = data.cols();
    block["observed"] = data.observed_count;
  }
  return {std::move(data), std::move(block)};
}

json resolved_config_json(const std::string& command, const Options& opt,
                          const bnmf::HyperParams& hyper) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = command;
  j["models"] = opt.models;
  j["k"] = opt.k_list;
  j["fractions"] = opt.fractions;
  j["noise"] = opt.noises;
  j["iterations"] = opt.iterations;
  j["burn_in"] = opt.burn_in;
  j["repeats"] = opt.repeats;
  j["seed"] = opt.seed;
  j["out"] = opt.out_dir;
  j["min_observed"] = opt.min_observed;
  j["hyper"] = hyper_json(hyper);
  return j;
}

void write_manifest(const fs::path& dir, const json& manifest) {
  std::ofstream out(dir / "manifest.json");
  if (!out) throw bnmf::IoError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

std::vector<bnmf::ModelKind> parse_models(const std::vector<std::string>& names) {
  std::vector<bnmf::ModelKind> out;
  for (const auto& n : names) out.push_back(bnmf::model_kind_from_string(n));
  if (out.empty()) throw bnmf::ValidationError("no models given");
  return out;
}

int cmd_fit(const Options& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const bnmf::HyperParams hyper = build_hyper(opt);
  if (opt.models.size() != 1)
    throw bnmf::ValidationError("fit takes exactly one --model");
  if (opt.k_list.size() != 1)
    throw bnmf::ValidationError("fit takes exactly one --k");
  if (opt.fractions.size() > 1)
    throw bnmf::ValidationError("fit takes at most one --fraction");
  const bnmf::ModelKind kind = bnmf::model_kind_from_string(opt.models[0]);

  LoadedData loaded = load_dataset(opt);

  bnmf::RunConfig cfg;
  cfg.kind = kind;
  cfg.latent_dim = opt.k_list[0];
  cfg.iterations = opt.iterations;
  cfg.burn_in = opt.burn_in;
  cfg.seed = opt.seed;
  cfg.hyper = hyper;
  cfg.accumulate_full_prediction = true;

  bnmf::RunTrace trace;
  std::optional<double> held_out_fraction;
  if (opt.fractions.size() == 1) {
    held_out_fraction = opt.fractions[0];
    auto [train, test] =
        bnmf::split_train_test(loaded.data, {opt.fractions[0], opt.seed});
    trace = bnmf::run_model(cfg, train, &test);
  } else {
    trace = bnmf::run_model(cfg, loaded.data, nullptr);
  }

  fs::create_directories(opt.out_dir);
  const fs::path dir(opt.out_dir);
  bnmf::write_trace_csv((dir / "trace.csv").string(), trace);
  bnmf::write_prediction_csv((dir / "prediction.csv").string(),
                             trace.posterior_mean);

  json manifest = resolved_config_json("fit", opt, hyper);
  manifest["dataset"] = loaded.manifest;
  if (held_out_fraction) manifest["held_out_fraction"] = *held_out_fraction;
  manifest["resolved_beta_lambda"] = trace.resolved_beta_lambda;
  manifest["samples_accumulated"] = trace.samples_accumulated;
  manifest["train_mse_mean_of_samples"] = trace.mean_sample_train_mse;
  manifest["train_mse_of_posterior_mean"] = trace.train_mse_of_posterior_mean;
  if (trace.has_test) {
    manifest["test_mse_mean_of_samples"] = trace.mean_sample_test_mse;
    manifest["test_mse_of_posterior_mean"] = trace.test_mse_of_posterior_mean;
  }
  manifest["gee_variance_clamps"] = trace.gee_variance_clamps;
  manifest["outputs"] = {"trace.csv", "prediction.csv"};
  manifest["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  write_manifest(dir, manifest);
  std::cout << "fit complete: " << (dir / "trace.csv").string() << "\n";
  return 0;
}

int cmd_experiment(const std::string& command, const Options& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const bnmf::HyperParams hyper = build_hyper(opt);
  const bnmf::ExperimentKind kind = bnmf::experiment_kind_from_string(command);

  bnmf::ExperimentSpec spec;
  spec.kind = kind;
  spec.models = parse_models(opt.models);
  spec.k_values = opt.k_list;
  if (kind == bnmf::ExperimentKind::kSparsity) spec.levels = opt.fractions;
  if (kind == bnmf::ExperimentKind::kNoise) spec.levels = opt.noises;
  spec.repeats = opt.repeats;
  spec.base.iterations = opt.iterations;
  spec.base.burn_in = opt.burn_in;
  spec.base.seed = opt.seed;
  spec.base.hyper = hyper;
  spec.max_workers = opt.threads;
  spec.validate();

  LoadedData loaded = load_dataset(opt);
  const bnmf::ExperimentResult result = bnmf::run_experiment(spec, loaded.data);

  fs::create_directories(opt.out_dir);
  const fs::path dir(opt.out_dir);
  bnmf::write_results_csv((dir / "results.csv").string(),
                          bnmf::result_rows(kind, result.cells));
  bnmf::write_aggregate_csv((dir / "aggregate.csv").string(), kind,
                            result.aggregates);
  bnmf::write_timings_csv((dir / "timings.csv").string(), kind, result.cells);
  json outputs = {"results.csv", "aggregate.csv", "timings.csv"};
  if (kind == bnmf::ExperimentKind::kNoise) {
    bnmf::write_noise_metrics_csv((dir / "noise_metrics.csv").string(),
                                  result.cells);
    outputs.push_back("noise_metrics.csv");
  }
  for (const auto& curve : result.curves) {
    const std::string name = "curve_" + std::string(bnmf::to_string(curve.model)) +
                             "_K" + std::to_string(curve.k) + ".csv";
    bnmf::write_curve_csv((dir / name).string(), curve);
    outputs.push_back(name);
  }

  json manifest = resolved_config_json(command, opt, hyper);
  manifest["dataset"] = loaded.manifest;
  manifest["threads"] = opt.threads;
  manifest["cells"] = result.cells.size();
  manifest["outputs"] = outputs;
  manifest["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  write_manifest(dir, manifest);

  std::size_t hard_failures = 0;
  for (const auto& c : result.cells)
    if (c.failed) ++hard_failures;
  std::cout << command << " complete: " << result.cells.size() << " cells, "
            << hard_failures << " aborted, results in " << dir.string() << "\n";
  return 0;
}

int cmd_validate_data(const Options& opt) {
  Options probe = opt;
  if (probe.min_observed == 0) probe.min_observed = 3;
  LoadedData loaded = load_dataset(probe);
  const auto& d = loaded.manifest;
  const double raw_rows = d["rows_raw"].get<double>();
  const double raw_cols = d["cols_raw"].get<double>();
  const double raw_obs = d["observed_raw"].get<double>();
  std::cout << "raw:     " << raw_rows << " x " << raw_cols << ", observed "
            << raw_obs << " (fraction " << raw_obs / (raw_rows * raw_cols)
            << ")\n";
  const double rows = d["rows"].get<double>();
  const double cols = d["cols"].get<double>();
  const double obs = d["observed"].get<double>();
  std::cout << "cleaned: " << rows << " x " << cols << ", observed " << obs
            << " (fraction " << obs / (rows * cols) << ", min "
            << probe.min_observed << " per row/column)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian nonnegative matrix factorization via Gibbs sampling"};
  app.require_subcommand(1);

  Options opt;
  std::string config_path;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--dataset", opt.dataset, "ratings file path");
    cmd->add_option("--format", opt.format,
                    "dataset format: u.data | ratings.dat | synthetic");
    cmd->add_option("--model", opt.models, "model name, repeatable")
        ->delimiter(',');
    cmd->add_option("--k", opt.k_list, "latent dimensions")->delimiter(',');
    cmd->add_option("--fraction", opt.fractions,
                    "unobserved fractions of the full grid")
        ->delimiter(',');
    cmd->add_option("--noise", opt.noises, "noise-to-signal ratios")
        ->delimiter(',');
    cmd->add_option("--iterations", opt.iterations, "Gibbs iterations");
    cmd->add_option("--burn-in", opt.burn_in, "burn-in iterations");
    cmd->add_option("--repeats", opt.repeats, "repeats per cell");
    cmd->add_option("--seed", opt.seed, "base seed");
    cmd->add_option("--out", opt.out_dir, "output directory");
    cmd->add_option("--min-observed", opt.min_observed,
                    "clean rows/columns below this observed count (0 = off)");
    cmd->add_option("--threads", opt.threads, "worker pool size (0 = auto)");
    cmd->add_option("--alpha-sigma", opt.alpha_sigma);
    cmd->add_option("--beta-sigma", opt.beta_sigma);
    cmd->add_option("--mu-mu", opt.mu_mu);
    cmd->add_option("--tau-mu", opt.tau_mu);
    cmd->add_option("--a", opt.a);
    cmd->add_option("--b", opt.b);
    cmd->add_option("--alpha-lambda", opt.alpha_lambda);
    cmd->add_option("--beta-lambda", opt.beta_lambda);
    cmd->add_option("--beta-lambda-scale", opt.beta_lambda_scale);
    cmd->add_option("--gee-lambda", opt.gee_lambda);
    cmd->add_option("--gtt-mu", opt.gtt_mu);
    cmd->add_option("--gtt-tau", opt.gtt_tau);
    return cmd;
  };

  CLI::App* fit = add_common(app.add_subcommand("fit", "single model fit"));
  CLI::App* conv = add_common(
      app.add_subcommand("convergence", "training-fit convergence curves"));
  CLI::App* noise =
      add_common(app.add_subcommand("noise", "noise-sensitivity sweep"));
  CLI::App* sparsity = add_common(
      app.add_subcommand("sparsity", "held-out prediction vs sparsity"));
  CLI::App* validate = add_common(
      app.add_subcommand("validate-data", "load, clean and describe a dataset"));

  // two-phase parse so config-file values sit below command-line flags
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (!config_path.empty()) {
      Options from_file;
      apply_config_file(config_path, from_file);
      // flags the user actually passed win over file values
      CLI::App* active = app.get_subcommands().front();
      auto keep = [&](const char* flag) { return active->count(flag) > 0; };
      Options merged = from_file;
      if (keep("--dataset")) merged.dataset = opt.dataset;
      if (keep("--format")) merged.format = opt.format;
      if (keep("--model")) merged.models = opt.models;
      if (keep("--k")) merged.k_list = opt.k_list;
      if (keep("--fraction")) merged.fractions = opt.fractions;
      if (keep("--noise")) merged.noises = opt.noises;
      if (keep("--iterations")) merged.iterations = opt.iterations;
      if (keep("--burn-in")) merged.burn_in = opt.burn_in;
      if (keep("--repeats")) merged.repeats = opt.repeats;
      if (keep("--seed")) merged.seed = opt.seed;
      if (keep("--out")) merged.out_dir = opt.out_dir;
      if (keep("--min-observed")) merged.min_observed = opt.min_observed;
      if (keep("--threads")) merged.threads = opt.threads;
      if (keep("--alpha-sigma")) merged.alpha_sigma = opt.alpha_sigma;
      if (keep("--beta-sigma")) merged.beta_sigma = opt.beta_sigma;
      if (keep("--mu-mu")) merged.mu_mu = opt.mu_mu;
      if (keep("--tau-mu")) merged.tau_mu = opt.tau_mu;
      if (keep("--a")) merged.a = opt.a;
      if (keep("--b")) merged.b = opt.b;
      if (keep("--alpha-lambda")) merged.alpha_lambda = opt.alpha_lambda;
      if (keep("--beta-lambda")) merged.beta_lambda = opt.beta_lambda;
      if (keep("--beta-lambda-scale"))
        merged.beta_lambda_scale = opt.beta_lambda_scale;
      if (keep("--gee-lambda")) merged.gee_lambda = opt.gee_lambda;
      if (keep("--gtt-mu")) merged.gtt_mu = opt.gtt_mu;
      if (keep("--gtt-tau")) merged.gtt_tau = opt.gtt_tau;
      opt = merged;
    }

    if (fit->parsed()) return cmd_fit(opt);
    if (conv->parsed()) return cmd_experiment("convergence", opt);
    if (noise->parsed()) return cmd_experiment("noise", opt);
    if (sparsity->parsed()) return cmd_experiment("sparsity", opt);
    if (validate->parsed()) return cmd_validate_data(opt);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const bnmf::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const bnmf::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const bnmf::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const bnmf::DomainError& e) {
    std::cerr << "numerical/domain error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
