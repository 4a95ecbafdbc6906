#pragma once

#include <array>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "comparison.hpp"
#include "datagen.hpp"
#include "divergence.hpp"
#include "error.hpp"
#include "htest.hpp"
#include "io.hpp"

namespace vaecompare::cli {

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// Every job option, resolved. Defaults are listed in the README.
struct JobConfig {
  std::uint64_t seed = 0;
  Family family = Family::gaussian;
  std::optional<std::size_t> refits;  // unset: 3, or 1 for the ecdf harness
  std::size_t samples_per_refit = 100;
  std::size_t permutations = 100;
  Averaging averaging = Averaging::mean;
  double alpha = 0.05;
  unsigned threads = 1;
  bool standardize = true;

  VaeArchitecture architecture;
  TrainConfig train;

  std::size_t rows = 500;
  double shift = 0.0;
  std::optional<DatasetFormat> format;  // dataset output format; default from extension
  std::vector<double> shifts{0.0, 1.0, 2.0, 4.0};
  std::size_t runs_per_shift = 50;

  std::size_t refits_for(std::string_view command) const { return refits.value_or(command == "ecdf" ? 1 : 3); }

  ComparisonConfig comparison(std::string_view command) const {
    ComparisonConfig c;
    c.samples_per_refit = samples_per_refit;
    c.refits = refits_for(command);
    c.family = family;
    c.architecture = architecture;
    c.train = train;
    c.master_seed = seed;
    c.threads = threads;
    c.standardize = standardize;
    return c;
  }

  HtestConfig htest(std::string_view command) const {
    HtestConfig h;
    h.comparison = comparison(command);
    h.permutations = permutations;
    h.averaging = averaging;
    h.alpha = alpha;
    return h;
  }
};

inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return {buf.data(), res.ptr};
}

// Resolved configuration as key=value lines accepted by --config.
inline std::string config_text(const JobConfig& j, std::string_view command) {
  std::ostringstream os;
  auto kv = [&os](std::string_view k, const std::string& v) { os << k << '=' << v << '\n'; };
  kv("seed", std::to_string(j.seed));
  kv("family", std::string(to_string(j.family)));
  kv("refits", std::to_string(j.refits_for(command)));
  kv("samples-per-refit", std::to_string(j.samples_per_refit));
  kv("permutations", std::to_string(j.permutations));
  kv("averaging", std::string(to_string(j.averaging)));
  kv("alpha", format_double(j.alpha));
  kv("threads", std::to_string(j.threads));
  kv("standardize", j.standardize ? "true" : "false");
  kv("latent-dim", std::to_string(j.architecture.latent_dim));
  kv("hidden-layers", std::to_string(j.architecture.hidden_layers));
  kv("hidden-width", std::to_string(j.architecture.hidden_width));
  kv("batchnorm", j.architecture.batchnorm ? "true" : "false");
  kv("dropout", format_double(j.architecture.dropout_rate));
  kv("learning-rate", format_double(j.train.initial_lr));
  kv("patience", std::to_string(j.train.patience_epochs));
  kv("val-fraction", format_double(j.train.val_fraction));
  kv("batch-size", std::to_string(j.train.batch_size));
  kv("max-epochs", std::to_string(j.train.max_epochs));
  kv("lr-halving-patience", std::to_string(j.train.lr_halving_patience));
  kv("rows", std::to_string(j.rows));
  kv("shift", format_double(j.shift));
  if (j.format) kv("format", std::string(to_string(*j.format)));
  std::string shifts = "[";
  for (std::size_t i = 0; i < j.shifts.size(); ++i) shifts += (i ? "," : "") + format_double(j.shifts[i]);
  kv("shifts", shifts + "]");
  kv("runs-per-shift", std::to_string(j.runs_per_shift));
  return os.str();
}

inline nlohmann::json config_json(const JobConfig& j, std::string_view command) {
  nlohmann::json out = nlohmann::json::object();
  std::istringstream is(config_text(j, command));
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

inline nlohmann::json to_json(const SummaryStats& s) {
  return {{"mean", s.mean},
          {"median", s.median},
          {"q1", s.q1},
          {"q3", s.q3},
          {"whisker_low", s.whisker_low},
          {"whisker_high", s.whisker_high},
          {"outlier_count", s.outlier_count}};
}

inline nlohmann::json baselines_json(Family family) {
  if (family == Family::gaussian)
    return nlohmann::json::array({{{"name", "N(0,I) vs N(1,I)"}, {"value", gaussian_baseline()}}});
  nlohmann::json arr = nlohmann::json::array();
  for (double q : {0.6, 0.7, 0.8, 0.9})
    arr.push_back({{"name", "Bernoulli(0.5) vs Bernoulli(" + format_double(q) + ")"},
                   {"p", 0.5},
                   {"q", q},
                   {"value", bernoulli_baseline(0.5, q)}});
  return arr;
}

inline nlohmann::json report_header(std::string_view command, const JobConfig& job,
                                    const std::vector<std::string>& inputs) {
  return {{"schema_version", kSchemaVersion},
          {"command", command},
          {"inputs", inputs},
          {"config", config_json(job, command)}};
}

inline nlohmann::json cmd_simulate(const JobConfig& job, const std::string& out_path) {
  if (out_path.empty()) throw ConfigError("simulate: --out <dataset> is required");
  const Matrix m = simulate_dataset({job.rows, job.shift, job.seed});
  const DatasetFormat fmt = job.format.value_or(format_from_path(out_path));
  save_dataset(out_path, m, fmt);
  auto report = report_header("simulate", job, {});
  report["results"] = {{"path", out_path}, {"format", to_string(fmt)}, {"rows", m.rows()}, {"cols", m.cols()}};
  report["seeds"] = {{"seed", job.seed}};
  return report;
}

inline nlohmann::json cmd_compare(const JobConfig& job, const std::vector<std::string>& inputs) {
  if (inputs.empty() || inputs.size() > 2) throw ConfigError("compare: expected one or two dataset paths");
  const Matrix first = load_dataset(inputs[0], std::nullopt, job.family);
  const bool self = inputs.size() == 1;
  const std::uint64_t split_seed = derive_seed({job.seed, tag::split});
  Matrix d1, d2;
  if (self) {
    std::tie(d1, d2) = split_half(first, split_seed);
  } else {
    d1 = first;
    d2 = load_dataset(inputs[1], std::nullopt, job.family);
  }
  const DivergenceSamples s = generate_divergence_samples(d1, d2, job.comparison("compare"));
  auto report = report_header("compare", job, inputs);
  report["results"] = {{"family", to_string(job.family)},
                       {"self_comparison", self},
                       {"rows", {d1.rows(), d2.rows()}},
                       {"samples", s.values},
                       {"refit_index", s.refit_index},
                       {"summary", to_json(summarize(s))},
                       {"baselines", baselines_json(job.family)}};
  report["seeds"] = {{"master_seed", job.seed}, {"refit_seeds", s.refit_seeds}};
  if (self) report["seeds"]["split_seed"] = split_seed;
  return report;
}

inline nlohmann::json cmd_htest(const JobConfig& job, const std::vector<std::string>& inputs) {
  if (inputs.size() != 2) throw ConfigError("htest: expected two dataset paths");
  const Matrix d1 = load_dataset(inputs[0], std::nullopt, job.family);
  const Matrix d2 = load_dataset(inputs[1], std::nullopt, job.family);
  const TestReport r = permutation_test(d1, d2, job.htest("htest"));
  auto report = report_header("htest", job, inputs);
  report["results"] = {{"p_value", r.p_value},
                       {"decision", to_string(r.decision)},
                       {"alpha", r.alpha},
                       {"averaging", to_string(r.averaging)},
                       {"permutations", r.statistics.size() - 1},
                       {"observed_statistic", r.statistics.front()},
                       {"statistics", r.statistics},
                       {"observed_samples", r.observed.values},
                       {"observed_summary", to_json(summarize(r.observed))}};
  report["seeds"] = {{"master_seed", job.seed}, {"permutation_seeds", r.permutation_seeds}};
  return report;
}

inline nlohmann::json cmd_ecdf(const JobConfig& job, bool verbose) {
  EcdfExperimentConfig cfg;
  cfg.shifts = job.shifts;
  cfg.runs_per_shift = job.runs_per_shift;
  cfg.n_rows = job.rows;
  cfg.master_seed = job.seed;
  cfg.htest = job.htest("ecdf");
  EcdfProgress progress;
  if (verbose)
    progress = [&](std::size_t si, std::size_t run, double p) {
      std::cerr << "shift " << cfg.shifts[si] << " run " << run + 1 << "/" << cfg.runs_per_shift << " p=" << p << '\n';
    };
  const EcdfExperiment exp = pvalue_ecdf_experiment(cfg, progress);
  nlohmann::json shifts = nlohmann::json::array();
  for (const auto& s : exp.shifts) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : s.ecdf) pts.push_back({p.x, p.f});
    shifts.push_back({{"shift", s.shift},
                      {"p_values", s.p_values},
                      {"ecdf", pts},
                      {"rejection_rate", s.rejection_rate},
                      {"ks_uniform_distance", ks_uniform_distance(s.p_values)}});
  }
  auto report = report_header("ecdf", job, {});
  report["results"] = {{"shifts", shifts}, {"alpha", job.alpha}};
  report["seeds"] = {{"master_seed", job.seed}};
  return report;
}

inline void emit(const nlohmann::json& report, const std::string& path, std::ostream& out) {
  const std::string text = report.dump(2) + "\n";
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write report '" + path + "'");
  f << text;
}

// Parses argv, runs the selected command and returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Dataset divergence and two-sample testing with variational autoencoders", "vaecompare"};
  app.set_config("--config", "", "key=value configuration file (command-line flags take precedence)");
  app.allow_config_extras(false);
  app.require_subcommand(1, 1);

  JobConfig job;
  std::string family = "gaussian", averaging = "mean", format, out_path;
  std::size_t refits = 0;
  bool verbose = false;

  app.add_option("--seed", job.seed, "master seed")->capture_default_str();
  app.add_option("--family", family, "decoder family: gaussian|bernoulli")->capture_default_str();
  auto* refits_opt = app.add_option("--refits", refits, "VAE refits per dataset (default 3; 1 for ecdf)");
  app.add_option("--samples-per-refit", job.samples_per_refit, "divergence samples per refit")->capture_default_str();
  app.add_option("--permutations", job.permutations, "permutations for htest")->capture_default_str();
  app.add_option("--averaging", averaging, "test statistic: mean|median")->capture_default_str();
  app.add_option("--alpha", job.alpha, "significance level")->capture_default_str();
  app.add_option("--threads", job.threads, "worker threads")->capture_default_str();
  app.add_option("--standardize", job.standardize, "z-score columns over both datasets (gaussian family)")
      ->capture_default_str();
  app.add_option("--latent-dim", job.architecture.latent_dim, "latent dimension")->capture_default_str();
  app.add_option("--hidden-layers", job.architecture.hidden_layers, "hidden layers per network")->capture_default_str();
  app.add_option("--hidden-width", job.architecture.hidden_width, "units per hidden layer")->capture_default_str();
  app.add_option("--batchnorm", job.architecture.batchnorm, "batch normalization in hidden layers")
      ->capture_default_str();
  app.add_option("--dropout", job.architecture.dropout_rate, "dropout rate in hidden layers")->capture_default_str();
  app.add_option("--learning-rate", job.train.initial_lr, "initial Adamax learning rate")->capture_default_str();
  app.add_option("--patience", job.train.patience_epochs, "early-stopping patience (epochs)")->capture_default_str();
  app.add_option("--val-fraction", job.train.val_fraction, "validation split fraction")->capture_default_str();
  app.add_option("--batch-size", job.train.batch_size, "minibatch size")->capture_default_str();
  app.add_option("--max-epochs", job.train.max_epochs, "epoch cap")->capture_default_str();
  app.add_option("--lr-halving-patience", job.train.lr_halving_patience, "epochs without improvement before halving lr")
      ->capture_default_str();
  app.add_option("--rows", job.rows, "simulated rows")->capture_default_str();
  app.add_option("--shift", job.shift, "simulated location shift k")->capture_default_str();
  app.add_option("--format", format, "dataset output format: csv|bin (default: by extension)");
  app.add_option("--shifts", job.shifts, "shift values for ecdf")->capture_default_str();
  app.add_option("--runs-per-shift", job.runs_per_shift, "simulation runs per shift for ecdf")->capture_default_str();
  app.add_option("--out", out_path, "output path (report JSON; dataset for simulate)");
  app.add_flag("--verbose", verbose, "progress on stderr");

  std::vector<std::string> inputs;
  auto* simulate = app.add_subcommand("simulate", "write a dataset from the simulated generator");
  auto* compare = app.add_subcommand("compare", "divergence samples between two datasets (or halves of one)");
  compare->add_option("datasets", inputs, "one or two dataset files (.csv or .bin)")->required()->expected(1, 2);
  auto* htest = app.add_subcommand("htest", "permutation test of equal data generating functions");
  htest->add_option("datasets", inputs, "two dataset files")->required()->expected(2);
  auto* ecdf_cmd = app.add_subcommand("ecdf", "p-value ECDF study on simulated data");
  for (auto* sub : {simulate, compare, htest, ecdf_cmd}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    job.family = parse_family(family);
    job.averaging = parse_averaging(averaging);
    if (!format.empty()) job.format = parse_dataset_format(format);
    if (refits_opt->count() > 0) job.refits = refits;

    const auto start = std::chrono::steady_clock::now();
    nlohmann::json report;
    std::string report_path = out_path;
    if (simulate->parsed()) {
      report = cmd_simulate(job, out_path);
      report_path.clear();
    } else if (compare->parsed()) {
      report = cmd_compare(job, inputs);
    } else if (htest->parsed()) {
      report = cmd_htest(job, inputs);
    } else {
      report = cmd_ecdf(job, verbose);
    }
    report["timing"] = {{"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
    emit(report, report_path, out);
    return kOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
}

}  // namespace vaecompare::cli
