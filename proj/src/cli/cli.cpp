#include "featnorm/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>

#include "featnorm/dataset.hpp"
#include "featnorm/experiments.hpp"
#include "featnorm/lowrank.hpp"
#include "featnorm/oracle.hpp"
#include "featnorm/report.hpp"
#include "featnorm/synthetic.hpp"

namespace featnorm::cli {
namespace {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

char parse_delimiter(const std::string& text) {
  if (text == "tab" || text == "\\t" || text == "\t") return '\t';
  if (text.size() != 1) throw PreconditionError("delimiter must be one character or 'tab'");
  return text.front();
}

std::string delimited_extension(char delimiter) { return delimiter == '\t' ? ".tsv" : ".csv"; }

struct GlobalOptions {
  std::uint64_t seed = 42;
  unsigned jobs = 0;
  std::string delimiter = ",";
};

struct IngestOptions {
  fs::path norms;
  std::string value_kind = "counts";
  int rater_total = 4;
  std::optional<int> threshold;
  fs::path output;
};

struct ScreeOptions {
  fs::path matrix;
  fs::path output;
};

struct OracleFillOptions {
  fs::path matrix;
  fs::path output;
  std::string mode = "synthetic";
  double fp_rate = 0.0;
  double fn_rate = 0.0;
  std::string endpoint;
  std::string model = "flan-t5-xxl";
  std::string token_env = "FEATNORM_API_TOKEN";
  std::optional<fs::path> cache;
  std::optional<fs::path> plurals;
  int timeout_ms = 30000;
  int retries = 3;
  int min_interval_ms = 0;
  int backoff_ms = 500;
  int max_new_tokens = 5;
};

struct ExperimentOptions {
  fs::path human;
  fs::path machine;
  fs::path out_prefix;
  Eigen::Index rank = 10;
  double lambda = 1.0;
  std::string correction = "loglinear";
  bool no_intercept = false;
  int max_iterations = 200;
  double gradient_tolerance = 1e-8;
  double binarize_threshold = 0.5;
  std::vector<double> fractions = default_sweep_fractions();
  int repeats = 5;
};

struct SynthOptions {
  Eigen::Index concepts = 60;
  Eigen::Index features = 120;
  Eigen::Index rank = 5;
  double offset = 0.0;
  fs::path output;
};

ExperimentConfig experiment_config(const ExperimentOptions& o, const GlobalOptions& g) {
  ExperimentConfig c;
  c.rank = o.rank;
  c.fit.l2_penalty = o.lambda;
  c.fit.include_intercept = !o.no_intercept;
  c.fit.max_iterations = o.max_iterations;
  c.fit.gradient_tolerance = o.gradient_tolerance;
  c.fit.binarize_threshold = o.binarize_threshold;
  c.correction = parse_rate_correction(o.correction);
  c.jobs = g.jobs;
  c.fit.validate();
  return c;
}

void check_writable_parent(const fs::path& path) {
  const auto parent = path.parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw IoError("output directory " + parent.string() + " does not exist");
  }
}

int cmd_ingest(const IngestOptions& o, const GlobalOptions& g, std::ostream& out) {
  const char delim = parse_delimiter(g.delimiter);
  check_writable_parent(o.output);
  RunManifest manifest{"ingest", {}, {}, {o.output}, g.seed, utc_now()};
  manifest.add_input(o.norms);

  std::optional<BinaryFeatureMatrix> binary;
  ordered_json cfg{{"delimiter", std::string(1, delim)}, {"value_kind", o.value_kind}};
  if (o.value_kind == "binary") {
    binary = read_binary_table(o.norms, delim);
  } else if (o.value_kind == "counts") {
    const auto counts = read_count_table(o.norms, delim, o.rater_total);
    const int threshold = o.threshold.value_or(o.rater_total);
    cfg["rater_total"] = o.rater_total;
    cfg["threshold"] = threshold;
    binary = threshold_unanimous(counts, threshold);
  } else {
    throw PreconditionError("value kind must be 'counts' or 'binary'");
  }
  manifest.config_json = cfg.dump();
  manifest.write(manifest_path_for(o.output));
  write_norm_table(o.output, *binary, delim);

  out << fmt::format("concepts: {}\nfeatures: {}\ndensity: {:.6f}\n", binary->rows(),
                     binary->cols(), density(*binary));
  return kExitOk;
}

int cmd_scree(const ScreeOptions& o, const GlobalOptions& g, std::ostream& out) {
  const char delim = parse_delimiter(g.delimiter);
  check_writable_parent(o.output);
  RunManifest manifest{"scree", ordered_json{{"delimiter", std::string(1, delim)}}.dump(),
                       {}, {o.output}, g.seed, utc_now()};
  manifest.add_input(o.matrix);
  const auto matrix = read_binary_table(o.matrix, delim);
  const auto profile = singular_value_profile(matrix.to_real());
  manifest.write(manifest_path_for(o.output));

  std::ofstream file(o.output, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write " + o.output.string());
  write_scree(file, profile, delim);
  if (!file) throw IoError("write failed for " + o.output.string());
  out << fmt::format("singular values: {}\n", profile.size());
  return kExitOk;
}

int cmd_oracle_fill(const OracleFillOptions& o, const GlobalOptions& g, std::ostream& out) {
  const char delim = parse_delimiter(g.delimiter);
  check_writable_parent(o.output);
  const auto source = read_binary_table(o.matrix, delim);

  RunManifest manifest{"oracle-fill", {}, {}, {o.output}, g.seed, utc_now()};
  manifest.add_input(o.matrix);
  ordered_json cfg{{"mode", o.mode}, {"delimiter", std::string(1, delim)}};

  std::unique_ptr<FeatureOracle> oracle;
  LiveOracle* live = nullptr;
  if (o.mode == "synthetic") {
    cfg["fp_rate"] = o.fp_rate;
    cfg["fn_rate"] = o.fn_rate;
    oracle = std::make_unique<SyntheticOracle>(source, o.fp_rate, o.fn_rate, g.seed);
  } else if (o.mode == "live") {
    OracleConfig oc;
    oc.endpoint_url = o.endpoint;
    oc.model_id = o.model;
    oc.auth_token_env_var = o.token_env;
    oc.timeout = std::chrono::milliseconds(o.timeout_ms);
    oc.max_retries = o.retries;
    oc.min_request_interval = std::chrono::milliseconds(o.min_interval_ms);
    oc.initial_backoff = std::chrono::milliseconds(o.backoff_ms);
    oc.max_new_tokens = o.max_new_tokens;
    oc.cache_path = o.cache;
    ConceptPlurals plurals;
    if (o.plurals) {
      manifest.add_input(*o.plurals);
      plurals = ConceptPlurals::load(*o.plurals, delim);
    }
    cfg["endpoint"] = o.endpoint;
    cfg["model"] = o.model;
    cfg["token_env"] = o.token_env;
    cfg["cache"] = o.cache ? o.cache->string() : "";
    cfg["timeout_ms"] = o.timeout_ms;
    cfg["retries"] = o.retries;
    cfg["min_interval_ms"] = o.min_interval_ms;
    cfg["backoff_ms"] = o.backoff_ms;
    cfg["max_new_tokens"] = o.max_new_tokens;
    auto live_oracle = std::make_unique<LiveOracle>(oc, std::move(plurals));
    live = live_oracle.get();
    oracle = std::move(live_oracle);
  } else {
    throw PreconditionError("oracle mode must be 'synthetic' or 'live'");
  }
  manifest.config_json = cfg.dump();
  manifest.write(manifest_path_for(o.output));

  const auto filled = fill_matrix(*oracle, source.concepts(), source.features());
  write_norm_table(o.output, filled, delim);
  out << fmt::format("concepts: {}\nfeatures: {}\ndensity: {:.6f}\n", filled.rows(), filled.cols(),
                     density(filled));
  if (live) out << fmt::format("live requests: {}\n", live->live_requests());
  return kExitOk;
}

struct ExperimentPaths {
  fs::path json;
  fs::path delimited;
  fs::path manifest;
};

ExperimentPaths experiment_paths(const fs::path& prefix, char delim) {
  return {fs::path(prefix.string() + ".json"),
          fs::path(prefix.string() + delimited_extension(delim)),
          fs::path(prefix.string() + ".manifest.json")};
}

ordered_json experiment_cfg_json(const ExperimentConfig& c, char delim) {
  auto j = ordered_json::parse(config_to_json(c));
  j["delimiter"] = std::string(1, delim);
  return j;
}

int cmd_loo(const ExperimentOptions& o, const GlobalOptions& g, std::ostream& out) {
  const char delim = parse_delimiter(g.delimiter);
  const auto config = experiment_config(o, g);
  check_writable_parent(o.out_prefix);
  const auto paths = experiment_paths(o.out_prefix, delim);

  RunManifest manifest{"loo", experiment_cfg_json(config, delim).dump(), {},
                       {paths.json, paths.delimited}, g.seed, utc_now()};
  manifest.add_input(o.human);
  manifest.add_input(o.machine);
  const auto human = read_binary_table(o.human, delim);
  const auto machine = read_binary_table(o.machine, delim);
  manifest.write(paths.manifest);

  const auto report = leave_one_out(human, machine, config);
  emit_report(report, paths.json, ReportFormat::kJson);
  emit_report(report, paths.delimited, ReportFormat::kDelimited, delim);

  out << fmt::format("evaluated: {}\nfailed: {}\nmean d' raw: {:.6f}\nmean d' completed: {:.6f}\n",
                     report.per_concept.size(), report.failures.size(), report.mean_raw,
                     report.mean_completed);
  if (report.paired_t_value) {
    out << fmt::format("paired t: {:.6f} (df = {})\n", *report.paired_t_value, report.df);
  } else {
    out << "paired t: degenerate\n";
  }
  return kExitOk;
}

int cmd_sweep(const ExperimentOptions& o, const GlobalOptions& g, std::ostream& out) {
  const char delim = parse_delimiter(g.delimiter);
  const auto config = experiment_config(o, g);
  check_writable_parent(o.out_prefix);
  const auto paths = experiment_paths(o.out_prefix, delim);

  auto cfg = experiment_cfg_json(config, delim);
  cfg["fractions"] = o.fractions;
  cfg["repeats"] = o.repeats;
  RunManifest manifest{"sweep", cfg.dump(), {}, {paths.json, paths.delimited}, g.seed, utc_now()};
  manifest.add_input(o.human);
  manifest.add_input(o.machine);
  const auto human = read_binary_table(o.human, delim);
  const auto machine = read_binary_table(o.machine, delim);
  manifest.write(paths.manifest);

  const auto report = holdout_sweep(human, machine, o.fractions, o.repeats, g.seed, config);
  emit_report(report, paths.json, ReportFormat::kJson);
  emit_report(report, paths.delimited, ReportFormat::kDelimited, delim);

  for (const auto& row : report.per_fraction) {
    out << fmt::format("fraction {:.2f}: mean difference {:+.6f}, t = {}, df = {}\n", row.fraction,
                       row.mean_d_prime_difference,
                       row.paired_t_value ? fmt::format("{:.6f}", *row.paired_t_value)
                                          : std::string("degenerate"),
                       row.df);
  }
  return kExitOk;
}

int cmd_synth(const SynthOptions& o, const GlobalOptions& g, std::ostream& out) {
  const char delim = parse_delimiter(g.delimiter);
  check_writable_parent(o.output);
  RunManifest manifest{"synth",
                       ordered_json{{"concepts", o.concepts},
                                    {"features", o.features},
                                    {"rank", o.rank},
                                    {"offset", o.offset},
                                    {"delimiter", std::string(1, delim)}}
                           .dump(),
                       {}, {o.output}, g.seed, utc_now()};
  manifest.write(manifest_path_for(o.output));
  const auto synth = make_low_rank_binary(o.concepts, o.features, o.rank, g.seed, o.offset);
  write_norm_table(o.output, synth.matrix, delim);
  out << fmt::format("concepts: {}\nfeatures: {}\ndensity: {:.6f}\n", synth.matrix.rows(),
                     synth.matrix.cols(), density(synth.matrix));
  return kExitOk;
}

void add_fit_options(CLI::App* cmd, ExperimentOptions& o) {
  cmd->add_option("human", o.human, "Human (ground-truth) binary matrix")->required();
  cmd->add_option("machine", o.machine, "Machine binary matrix with the same labels")->required();
  cmd->add_option("-o,--out", o.out_prefix, "Output prefix for <prefix>.json/.csv/.manifest.json")
      ->required();
  cmd->add_option("-r,--rank", o.rank, "Decomposition rank")->capture_default_str();
  cmd->add_option("-l,--lambda", o.lambda, "L2 penalty on the regression weights")
      ->capture_default_str();
  cmd->add_option("--correction", o.correction, "Degenerate-rate correction")
      ->check(CLI::IsMember({"loglinear", "loglinear-always", "none"}))
      ->capture_default_str();
  cmd->add_flag("--no-intercept", o.no_intercept, "Fit without an intercept");
  cmd->add_option("--max-iterations", o.max_iterations, "Newton iteration budget")
      ->capture_default_str();
  cmd->add_option("--gradient-tolerance", o.gradient_tolerance, "Convergence tolerance")
      ->capture_default_str();
  cmd->add_option("--binarize-threshold", o.binarize_threshold,
                  "Completed probabilities above this become 1")
      ->capture_default_str();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Complete concept-by-feature norm matrices from noisy machine answers"};
  app.set_config("--config", "", "TOML/INI file with option defaults (flags win)");
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("-j,--jobs", g.jobs, "Worker threads (0 = all cores)")->capture_default_str();
  app.add_option("-d,--delimiter", g.delimiter, "Field delimiter (one character or 'tab')")
      ->capture_default_str();

  IngestOptions ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Threshold a rater-count norm table");
  ingest_cmd->add_option("norms", ingest.norms, "Norm table")->required();
  ingest_cmd->add_option("-o,--output", ingest.output, "Binary matrix output")->required();
  ingest_cmd->add_option("--value-kind", ingest.value_kind, "Cell kind")
      ->check(CLI::IsMember({"counts", "binary"}))
      ->capture_default_str();
  ingest_cmd->add_option("--rater-total", ingest.rater_total, "Raters per cell")
      ->capture_default_str();
  ingest_cmd->add_option("-t,--threshold", ingest.threshold,
                         "Minimum count for a 1 (default: rater total)");

  ScreeOptions scree;
  auto* scree_cmd = app.add_subcommand("scree", "Write the singular value profile");
  scree_cmd->add_option("matrix", scree.matrix, "Binary matrix")->required();
  scree_cmd->add_option("-o,--output", scree.output, "Two-column output")->required();

  OracleFillOptions fill;
  auto* fill_cmd = app.add_subcommand("oracle-fill", "Build a machine matrix from an oracle");
  fill_cmd->add_option("matrix", fill.matrix,
                       "Binary matrix supplying labels (and the truth in synthetic mode)")
      ->required();
  fill_cmd->add_option("-o,--output", fill.output, "Machine matrix output")->required();
  fill_cmd->add_option("--mode", fill.mode, "Oracle kind")
      ->check(CLI::IsMember({"synthetic", "live"}))
      ->capture_default_str();
  fill_cmd->add_option("--fp", fill.fp_rate, "Synthetic false-positive rate")->capture_default_str();
  fill_cmd->add_option("--fn", fill.fn_rate, "Synthetic false-negative rate")->capture_default_str();
  fill_cmd->add_option("--endpoint", fill.endpoint, "Text-generation endpoint URL");
  fill_cmd->add_option("--model", fill.model, "Model identifier")->capture_default_str();
  fill_cmd->add_option("--token-env", fill.token_env, "Environment variable holding the token")
      ->capture_default_str();
  fill_cmd->add_option("--cache", fill.cache, "JSON-lines response cache");
  fill_cmd->add_option("--plurals", fill.plurals, "concept<delim>plural override file");
  fill_cmd->add_option("--timeout-ms", fill.timeout_ms, "Request timeout")->capture_default_str();
  fill_cmd->add_option("--retries", fill.retries, "Retries per request")->capture_default_str();
  fill_cmd->add_option("--min-interval-ms", fill.min_interval_ms, "Minimum gap between requests")
      ->capture_default_str();
  fill_cmd->add_option("--backoff-ms", fill.backoff_ms, "Initial retry backoff")
      ->capture_default_str();
  fill_cmd->add_option("--max-new-tokens", fill.max_new_tokens, "Completion length")
      ->capture_default_str();

  ExperimentOptions loo;
  auto* loo_cmd = app.add_subcommand("loo", "Leave-one-out comparison of raw vs completed rows");
  add_fit_options(loo_cmd, loo);

  ExperimentOptions sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Holdout-fraction sweep");
  add_fit_options(sweep_cmd, sweep);
  sweep_cmd->add_option("--fractions", sweep.fractions, "Holdout fractions, increasing")
      ->delimiter(',')
      ->capture_default_str();
  sweep_cmd->add_option("--repeats", sweep.repeats, "Splits per fraction")->capture_default_str();

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a thresholded low-rank binary matrix");
  synth_cmd->add_option("-o,--output", synth.output, "Binary matrix output")->required();
  synth_cmd->add_option("--concepts", synth.concepts, "Rows")->capture_default_str();
  synth_cmd->add_option("--features", synth.features, "Columns")->capture_default_str();
  synth_cmd->add_option("--rank", synth.rank, "Rank of the logit model")->capture_default_str();
  synth_cmd->add_option("--offset", synth.offset, "Logit offset (negative = sparser)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (ingest_cmd->parsed()) return cmd_ingest(ingest, g, out);
    if (scree_cmd->parsed()) return cmd_scree(scree, g, out);
    if (fill_cmd->parsed()) return cmd_oracle_fill(fill, g, out);
    if (loo_cmd->parsed()) return cmd_loo(loo, g, out);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep, g, out);
    if (synth_cmd->parsed()) return cmd_synth(synth, g, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace featnorm::cli
