#include "featnorm/report.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <fstream>
#include <ostream>
#include <sstream>

#include "featnorm/error.hpp"

namespace featnorm {
namespace {

using nlohmann::ordered_json;

std::string num(double v) { return fmt::format("{}", v); }

ordered_json tally_json(const DetectionTally& t) {
  return {{"hits", t.hits},
          {"misses", t.misses},
          {"false_alarms", t.false_alarms},
          {"correct_rejections", t.correct_rejections}};
}

DetectionTally tally_from(const ordered_json& j) {
  return {j.at("hits").get<std::int64_t>(), j.at("misses").get<std::int64_t>(),
          j.at("false_alarms").get<std::int64_t>(), j.at("correct_rejections").get<std::int64_t>()};
}

ordered_json config_json(const ExperimentConfig& c) {
  return {{"rank", c.rank},
          {"l2_penalty", c.fit.l2_penalty},
          {"max_iterations", c.fit.max_iterations},
          {"gradient_tolerance", c.fit.gradient_tolerance},
          {"include_intercept", c.fit.include_intercept},
          {"binarize_threshold", c.fit.binarize_threshold},
          {"correction", to_string(c.correction)},
          {"svd_tol", c.svd.tol},
          {"svd_max_sweeps", c.svd.max_sweeps}};
}

ExperimentConfig config_from(const ordered_json& j) {
  ExperimentConfig c;
  c.rank = j.at("rank").get<Eigen::Index>();
  c.fit.l2_penalty = j.at("l2_penalty").get<double>();
  c.fit.max_iterations = j.at("max_iterations").get<int>();
  c.fit.gradient_tolerance = j.at("gradient_tolerance").get<double>();
  c.fit.include_intercept = j.at("include_intercept").get<bool>();
  c.fit.binarize_threshold = j.at("binarize_threshold").get<double>();
  c.correction = parse_rate_correction(j.at("correction").get<std::string>());
  c.svd.tol = j.at("svd_tol").get<double>();
  c.svd.max_sweeps = j.at("svd_max_sweeps").get<int>();
  return c;
}

ordered_json evaluation_json(const ConceptEvaluation& e) {
  return {{"concept", e.concept_label},
          {"repeat", e.repeat},
          {"d_prime_raw", e.d_prime_raw},
          {"d_prime_completed", e.d_prime_completed},
          {"tally_raw", tally_json(e.tally_raw)},
          {"tally_completed", tally_json(e.tally_completed)},
          {"fit_converged", e.fit_converged}};
}

ConceptEvaluation evaluation_from(const ordered_json& j) {
  ConceptEvaluation e;
  e.concept_label = j.at("concept").get<std::string>();
  e.repeat = j.at("repeat").get<int>();
  e.d_prime_raw = j.at("d_prime_raw").get<double>();
  e.d_prime_completed = j.at("d_prime_completed").get<double>();
  e.tally_raw = tally_from(j.at("tally_raw"));
  e.tally_completed = tally_from(j.at("tally_completed"));
  e.fit_converged = j.at("fit_converged").get<bool>();
  return e;
}

ordered_json failures_json(const std::vector<ConceptFailure>& failures) {
  ordered_json out = ordered_json::array();
  for (const auto& f : failures) {
    out.push_back({{"concept", f.concept_label}, {"repeat", f.repeat}, {"reason", f.reason}});
  }
  return out;
}

std::vector<ConceptFailure> failures_from(const ordered_json& j) {
  std::vector<ConceptFailure> out;
  for (const auto& f : j) {
    out.push_back({f.at("concept").get<std::string>(), f.at("reason").get<std::string>(),
                   f.at("repeat").get<int>()});
  }
  return out;
}

ordered_json optional_json(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::optional<double> optional_from(const ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

ordered_json parse_document(std::string_view text, std::string_view kind) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw ParseError(std::string("report is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("kind", "") != kind) {
    throw ParseError("not a " + std::string(kind) + " report");
  }
  return j;
}

template <typename Fn>
auto rethrow_as_parse(Fn&& fn) {
  try {
    return fn();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what());
  }
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

template <typename Report>
void emit(const Report& report, const std::filesystem::path& path, ReportFormat format,
          char delimiter) {
  auto out = open_output(path);
  if (format == ReportFormat::kJson) {
    out << to_json(report) << '\n';
  } else {
    write_delimited(out, report, delimiter);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

std::string to_string(RateCorrection correction) {
  switch (correction) {
    case RateCorrection::kLoglinear:
      return "loglinear";
    case RateCorrection::kLoglinearAlways:
      return "loglinear-always";
    case RateCorrection::kNone:
      return "none";
  }
  return "loglinear";
}

RateCorrection parse_rate_correction(std::string_view name) {
  if (name == "loglinear") return RateCorrection::kLoglinear;
  if (name == "loglinear-always") return RateCorrection::kLoglinearAlways;
  if (name == "none") return RateCorrection::kNone;
  throw PreconditionError("unknown rate correction '" + std::string(name) + "'");
}

std::string config_to_json(const ExperimentConfig& config) { return config_json(config).dump(2); }

std::string to_json(const LooReport& report) {
  ordered_json j;
  j["kind"] = "leave_one_out";
  j["config"] = config_json(report.config);
  j["mean_raw"] = report.mean_raw;
  j["mean_completed"] = report.mean_completed;
  j["paired_t"] = optional_json(report.paired_t_value);
  j["df"] = report.df;
  j["evaluated"] = report.per_concept.size();
  j["failed"] = report.failures.size();
  ordered_json rows = ordered_json::array();
  for (const auto& e : report.per_concept) rows.push_back(evaluation_json(e));
  j["per_concept"] = std::move(rows);
  j["failures"] = failures_json(report.failures);
  return j.dump(2);
}

std::string to_json(const SweepReport& report) {
  ordered_json j;
  j["kind"] = "holdout_sweep";
  j["seed"] = report.seed;
  j["config"] = config_json(report.config);
  ordered_json rows = ordered_json::array();
  for (const auto& r : report.per_fraction) {
    ordered_json row;
    row["fraction"] = r.fraction;
    row["repeats"] = r.repeats;
    row["held_out_per_repeat"] = r.held_out_per_repeat;
    row["mean_d_prime_difference"] = r.mean_d_prime_difference;
    row["paired_t"] = optional_json(r.paired_t_value);
    row["df"] = r.df;
    ordered_json evs = ordered_json::array();
    for (const auto& e : r.evaluations) evs.push_back(evaluation_json(e));
    row["evaluations"] = std::move(evs);
    row["failures"] = failures_json(r.failures);
    rows.push_back(std::move(row));
  }
  j["per_fraction"] = std::move(rows);
  return j.dump(2);
}

LooReport loo_report_from_json(std::string_view text) {
  const auto j = parse_document(text, "leave_one_out");
  return rethrow_as_parse([&] {
    LooReport r;
    r.config = config_from(j.at("config"));
    r.mean_raw = j.at("mean_raw").get<double>();
    r.mean_completed = j.at("mean_completed").get<double>();
    r.paired_t_value = optional_from(j.at("paired_t"));
    r.df = j.at("df").get<int>();
    for (const auto& e : j.at("per_concept")) r.per_concept.push_back(evaluation_from(e));
    r.failures = failures_from(j.at("failures"));
    return r;
  });
}

SweepReport sweep_report_from_json(std::string_view text) {
  const auto j = parse_document(text, "holdout_sweep");
  return rethrow_as_parse([&] {
    SweepReport r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config = config_from(j.at("config"));
    for (const auto& row : j.at("per_fraction")) {
      SweepRow s;
      s.fraction = row.at("fraction").get<double>();
      s.repeats = row.at("repeats").get<int>();
      s.held_out_per_repeat = row.at("held_out_per_repeat").get<std::size_t>();
      s.mean_d_prime_difference = row.at("mean_d_prime_difference").get<double>();
      s.paired_t_value = optional_from(row.at("paired_t"));
      s.df = row.at("df").get<int>();
      for (const auto& e : row.at("evaluations")) s.evaluations.push_back(evaluation_from(e));
      s.failures = failures_from(row.at("failures"));
      r.per_fraction.push_back(std::move(s));
    }
    return r;
  });
}

void write_delimited(std::ostream& out, const LooReport& report, char delimiter) {
  const char d = delimiter;
  out << "concept" << d << "status" << d << "d_prime_raw" << d << "d_prime_completed" << d
      << "difference" << d << "hits_raw" << d << "misses_raw" << d << "false_alarms_raw" << d
      << "correct_rejections_raw" << d << "hits_completed" << d << "misses_completed" << d
      << "false_alarms_completed" << d << "correct_rejections_completed" << '\n';
  for (const auto& e : report.per_concept) {
    out << e.concept_label << d << "ok" << d << num(e.d_prime_raw) << d
        << num(e.d_prime_completed) << d << num(e.difference()) << d << e.tally_raw.hits << d
        << e.tally_raw.misses << d << e.tally_raw.false_alarms << d
        << e.tally_raw.correct_rejections << d << e.tally_completed.hits << d
        << e.tally_completed.misses << d << e.tally_completed.false_alarms << d
        << e.tally_completed.correct_rejections << '\n';
  }
  for (const auto& f : report.failures) {
    out << f.concept_label << d << "failed" << std::string(11, d) << '\n';
  }
}

void write_delimited(std::ostream& out, const SweepReport& report, char delimiter) {
  const char d = delimiter;
  out << "fraction" << d << "repeats" << d << "evaluations" << d << "failures" << d
      << "mean_d_prime_difference" << d << "paired_t" << d << "df" << '\n';
  for (const auto& r : report.per_fraction) {
    out << num(r.fraction) << d << r.repeats << d << r.evaluations.size() << d
        << r.failures.size() << d << num(r.mean_d_prime_difference) << d
        << (r.paired_t_value ? num(*r.paired_t_value) : std::string()) << d << r.df << '\n';
  }
}

void emit_report(const LooReport& report, const std::filesystem::path& path, ReportFormat format,
                 char delimiter) {
  emit(report, path, format, delimiter);
}

void emit_report(const SweepReport& report, const std::filesystem::path& path, ReportFormat format,
                 char delimiter) {
  emit(report, path, format, delimiter);
}

}  // namespace featnorm
