#pragma once

// JSON and delimited serialisation of experiment reports.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "featnorm/experiments.hpp"

namespace featnorm {

enum class ReportFormat { kJson, kDelimited };

std::string to_string(RateCorrection correction);
/// "loglinear", "loglinear-always" or "none"; throws PreconditionError otherwise.
RateCorrection parse_rate_correction(std::string_view name);

/// Lossless JSON: every evaluation, failure, the config snapshot and the seed.
std::string to_json(const LooReport& report);
std::string to_json(const SweepReport& report);
/// The config snapshot on its own (also embedded in reports and manifests).
std::string config_to_json(const ExperimentConfig& config);

LooReport loo_report_from_json(std::string_view text);
SweepReport sweep_report_from_json(std::string_view text);

/// One row per concept (failed concepts included, with status "failed").
void write_delimited(std::ostream& out, const LooReport& report, char delimiter = ',');
/// One row per fraction: fraction, repeats, evaluations, failures, mean
/// difference, t, df.
void write_delimited(std::ostream& out, const SweepReport& report, char delimiter = ',');

void emit_report(const LooReport& report, const std::filesystem::path& path, ReportFormat format,
                 char delimiter = ',');
void emit_report(const SweepReport& report, const std::filesystem::path& path, ReportFormat format,
                 char delimiter = ',');

}  // namespace featnorm
