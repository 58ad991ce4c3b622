#pragma once

// Leave-one-out and holdout-sweep evaluations of completed feature vectors
// against the human matrix.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "featnorm/completion.hpp"
#include "featnorm/dataset.hpp"
#include "featnorm/lowrank.hpp"
#include "featnorm/metrics.hpp"

namespace featnorm {

struct ExperimentConfig {
  Eigen::Index rank = 10;
  FitConfig fit;
  RateCorrection correction = RateCorrection::kLoglinear;
  SvdOptions svd;
  /// Worker threads; 0 means one per hardware thread. Never affects results.
  unsigned jobs = 0;
};

struct ConceptEvaluation {
  std::string concept_label;
  double d_prime_raw = 0.0;
  double d_prime_completed = 0.0;
  DetectionTally tally_raw;
  DetectionTally tally_completed;
  bool fit_converged = false;
  int repeat = 0;  // split index within a sweep fraction; 0 for leave-one-out

  double difference() const noexcept { return d_prime_completed - d_prime_raw; }
};

struct ConceptFailure {
  std::string concept_label;
  std::string reason;
  int repeat = 0;
};

struct LooReport {
  std::vector<ConceptEvaluation> per_concept;
  std::vector<ConceptFailure> failures;
  double mean_raw = 0.0;
  double mean_completed = 0.0;
  /// Empty when fewer than two concepts were evaluated or the differences
  /// have zero variance.
  std::optional<double> paired_t_value;
  int df = 0;
  ExperimentConfig config;

  bool has_failures() const noexcept { return !failures.empty(); }
};

struct SweepRow {
  double fraction = 0.0;
  int repeats = 0;
  std::size_t held_out_per_repeat = 0;
  double mean_d_prime_difference = 0.0;
  std::optional<double> paired_t_value;
  int df = 0;
  std::vector<ConceptEvaluation> evaluations;
  std::vector<ConceptFailure> failures;
};

struct SweepReport {
  std::vector<SweepRow> per_fraction;
  std::uint64_t seed = 0;
  ExperimentConfig config;
};

/// Completes one concept from its machine row and scores both the raw and the
/// completed rows against the human row.
ConceptEvaluation evaluate_concept(const DesignMatrix& design, std::span<const std::uint8_t> human_row,
                                   std::span<const std::uint8_t> machine_row,
                                   const ExperimentConfig& config, std::string concept_label = {});

/// For each concept: decompose the human matrix without it, complete its
/// machine row, and compare d' of the completed and raw rows. Per-concept
/// failures are recorded and left out of the aggregates.
/// Requires matching labels and n >= rank + 2.
LooReport leave_one_out(const BinaryFeatureMatrix& human, const BinaryFeatureMatrix& machine,
                        const ExperimentConfig& config);

/// For each fraction (strictly increasing, in (0, 1)) and repeat r: hold out
/// the concepts of `split_concepts(human, fraction, seed + fraction_index, r)`,
/// decompose the retained rows and evaluate every held-out concept. Differences
/// are pooled over repeats. Every fraction must retain at least rank + 1 concepts.
SweepReport holdout_sweep(const BinaryFeatureMatrix& human, const BinaryFeatureMatrix& machine,
                          std::span<const double> fractions, int repeats, std::uint64_t seed,
                          const ExperimentConfig& config);

/// 0.1, 0.2, ..., 0.9
std::vector<double> default_sweep_fractions();

}  // namespace featnorm
