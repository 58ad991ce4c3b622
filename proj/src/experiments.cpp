#include "featnorm/experiments.hpp"

#include <cmath>
#include <fmt/format.h>
#include <numeric>

#include "featnorm/error.hpp"
#include "parallel.hpp"

namespace featnorm {
namespace {

void check_pair(const BinaryFeatureMatrix& human, const BinaryFeatureMatrix& machine) {
  if (human.concepts() != machine.concepts() || human.features() != machine.features()) {
    throw PreconditionError("human and machine matrices differ in shape or label order");
  }
}

std::optional<double> t_or_empty(std::span<const double> differences) {
  if (differences.size() < 2) return std::nullopt;
  try {
    return paired_t(differences).t;
  } catch (const NumericError&) {
    return std::nullopt;
  }
}

// Slot filled by one worker: an evaluation or the reason it failed.
struct Outcome {
  std::optional<ConceptEvaluation> evaluation;
  std::string failure;
};

Outcome run_guarded(const auto& body) {
  Outcome out;
  try {
    out.evaluation = body();
  } catch (const std::exception& e) {
    out.failure = e.what();
  }
  return out;
}

}  // namespace

ConceptEvaluation evaluate_concept(const DesignMatrix& design, std::span<const std::uint8_t> human_row,
                                   std::span<const std::uint8_t> machine_row,
                                   const ExperimentConfig& config, std::string concept_label) {
  const auto completed = complete_concept(design, machine_row, config.fit);
  ConceptEvaluation ev;
  ev.concept_label = std::move(concept_label);
  ev.tally_raw = tally(machine_row, human_row);
  ev.tally_completed = tally(completed.features, human_row);
  ev.d_prime_raw = d_prime(ev.tally_raw, config.correction).d_prime;
  ev.d_prime_completed = d_prime(ev.tally_completed, config.correction).d_prime;
  ev.fit_converged = completed.embedding.converged;
  return ev;
}

LooReport leave_one_out(const BinaryFeatureMatrix& human, const BinaryFeatureMatrix& machine,
                        const ExperimentConfig& config) {
  check_pair(human, machine);
  config.fit.validate();
  const Eigen::Index n = human.rows();
  if (config.rank < 1 || n < config.rank + 2 || config.rank > human.cols()) {
    throw PreconditionError(fmt::format(
        "leave-one-out at rank {} needs at least {} concepts and {} features (have {}x{})",
        config.rank, config.rank + 2, config.rank, n, human.cols()));
  }

  std::vector<Outcome> outcomes(static_cast<std::size_t>(n));
  detail::parallel_for(outcomes.size(), config.jobs, [&](std::size_t i) {
    outcomes[i] = run_guarded([&] {
      std::vector<Eigen::Index> keep;
      keep.reserve(static_cast<std::size_t>(n - 1));
      for (Eigen::Index r = 0; r < n; ++r) {
        if (r != static_cast<Eigen::Index>(i)) keep.push_back(r);
      }
      const auto dec =
          truncated_svd(human.select_rows(keep).to_real(), config.rank, config.svd);
      const auto design = build_design_matrix(dec, human.features());
      const auto row = static_cast<Eigen::Index>(i);
      return evaluate_concept(design, human.row(row), machine.row(row), config,
                              human.concepts()[i]);
    });
  });

  LooReport report;
  report.config = config;
  std::vector<double> differences;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].evaluation) {
      differences.push_back(outcomes[i].evaluation->difference());
      report.per_concept.push_back(std::move(*outcomes[i].evaluation));
    } else {
      report.failures.push_back({human.concepts()[i], std::move(outcomes[i].failure), 0});
    }
  }
  if (!report.per_concept.empty()) {
    double raw = 0.0, completed = 0.0;
    for (const auto& ev : report.per_concept) {
      raw += ev.d_prime_raw;
      completed += ev.d_prime_completed;
    }
    const auto count = static_cast<double>(report.per_concept.size());
    report.mean_raw = raw / count;
    report.mean_completed = completed / count;
  }
  report.df = static_cast<int>(report.per_concept.size()) - 1;
  report.paired_t_value = t_or_empty(differences);
  return report;
}

SweepReport holdout_sweep(const BinaryFeatureMatrix& human, const BinaryFeatureMatrix& machine,
                          std::span<const double> fractions, int repeats, std::uint64_t seed,
                          const ExperimentConfig& config) {
  check_pair(human, machine);
  config.fit.validate();
  if (repeats < 1) throw PreconditionError("repeats must be >= 1");
  if (fractions.empty()) throw PreconditionError("no holdout fractions given");
  if (config.rank < 1 || config.rank > human.cols()) {
    throw PreconditionError(fmt::format("rank {} outside [1, {}]", config.rank, human.cols()));
  }
  const auto n = static_cast<std::size_t>(human.rows());
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    if (!(fractions[k] > 0.0 && fractions[k] < 1.0)) {
      throw PreconditionError("holdout fractions must lie in (0, 1)");
    }
    if (k > 0 && !(fractions[k] > fractions[k - 1])) {
      throw PreconditionError("holdout fractions must be strictly increasing");
    }
    const std::size_t retained = n - holdout_size(n, fractions[k]);
    if (retained < static_cast<std::size_t>(config.rank) + 1) {
      throw PreconditionError(fmt::format(
          "fraction {} retains {} concepts; rank {} needs at least {}", fractions[k], retained,
          config.rank, config.rank + 1));
    }
  }

  SweepReport report;
  report.seed = seed;
  report.config = config;

  for (std::size_t k = 0; k < fractions.size(); ++k) {
    const std::uint64_t split_seed = seed + k;
    std::vector<ConceptSplit> splits;
    splits.reserve(static_cast<std::size_t>(repeats));
    for (int r = 0; r < repeats; ++r) {
      splits.push_back(split_concepts(human, fractions[k], split_seed, static_cast<std::size_t>(r)));
    }

    std::vector<std::optional<DesignMatrix>> designs(splits.size());
    std::vector<std::string> design_errors(splits.size());
    detail::parallel_for(splits.size(), config.jobs, [&](std::size_t r) {
      try {
        designs[r] = build_design_matrix(
            truncated_svd(splits[r].retained.to_real(), config.rank, config.svd),
            human.features());
      } catch (const std::exception& e) {
        design_errors[r] = e.what();
      }
    });

    struct Task {
      int repeat;
      Eigen::Index row;
    };
    std::vector<Task> tasks;
    for (std::size_t r = 0; r < splits.size(); ++r) {
      for (const auto row : splits[r].held_out_rows) tasks.push_back({static_cast<int>(r), row});
    }
    std::vector<Outcome> outcomes(tasks.size());
    detail::parallel_for(tasks.size(), config.jobs, [&](std::size_t t) {
      const auto& task = tasks[t];
      const auto r = static_cast<std::size_t>(task.repeat);
      if (!designs[r]) {
        outcomes[t].failure = "decomposition failed: " + design_errors[r];
        return;
      }
      outcomes[t] = run_guarded([&] {
        auto ev = evaluate_concept(*designs[r], human.row(task.row), machine.row(task.row), config,
                                   human.concepts()[static_cast<std::size_t>(task.row)]);
        ev.repeat = task.repeat;
        return ev;
      });
    });

    SweepRow row;
    row.fraction = fractions[k];
    row.repeats = repeats;
    row.held_out_per_repeat = holdout_size(n, fractions[k]);
    std::vector<double> differences;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      if (outcomes[t].evaluation) {
        differences.push_back(outcomes[t].evaluation->difference());
        row.evaluations.push_back(std::move(*outcomes[t].evaluation));
      } else {
        row.failures.push_back({human.concepts()[static_cast<std::size_t>(tasks[t].row)],
                                std::move(outcomes[t].failure), tasks[t].repeat});
      }
    }
    if (!differences.empty()) {
      row.mean_d_prime_difference =
          std::accumulate(differences.begin(), differences.end(), 0.0) /
          static_cast<double>(differences.size());
    }
    row.df = static_cast<int>(differences.size()) - 1;
    row.paired_t_value = t_or_empty(differences);
    report.per_fraction.push_back(std::move(row));
  }
  return report;
}

std::vector<double> default_sweep_fractions() {
  std::vector<double> out;
  for (int k = 1; k <= 9; ++k) out.push_back(k / 10.0);
  return out;
}

}  // namespace featnorm
