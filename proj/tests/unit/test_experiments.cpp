#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "featnorm/error.hpp"
#include "featnorm/experiments.hpp"
#include "featnorm/oracle.hpp"
#include "featnorm/report.hpp"
#include "featnorm/synthetic.hpp"

using namespace featnorm;

namespace {

struct Pair {
  BinaryFeatureMatrix human;
  BinaryFeatureMatrix machine;
};

Pair synthetic_pair(std::uint64_t seed, Eigen::Index n = 60, Eigen::Index m = 120,
                    double fp = 0.25, double fn = 0.15) {
  auto human = make_low_rank_binary(n, m, 5, seed).matrix;
  SyntheticOracle oracle(human, fp, fn, seed);
  auto machine = fill_matrix(oracle, human.concepts(), human.features());
  return {std::move(human), std::move(machine)};
}

ExperimentConfig rank5() {
  ExperimentConfig c;
  c.rank = 5;
  c.jobs = 2;
  return c;
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("perfect oracle: completion reproduces rows of a noiseless low-rank matrix") {
  const auto human = make_prototype_binary(30, 40, 3, 8);
  ExperimentConfig config;
  config.rank = 3;
  const auto report = leave_one_out(human, human, config);
  REQUIRE(report.per_concept.size() == 30);
  CHECK_FALSE(report.has_failures());
  for (const auto& e : report.per_concept) {
    CHECK(e.tally_raw.misses == 0);
    CHECK(e.tally_raw.false_alarms == 0);
    CHECK(e.tally_completed == e.tally_raw);
    // Perfect rows are scored with corrected rates, so d' stays finite.
    CHECK(std::isfinite(e.d_prime_raw));
    CHECK(e.d_prime_completed == e.d_prime_raw);
  }
}

TEST_CASE("seed-42 synthetic pair: completion beats the raw oracle") {
  const auto pair = synthetic_pair(42);
  const auto report = leave_one_out(pair.human, pair.machine, rank5());
  CHECK(report.per_concept.size() + report.failures.size() == 60);
  CHECK(report.mean_completed > report.mean_raw);
  REQUIRE(report.paired_t_value);
  CHECK(*report.paired_t_value > 0.0);
  CHECK(report.df == static_cast<int>(report.per_concept.size()) - 1);

  // Raw d' scatters around the channel's analytic value z(0.85) - z(0.25).
  CHECK(std::abs(report.mean_raw - 1.7109231396898713) < 0.3);

  double raw = 0.0;
  double completed = 0.0;
  for (const auto& e : report.per_concept) {
    CHECK(e.tally_raw.total() == 120);
    CHECK(e.tally_completed.total() == 120);
    raw += e.d_prime_raw;
    completed += e.d_prime_completed;
  }
  const auto n = static_cast<double>(report.per_concept.size());
  CHECK(report.mean_raw == doctest::Approx(raw / n).epsilon(1e-12));
  CHECK(report.mean_completed == doctest::Approx(completed / n).epsilon(1e-12));
}

TEST_CASE("leave_one_out preconditions") {
  const auto pair = synthetic_pair(1, 6, 20);
  auto config = rank5();
  CHECK_THROWS_AS(leave_one_out(pair.human, pair.machine, config), PreconditionError);
  config.rank = 4;
  CHECK_NOTHROW(leave_one_out(pair.human, pair.machine, config));

  const auto other = synthetic_pair(1, 6, 21);
  CHECK_THROWS_AS(leave_one_out(pair.human, other.machine, config), PreconditionError);
}

TEST_CASE("leave_one_out is deterministic and independent of the job count") {
  const auto pair = synthetic_pair(7, 30, 50);
  auto config = rank5();
  config.jobs = 1;
  const auto a = to_json(leave_one_out(pair.human, pair.machine, config));
  config.jobs = 3;
  const auto b = to_json(leave_one_out(pair.human, pair.machine, config));
  CHECK(a == b);
}

TEST_CASE("per-concept failures are recorded and excluded") {
  // A human row with no positives leaves d' undefined for that concept.
  auto pair = synthetic_pair(3, 20, 40);
  auto cells = pair.human.cells();
  cells.row(4).setZero();
  const BinaryFeatureMatrix human(pair.human.concepts(), pair.human.features(), cells);
  const auto report = leave_one_out(human, pair.machine, rank5());
  REQUIRE(report.failures.size() == 1);
  CHECK(report.failures[0].concept_label == human.concepts()[4]);
  CHECK_FALSE(report.failures[0].reason.empty());
  CHECK(report.has_failures());
  CHECK(report.per_concept.size() == 19);
  CHECK(report.df == 18);

  std::ostringstream csv;
  write_delimited(csv, report);
  CHECK(count_lines(csv.str()) == 21);
  CHECK(csv.str().find("failed") != std::string::npos);
}

TEST_CASE("sweep bookkeeping") {
  const auto pair = synthetic_pair(42);
  const std::vector<double> fractions{0.1, 0.5, 0.9};
  const auto report = holdout_sweep(pair.human, pair.machine, fractions, 2, 42, rank5());
  REQUIRE(report.per_fraction.size() == 3);
  CHECK(report.seed == 42);
  const std::size_t held[] = {6, 30, 54};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& row = report.per_fraction[k];
    CHECK(row.fraction == fractions[k]);
    CHECK(row.repeats == 2);
    CHECK(row.held_out_per_repeat == held[k]);
    CHECK(row.evaluations.size() + row.failures.size() == 2 * held[k]);
    CHECK(row.df == static_cast<int>(row.evaluations.size()) - 1);
    double sum = 0.0;
    for (const auto& e : row.evaluations) sum += e.difference();
    CHECK(row.mean_d_prime_difference ==
          doctest::Approx(sum / static_cast<double>(row.evaluations.size())).epsilon(1e-12));
  }
}

TEST_CASE("sweep preconditions") {
  const auto pair = synthetic_pair(2, 20, 40);
  const auto config = rank5();
  const std::vector<double> unordered{0.5, 0.2};
  CHECK_THROWS_AS(holdout_sweep(pair.human, pair.machine, unordered, 1, 1, config),
                  PreconditionError);
  const std::vector<double> out_of_range{0.0, 0.5};
  CHECK_THROWS_AS(holdout_sweep(pair.human, pair.machine, out_of_range, 1, 1, config),
                  PreconditionError);
  const std::vector<double> too_much{0.8};  // retains 4 < rank + 1
  CHECK_THROWS_AS(holdout_sweep(pair.human, pair.machine, too_much, 1, 1, config),
                  PreconditionError);
  const std::vector<double> fine{0.5};
  CHECK_THROWS_AS(holdout_sweep(pair.human, pair.machine, fine, 0, 1, config), PreconditionError);
}

TEST_CASE("noiseless oracle: completion cannot add signal") {
  const auto pair = synthetic_pair(42, 60, 120, 0.0, 0.0);
  const std::vector<double> fractions{0.2, 0.5};
  const auto report = holdout_sweep(pair.human, pair.machine, fractions, 2, 42, rank5());
  for (const auto& row : report.per_fraction) {
    CHECK(row.mean_d_prime_difference <= 0.0);
    for (const auto& e : row.evaluations) {
      // A perfect raw row already has the largest d' its tally shape allows.
      CHECK(e.difference() <= 1e-12);
      CHECK(e.tally_raw.misses + e.tally_raw.false_alarms == 0);
    }
  }
}

TEST_CASE("improvement shrinks as more concepts are held out") {
  const auto pair = synthetic_pair(42);
  const std::vector<double> fractions{0.1, 0.9};
  const auto report = holdout_sweep(pair.human, pair.machine, fractions, 5, 42, rank5());
  CHECK(report.per_fraction[0].mean_d_prime_difference >=
        report.per_fraction[1].mean_d_prime_difference);
}

TEST_CASE("a sweep at fraction 1/n with n repeats is leave-one-out") {
  const auto pair = synthetic_pair(5, 24, 40);
  const auto config = rank5();
  const auto loo = leave_one_out(pair.human, pair.machine, config);
  const std::vector<double> fractions{1.0 / 24.0};
  const auto sweep = holdout_sweep(pair.human, pair.machine, fractions, 24, 9, config);
  const auto& row = sweep.per_fraction.at(0);
  REQUIRE(row.held_out_per_repeat == 1);
  REQUIRE(row.evaluations.size() == loo.per_concept.size());

  std::map<std::string, const ConceptEvaluation*> by_label;
  for (const auto& e : row.evaluations) by_label[e.concept_label] = &e;
  REQUIRE(by_label.size() == 24);
  for (const auto& e : loo.per_concept) {
    const auto* s = by_label.at(e.concept_label);
    CHECK(std::abs(s->d_prime_raw - e.d_prime_raw) <= 1e-10);
    CHECK(std::abs(s->d_prime_completed - e.d_prime_completed) <= 1e-10);
  }
  CHECK(row.mean_d_prime_difference ==
        doctest::Approx(loo.mean_completed - loo.mean_raw).epsilon(1e-10));
}

TEST_CASE("JSON reports round trip") {
  const auto pair = synthetic_pair(11, 20, 30);
  auto config = rank5();
  config.fit.l2_penalty = 0.5;
  const auto loo = leave_one_out(pair.human, pair.machine, config);
  const auto text = to_json(loo);
  const auto back = loo_report_from_json(text);
  CHECK(to_json(back) == text);
  CHECK(back.config.rank == 5);
  CHECK(back.config.fit.l2_penalty == 0.5);
  CHECK(back.per_concept.size() == loo.per_concept.size());
  CHECK(back.per_concept[3].d_prime_completed == loo.per_concept[3].d_prime_completed);

  const std::vector<double> fractions{0.2, 0.4};
  const auto sweep = holdout_sweep(pair.human, pair.machine, fractions, 2, 3, config);
  const auto sweep_text = to_json(sweep);
  CHECK(to_json(sweep_report_from_json(sweep_text)) == sweep_text);
  CHECK(sweep_report_from_json(sweep_text).seed == 3);

  CHECK_THROWS(loo_report_from_json(sweep_text));
}

TEST_CASE("reports capture rank and penalty") {
  const auto pair = synthetic_pair(11, 20, 30);
  auto config = rank5();
  config.rank = 4;
  config.fit.l2_penalty = 2.5;
  const auto text = to_json(leave_one_out(pair.human, pair.machine, config));
  CHECK(text.find("\"rank\": 4") != std::string::npos);
  CHECK(text.find("\"l2_penalty\": 2.5") != std::string::npos);
}

TEST_CASE("delimited reports") {
  const auto pair = synthetic_pair(11, 20, 30);
  const auto loo = leave_one_out(pair.human, pair.machine, rank5());
  std::ostringstream csv;
  write_delimited(csv, loo);
  CHECK(count_lines(csv.str()) == 21);
  CHECK(csv.str().rfind("concept,", 0) == 0);

  std::ostringstream tsv;
  write_delimited(tsv, loo, '\t');
  CHECK(tsv.str().find('\t') != std::string::npos);

  auto small_rank = rank5();
  small_rank.rank = 2;
  const auto wide = synthetic_pair(12, 30, 30);
  const auto sweep =
      holdout_sweep(wide.human, wide.machine, default_sweep_fractions(), 1, 1, small_rank);
  std::ostringstream sweep_csv;
  write_delimited(sweep_csv, sweep);
  CHECK(count_lines(sweep_csv.str()) == 10);
  CHECK(sweep_csv.str().rfind("fraction,", 0) == 0);
}

TEST_CASE("rate correction names") {
  for (auto c : {RateCorrection::kLoglinear, RateCorrection::kLoglinearAlways,
                 RateCorrection::kNone}) {
    CHECK(parse_rate_correction(to_string(c)) == c);
  }
  CHECK_THROWS_AS(parse_rate_correction("probit"), PreconditionError);
}

TEST_CASE("default fractions") {
  const auto f = default_sweep_fractions();
  REQUIRE(f.size() == 9);
  CHECK(f.front() == doctest::Approx(0.1));
  CHECK(f.back() == doctest::Approx(0.9));
}
