#pragma once

// Signal-detection agreement between a machine matrix and the human matrix,
// which is treated as the source of signal.

#include <cstdint>
#include <span>

#include "featnorm/dataset.hpp"

namespace featnorm {

struct DetectionTally {
  std::int64_t hits = 0;
  std::int64_t misses = 0;
  std::int64_t false_alarms = 0;
  std::int64_t correct_rejections = 0;

  std::int64_t total() const noexcept {
    return hits + misses + false_alarms + correct_rejections;
  }
  friend bool operator==(const DetectionTally&, const DetectionTally&) = default;
};

/// How rates of exactly 0 or 1 are handled before taking z-scores.
enum class RateCorrection {
  kLoglinear,        // (count + 0.5) / (total + 1), only for a rate that is 0 or 1
  kLoglinearAlways,  // the same adjustment on both rates unconditionally
  kNone,             // a degenerate rate is an error
};

struct DPrimeResult {
  double hit_rate = 0.0;
  double false_alarm_rate = 0.0;
  double d_prime = 0.0;
  bool correction_applied = false;
};

/// Four-way classification of `predicted` against `truth` (the signal).
DetectionTally tally(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);
/// Whole-matrix tally; labels must match in order.
DetectionTally tally(const BinaryFeatureMatrix& predicted, const BinaryFeatureMatrix& truth);

/// Phi(z) = P(Z <= z) for Z ~ N(0, 1).
double standard_normal_cdf(double z);

/// Inverse of the standard normal CDF for p in (0, 1), absolute error well
/// below 1e-9 (rational approximation plus one Halley step). Exactly odd
/// around p = 0.5.
double standard_normal_quantile(double p);

/// d' = z(HR) - z(FAR).
DPrimeResult d_prime(const DetectionTally& counts,
                     RateCorrection correction = RateCorrection::kLoglinear);

struct PairedT {
  double t = 0.0;
  int df = 0;
};

/// One-sample t on paired differences: mean / (sd / sqrt(n)), sd with n - 1.
/// Throws PreconditionError for n < 2 and NumericError for zero variance.
PairedT paired_t(std::span<const double> differences);

}  // namespace featnorm
