#include "featnorm/metrics.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "featnorm/error.hpp"

namespace featnorm {
namespace {

// Acklam's rational approximation for the lower half, p in (0, 0.5].
double lower_quantile_estimate(double p) {
  static constexpr std::array<double, 6> a{-3.969683028665376e+01, 2.209460984245205e+02,
                                           -2.759285104469687e+02, 1.383577518672690e+02,
                                           -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr std::array<double, 5> b{-5.447609879822406e+01, 1.615858368580409e+02,
                                           -1.556989798598866e+02, 6.680131188771972e+01,
                                           -1.328068155288572e+01};
  static constexpr std::array<double, 6> c{-7.784894002430293e-03, -3.223964580411365e-01,
                                           -2.400758277161838e+00, -2.549671500661610e+00,
                                           4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr std::array<double, 4> d{7.784695709041462e-03, 3.224671290700398e-01,
                                           2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double kLow = 0.02425;

  if (p < kLow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

double corrected_rate(std::int64_t count, std::int64_t total, bool adjust) {
  if (adjust) return (static_cast<double>(count) + 0.5) / (static_cast<double>(total) + 1.0);
  return static_cast<double>(count) / static_cast<double>(total);
}

}  // namespace

DetectionTally tally(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size()) {
    throw PreconditionError("predicted and truth vectors differ in length");
  }
  DetectionTally t;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const bool signal = truth[k] != 0;
    const bool said_yes = predicted[k] != 0;
    if (signal) {
      (said_yes ? t.hits : t.misses) += 1;
    } else {
      (said_yes ? t.false_alarms : t.correct_rejections) += 1;
    }
  }
  return t;
}

DetectionTally tally(const BinaryFeatureMatrix& predicted, const BinaryFeatureMatrix& truth) {
  if (predicted.concepts() != truth.concepts() || predicted.features() != truth.features()) {
    throw PreconditionError("matrices differ in shape or label order");
  }
  const auto& pc = predicted.cells();
  const auto& tc = truth.cells();
  return tally(std::span<const std::uint8_t>(pc.data(), static_cast<std::size_t>(pc.size())),
               std::span<const std::uint8_t>(tc.data(), static_cast<std::size_t>(tc.size())));
}

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double standard_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw PreconditionError("quantile argument must lie in (0, 1)");
  if (p > 0.5) return -standard_normal_quantile(1.0 - p);  // 1 - p is exact here
  if (p == 0.5) return 0.0;

  double x = lower_quantile_estimate(p);
  // Halley refinement against the erfc-based CDF.
  const double e = standard_normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

DPrimeResult d_prime(const DetectionTally& counts, RateCorrection correction) {
  if (counts.hits < 0 || counts.misses < 0 || counts.false_alarms < 0 ||
      counts.correct_rejections < 0) {
    throw PreconditionError("tally counts must be non-negative");
  }
  const std::int64_t signal = counts.hits + counts.misses;
  const std::int64_t noise = counts.false_alarms + counts.correct_rejections;
  if (signal < 1) throw PreconditionError("no signal cells (hits + misses = 0)");
  if (noise < 1) throw PreconditionError("no noise cells (false alarms + correct rejections = 0)");

  const bool hr_degenerate = counts.hits == 0 || counts.misses == 0;
  const bool far_degenerate = counts.false_alarms == 0 || counts.correct_rejections == 0;

  bool adjust_hr = false;
  bool adjust_far = false;
  switch (correction) {
    case RateCorrection::kLoglinear:
      adjust_hr = hr_degenerate;
      adjust_far = far_degenerate;
      break;
    case RateCorrection::kLoglinearAlways:
      adjust_hr = adjust_far = true;
      break;
    case RateCorrection::kNone:
      if (hr_degenerate || far_degenerate) {
        throw NumericError("hit or false-alarm rate is 0 or 1 and no correction was requested");
      }
      break;
  }

  DPrimeResult r;
  r.hit_rate = corrected_rate(counts.hits, signal, adjust_hr);
  r.false_alarm_rate = corrected_rate(counts.false_alarms, noise, adjust_far);
  r.correction_applied = adjust_hr || adjust_far;
  r.d_prime = standard_normal_quantile(r.hit_rate) - standard_normal_quantile(r.false_alarm_rate);
  return r;
}

PairedT paired_t(std::span<const double> differences) {
  const std::size_t n = differences.size();
  if (n < 2) throw PreconditionError("paired t needs at least two differences");
  double mean = 0.0;
  for (double x : differences) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : differences) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw NumericError("paired differences have zero variance");
  return {mean / (sd / std::sqrt(static_cast<double>(n))), static_cast<int>(n - 1)};
}

}  // namespace featnorm
