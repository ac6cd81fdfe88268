#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace irsim {

// Tie-aware Kendall tau-b. Returns 0 when either ranking is entirely tied.
double kendall_tau_b(std::span<const double> x, std::span<const double> y);

// Shannon entropy in bits of a count histogram; 0 for an empty histogram.
double entropy_bits(std::span<const double> counts);

struct Confusion {
  std::int64_t tp = 0;  // false claim, rejected
  std::int64_t fn = 0;  // false claim, accepted
  std::int64_t tn = 0;  // true claim, accepted
  std::int64_t fp = 0;  // true claim, rejected

  friend bool operator==(const Confusion&, const Confusion&) = default;
};

// Mean of the per-class recalls; a class with no samples is left out.
double balanced_accuracy(const Confusion& c);

// Ten equal-width bins over [0, 1]: per-bin sample count, score sum, positive count.
struct CalibrationHistogram {
  static constexpr int kBins = 10;
  std::array<std::int64_t, kBins> count{};
  std::array<double, kBins> score_sum{};
  std::array<std::int64_t, kBins> positives{};

  static int bin_of(double score);
  void add(double score, bool positive);
  friend bool operator==(const CalibrationHistogram&, const CalibrationHistogram&) = default;
};

// Count-weighted mean |mean score - positive rate| over non-empty bins.
double expected_calibration_error(const CalibrationHistogram& h);

}  // namespace irsim
