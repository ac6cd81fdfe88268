#include "irsim/metrics.hpp"

#include <cmath>

#include "irsim/error.hpp"

namespace irsim {

double kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::DimensionMismatch, "kendall_tau_b on unequal lengths");
  const std::size_t n = x.size();
  std::int64_t concordant = 0, discordant = 0, ties_x = 0, ties_y = 0, pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      ++pairs;
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0) ++ties_x;
      if (dy == 0.0) ++ties_y;
      if (dx == 0.0 || dy == 0.0) continue;
      if ((dx > 0.0) == (dy > 0.0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double denom = std::sqrt(static_cast<double>(pairs - ties_x) * static_cast<double>(pairs - ties_y));
  if (denom == 0.0) return 0.0;
  return static_cast<double>(concordant - discordant) / denom;
}

double entropy_bits(std::span<const double> counts) {
  double total = 0.0;
  for (double c : counts) total += c;
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double c : counts) {
    if (c <= 0.0) continue;
    const double p = c / total;
    h -= p * std::log2(p);
  }
  return h;
}

double balanced_accuracy(const Confusion& c) {
  const std::int64_t pos = c.tp + c.fn;
  const std::int64_t neg = c.tn + c.fp;
  double sum = 0.0;
  int classes = 0;
  if (pos > 0) {
    sum += static_cast<double>(c.tp) / static_cast<double>(pos);
    ++classes;
  }
  if (neg > 0) {
    sum += static_cast<double>(c.tn) / static_cast<double>(neg);
    ++classes;
  }
  return classes == 0 ? 0.0 : sum / classes;
}

int CalibrationHistogram::bin_of(double score) {
  int b = static_cast<int>(std::floor(score * kBins));
  if (b < 0) b = 0;
  if (b >= kBins) b = kBins - 1;
  return b;
}

void CalibrationHistogram::add(double score, bool positive) {
  const int b = bin_of(score);
  ++count[b];
  score_sum[b] += score;
  if (positive) ++positives[b];
}

double expected_calibration_error(const CalibrationHistogram& h) {
  std::int64_t total = 0;
  for (auto n : h.count) total += n;
  if (total == 0) return 0.0;
  double ece = 0.0;
  for (int b = 0; b < CalibrationHistogram::kBins; ++b) {
    if (h.count[b] == 0) continue;
    const double n = static_cast<double>(h.count[b]);
    const double gap = std::abs(h.score_sum[b] / n - static_cast<double>(h.positives[b]) / n);
    ece += n / static_cast<double>(total) * gap;
  }
  return ece;
}

}  // namespace irsim
