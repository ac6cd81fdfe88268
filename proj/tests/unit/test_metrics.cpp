#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "irsim/metrics.hpp"
#include "irsim/random.hpp"

using namespace irsim;

namespace {

// Tau-b from tie-group sizes: (nc - nd) / sqrt((n0 - n1)(n0 - n2)).
double tau_b_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double sx = (x[i] > x[j]) - (x[i] < x[j]);
      const double sy = (y[i] > y[j]) - (y[i] < y[j]);
      s += sx * sy;
    }
  }
  s /= 2;  // each unordered pair counted twice
  auto tie_pairs = [](const std::vector<double>& v) {
    std::map<double, double> groups;
    for (double e : v) groups[e] += 1;
    double t = 0;
    for (const auto& [k, c] : groups) t += c * (c - 1) / 2;
    return t;
  };
  const double n0 = static_cast<double>(n) * static_cast<double>(n - 1) / 2;
  const double d = std::sqrt((n0 - tie_pairs(x)) * (n0 - tie_pairs(y)));
  return d == 0 ? 0 : s / d;
}

}  // namespace

TEST_CASE("tau-b hand examples") {
  const std::vector<double> a = {1, 2, 3}, rev = {3, 2, 1}, swap = {1, 3, 2};
  CHECK(kendall_tau_b(a, a) == doctest::Approx(1.0));
  CHECK(kendall_tau_b(a, rev) == doctest::Approx(-1.0));
  CHECK(kendall_tau_b(a, swap) == doctest::Approx(1.0 / 3.0));
  const std::vector<double> flat = {2, 2, 2};
  CHECK(kendall_tau_b(a, flat) == 0.0);
}

TEST_CASE("tau-b agrees with the tie-group oracle") {
  Stream s(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + s.below(30);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(s.below(6));
      y[i] = static_cast<double>(s.below(trial % 2 ? 4 : 1000));
    }
    CHECK(std::abs(kendall_tau_b(x, y) - tau_b_oracle(x, y)) <= 1e-12);
  }
}

TEST_CASE("entropy of uniform exposure") {
  const std::vector<double> four = {5, 5, 5, 5};
  CHECK(entropy_bits(four) == doctest::Approx(2.0));
  const std::vector<double> one = {0, 9, 0};
  CHECK(entropy_bits(one) == 0.0);
  CHECK(entropy_bits(std::vector<double>{}) == 0.0);
  const std::vector<double> skew = {1, 3};
  CHECK(entropy_bits(skew) == doctest::Approx(-(0.25 * std::log2(0.25) + 0.75 * std::log2(0.75))));
}

TEST_CASE("balanced accuracy") {
  CHECK(balanced_accuracy({10, 0, 10, 0}) == 1.0);
  CHECK(balanced_accuracy({0, 10, 10, 0}) == 0.5);
  CHECK(balanced_accuracy({3, 1, 1, 1}) == doctest::Approx((0.75 + 0.5) / 2));
  CHECK(balanced_accuracy({4, 0, 0, 0}) == 1.0);
}

TEST_CASE("calibration error from raw samples") {
  Stream s(3);
  CalibrationHistogram h;
  std::vector<std::pair<double, bool>> samples;
  for (int i = 0; i < 500; ++i) {
    const double p = s.uniform();
    const bool y = s.bernoulli(p * p);
    samples.push_back({p, y});
    h.add(p, y);
  }
  double ece = 0;
  for (int b = 0; b < 10; ++b) {
    double n = 0, sum = 0, pos = 0;
    for (const auto& [p, y] : samples) {
      int bin = static_cast<int>(p * 10);
      if (bin > 9) bin = 9;
      if (bin != b) continue;
      n += 1;
      sum += p;
      pos += y;
    }
    if (n > 0) ece += n / 500.0 * std::abs(sum / n - pos / n);
  }
  CHECK(std::abs(expected_calibration_error(h) - ece) <= 1e-12);
  CHECK(CalibrationHistogram::bin_of(1.0) == 9);
  CHECK(CalibrationHistogram::bin_of(0.0) == 0);
}

TEST_CASE("a perfectly calibrated certain detector has zero error") {
  CalibrationHistogram h;
  for (int i = 0; i < 10; ++i) {
    h.add(1.0, true);
    h.add(0.0, false);
  }
  CHECK(expected_calibration_error(h) == 0.0);
}
