#include "irsim/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "irsim/hashing.hpp"

namespace irsim {

std::uint64_t Stream::below(std::uint64_t n) {
  // Lemire-style rejection keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

double Stream::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::int64_t Stream::poisson(double mean) {
  if (!(mean > 0.0)) return 0;
  constexpr double kChunk = 30.0;
  std::int64_t total = 0;
  double remaining = mean;
  while (remaining > 0.0) {
    const double lambda = remaining > kChunk ? kChunk : remaining;
    remaining -= lambda;
    const double threshold = std::exp(-lambda);
    double product = uniform();
    std::int64_t k = 0;
    while (product > threshold) {
      ++k;
      product *= uniform();
    }
    total += k;
  }
  return total;
}

std::uint64_t RandomSource::derive_seed(const std::string& agent, const std::string& label) const {
  std::string key = std::to_string(root_);
  key.push_back('\x1f');
  key += agent;
  key.push_back('\x1f');
  key += label;
  return sha256_u64(key);
}

Stream RandomSource::stream(const std::string& agent, const std::string& label) {
  const std::uint64_t seed = derive_seed(agent, label);
  derived_[{agent, label}] = seed;
  return Stream(seed);
}

}  // namespace irsim
