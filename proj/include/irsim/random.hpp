#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>

namespace irsim {

// A reproducible draw stream. Distributions are implemented here rather than
// through <random> distribution classes, whose outputs are library-specific.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller (one value per call, no caching).
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Poisson with the given mean, exact for any mean (Knuth, split into chunks).
  std::int64_t poisson(double mean);

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

// Root of all randomness in a run. Streams are keyed by (agent, label) so
// adding an agent never perturbs draws of another.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t root_seed) : root_(root_seed) {}

  std::uint64_t root_seed() const noexcept { return root_; }
  std::uint64_t derive_seed(const std::string& agent, const std::string& label) const;

  // Returns a fresh stream at draw index 0 and records the derivation.
  Stream stream(const std::string& agent, const std::string& label);

  // (agent, label) -> derived seed, for the run record.
  const std::map<std::pair<std::string, std::string>, std::uint64_t>& derivations() const noexcept {
    return derived_;
  }

 private:
  std::uint64_t root_;
  std::map<std::pair<std::string, std::string>, std::uint64_t> derived_;
};

}  // namespace irsim
