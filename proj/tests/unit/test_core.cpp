#include <cmath>
#include <numeric>

#include "doctest.h"
#include "irsim/hashing.hpp"
#include "irsim/random.hpp"
#include "irsim/text.hpp"

using namespace irsim;

TEST_CASE("normalize_text collapses whitespace and composes accents") {
  CHECK(normalize_text("  a \t b\n\nc  ") == "a b c");
  // "e" + combining acute becomes the precomposed code point.
  CHECK(normalize_text("caf\x65\xcc\x81") == "caf\xc3\xa9");
  CHECK(normalize_text("") == "");
}

TEST_CASE("tokenize lowercases and splits on punctuation") {
  const auto t = tokenize("Hello, World! BM25-style x");
  REQUIRE(t.size() == 5);
  CHECK(t[0] == "hello");
  CHECK(t[1] == "world");
  CHECK(t[2] == "bm25");
  CHECK(t[3] == "style");
  CHECK(t[4] == "x");
}

TEST_CASE("token estimate is the ceiling of 1.3 per word") {
  for (std::size_t w = 0; w < 200; ++w) {
    CHECK(estimate_tokens(w) == static_cast<long long>(std::ceil(1.3L * static_cast<long double>(w) - 1e-12L)));
  }
  CHECK(estimate_tokens(10) == 13);
  CHECK(estimate_tokens(1) == 2);
}

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_u64("abc") == 0xba7816bf8f01cfeaULL);
}

TEST_CASE("fnv1a64 known vector") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("streams depend only on root, agent and label") {
  RandomSource a(42), b(42), c(43);
  auto s1 = a.stream("alice", "x");
  auto s2 = b.stream("alice", "x");
  auto s3 = c.stream("alice", "x");
  auto s4 = a.stream("bob", "x");
  bool differs_root = false, differs_agent = false;
  for (int i = 0; i < 32; ++i) {
    const auto x1 = s1.next_u64();
    CHECK(x1 == s2.next_u64());
    differs_root |= x1 != s3.next_u64();
    differs_agent |= x1 != s4.next_u64();
  }
  CHECK(differs_root);
  CHECK(differs_agent);
}

TEST_CASE("adding an agent does not perturb another agent's draws") {
  RandomSource before(7), after(7);
  auto alone = before.stream("alice", "activity");
  (void)after.stream("zed", "activity");
  auto with_other = after.stream("alice", "activity");
  for (int i = 0; i < 16; ++i) CHECK(alone.uniform() == with_other.uniform());
  CHECK(after.derivations().size() == 2);
}

TEST_CASE("uniform and below stay in range") {
  Stream s(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = s.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(s.below(7) < 7u);
  }
}

TEST_CASE("poisson mean and variance match the rate") {
  for (double mean : {0.3, 4.0, 75.0}) {
    Stream s(99);
    const int n = 20000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
      const double k = static_cast<double>(s.poisson(mean));
      sum += k;
      sq += k * k;
    }
    const double m = sum / n;
    const double v = sq / n - m * m;
    // Five standard errors of the sample mean.
    CHECK(std::abs(m - mean) < 5.0 * std::sqrt(mean / n));
    CHECK(std::abs(v - mean) / mean < 0.1);
  }
  Stream z(1);
  CHECK(z.poisson(0.0) == 0);
}

TEST_CASE("normal draws have unit variance") {
  Stream s(5);
  const int n = 50000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double x = s.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.03);
}
