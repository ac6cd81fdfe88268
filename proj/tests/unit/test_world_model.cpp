#include "doctest.h"
#include "irsim/error.hpp"
#include "irsim/hashing.hpp"
#include "irsim/persona.hpp"
#include "irsim/world_model.hpp"
#include "support.hpp"

using namespace irsim;
using testing_support::repeated_words;
using testing_support::small_world;

namespace {

struct CountingBackend : SearchBackend {
  int calls = 0;
  std::string name() const override { return "counting"; }
  std::vector<SearchResult> search(const WorldModelInstance&, const std::string& q) override {
    ++calls;
    return {{"t", "u", q, 1.0}};
  }
};

Persona searcher(std::int64_t search_budget) {
  return create_persona({{"id", "s"}, {"bio", ""}, {"token_budget", 100}, {"search_budget", search_budget}});
}

}  // namespace

TEST_CASE("window starts use stride window minus overlap") {
  const auto world = ingest({{"d", repeated_words(1000)}}, {512, 64});
  REQUIRE(world.chunks().size() == 3);
  CHECK(world.chunks()[0].position == 0);
  CHECK(world.chunks()[1].position == 448);
  CHECK(world.chunks()[2].position == 896);
  CHECK(chunk_starts(1000, {512, 64}) == std::vector<std::size_t>{0, 448, 896});
  // Last window holds the tail.
  CHECK(world.chunks()[2].text.rfind("w999") != std::string::npos);
}

TEST_CASE("chunk starts by enumeration") {
  for (std::size_t n : {0u, 1u, 7u, 30u, 31u, 100u}) {
    for (std::size_t w : {5u, 10u}) {
      for (std::size_t o : {0u, 2u, 4u}) {
        std::vector<std::size_t> expected;
        if (n > 0) {
          for (std::size_t s = 0;; s += w - o) {
            expected.push_back(s);
            if (s + w >= n) break;
          }
        }
        CHECK(chunk_starts(n, {w, o}) == expected);
      }
    }
  }
}

TEST_CASE("empty document yields no chunks") {
  const auto world = ingest({{"empty", ""}, {"full", "one two three"}}, {});
  REQUIRE(world.chunks().size() == 1);
  CHECK(world.chunks()[0].source_id == "full");
}

TEST_CASE("digest is content only") {
  const auto world = ingest({{"a", "same text here"}, {"b", "same text here"}}, {});
  REQUIRE(world.chunks().size() == 2);
  CHECK(world.chunks()[0].digest == world.chunks()[1].digest);
  CHECK(world.chunks()[0].digest == sha256_hex("same text here"));
  CHECK(world.chunks()[0].source_id != world.chunks()[1].source_id);
}

TEST_CASE("content hash ignores document order") {
  const auto a = ingest({{"x", "alpha beta"}, {"y", "gamma delta"}}, {});
  const auto b = ingest({{"y", "gamma delta"}, {"x", "alpha beta"}}, {});
  CHECK(a.content_hash() == b.content_hash());
}

TEST_CASE("no documents is an empty corpus only when forbidden") {
  CHECK(ingest({}, {}).empty());
  ChunkingConfig strict;
  strict.allow_empty = false;
  try {
    ingest({}, strict);
    FAIL("expected EmptyCorpus");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyCorpus);
  }
}

TEST_CASE("keyword lookup ranks by distinct term hits") {
  const auto world = small_world({"apples and pears", "apples bananas cherries", "nothing relevant"});
  const auto hits = keyword_lookup(world, {"bananas", "cherries"}, 5);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].source_id == "doc1");
  CHECK(keyword_lookup(world, {"zebra"}, 5).empty());

  const auto tie = keyword_lookup(world, {"apples"}, 5);
  REQUIRE(tie.size() == 2);
  CHECK(tie[0].source_id == "doc0");
  CHECK(tie[1].source_id == "doc1");
}

TEST_CASE("appended content is findable and private to its instance") {
  auto a = small_world({"the seed corpus text"});
  const auto b = a;
  const auto chunk = append_content(a, "a brand new xylophone remark", "alice");
  CHECK(chunk.source_id.find("alice") != std::string::npos);
  const auto hits = keyword_lookup(a, {"xylophone"}, 3);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].id == chunk.id);
  CHECK(keyword_lookup(b, {"xylophone"}, 3).empty());
  CHECK(b.size() == 1);
  CHECK(a.size() == 2);
  // Appending leaves the ingested-corpus hash alone.
  CHECK(a.content_hash() == b.content_hash());
  CHECK_THROWS_AS(append_content(a, "   ", "alice"), Error);
}

TEST_CASE("justification gate") {
  CHECK_FALSE(is_justified({"q", std::nullopt}));
  CHECK_FALSE(is_justified({"q", std::string("quick check")}));
  CHECK(is_justified({"q", std::string("needed to verify the 2019 audit figures cited")}));
}

TEST_CASE("unjustified search is rejected without a debit") {
  const auto world = small_world({"corpus"});
  const auto p = searcher(3);
  auto ledger = open_ledger(p);
  CountingBackend backend;
  std::vector<SearchLogEntry> journal;
  try {
    justified_search(world, {"audit figures", std::nullopt}, ledger, p, backend, 1, journal);
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RejectedUnjustified);
  }
  CHECK(ledger.searches_spent == 0);
  CHECK(backend.calls == 0);
  REQUIRE(journal.size() == 1);
  CHECK(journal[0].status == "rejected_unjustified");
}

TEST_CASE("justified search debits then calls the backend") {
  const auto world = small_world({"corpus"});
  const auto p = searcher(1);
  auto ledger = open_ledger(p);
  CountingBackend backend;
  std::vector<SearchLogEntry> journal;
  const SearchRequest req{"audit figures", std::string("needed to verify the 2019 audit figures cited")};
  const auto results = justified_search(world, req, ledger, p, backend, 1, journal);
  CHECK(results.size() == 1);
  CHECK(ledger.searches_spent == 1);
  CHECK(backend.calls == 1);

  try {
    justified_search(world, req, ledger, p, backend, 2, journal);
    FAIL("expected exhaustion");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SearchBudgetExhausted);
  }
  CHECK(backend.calls == 1);
  REQUIRE(journal.size() == 2);
  CHECK(journal[1].status == "search_budget_exhausted");
}

TEST_CASE("stub web backend is deterministic") {
  const auto world = small_world({"corpus text"});
  StubWebBackend a(3), b(3);
  const auto ra = a.search(world, "query");
  const auto rb = b.search(world, "query");
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].url == rb[i].url);
    CHECK(ra[i].score == rb[i].score);
  }
}
