#include <set>

#include "doctest.h"
#include "irsim/error.hpp"
#include "irsim/llm_gateway.hpp"
#include "irsim/persona.hpp"
#include "support.hpp"

using namespace irsim;
using nlohmann::json;

namespace {

Persona with_budget(std::int64_t tokens, std::int64_t searches = 3) {
  return create_persona({{"id", "p"}, {"bio", "b"}, {"token_budget", tokens}, {"search_budget", searches}});
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::RunFailed;
}

}  // namespace

TEST_CASE("minimal persona has no stance") {
  const auto p = create_persona({{"id", "p1"}, {"bio", "..."}, {"token_budget", 1000}, {"search_budget", 3}});
  CHECK(p.id == "p1");
  CHECK(p.token_budget == 1000);
  CHECK(p.search_budget == 3);
  CHECK_FALSE(p.stance.has_value());
  CHECK_FALSE(p.activity_profile.has_value());
}

TEST_CASE("negative budget is rejected") {
  CHECK(code_of([] {
          create_persona({{"id", "p"}, {"bio", "x"}, {"token_budget", -5}, {"search_budget", 1}});
        }) == ErrorCode::InvalidField);
  CHECK(code_of([] { create_persona({{"bio", "x"}, {"token_budget", 5}, {"search_budget", 1}}); }) ==
        ErrorCode::InvalidField);
  CHECK(code_of([] {
          create_persona({{"id", "p"}, {"bio", "x"}, {"token_budget", 5}, {"search_budget", 1}, {"stance", 1.5}});
        }) == ErrorCode::InvalidField);
}

TEST_CASE("activity profile is parsed") {
  json hours = json::array();
  for (int h = 9; h <= 17; ++h) hours.push_back(h);
  const auto p = create_persona({{"id", "p2"},
                                 {"bio", "poster"},
                                 {"token_budget", 10},
                                 {"search_budget", 0},
                                 {"activity_profile",
                                  {{"posts_per_hour", 2},
                                   {"comments_per_hour", 4},
                                   {"active_hours", hours},
                                   {"response_delay_minutes", 10}}}});
  REQUIRE(p.activity_profile.has_value());
  CHECK(p.activity_profile->posts_per_hour == 2.0);
  CHECK(p.activity_profile->comments_per_hour == 4.0);
  CHECK(p.activity_profile->active_hours.size() == 9);
  CHECK(p.activity_profile->active_at(9));
  CHECK_FALSE(p.activity_profile->active_at(18));
  CHECK(create_persona(to_json(p)) == p);
}

TEST_CASE("hour outside the day is rejected") {
  CHECK(code_of([] {
          create_persona({{"id", "p"},
                          {"bio", ""},
                          {"token_budget", 1},
                          {"search_budget", 1},
                          {"activity_profile",
                           {{"posts_per_hour", 1},
                            {"comments_per_hour", 1},
                            {"active_hours", {24}},
                            {"response_delay_minutes", 0}}}});
        }) == ErrorCode::InvalidField);
}

TEST_CASE("token debits follow the crossing rule") {
  const auto p = with_budget(100);
  SUBCASE("simple accumulation") {
    auto l = open_ledger(p);
    debit_tokens(l, p, 40, 1);
    CHECK(l.tokens_spent == 40);
    CHECK_FALSE(is_exhausted(l, p));
  }
  SUBCASE("the crossing call is charged in full") {
    auto l = open_ledger(p);
    debit_tokens(l, p, 90, 1);
    CHECK_FALSE(is_exhausted(l, p));
    debit_tokens(l, p, 40, 2);
    CHECK(l.tokens_spent == 130);
    CHECK(is_exhausted(l, p));
    CHECK(code_of([&] { debit_tokens(l, p, 1, 3); }) == ErrorCode::AlreadyExhausted);
    CHECK(l.tokens_spent == 130);
    CHECK(l.entries.size() == 2);
  }
}

TEST_CASE("search debits stop at the budget") {
  const auto p = with_budget(100, 3);
  auto l = open_ledger(p);
  debit_search(l, p, 1);
  debit_search(l, p, 2);
  debit_search(l, p, 3);
  CHECK(l.searches_spent == 3);
  CHECK(code_of([&] { debit_search(l, p, 4); }) == ErrorCode::SearchBudgetExhausted);
  CHECK(l.searches_spent == 3);

  const auto none = with_budget(100, 0);
  auto l0 = open_ledger(none);
  CHECK(code_of([&] { debit_search(l0, none, 1); }) == ErrorCode::SearchBudgetExhausted);
}

TEST_CASE("exhaustion predicate") {
  const auto zero = with_budget(0);
  CHECK(is_exhausted(open_ledger(zero), zero));
  const auto p = with_budget(100);
  auto l = open_ledger(p);
  l.tokens_spent = 99;
  CHECK_FALSE(is_exhausted(l, p));
  l.tokens_spent = 130;
  CHECK(is_exhausted(l, p));
}

TEST_CASE("ledger totals replay from entries") {
  const auto p = with_budget(1000, 5);
  auto l = open_ledger(p);
  std::int64_t expected = 0;
  for (int i = 1; i <= 20; ++i) {
    debit_tokens(l, p, i * 3, i);
    expected += i * 3;
    if (i % 5 == 0) debit_search(l, p, i);
  }
  const auto [tokens, searches] = replay_totals(l);
  CHECK(tokens == expected);
  CHECK(tokens == l.tokens_spent);
  CHECK(searches == 4);
  for (std::size_t i = 1; i < l.entries.size(); ++i) CHECK(l.entries[i - 1].step <= l.entries[i].step);
}

TEST_CASE("roster ids must be unique") {
  json doc = {{"personas",
               {{{"id", "a"}, {"bio", ""}, {"token_budget", 1}, {"search_budget", 1}},
                {{"id", "a"}, {"bio", ""}, {"token_budget", 1}, {"search_budget", 1}}}}};
  CHECK(code_of([&] { load_roster(doc); }) == ErrorCode::InvalidField);
}

TEST_CASE("generated rosters are deterministic") {
  const auto world = testing_support::small_world(
      {"retrieval evaluation relies on judgments from assessors and careful pooling",
       "recommender feedback loops narrow exposure over months of interaction"});
  auto make = [&](std::size_t n) {
    LlmGateway gw(ScriptedMode{11});
    register_persona_behaviors(gw);
    return generate_personas(world, n, gw);
  };
  CHECK(make(0).empty());
  const auto a = make(11);
  const auto b = make(11);
  CHECK(a == b);
  std::set<std::string> ids;
  for (const auto& p : a) ids.insert(p.id);
  CHECK(ids.size() == 11);
}
