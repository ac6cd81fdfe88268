#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

namespace irsim {

class WorldModelInstance;
class LlmGateway;

struct ActivityProfile {
  double posts_per_hour = 0.0;
  double comments_per_hour = 0.0;
  std::set<int> active_hours;  // hours of day, 0..23
  double response_delay_minutes = 0.0;

  bool active_at(int hour_of_day) const { return active_hours.count(hour_of_day) > 0; }
  friend bool operator==(const ActivityProfile&, const ActivityProfile&) = default;
};

struct Persona {
  std::string id;
  std::string bio;
  std::int64_t token_budget = 0;
  std::int64_t search_budget = 0;
  std::optional<double> stance;            // topic disposition in [-1, 1]
  std::optional<double> influence_weight;  // >= 0
  std::optional<ActivityProfile> activity_profile;

  friend bool operator==(const Persona&, const Persona&) = default;
};

enum class LedgerKind { Token, Search };

struct LedgerEntry {
  std::int64_t step = 0;
  LedgerKind kind = LedgerKind::Token;
  std::int64_t amount = 0;
  std::string reason;

  friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

// Append-only budget accounting for one persona.
struct BudgetLedger {
  std::string persona_id;
  std::int64_t tokens_spent = 0;
  std::int64_t searches_spent = 0;
  std::vector<LedgerEntry> entries;

  friend bool operator==(const BudgetLedger&, const BudgetLedger&) = default;
};

// Throws Error(InvalidField) naming the offending field.
Persona create_persona(const nlohmann::json& spec);

nlohmann::json to_json(const Persona& persona);
nlohmann::json to_json(const BudgetLedger& ledger);

// Roster document: {"personas": [ ... ]}; ids must be unique.
std::vector<Persona> load_roster(const nlohmann::json& document);
nlohmann::json roster_to_json(const std::vector<Persona>& roster);

BudgetLedger open_ledger(const Persona& persona);

bool is_exhausted(const BudgetLedger& ledger, const Persona& persona);

// The call that crosses the budget is charged in full; calls after that throw
// AlreadyExhausted.
BudgetLedger& debit_tokens(BudgetLedger& ledger, const Persona& persona, std::int64_t amount, std::int64_t step,
                           std::string reason = {});

BudgetLedger& debit_search(BudgetLedger& ledger, const Persona& persona, std::int64_t step,
                           std::string reason = {});

// Sum of ledger entries; equals the running totals when the ledger is consistent.
std::pair<std::int64_t, std::int64_t> replay_totals(const BudgetLedger& ledger);

// One gateway call per persona under label "persona.generate". In scripted mode
// the result depends only on (seed, world content hash, index).
std::vector<Persona> generate_personas(const WorldModelInstance& world, std::size_t n, LlmGateway& gateway);

// Registers the scripted behavior used by generate_personas.
void register_persona_behaviors(LlmGateway& gateway);

}  // namespace irsim
