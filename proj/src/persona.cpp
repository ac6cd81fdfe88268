#include "irsim/persona.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "irsim/error.hpp"
#include "irsim/llm_gateway.hpp"
#include "irsim/text.hpp"
#include "irsim/world_model.hpp"

namespace irsim {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::InvalidField, "persona field '" + field + "' " + why);
}

std::int64_t non_negative_int(const json& spec, const char* field) {
  if (!spec.contains(field)) invalid(field, "is required");
  const auto& v = spec[field];
  if (!v.is_number_integer()) invalid(field, "must be an integer");
  const auto n = v.get<std::int64_t>();
  if (n < 0) invalid(field, "must be non-negative, got " + std::to_string(n));
  return n;
}

double non_negative_real(const json& obj, const std::string& field) {
  if (!obj.contains(field)) invalid(field, "is required");
  if (!obj[field].is_number()) invalid(field, "must be a number");
  const double x = obj[field].get<double>();
  if (!(x >= 0.0) || !std::isfinite(x)) invalid(field, "must be a finite non-negative number");
  return x;
}

ActivityProfile parse_profile(const json& j) {
  if (!j.is_object()) invalid("activity_profile", "must be an object");
  ActivityProfile p;
  p.posts_per_hour = non_negative_real(j, "posts_per_hour");
  p.comments_per_hour = non_negative_real(j, "comments_per_hour");
  p.response_delay_minutes = non_negative_real(j, "response_delay_minutes");
  if (!j.contains("active_hours") || !j["active_hours"].is_array() || j["active_hours"].empty()) {
    invalid("active_hours", "must be a non-empty array of hours");
  }
  for (const auto& h : j["active_hours"]) {
    if (!h.is_number_integer()) invalid("active_hours", "entries must be integers");
    const int hour = h.get<int>();
    if (hour < 0 || hour > 23) invalid("active_hours", "entry " + std::to_string(hour) + " outside 0..23");
    p.active_hours.insert(hour);
  }
  return p;
}

// Most frequent longer tokens, ties alphabetical.
std::vector<std::string> salient_terms(const WorldModelInstance& world, std::size_t n) {
  std::map<std::string, std::size_t> freq;
  for (const auto& c : world.chunks()) {
    for (auto& t : tokenize(c.text)) {
      if (t.size() >= 5) ++freq[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < n; ++i) out.push_back(ranked[i].first);
  return out;
}

constexpr const char* kGeneratorSystemPrompt =
    "You write persona records for an information-retrieval simulation. Reply with one JSON object with "
    "keys bio (one paragraph), token_budget, search_budget and stance (a number in [-1,1]).";

}  // namespace

Persona create_persona(const json& spec) {
  if (!spec.is_object()) invalid("<record>", "must be an object");
  Persona p;
  if (!spec.contains("id") || !spec["id"].is_string() || spec["id"].get<std::string>().empty()) {
    invalid("id", "must be a non-empty string");
  }
  p.id = spec["id"].get<std::string>();
  if (!spec.contains("bio") || !spec["bio"].is_string()) invalid("bio", "must be a string");
  p.bio = spec["bio"].get<std::string>();
  p.token_budget = non_negative_int(spec, "token_budget");
  p.search_budget = non_negative_int(spec, "search_budget");
  if (spec.contains("stance") && !spec["stance"].is_null()) {
    if (!spec["stance"].is_number()) invalid("stance", "must be a number");
    const double s = spec["stance"].get<double>();
    if (!(s >= -1.0 && s <= 1.0)) invalid("stance", "must lie in [-1,1]");
    p.stance = s;
  }
  if (spec.contains("influence_weight") && !spec["influence_weight"].is_null()) {
    p.influence_weight = non_negative_real(spec, "influence_weight");
  }
  if (spec.contains("activity_profile") && !spec["activity_profile"].is_null()) {
    p.activity_profile = parse_profile(spec["activity_profile"]);
  }
  return p;
}

json to_json(const Persona& persona) {
  json j = {{"id", persona.id},
            {"bio", persona.bio},
            {"token_budget", persona.token_budget},
            {"search_budget", persona.search_budget}};
  if (persona.stance) j["stance"] = *persona.stance;
  if (persona.influence_weight) j["influence_weight"] = *persona.influence_weight;
  if (persona.activity_profile) {
    const auto& a = *persona.activity_profile;
    j["activity_profile"] = {{"posts_per_hour", a.posts_per_hour},
                             {"comments_per_hour", a.comments_per_hour},
                             {"active_hours", std::vector<int>(a.active_hours.begin(), a.active_hours.end())},
                             {"response_delay_minutes", a.response_delay_minutes}};
  }
  return j;
}

json to_json(const BudgetLedger& ledger) {
  json entries = json::array();
  for (const auto& e : ledger.entries) {
    entries.push_back({{"step", e.step},
                       {"kind", e.kind == LedgerKind::Token ? "token" : "search"},
                       {"amount", e.amount},
                       {"reason", e.reason}});
  }
  return {{"persona_id", ledger.persona_id},
          {"tokens_spent", ledger.tokens_spent},
          {"searches_spent", ledger.searches_spent},
          {"entries", std::move(entries)}};
}

std::vector<Persona> load_roster(const json& document) {
  const json& list = document.is_array() ? document : document.at("personas");
  if (!list.is_array()) throw Error(ErrorCode::InvalidField, "roster must be an array of persona records");
  std::vector<Persona> roster;
  std::set<std::string> ids;
  for (const auto& spec : list) {
    Persona p = create_persona(spec);
    if (!ids.insert(p.id).second) invalid("id", "'" + p.id + "' is not unique in the roster");
    roster.push_back(std::move(p));
  }
  return roster;
}

json roster_to_json(const std::vector<Persona>& roster) {
  json list = json::array();
  for (const auto& p : roster) list.push_back(to_json(p));
  return {{"personas", std::move(list)}};
}

BudgetLedger open_ledger(const Persona& persona) {
  BudgetLedger l;
  l.persona_id = persona.id;
  return l;
}

bool is_exhausted(const BudgetLedger& ledger, const Persona& persona) {
  return ledger.tokens_spent >= persona.token_budget;
}

BudgetLedger& debit_tokens(BudgetLedger& ledger, const Persona& persona, std::int64_t amount, std::int64_t step,
                           std::string reason) {
  if (amount <= 0) throw Error(ErrorCode::InvalidField, "token debit must be positive");
  if (is_exhausted(ledger, persona)) {
    throw Error(ErrorCode::AlreadyExhausted, persona.id + " spent " + std::to_string(ledger.tokens_spent) + " of " +
                                                 std::to_string(persona.token_budget) + " tokens");
  }
  if (!ledger.entries.empty() && ledger.entries.back().step > step) {
    throw Error(ErrorCode::InvalidField, "ledger steps must be non-decreasing");
  }
  ledger.entries.push_back({step, LedgerKind::Token, amount, std::move(reason)});
  ledger.tokens_spent += amount;
  return ledger;
}

BudgetLedger& debit_search(BudgetLedger& ledger, const Persona& persona, std::int64_t step, std::string reason) {
  if (ledger.searches_spent >= persona.search_budget) {
    throw Error(ErrorCode::SearchBudgetExhausted, persona.id + " used " + std::to_string(ledger.searches_spent) +
                                                      " of " + std::to_string(persona.search_budget) + " searches");
  }
  if (!ledger.entries.empty() && ledger.entries.back().step > step) {
    throw Error(ErrorCode::InvalidField, "ledger steps must be non-decreasing");
  }
  ledger.entries.push_back({step, LedgerKind::Search, 1, std::move(reason)});
  ledger.searches_spent += 1;
  return ledger;
}

std::pair<std::int64_t, std::int64_t> replay_totals(const BudgetLedger& ledger) {
  std::int64_t tokens = 0, searches = 0;
  for (const auto& e : ledger.entries) {
    if (e.kind == LedgerKind::Token) {
      tokens += e.amount;
    } else {
      ++searches;
    }
  }
  return {tokens, searches};
}

void register_persona_behaviors(LlmGateway& gateway) {
  gateway.register_behavior("persona.generate", [](const ChatRequest& request, Stream& draws) {
    std::vector<std::string> terms;
    const std::string& user = request.messages.back().content;
    if (const auto at = user.find("Salient terms:"); at != std::string::npos) {
      const auto end = user.find('\n', at);
      terms = split_words(user.substr(at + 14, end == std::string::npos ? std::string::npos : end - at - 14));
    }
    auto pick = [&]() -> std::string {
      return terms.empty() ? std::string("information access") : terms[draws.below(terms.size())];
    };
    static const char* kRoles[] = {"an information-retrieval researcher", "a search engineer",
                                   "a data journalist",                   "a policy analyst",
                                   "a digital librarian",                 "a recommender-systems scientist"};
    const std::string role = kRoles[draws.below(std::size(kRoles))];
    const std::string a = pick(), b = pick(), c = pick();
    const double stance = std::round(draws.uniform(-1.0, 1.0) * 100.0) / 100.0;
    json out = {{"bio", "A persona who works as " + role + ", focused on " + a + " and " + b +
                            ", and who is wary of claims about " + c + " that lack evidence."},
                {"token_budget", 1500 + static_cast<std::int64_t>(draws.below(2500))},
                {"search_budget", 1 + static_cast<std::int64_t>(draws.below(3))},
                {"stance", stance}};
    return out.dump();
  });
}

std::vector<Persona> generate_personas(const WorldModelInstance& world, std::size_t n, LlmGateway& gateway) {
  std::vector<Persona> roster;
  if (n == 0) return roster;
  if (world.empty()) throw Error(ErrorCode::EmptyCorpus, "persona generation needs a non-empty world model");
  const std::string world_hash = world.content_hash();
  const std::string terms = join(salient_terms(world, 40), " ");
  const std::size_t width = std::to_string(n).size();
  for (std::size_t i = 0; i < n; ++i) {
    ChatRequest req;
    req.model = "persona-generator";
    req.temperature = 0.0;
    req.max_tokens = 400;
    req.messages.push_back({"system", kGeneratorSystemPrompt});
    req.messages.push_back({"user", "World model: " + world_hash + "\nPersona index: " + std::to_string(i) +
                                        "\nSalient terms: " + terms + "\n"});
    const ChatResponse resp = gateway.complete("persona.generate", req);
    json spec;
    try {
      spec = json::parse(resp.text);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::GatewayError, "persona generator returned non-JSON output: " + std::string(e.what()));
    }
    if (!spec.is_object()) throw Error(ErrorCode::GatewayError, "persona generator output is not an object");
    std::string id = std::to_string(i + 1);
    id.insert(0, width - std::min(width, id.size()), '0');
    spec["id"] = "gen-" + id;
    try {
      roster.push_back(create_persona(spec));
    } catch (const Error& e) {
      throw Error(ErrorCode::GatewayError, std::string("persona generator produced an invalid record: ") + e.what());
    }
  }
  return roster;
}

}  // namespace irsim
