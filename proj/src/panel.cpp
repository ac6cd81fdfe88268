#include "irsim/panel.hpp"

#include <algorithm>
#include <sstream>

#include "irsim/text.hpp"

namespace irsim::panel {

using nlohmann::json;

namespace {

constexpr const char* kModeratorSystemPrompt =
    "You moderate a structured panel discussion. Each turn, reply with exactly one line: "
    "'SPEAK <panelist-id>: <what they should address>', 'ADVANCE' when the round's goal is met, "
    "or 'END' to close the panel.";

std::string turn_system_prompt(const Persona& p) {
  return "You are panelist " + p.id + ". " + p.bio +
         " Speak in character, in at most 120 words. After each claim you make, add a marker [[id|stance]] or "
         "[[id|stance|kind:earlier-claim-id]] with stance supporting, challenging or neutral and kind supports, "
         "counters, refines or questions. To request a web search, add a line 'SEARCH: <query> || <why you need "
         "it>'.";
}

std::vector<std::string> first_words(std::string_view text, std::size_t n) {
  auto words = split_words(text);
  if (words.size() > n) words.resize(n);
  return words;
}

bool round_has_spoken(const PanelState& state, const std::string& persona) {
  return std::any_of(state.transcript.begin(), state.transcript.end(), [&](const PanelUtterance& u) {
    return u.round == state.round && u.speaker == persona;
  });
}

std::optional<std::string> next_available(const PanelState& state, const RunContext& ctx) {
  const std::size_t n = state.order.size();
  for (std::size_t k = 0; k < n; ++k) {
    const std::string& id = state.order[(state.cursor + k) % n];
    if (!is_exhausted(ctx.ledger(id), ctx.persona(id))) return id;
  }
  return std::nullopt;
}

std::string default_directive(const RoundSpec& round) { return "Address the round goal: " + round.goal; }

}  // namespace

RoundShape shape_from_json(const json& j) {
  RoundShape s;
  s.name = j.value("name", std::string("custom"));
  if (!j.contains("rounds") || !j["rounds"].is_array() || j["rounds"].empty()) {
    throw Error(ErrorCode::ConfigError, "round shape needs a non-empty 'rounds' array");
  }
  for (const auto& r : j["rounds"]) {
    RoundSpec spec;
    if (!r.contains("name") || !r["name"].is_string()) throw Error(ErrorCode::ConfigError, "round needs a 'name'");
    spec.name = r["name"].get<std::string>();
    spec.goal = r.value("goal", std::string());
    if (!r.contains("turn_cap") || !r["turn_cap"].is_number_integer() || r["turn_cap"].get<std::int64_t>() < 1) {
      throw Error(ErrorCode::ConfigError, "round '" + spec.name + "' needs an integer turn_cap >= 1");
    }
    spec.turn_cap = r["turn_cap"].get<std::int64_t>();
    spec.revision_pass = r.value("revision_pass", false);
    s.rounds.push_back(std::move(spec));
  }
  return s;
}

json to_json(const RoundShape& shape) {
  json rounds = json::array();
  for (const auto& r : shape.rounds) {
    rounds.push_back(
        {{"name", r.name}, {"goal", r.goal}, {"turn_cap", r.turn_cap}, {"revision_pass", r.revision_pass}});
  }
  return {{"name", shape.name}, {"rounds", rounds}};
}

std::vector<RoundShape> builtin_shapes() {
  return {
      {"standard",
       {{"opening", "Each panelist states an initial position on the theme.", 4, false},
        {"deliberation", "Panelists engage with one another's claims, supporting or countering them with evidence.",
         20, false},
        {"wrap-up", "Panelists state where they converge and what remains unresolved.", 6, false}}},
      {"delphi",
       {{"estimate", "Each expert gives an independent first judgement with reasons.", 11, false},
        {"feedback-and-revision", "Experts read the pooled judgements and revise their own in a second pass.", 22,
         true},
        {"consensus", "Experts state the final judgement they can endorse and any remaining dissent.", 11, false}}},
      {"pitch",
       {{"pitch-storm", "Every panelist pitches ideas quickly, without critique.", 11, false},
        {"kill-or-keep", "Panelists argue which pitched ideas to kill and which to keep.", 11, false},
        {"final-ten", "Panelists converge on a shortlist of at most ten ideas.", 10, false}}},
  };
}

std::optional<RoundShape> builtin_shape(const std::string& name) {
  for (auto& s : builtin_shapes()) {
    if (s.name == name) return s;
  }
  return std::nullopt;
}

PanelParams parse_params(const json& params) {
  PanelParams p;
  const json shape = params.value("shape", json("standard"));
  if (shape.is_string()) {
    auto s = builtin_shape(shape.get<std::string>());
    if (!s) throw Error(ErrorCode::ConfigError, "unknown built-in round shape '" + shape.get<std::string>() + "'");
    p.shape = *s;
  } else {
    p.shape = shape_from_json(shape);
  }
  if (params.contains("caps")) {
    const auto& caps = params["caps"];
    if (!caps.is_array() || caps.size() != p.shape.rounds.size()) {
      throw Error(ErrorCode::ConfigError, "'caps' must list one cap per round");
    }
    for (std::size_t i = 0; i < caps.size(); ++i) {
      if (!caps[i].is_number_integer() || caps[i].get<std::int64_t>() < 1) {
        throw Error(ErrorCode::ConfigError, "'caps' entries must be integers >= 1");
      }
      p.shape.rounds[i].turn_cap = caps[i].get<std::int64_t>();
    }
  }
  p.topic = params.value("topic", p.topic);
  p.extractor = params.value("extractor", p.extractor);
  if (p.extractor != "markup" && p.extractor != "gateway") {
    throw Error(ErrorCode::ConfigError, "'extractor' must be \"markup\" or \"gateway\"");
  }
  p.lookup_k = params.value("lookup_k", p.lookup_k);
  return p;
}

json to_json(const PanelUtterance& u) {
  json tools = json::array();
  for (const auto& t : u.tool_calls) {
    tools.push_back({{"tool", t.tool},
                     {"query", t.query},
                     {"justification", t.justification ? json(*t.justification) : json(nullptr)},
                     {"status", t.status},
                     {"results", t.results}});
  }
  return {{"index", u.index},
          {"step", u.step},
          {"round", u.round},
          {"round_name", u.round_name},
          {"speaker", u.speaker},
          {"directive", u.directive},
          {"revision", u.revision},
          {"text", u.text},
          {"prompt_tokens", u.prompt_tokens},
          {"completion_tokens", u.completion_tokens},
          {"tool_calls", tools}};
}

PanelState init_state(const RunContext& ctx, PanelParams params) {
  PanelState s;
  s.params = std::move(params);
  for (const auto& p : ctx.roster()) s.order.push_back(p.id);
  s.utterances_per_round.assign(s.params.shape.rounds.size(), 0);
  return s;
}

void register_behaviors(LlmGateway& gateway, const PanelState& state, const RunContext& ctx) {
  gateway.register_behavior("panel.moderator", [&state, &ctx](const ChatRequest&, Stream& draws) -> std::string {
    const auto speaker = next_available(state, ctx);
    if (!speaker) return "ADVANCE";
    const RoundSpec& round = state.params.shape.rounds[state.round];
    std::string directive;
    switch (draws.below(3)) {
      case 0: directive = default_directive(round); break;
      case 1:
        directive = state.transcript.empty() ? default_directive(round)
                                             : "Respond to " + state.transcript.back().speaker +
                                                   "'s last point, with reference to: " + round.goal;
        break;
      default: directive = "Bring evidence from the world model that bears on: " + round.goal; break;
    }
    return "SPEAK " + *speaker + ": " + directive;
  });

  gateway.register_behavior("panel.turn", [&state, &ctx](const ChatRequest& request, Stream& draws) -> std::string {
    const Persona& me = ctx.persona(state.current_speaker);
    const std::int64_t index = static_cast<std::int64_t>(state.transcript.size());
    Stance stance = me.stance ? stance_label(*me.stance)
                              : std::array{Stance::Supporting, Stance::Challenging, Stance::Neutral}[draws.below(3)];
    const bool revision = request.messages.back().content.find("Revision turn") != std::string::npos;
    if (revision && draws.bernoulli(0.3)) stance = Stance::Neutral;

    // Material drawn from the excerpts the engine put in the prompt.
    std::vector<std::string> pool;
    const std::string& user = request.messages.back().content;
    if (auto at = user.find("World-model excerpts:"); at != std::string::npos) {
      const auto end = user.find("Recent turns:", at);
      pool = tokenize(user.substr(at + 21, end == std::string::npos ? std::string::npos : end - at - 21));
      pool.erase(std::remove_if(pool.begin(), pool.end(), [](const std::string& w) { return w.size() < 4; }),
                 pool.end());
    }
    if (pool.empty()) pool = tokenize(state.params.topic);
    auto word = [&]() -> const std::string& { return pool[draws.below(pool.size())]; };

    static const char* kOpeners[] = {"From where I sit,", "The evidence suggests", "I want to stress that",
                                     "My concern is that", "Building on this,", "Put simply,"};
    static const char* kStanceClause[] = {"this is a development we should embrace",
                                          "this direction carries risks we underestimate",
                                          "the picture is more mixed than it looks"};
    const int stance_idx = stance == Stance::Supporting ? 0 : stance == Stance::Challenging ? 1 : 2;

    std::ostringstream out;
    out << kOpeners[draws.below(std::size(kOpeners))] << " when it comes to " << word() << " and " << word()
        << ", " << kStanceClause[stance_idx] << ". ";
    const std::string c1 = "u" + std::to_string(index) + "c1";
    out << "[[" << c1 << "|" << to_string(stance);

    const auto prior = state.graph.ordered_claims();
    if (!prior.empty() && draws.bernoulli(0.75)) {
      const std::size_t window = std::min<std::size_t>(prior.size(), 10);
      const Claim* target = prior[prior.size() - window + draws.below(window)];
      EdgeKind kind;
      if (stance == Stance::Neutral || target->stance == Stance::Neutral) {
        kind = draws.bernoulli(0.5) ? EdgeKind::Refines : EdgeKind::Questions;
      } else if (target->stance == stance) {
        kind = draws.bernoulli(0.7) ? EdgeKind::Supports : EdgeKind::Refines;
      } else {
        kind = draws.bernoulli(0.7) ? EdgeKind::Counters : EdgeKind::Questions;
      }
      out << "|" << to_string(kind) << ":" << target->id;
    }
    out << "]]";
    if (draws.bernoulli(0.35)) {
      out << " In particular, " << word() << " matters more than " << word() << " for this panel. [[u" << index
          << "c2|" << to_string(stance) << "|refines:" << c1 << "]]";
    }
    if (draws.bernoulli(0.3)) {
      out << "\nSEARCH: evidence on " << word() << " " << word();
      const double r = draws.uniform();
      if (r < 0.5) {
        out << " || needed to check the figures behind the claim on " << word();
      } else if (r < 0.75) {
        out << " || quick check";
      }
    }
    return out.str();
  });
}

ModeratorDecision moderate(PanelState& state, RunContext& ctx) {
  if (state.ended) return EndPanel{};
  const auto& rounds = state.params.shape.rounds;
  const RoundSpec& round = rounds[state.round];
  const bool final_round = state.round + 1 == rounds.size();
  auto advance = [&]() -> ModeratorDecision {
    if (final_round) return EndPanel{};
    return Advance{};
  };
  if (state.turns_in_round >= round.turn_cap) return advance();
  const auto fallback = next_available(state, ctx);
  if (!fallback) return advance();

  std::ostringstream user;
  user << "Topic: " << state.params.topic << "\nRound: " << round.name << " (" << state.turns_in_round << " of "
       << round.turn_cap << " turns used)\nGoal: " << round.goal << "\nAvailable panelists:";
  for (const auto& id : state.order) {
    if (!is_exhausted(ctx.ledger(id), ctx.persona(id))) user << " " << id;
  }
  user << "\nRecent turns:\n";
  const std::size_t from = state.transcript.size() > 3 ? state.transcript.size() - 3 : 0;
  for (std::size_t i = from; i < state.transcript.size(); ++i) {
    user << "- " << state.transcript[i].speaker << ": "
         << join(first_words(strip_claim_markup(state.transcript[i].text), 30), " ") << "\n";
  }
  const ChatResponse resp = ctx.gateway().complete("panel.moderator", ctx.make_request(kModeratorSystemPrompt, user.str(), 128));
  state.moderator_prompt_tokens += resp.prompt_tokens;
  state.moderator_completion_tokens += resp.completion_tokens;

  const std::string reply = normalize_text(resp.text);
  auto fall_back = [&](const std::string& why) -> ModeratorDecision {
    ++state.moderator_fallbacks;
    ctx.note({{"kind", "moderator_fallback"}, {"step", ctx.step()}, {"reply", reply}, {"reason", why}});
    return Speak{*fallback, default_directive(round)};
  };
  if (reply == "ADVANCE") return advance();
  if (reply == "END") return EndPanel{};
  if (reply.rfind("SPEAK ", 0) == 0) {
    const auto colon = reply.find(':');
    const std::string id = normalize_text(reply.substr(6, colon == std::string::npos ? std::string::npos : colon - 6));
    const std::string directive = colon == std::string::npos ? default_directive(round) : normalize_text(reply.substr(colon + 1));
    if (std::find(state.order.begin(), state.order.end(), id) == state.order.end()) {
      return fall_back("unknown panelist '" + id + "'");
    }
    if (is_exhausted(ctx.ledger(id), ctx.persona(id))) return fall_back("panelist '" + id + "' is exhausted");
    return Speak{id, directive.empty() ? default_directive(round) : directive};
  }
  return fall_back("unparseable reply");
}

const PanelUtterance& take_turn(PanelState& state, RunContext& ctx, const Persona& persona,
                                const std::string& directive, Extractor& extractor) {
  BudgetLedger& ledger = ctx.ledger(persona.id);
  if (is_exhausted(ledger, persona)) {
    throw Error(ErrorCode::AlreadyExhausted, persona.id + " cannot take a turn with an exhausted budget");
  }
  const RoundSpec& round = state.params.shape.rounds[state.round];
  PanelUtterance u;
  u.index = static_cast<std::int64_t>(state.transcript.size());
  u.step = ctx.step();
  u.round = state.round;
  u.round_name = round.name;
  u.speaker = persona.id;
  u.directive = directive;
  u.revision = round.revision_pass && round_has_spoken(state, persona.id);
  state.current_speaker = persona.id;

  // Keyword lookup is free of charge.
  const std::vector<std::string> terms = tokenize(state.params.topic + " " + round.goal + " " + directive);
  const auto excerpts = keyword_lookup(ctx.world(), terms, state.params.lookup_k);
  ToolCall lookup{"keyword_lookup", join(terms, " "), std::nullopt, "ok", json::array()};
  for (const auto& c : excerpts) lookup.results.push_back(c.id);
  u.tool_calls.push_back(std::move(lookup));

  std::ostringstream user;
  user << "Topic: " << state.params.topic << "\nRound: " << round.name << ": " << round.goal
       << "\nDirective: " << directive << "\n";
  if (u.revision) user << "Revision turn: revise your earlier position in light of the discussion.\n";
  user << "World-model excerpts:\n";
  for (const auto& c : excerpts) user << "- [" << c.id << "] " << join(first_words(c.text, 40), " ") << "\n";
  user << "Recent turns:\n";
  const std::size_t from = state.transcript.size() > 4 ? state.transcript.size() - 4 : 0;
  for (std::size_t i = from; i < state.transcript.size(); ++i) {
    user << "- " << state.transcript[i].speaker << ": "
         << join(first_words(strip_claim_markup(state.transcript[i].text), 40), " ") << "\n";
  }
  user << "Existing claims:\n";
  const auto claims = state.graph.ordered_claims();
  const std::size_t cfrom = claims.size() > 8 ? claims.size() - 8 : 0;
  for (std::size_t i = cfrom; i < claims.size(); ++i) {
    user << "- " << claims[i]->id << " (" << to_string(claims[i]->stance) << ") by " << claims[i]->author << "\n";
  }

  const ChatResponse resp = ctx.gateway().complete("panel.turn", ctx.make_request(turn_system_prompt(persona), user.str(), 400));
  u.prompt_tokens = resp.prompt_tokens;
  u.completion_tokens = resp.completion_tokens;
  const std::int64_t charge = std::max<std::int64_t>(1, resp.total_tokens());
  debit_tokens(ledger, persona, charge, ctx.step(), "panel turn " + std::to_string(u.index));

  std::vector<std::string> kept;
  std::istringstream lines(resp.text);
  for (std::string line; std::getline(lines, line);) {
    const std::string trimmed = normalize_text(line);
    if (trimmed.rfind("SEARCH:", 0) != 0) {
      kept.push_back(line);
      continue;
    }
    const std::string body = trimmed.substr(7);
    const auto bar = body.find("||");
    SearchRequest req;
    req.query = normalize_text(body.substr(0, bar));
    if (bar != std::string::npos) {
      const std::string j = normalize_text(body.substr(bar + 2));
      if (!j.empty()) req.justification = j;
    }
    ToolCall call{"web_search", req.query, req.justification, "ok", json::array()};
    try {
      for (const auto& r : justified_search(ctx.world(), req, ledger, persona, ctx.search_backend(), ctx.step(),
                                            ctx.searches(), ctx.justification_min_words())) {
        call.results.push_back(irsim::to_json(r));
      }
    } catch (const Error&) {
    }
    if (!ctx.searches().empty()) call.status = ctx.searches().back().status;
    u.tool_calls.push_back(std::move(call));
  }
  u.text = join(kept, "\n");

  try {
    add_utterance(state.graph, {persona.id, u.index, u.text}, extractor, state.params.topic);
  } catch (const Error& e) {
    ctx.note({{"kind", "extraction_error"}, {"step", ctx.step()}, {"utterance", u.index}, {"error", e.what()}});
  }
  state.transcript.push_back(std::move(u));
  ++state.turns_in_round;
  ++state.utterances_per_round[state.round];
  return state.transcript.back();
}

json transcript_json(const PanelState& state) {
  json t = json::array();
  for (const auto& u : state.transcript) t.push_back(to_json(u));
  return t;
}

json report_json(const PanelState& state) {
  json report = deliberation_report(state.graph, transcript_json(state));
  json rounds = json::array();
  for (std::size_t i = 0; i < state.params.shape.rounds.size(); ++i) {
    const auto& r = state.params.shape.rounds[i];
    rounds.push_back({{"name", r.name}, {"goal", r.goal}, {"turn_cap", r.turn_cap},
                      {"utterances", state.utterances_per_round[i]}});
  }
  report["shape"] = state.params.shape.name;
  report["rounds"] = rounds;
  report["topic"] = state.params.topic;
  return report;
}

PanelType::PanelType(RunContext& ctx, PanelParams params)
    : state_(std::make_unique<PanelState>(init_state(ctx, std::move(params)))) {
  if (state_->params.extractor == "gateway") {
    extractor_ = std::make_unique<GatewayExtractor>(ctx.gateway(), ctx.model_name());
    ctx.gateway().register_behavior("claims.extract",
                                    [](const ChatRequest& r, Stream&) {
                                      const std::string& user = r.messages.back().content;
                                      const auto at = user.find("Turn:\n");
                                      return at == std::string::npos ? std::string() : user.substr(at + 6);
                                    });
  } else {
    extractor_ = std::make_unique<MarkupExtractor>();
  }
  register_behaviors(ctx.gateway(), *state_, ctx);
}

std::vector<ActionSpec> PanelType::actions() const {
  return {{"speak", "Take a turn addressing the moderator's directive."},
          {"keyword_lookup", "Look up world-model chunks by keyword; free of charge."},
          {"web_search", "Run a justified search; rejected without a written justification."}};
}

Step PanelType::schedule(RunContext& ctx) {
  PanelState& s = *state_;
  if (s.ended) return End{};
  const ModeratorDecision d = moderate(s, ctx);
  if (const auto* speak = std::get_if<Speak>(&d)) {
    const Persona& p = ctx.persona(speak->persona_id);
    take_turn(s, ctx, p, speak->directive, *extractor_);
    const auto pos = std::find(s.order.begin(), s.order.end(), p.id) - s.order.begin();
    s.cursor = (static_cast<std::size_t>(pos) + 1) % s.order.size();
    return Act{p.id, speak->directive};
  }
  if (std::holds_alternative<Advance>(d)) {
    ++s.round;
    s.turns_in_round = 0;
    return RoundBoundary{s.params.shape.rounds[s.round].name};
  }
  s.ended = true;
  return End{};
}

json PanelType::metrics(const RunContext& ctx) const {
  const PanelState& s = *state_;
  json per_round = json::object();
  for (std::size_t i = 0; i < s.params.shape.rounds.size(); ++i) {
    per_round[s.params.shape.rounds[i].name] = s.utterances_per_round[i];
  }
  json personas = json::object();
  for (const auto& p : ctx.roster()) {
    const auto& l = ctx.ledger(p.id);
    const auto n = std::count_if(s.transcript.begin(), s.transcript.end(),
                                 [&](const PanelUtterance& u) { return u.speaker == p.id; });
    personas[p.id] = {{"utterances", n},
                      {"tokens_spent", l.tokens_spent},
                      {"token_budget", p.token_budget},
                      {"exhausted", is_exhausted(l, p)},
                      {"searches_spent", l.searches_spent}};
  }
  json searches = {{"accepted", 0}, {"rejected_unjustified", 0}, {"search_budget_exhausted", 0}, {"backend_error", 0}};
  for (const auto& e : ctx.searches()) searches[e.status] = searches[e.status].get<int>() + 1;
  const GraphStats stats = graph_stats(s.graph);
  return {{"utterances", s.transcript.size()},
          {"utterances_per_round", per_round},
          {"rounds", s.params.shape.rounds.size()},
          {"graph", irsim::to_json(stats)},
          {"convergence_ratio", convergence_ratio(stats)},
          {"personas", personas},
          {"searches", searches},
          {"moderator",
           {{"prompt_tokens", s.moderator_prompt_tokens},
            {"completion_tokens", s.moderator_completion_tokens},
            {"fallbacks", s.moderator_fallbacks}}}};
}

std::vector<Artifact> PanelType::surfaces(const RunContext&) const {
  const PanelState& s = *state_;
  json meta = {{"topic", s.params.topic}, {"shape", s.params.shape.name}};
  return {{"transcript.json", transcript_json(s).dump(2) + "\n"},
          {"graph.json", export_graph_string(s.graph, meta)},
          {"report.json", report_json(s).dump(2) + "\n"}};
}

PanelOutput run_panel(RunContext& ctx, const json& params) {
  PanelType type(ctx, parse_params(params));
  for (;;) {
    const Step step = type.schedule(ctx);
    ctx.advance_step();
    if (std::holds_alternative<End>(step)) break;
  }
  return {transcript_json(type.state()), type.state().graph, report_json(type.state())};
}

void register_type(TypeRegistry& registry) {
  registry.register_type(
      "panel", [](RunContext& ctx, const json& params) { return std::make_unique<PanelType>(ctx, parse_params(params)); },
      [](const json& params) { parse_params(params); });
}

}  // namespace irsim::panel
