#include "irsim/claim_graph.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "irsim/error.hpp"
#include "irsim/llm_gateway.hpp"
#include "irsim/text.hpp"

namespace irsim {

using nlohmann::json;

std::string_view to_string(Stance stance) {
  switch (stance) {
    case Stance::Supporting: return "supporting";
    case Stance::Challenging: return "challenging";
    case Stance::Neutral: return "neutral";
  }
  return "neutral";
}

std::string_view to_string(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::Supports: return "supports";
    case EdgeKind::Counters: return "counters";
    case EdgeKind::Refines: return "refines";
    case EdgeKind::Questions: return "questions";
  }
  return "supports";
}

std::optional<Stance> parse_stance(std::string_view text) {
  if (text == "supporting") return Stance::Supporting;
  if (text == "challenging") return Stance::Challenging;
  if (text == "neutral") return Stance::Neutral;
  return std::nullopt;
}

std::optional<EdgeKind> parse_edge_kind(std::string_view text) {
  if (text == "supports") return EdgeKind::Supports;
  if (text == "counters") return EdgeKind::Counters;
  if (text == "refines") return EdgeKind::Refines;
  if (text == "questions") return EdgeKind::Questions;
  return std::nullopt;
}

double stance_value(Stance stance) {
  switch (stance) {
    case Stance::Supporting: return 1.0;
    case Stance::Challenging: return -1.0;
    case Stance::Neutral: return 0.0;
  }
  return 0.0;
}

Stance stance_label(double stance) {
  if (stance >= 1.0 / 3.0) return Stance::Supporting;
  if (stance <= -1.0 / 3.0) return Stance::Challenging;
  return Stance::Neutral;
}

std::vector<const Claim*> ArgumentGraph::ordered_claims() const {
  std::vector<const Claim*> out;
  out.reserve(claims.size());
  for (const auto& [id, c] : claims) out.push_back(&c);
  std::sort(out.begin(), out.end(), [](const Claim* a, const Claim* b) { return a->sequence < b->sequence; });
  return out;
}

namespace {

std::vector<std::string> split_on(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      parts.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return parts;
}

std::string trim(std::string_view s) { return normalize_text(s); }

}  // namespace

GraphDelta parse_claim_markup(const Utterance& utterance) {
  GraphDelta delta;
  const std::string_view text = utterance.text;
  std::size_t cursor = 0;
  std::size_t prose_start = 0;
  while (true) {
    const std::size_t open = text.find("[[", cursor);
    if (open == std::string_view::npos) break;
    const std::size_t close = text.find("]]", open + 2);
    if (close == std::string_view::npos) break;
    const auto parts = split_on(text.substr(open + 2, close - open - 2), '|');
    cursor = close + 2;
    if (parts.size() < 2 || trim(parts[0]).empty()) {
      throw Error(ErrorCode::InvalidField, "malformed claim marker at offset " + std::to_string(open));
    }
    Claim claim;
    claim.id = trim(parts[0]);
    const auto stance = parse_stance(trim(parts[1]));
    if (!stance) throw Error(ErrorCode::InvalidStance, "claim " + claim.id + " has stance '" + parts[1] + "'");
    claim.stance = *stance;
    claim.author = utterance.author;
    claim.utterance_index = utterance.index;
    claim.text = trim(strip_claim_markup(text.substr(prose_start, open - prose_start)));
    prose_start = cursor;
    for (std::size_t i = 2; i < parts.size(); ++i) {
      const auto colon = parts[i].find(':');
      const auto kind = colon == std::string::npos ? std::nullopt : parse_edge_kind(trim(parts[i].substr(0, colon)));
      if (!kind) throw Error(ErrorCode::InvalidEdge, "claim " + claim.id + " has edge spec '" + parts[i] + "'");
      delta.edges.push_back({claim.id, trim(parts[i].substr(colon + 1)), *kind});
    }
    delta.claims.push_back(std::move(claim));
  }
  return delta;
}

std::string strip_claim_markup(std::string_view text) {
  std::string out;
  std::size_t cursor = 0;
  while (cursor < text.size()) {
    const std::size_t open = text.find("[[", cursor);
    const std::size_t close = open == std::string_view::npos ? open : text.find("]]", open + 2);
    if (open == std::string_view::npos || close == std::string_view::npos) {
      out.append(text.substr(cursor));
      break;
    }
    out.append(text.substr(cursor, open - cursor));
    cursor = close + 2;
  }
  return normalize_text(out);
}

GraphDelta MarkupExtractor::extract(const Utterance& utterance, std::string_view, const ArgumentGraph&) {
  return parse_claim_markup(utterance);
}

GraphDelta GatewayExtractor::extract(const Utterance& utterance, std::string_view topic, const ArgumentGraph& graph) {
  std::string known;
  const auto ordered = graph.ordered_claims();
  const std::size_t from = ordered.size() > 20 ? ordered.size() - 20 : 0;
  for (std::size_t i = from; i < ordered.size(); ++i) {
    known += ordered[i]->id + " (" + std::string(to_string(ordered[i]->stance)) + "): " + ordered[i]->text + "\n";
  }
  ChatRequest req;
  req.model = model_;
  req.max_tokens = 600;
  req.messages.push_back(
      {"system",
       "You extract claims from discussion turns. Rewrite the turn, placing a marker [[id|stance]] or "
       "[[id|stance|kind:earlier-id]] after each claim. stance is supporting, challenging or neutral towards the "
       "topic; kind is supports, counters, refines or questions. Only link to earlier claim ids. Prefix new ids "
       "with u" + std::to_string(utterance.index) + "c."});
  req.messages.push_back({"user", "Topic: " + std::string(topic) + "\nEarlier claims:\n" + known +
                                      "Speaker: " + utterance.author + "\nTurn:\n" + utterance.text});
  const ChatResponse resp = gateway_.complete("claims.extract", req);
  return parse_claim_markup({utterance.author, utterance.index, resp.text});
}

GraphDelta add_utterance(ArgumentGraph& graph, const Utterance& utterance, Extractor& extractor,
                         std::string_view topic) {
  if (utterance.index <= graph.last_utterance) {
    throw Error(ErrorCode::InvalidField, "utterance index " + std::to_string(utterance.index) +
                                             " is not after " + std::to_string(graph.last_utterance));
  }
  GraphDelta delta = extractor.extract(utterance, topic, graph);

  std::int64_t next_seq = static_cast<std::int64_t>(graph.claims.size());
  std::map<std::string, std::int64_t> new_ids;
  for (auto& c : delta.claims) {
    if (graph.claims.count(c.id) || new_ids.count(c.id)) {
      throw Error(ErrorCode::InvalidField, "claim id '" + c.id + "' already exists");
    }
    c.author = utterance.author;
    c.utterance_index = utterance.index;
    c.sequence = next_seq++;
    new_ids[c.id] = c.sequence;
  }
  for (const auto& e : delta.edges) {
    const auto from = new_ids.find(e.from_claim);
    if (from == new_ids.end()) {
      throw Error(ErrorCode::InvalidEdge, "edge source '" + e.from_claim + "' is not a claim of this utterance");
    }
    std::int64_t to_seq = -1;
    if (auto it = graph.claims.find(e.to_claim); it != graph.claims.end()) {
      to_seq = it->second.sequence;
    } else if (auto jt = new_ids.find(e.to_claim); jt != new_ids.end()) {
      to_seq = jt->second;
    } else {
      throw Error(ErrorCode::InvalidEdge, "edge " + e.from_claim + " -> " + e.to_claim + " targets an unknown claim");
    }
    if (to_seq >= from->second) {
      throw Error(ErrorCode::InvalidEdge, "edge " + e.from_claim + " -> " + e.to_claim + " points forward");
    }
  }
  for (const auto& c : delta.claims) graph.claims.emplace(c.id, c);
  graph.edges.insert(graph.edges.end(), delta.edges.begin(), delta.edges.end());
  graph.last_utterance = utterance.index;
  return delta;
}

std::vector<std::string> validate(const ArgumentGraph& graph) {
  std::vector<std::string> violations;
  std::set<std::int64_t> sequences;
  for (const auto& [id, c] : graph.claims) {
    if (id != c.id) violations.push_back("claim key '" + id + "' differs from id '" + c.id + "'");
    if (!sequences.insert(c.sequence).second) {
      violations.push_back("claim " + id + " reuses sequence " + std::to_string(c.sequence));
    }
  }
  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    const Edge& e = graph.edges[i];
    const std::string name = "edge " + std::to_string(i) + " (" + e.from_claim + " -" +
                             std::string(to_string(e.kind)) + "-> " + e.to_claim + ")";
    const auto from = graph.claims.find(e.from_claim);
    const auto to = graph.claims.find(e.to_claim);
    if (from == graph.claims.end() || to == graph.claims.end()) {
      violations.push_back(name + " has a dangling endpoint");
      continue;
    }
    if (from->second.sequence <= to->second.sequence ||
        from->second.utterance_index < to->second.utterance_index) {
      violations.push_back(name + " points forward in time");
    }
  }
  return violations;
}

GraphStats graph_stats(const ArgumentGraph& graph) {
  GraphStats s;
  for (auto st : {Stance::Supporting, Stance::Challenging, Stance::Neutral}) s.claims_by_stance[st] = 0;
  for (auto k : {EdgeKind::Supports, EdgeKind::Counters, EdgeKind::Refines, EdgeKind::Questions}) {
    s.edges_by_kind[k] = 0;
  }
  for (const auto& [id, c] : graph.claims) {
    ++s.claims_by_stance[c.stance];
    ++s.per_author_counts[c.author];
  }
  std::set<std::string> answered;
  for (const auto& e : graph.edges) {
    ++s.edges_by_kind[e.kind];
    if (e.kind == EdgeKind::Counters || e.kind == EdgeKind::Refines) answered.insert(e.to_claim);
  }
  for (const auto& e : graph.edges) {
    if (e.kind == EdgeKind::Counters && !answered.count(e.from_claim)) s.unresolved_counters.push_back(e);
  }
  return s;
}

namespace {

json edge_json(const Edge& e) {
  return {{"from_claim", e.from_claim}, {"to_claim", e.to_claim}, {"kind", to_string(e.kind)}};
}

}  // namespace

json to_json(const GraphStats& stats) {
  json by_stance = json::object(), by_kind = json::object(), authors = json::object();
  for (const auto& [k, v] : stats.claims_by_stance) by_stance[std::string(to_string(k))] = v;
  for (const auto& [k, v] : stats.edges_by_kind) by_kind[std::string(to_string(k))] = v;
  for (const auto& [k, v] : stats.per_author_counts) authors[k] = v;
  json unresolved = json::array();
  for (const auto& e : stats.unresolved_counters) unresolved.push_back(edge_json(e));
  return {{"claims_by_stance", by_stance},
          {"edges_by_kind", by_kind},
          {"per_author_counts", authors},
          {"unresolved_counters", unresolved}};
}

double convergence_ratio(const GraphStats& stats) {
  const auto supports = static_cast<double>(stats.edges_by_kind.at(EdgeKind::Supports));
  const auto counters = static_cast<double>(stats.edges_by_kind.at(EdgeKind::Counters));
  return supports / std::max(1.0, supports + counters);
}

json deliberation_report(const ArgumentGraph& graph, const json& transcript) {
  const GraphStats stats = graph_stats(graph);
  std::map<std::string, std::map<Stance, std::size_t>> mix;
  std::map<std::string, std::size_t> utterances;
  for (const auto& [id, c] : graph.claims) ++mix[c.author][c.stance];
  if (transcript.is_array()) {
    for (const auto& u : transcript) {
      if (u.contains("speaker")) ++utterances[u["speaker"].get<std::string>()];
    }
  }
  std::set<std::string> people;
  for (const auto& [p, m] : mix) people.insert(p);
  for (const auto& [p, n] : utterances) people.insert(p);

  json personas = json::array();
  for (const auto& p : people) {
    json stance_mix = json::object();
    std::size_t total = 0;
    for (auto st : {Stance::Supporting, Stance::Challenging, Stance::Neutral}) {
      const std::size_t n = mix.count(p) && mix[p].count(st) ? mix[p][st] : 0;
      stance_mix[std::string(to_string(st))] = n;
      total += n;
    }
    personas.push_back({{"persona", p},
                        {"claims", total},
                        {"stance_mix", stance_mix},
                        {"utterances", utterances.count(p) ? utterances[p] : 0}});
  }
  json unresolved = json::array();
  for (const auto& e : stats.unresolved_counters) {
    const Claim& from = graph.claims.at(e.from_claim);
    const Claim& to = graph.claims.at(e.to_claim);
    unresolved.push_back({{"from_claim", from.id},
                          {"from_author", from.author},
                          {"from_text", from.text},
                          {"to_claim", to.id},
                          {"to_author", to.author},
                          {"to_text", to.text}});
  }
  json positions = json::object();
  for (const auto& [k, v] : stats.claims_by_stance) positions[std::string(to_string(k))] = v;
  return {{"personas", personas},
          {"positions", positions},
          {"supports", stats.edges_by_kind.at(EdgeKind::Supports)},
          {"counters", stats.edges_by_kind.at(EdgeKind::Counters)},
          {"convergence_ratio", convergence_ratio(stats)},
          {"unresolved_disagreements", unresolved},
          {"claim_count", graph.claims.size()},
          {"edge_count", graph.edges.size()},
          {"utterance_count", transcript.is_array() ? transcript.size() : 0}};
}

json graph_to_json(const ArgumentGraph& graph, const json& meta) {
  json claims = json::array();
  for (const Claim* c : graph.ordered_claims()) {
    claims.push_back({{"id", c->id},
                      {"text", c->text},
                      {"author", c->author},
                      {"utterance_index", c->utterance_index},
                      {"sequence", c->sequence},
                      {"stance", to_string(c->stance)}});
  }
  json edges = json::array();
  for (const auto& e : graph.edges) edges.push_back(edge_json(e));
  json m = meta.is_object() ? meta : json::object();
  m["last_utterance"] = graph.last_utterance;
  m["claim_count"] = graph.claims.size();
  m["edge_count"] = graph.edges.size();
  return {{"claims", claims}, {"edges", edges}, {"meta", m}};
}

ArgumentGraph graph_from_json(const json& j) {
  ArgumentGraph g;
  for (const auto& c : j.at("claims")) {
    Claim claim;
    claim.id = c.at("id").get<std::string>();
    claim.text = c.at("text").get<std::string>();
    claim.author = c.at("author").get<std::string>();
    claim.utterance_index = c.at("utterance_index").get<std::int64_t>();
    claim.sequence = c.at("sequence").get<std::int64_t>();
    const auto st = parse_stance(c.at("stance").get<std::string>());
    if (!st) throw Error(ErrorCode::InvalidStance, "claim " + claim.id);
    claim.stance = *st;
    g.claims.emplace(claim.id, std::move(claim));
  }
  for (const auto& e : j.at("edges")) {
    const auto kind = parse_edge_kind(e.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::InvalidEdge, "unknown edge kind " + e.at("kind").dump());
    g.edges.push_back({e.at("from_claim").get<std::string>(), e.at("to_claim").get<std::string>(), *kind});
  }
  g.last_utterance = j.at("meta").value("last_utterance", std::int64_t{-1});
  return g;
}

std::string export_graph_string(const ArgumentGraph& graph, const json& meta) {
  return graph_to_json(graph, meta).dump(2) + "\n";
}

void export_graph(const ArgumentGraph& graph, const std::filesystem::path& destination, const json& meta) {
  std::ofstream out(destination, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + destination.string());
  out << export_graph_string(graph, meta);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + destination.string());
}

ArgumentGraph import_graph(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + source.string());
  try {
    return graph_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoError, "malformed graph file " + source.string() + ": " + e.what());
  }
}

}  // namespace irsim
