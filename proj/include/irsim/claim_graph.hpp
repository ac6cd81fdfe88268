#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace irsim {

class LlmGateway;

enum class Stance { Supporting, Challenging, Neutral };
enum class EdgeKind { Supports, Counters, Refines, Questions };

std::string_view to_string(Stance stance);
std::string_view to_string(EdgeKind kind);
std::optional<Stance> parse_stance(std::string_view text);
std::optional<EdgeKind> parse_edge_kind(std::string_view text);
// +1 / -1 / 0 for supporting / challenging / neutral.
double stance_value(Stance stance);
// Sign of a real stance, with |s| < 1/3 treated as neutral.
Stance stance_label(double stance);

struct Claim {
  std::string id;
  std::string text;
  std::string author;
  std::int64_t utterance_index = 0;
  std::int64_t sequence = 0;  // global claim order; edges point to lower sequence numbers
  Stance stance = Stance::Neutral;

  friend bool operator==(const Claim&, const Claim&) = default;
};

struct Edge {
  std::string from_claim;  // newer
  std::string to_claim;    // older
  EdgeKind kind = EdgeKind::Supports;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct ArgumentGraph {
  std::map<std::string, Claim> claims;
  std::vector<Edge> edges;
  std::int64_t last_utterance = -1;

  // Claims sorted by sequence.
  std::vector<const Claim*> ordered_claims() const;
  friend bool operator==(const ArgumentGraph&, const ArgumentGraph&) = default;
};

struct Utterance {
  std::string author;
  std::int64_t index = 0;
  std::string text;
};

struct GraphDelta {
  std::vector<Claim> claims;
  std::vector<Edge> edges;
  bool empty() const noexcept { return claims.empty() && edges.empty(); }
};

// Reads a new utterance and returns the claims and edges it contributes.
// Edges may only reference existing claims or claims returned in the same call.
class Extractor {
 public:
  virtual ~Extractor() = default;
  virtual GraphDelta extract(const Utterance& utterance, std::string_view topic, const ArgumentGraph& graph) = 0;
};

// Inline markers "[[id|stance]]" or "[[id|stance|kind:target]]" (further
// "|kind:target" segments allowed). Claim text is the prose between the
// previous marker and this one.
GraphDelta parse_claim_markup(const Utterance& utterance);

// Removes claim markers, leaving the prose.
std::string strip_claim_markup(std::string_view text);

class MarkupExtractor : public Extractor {
 public:
  GraphDelta extract(const Utterance& utterance, std::string_view topic, const ArgumentGraph& graph) override;
};

// Asks the model to annotate the utterance with the marker grammar, then parses
// the reply. Label "claims.extract".
class GatewayExtractor : public Extractor {
 public:
  GatewayExtractor(LlmGateway& gateway, std::string model) : gateway_(gateway), model_(std::move(model)) {}
  GraphDelta extract(const Utterance& utterance, std::string_view topic, const ArgumentGraph& graph) override;

 private:
  LlmGateway& gateway_;
  std::string model_;
};

// Validates the extractor output against the graph and appends it.
GraphDelta add_utterance(ArgumentGraph& graph, const Utterance& utterance, Extractor& extractor,
                         std::string_view topic = {});

std::vector<std::string> validate(const ArgumentGraph& graph);

struct GraphStats {
  std::map<Stance, std::size_t> claims_by_stance;
  std::map<EdgeKind, std::size_t> edges_by_kind;
  std::map<std::string, std::size_t> per_author_counts;
  std::vector<Edge> unresolved_counters;
};

// A counters edge is unresolved when its from-claim is not the target of any
// counters or refines edge.
GraphStats graph_stats(const ArgumentGraph& graph);
nlohmann::json to_json(const GraphStats& stats);

double convergence_ratio(const GraphStats& stats);

nlohmann::json deliberation_report(const ArgumentGraph& graph, const nlohmann::json& transcript);

// Canonical form: sorted keys, claims ordered by sequence.
nlohmann::json graph_to_json(const ArgumentGraph& graph, const nlohmann::json& meta = nlohmann::json::object());
ArgumentGraph graph_from_json(const nlohmann::json& j);
std::string export_graph_string(const ArgumentGraph& graph, const nlohmann::json& meta = nlohmann::json::object());
void export_graph(const ArgumentGraph& graph, const std::filesystem::path& destination,
                  const nlohmann::json& meta = nlohmann::json::object());
ArgumentGraph import_graph(const std::filesystem::path& source);

}  // namespace irsim
