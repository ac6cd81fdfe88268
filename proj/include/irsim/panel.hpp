#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "irsim/claim_graph.hpp"
#include "irsim/runtime.hpp"
#include "json.hpp"

namespace irsim::panel {

struct RoundSpec {
  std::string name;
  std::string goal;
  std::int64_t turn_cap = 1;
  // A second pass over the roster within the round is marked as revision turns.
  bool revision_pass = false;

  friend bool operator==(const RoundSpec&, const RoundSpec&) = default;
};

struct RoundShape {
  std::string name;
  std::vector<RoundSpec> rounds;

  friend bool operator==(const RoundShape&, const RoundShape&) = default;
};

RoundShape shape_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RoundShape& shape);

// standard, delphi, pitch.
std::vector<RoundShape> builtin_shapes();
std::optional<RoundShape> builtin_shape(const std::string& name);

struct Speak {
  std::string persona_id;
  std::string directive;
};
struct Advance {};
struct EndPanel {};
using ModeratorDecision = std::variant<Speak, Advance, EndPanel>;

struct ToolCall {
  std::string tool;  // keyword_lookup | web_search
  std::string query;
  std::optional<std::string> justification;
  std::string status;
  nlohmann::json results = nlohmann::json::array();
};

struct PanelUtterance {
  std::int64_t index = 0;
  std::int64_t step = 0;
  std::size_t round = 0;
  std::string round_name;
  std::string speaker;
  std::string directive;
  bool revision = false;
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::vector<ToolCall> tool_calls;
};

nlohmann::json to_json(const PanelUtterance& u);

struct PanelParams {
  RoundShape shape;
  std::string topic = "the future of information access";
  std::string extractor = "markup";  // markup | gateway
  std::size_t lookup_k = 3;
};

PanelParams parse_params(const nlohmann::json& params);

struct PanelState {
  PanelParams params;
  std::vector<std::string> order;  // roster order
  std::size_t round = 0;
  std::int64_t turns_in_round = 0;
  std::size_t cursor = 0;  // next roster position for round-robin
  bool ended = false;
  std::string current_speaker;
  std::vector<PanelUtterance> transcript;
  ArgumentGraph graph;
  std::int64_t moderator_prompt_tokens = 0;
  std::int64_t moderator_completion_tokens = 0;
  std::int64_t moderator_fallbacks = 0;
  std::vector<std::int64_t> utterances_per_round;
};

PanelState init_state(const RunContext& ctx, PanelParams params);

// Scripted stub semantics for "panel.moderator" and "panel.turn".
void register_behaviors(LlmGateway& gateway, const PanelState& state, const RunContext& ctx);

// Cap and liveness rules are applied by the engine; the gateway (label
// "panel.moderator") only picks among speakers. Malformed or invalid replies
// fall back to round-robin and are noted.
ModeratorDecision moderate(PanelState& state, RunContext& ctx);

// Persona must not be exhausted. Charges the full call to the persona's ledger.
const PanelUtterance& take_turn(PanelState& state, RunContext& ctx, const Persona& persona,
                                const std::string& directive, Extractor& extractor);

nlohmann::json transcript_json(const PanelState& state);
nlohmann::json report_json(const PanelState& state);

class PanelType : public ScenarioType {
 public:
  PanelType(RunContext& ctx, PanelParams params);

  std::vector<ActionSpec> actions() const override;
  Step schedule(RunContext& ctx) override;
  nlohmann::json metrics(const RunContext& ctx) const override;
  std::vector<Artifact> surfaces(const RunContext& ctx) const override;

  const PanelState& state() const noexcept { return *state_; }

 private:
  std::unique_ptr<PanelState> state_;
  std::unique_ptr<Extractor> extractor_;
};

struct PanelOutput {
  nlohmann::json transcript;
  ArgumentGraph graph;
  nlohmann::json report;
};

// Drives a panel to completion inside an existing context.
PanelOutput run_panel(RunContext& ctx, const nlohmann::json& params);

void register_type(TypeRegistry& registry);

}  // namespace irsim::panel
