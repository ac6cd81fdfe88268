#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "irsim/error.hpp"
#include "irsim/llm_gateway.hpp"
#include "irsim/persona.hpp"
#include "irsim/random.hpp"
#include "irsim/retrieval.hpp"
#include "irsim/world_model.hpp"
#include "json.hpp"

namespace irsim {

inline constexpr const char* kEngineVersion = "0.1.0";

struct ActionSpec {
  std::string name;
  std::string description;
};

struct Act {
  std::string actor;
  std::string instruction;
};
struct RoundBoundary {
  std::string name;
};
struct End {};
using Step = std::variant<Act, RoundBoundary, End>;

nlohmann::json to_json(const Step& step);

// A file produced by a scenario type, relative to the run's exports/ directory.
struct Artifact {
  std::string path;
  std::string bytes;
};

// Everything a scenario type may touch during one run. Owned by the runtime;
// confined to the run's single logical thread.
class RunContext {
 public:
  RunContext(nlohmann::json config, std::uint64_t seed, WorldModelInstance world, std::unique_ptr<LlmGateway> gateway);

  const nlohmann::json& config() const noexcept { return config_; }
  const nlohmann::json& type_params() const;
  std::uint64_t seed() const noexcept { return seed_; }

  RandomSource& random() noexcept { return random_; }
  const RandomSource& random() const noexcept { return random_; }
  WorldModelInstance& world() noexcept { return world_; }
  const WorldModelInstance& world() const noexcept { return world_; }
  LlmGateway& gateway() noexcept { return *gateway_; }
  const LlmGateway& gateway() const noexcept { return *gateway_; }
  const Embedder& embedder() const noexcept { return *embedder_; }
  const HybridConfig& hybrid() const noexcept { return hybrid_; }
  SearchBackend& search_backend() noexcept { return *search_backend_; }
  std::vector<SearchLogEntry>& searches() noexcept { return searches_; }
  const std::vector<SearchLogEntry>& searches() const noexcept { return searches_; }
  std::size_t justification_min_words() const noexcept { return justification_min_words_; }

  const std::vector<Persona>& roster() const noexcept { return roster_; }
  void set_roster(std::vector<Persona> roster);
  const Persona& persona(const std::string& id) const;
  BudgetLedger& ledger(const std::string& id);
  const BudgetLedger& ledger(const std::string& id) const;
  const std::map<std::string, BudgetLedger>& ledgers() const noexcept { return ledgers_; }

  // Global step index; the runtime advances it once per schedule() call.
  std::int64_t step() const noexcept { return step_; }
  void advance_step() noexcept { ++step_; }

  const std::string& model_name() const noexcept { return model_name_; }
  const std::string& model_version() const noexcept { return model_version_; }

  // Chat request with the run's model, temperature and seed filled in.
  ChatRequest make_request(std::string system_prompt, std::string user_message, std::int64_t max_tokens = 512) const;

  // Free-form audit notes for the run record (e.g. moderator fallbacks).
  void note(nlohmann::json entry) { notes_.push_back(std::move(entry)); }
  const nlohmann::json& notes() const noexcept { return notes_; }

 private:
  nlohmann::json config_;
  std::uint64_t seed_;
  RandomSource random_;
  WorldModelInstance world_;
  std::unique_ptr<LlmGateway> gateway_;
  HybridConfig hybrid_;
  std::unique_ptr<Embedder> embedder_;
  std::unique_ptr<SearchBackend> search_backend_;
  std::vector<SearchLogEntry> searches_;
  std::size_t justification_min_words_ = 5;
  std::vector<Persona> roster_;
  std::map<std::string, BudgetLedger> ledgers_;
  std::int64_t step_ = 0;
  std::string model_name_;
  std::string model_version_;
  double temperature_ = 0.0;
  nlohmann::json notes_ = nlohmann::json::array();
};

// The four-method contract every scenario type implements. schedule() performs
// the next unit of work (a turn, round, week or generation) and reports it;
// returning End finishes the run.
class ScenarioType {
 public:
  virtual ~ScenarioType() = default;
  virtual std::vector<ActionSpec> actions() const = 0;
  virtual Step schedule(RunContext& ctx) = 0;
  virtual nlohmann::json metrics(const RunContext& ctx) const = 0;
  virtual std::vector<Artifact> surfaces(const RunContext& ctx) const = 0;
};

using TypeFactory = std::function<std::unique_ptr<ScenarioType>(RunContext&, const nlohmann::json& params)>;
// Throws Error(ConfigError) for bad params; used by validate-config.
using ParamValidator = std::function<void(const nlohmann::json& params)>;

class TypeRegistry {
 public:
  TypeRegistry& register_type(const std::string& name, TypeFactory factory, ParamValidator validator = {});
  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  std::vector<std::string> names() const;
  std::unique_ptr<ScenarioType> create(const std::string& name, RunContext& ctx, const nlohmann::json& params) const;
  void validate_params(const std::string& name, const nlohmann::json& params) const;

 private:
  struct Entry {
    TypeFactory factory;
    ParamValidator validator;
  };
  std::map<std::string, Entry> entries_;
};

// Checks the run-level sections of a config document; throws ConfigError
// naming the offending field.
void validate_config(const TypeRegistry& registry, const nlohmann::json& config);

struct RunOptions {
  std::string engine_version = kEngineVersion;
  std::shared_ptr<Transport> transport;  // live mode
  std::optional<CallLog> replay_log;     // forces replay mode
  std::int64_t max_steps = 10'000'000;
};

struct RunFailure {
  ErrorCode code;
  std::int64_t step;
  std::string message;
};

struct RunOutput {
  // Relative path -> bytes: config.json, record.json, calls.jsonl, exports/*, manifest.json.
  std::map<std::string, std::string> files;
  std::string content_hash;
  std::optional<RunFailure> failure;
  std::size_t transport_calls = 0;
  std::size_t gateway_calls = 0;

  bool ok() const noexcept { return !failure.has_value(); }
  const nlohmann::json& record() const;
  // Throws RunError when the run failed.
  void throw_if_failed() const;

 private:
  friend RunOutput run(const TypeRegistry&, const nlohmann::json&, const RunOptions&);
  nlohmann::json record_;
};

// Files included in the content hash (everything except manifest.json).
std::vector<std::string> hashed_files(const RunOutput& output);

RunOutput run(const TypeRegistry& registry, const nlohmann::json& config, const RunOptions& options = {});

void write_run_directory(const RunOutput& output, const std::filesystem::path& directory);

struct VerifyResult {
  bool ok = true;
  std::string recorded_hash;
  std::string computed_hash;
  std::vector<std::string> problems;
};

VerifyResult verify_run_directory(const std::filesystem::path& directory);

// Re-executes the run in replay mode against its own call log. Throws
// ReplayDivergence or HashMismatch.
RunOutput replay(const TypeRegistry& registry, const std::filesystem::path& run_directory, RunOptions options = {});

std::string read_file(const std::filesystem::path& path);

}  // namespace irsim
