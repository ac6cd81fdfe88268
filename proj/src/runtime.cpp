#include "irsim/runtime.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "irsim/hashing.hpp"

namespace irsim {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& message) { throw Error(ErrorCode::ConfigError, message); }

const json& section(const json& config, const char* name) {
  static const json kEmpty = json::object();
  if (!config.contains(name) || config[name].is_null()) return kEmpty;
  return config[name];
}

std::uint64_t seed_of(const json& config) {
  const json& s = section(config, "run")["seed"];
  if (s.is_number_unsigned()) return s.get<std::uint64_t>();
  return static_cast<std::uint64_t>(s.get<std::int64_t>());
}

std::string dump_file(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

json to_json(const Step& step) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Act>) {
          return {{"kind", "act"}, {"actor", s.actor}, {"instruction", s.instruction}};
        } else if constexpr (std::is_same_v<T, RoundBoundary>) {
          return {{"kind", "round"}, {"name", s.name}};
        } else {
          return {{"kind", "end"}};
        }
      },
      step);
}

RunContext::RunContext(json config, std::uint64_t seed, WorldModelInstance world, std::unique_ptr<LlmGateway> gateway)
    : config_(std::move(config)), seed_(seed), random_(seed), world_(std::move(world)), gateway_(std::move(gateway)) {
  const json& wm = section(config_, "world_model");
  hybrid_ = hybrid_config_from_json(wm.contains("hybrid") ? wm["hybrid"] : json());
  justification_min_words_ = wm.value("justification_min_words", std::size_t{5});
  embedder_ = std::make_unique<HashingEmbedder>(static_cast<Eigen::Index>(hybrid_.embedding_dim),
                                                random_.stream("world", "embedder").seed());
  const std::string backend = wm.value("search_backend", std::string("internal"));
  if (backend == "stub") {
    search_backend_ = std::make_unique<StubWebBackend>(random_.stream("world", "web-search").seed());
  } else {
    search_backend_ = std::make_unique<HybridBackend>(hybrid_, *embedder_);
  }
  const json& gw = section(config_, "gateway");
  model_name_ = gw.value("model", std::string("scripted-model"));
  model_version_ = gw.value("model_version", std::string("unversioned"));
  temperature_ = gw.value("temperature", 0.0);
}

const json& RunContext::type_params() const { return section(config_, "type"); }

void RunContext::set_roster(std::vector<Persona> roster) {
  roster_ = std::move(roster);
  ledgers_.clear();
  for (const auto& p : roster_) ledgers_.emplace(p.id, open_ledger(p));
}

const Persona& RunContext::persona(const std::string& id) const {
  for (const auto& p : roster_) {
    if (p.id == id) return p;
  }
  throw Error(ErrorCode::UnknownAgent, "no persona '" + id + "' in roster");
}

BudgetLedger& RunContext::ledger(const std::string& id) {
  auto it = ledgers_.find(id);
  if (it == ledgers_.end()) throw Error(ErrorCode::UnknownAgent, "no ledger for '" + id + "'");
  return it->second;
}

const BudgetLedger& RunContext::ledger(const std::string& id) const {
  auto it = ledgers_.find(id);
  if (it == ledgers_.end()) throw Error(ErrorCode::UnknownAgent, "no ledger for '" + id + "'");
  return it->second;
}

ChatRequest RunContext::make_request(std::string system_prompt, std::string user_message,
                                     std::int64_t max_tokens) const {
  ChatRequest r;
  r.model = model_name_;
  r.temperature = temperature_;
  r.max_tokens = max_tokens;
  r.seed = static_cast<std::int64_t>(seed_ & 0x7fffffffffffffffULL);
  if (!system_prompt.empty()) r.messages.push_back({"system", std::move(system_prompt)});
  r.messages.push_back({"user", std::move(user_message)});
  return r;
}

TypeRegistry& TypeRegistry::register_type(const std::string& name, TypeFactory factory, ParamValidator validator) {
  if (entries_.count(name)) throw Error(ErrorCode::DuplicateType, "scenario type '" + name + "' already registered");
  entries_.emplace(name, Entry{std::move(factory), std::move(validator)});
  return *this;
}

std::vector<std::string> TypeRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::unique_ptr<ScenarioType> TypeRegistry::create(const std::string& name, RunContext& ctx,
                                                   const json& params) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error(ErrorCode::UnknownType, "scenario type '" + name + "' is not registered");
  return it->second.factory(ctx, params);
}

void TypeRegistry::validate_params(const std::string& name, const json& params) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error(ErrorCode::UnknownType, "scenario type '" + name + "' is not registered");
  if (it->second.validator) it->second.validator(params);
}

void validate_config(const TypeRegistry& registry, const json& config) {
  if (!config.is_object()) config_error("config must be a JSON object");
  for (const auto& [key, value] : config.items()) {
    static const std::set<std::string> kSections = {"run", "personas", "world_model", "gateway", "type"};
    if (!kSections.count(key)) config_error("unknown section '" + key + "'");
  }
  if (!config.contains("run") || !config["run"].is_object()) config_error("section 'run' is required");
  const json& run = config["run"];
  if (!run.contains("type") || !run["type"].is_string()) config_error("field 'run.type' is required");
  if (!run.contains("seed")) config_error("field 'run.seed' is required");
  if (!run["seed"].is_number_integer()) config_error("field 'run.seed' must be an integer");
  if (!registry.contains(run["type"].get<std::string>())) {
    config_error("field 'run.type' names unregistered type '" + run["type"].get<std::string>() + "'");
  }

  const json& personas = section(config, "personas");
  if (personas.is_array()) {
    try {
      load_roster(personas);
    } catch (const Error& e) {
      config_error(std::string("personas: ") + e.what());
    }
  } else if (personas.is_object() && !personas.empty()) {
    if (!personas.contains("generate") || !personas["generate"].is_number_unsigned()) {
      config_error("field 'personas.generate' must be a non-negative integer");
    }
  } else if (!personas.empty()) {
    config_error("section 'personas' must be an array or {\"generate\": n}");
  }

  const json& wm = section(config, "world_model");
  if (!wm.is_object()) config_error("section 'world_model' must be an object");
  if (wm.contains("documents")) {
    try {
      load_corpus_manifest(wm);
    } catch (const Error& e) {
      config_error(std::string("world_model: ") + e.what());
    }
  } else if (wm.contains("directory") || wm.contains("manifest")) {
    config_error("field 'world_model.documents' missing: corpus paths must be resolved before running");
  }
  try {
    hybrid_config_from_json(wm.contains("hybrid") ? wm["hybrid"] : json());
    if (wm.contains("chunking")) {
      ChunkingConfig c;
      c.window_words = wm["chunking"].value("window_words", c.window_words);
      c.overlap_words = wm["chunking"].value("overlap_words", c.overlap_words);
      chunk_starts(0, c);
    }
  } catch (const Error& e) {
    config_error(std::string("world_model: ") + e.what());
  } catch (const json::exception& e) {
    config_error(std::string("world_model: ") + e.what());
  }
  if (wm.contains("search_backend")) {
    const auto b = wm["search_backend"];
    if (!b.is_string() || (b != "internal" && b != "stub")) {
      config_error("field 'world_model.search_backend' must be \"internal\" or \"stub\"");
    }
  }

  const json& gw = section(config, "gateway");
  const std::string mode = gw.value("mode", std::string("scripted"));
  if (mode != "scripted" && mode != "live") config_error("field 'gateway.mode' must be \"scripted\" or \"live\"");
  if (mode == "live" && (!gw.contains("endpoint") || !gw["endpoint"].is_string())) {
    config_error("field 'gateway.endpoint' is required in live mode");
  }

  try {
    registry.validate_params(run["type"].get<std::string>(), section(config, "type"));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    config_error(std::string("type: ") + e.what());
  } catch (const json::exception& e) {
    config_error(std::string("type: ") + e.what());
  }
}

const json& RunOutput::record() const { return record_; }

void RunOutput::throw_if_failed() const {
  if (failure) throw RunError(failure->code, failure->step, failure->message);
}

std::vector<std::string> hashed_files(const RunOutput& output) {
  std::vector<std::string> paths;
  for (const auto& [path, bytes] : output.files) {
    if (path != "manifest.json") paths.push_back(path);
  }
  return paths;
}

namespace {

std::unique_ptr<LlmGateway> make_gateway(const json& config, std::uint64_t seed, const RunOptions& options) {
  const json& gw = section(config, "gateway");
  std::unique_ptr<LlmGateway> gateway;
  if (options.replay_log) {
    gateway = std::make_unique<LlmGateway>(ReplayMode{*options.replay_log});
  } else if (gw.value("mode", std::string("scripted")) == "live") {
    gateway = std::make_unique<LlmGateway>(LiveMode{gw.at("endpoint").get<std::string>()}, options.transport);
  } else {
    gateway = std::make_unique<LlmGateway>(ScriptedMode{seed}, options.transport);
  }
  gateway->set_retries(gw.value("retries", 1));
  return gateway;
}

json build_record(const RunContext& ctx, const std::optional<RunFailure>& failure) {
  json prompts = json::array();
  std::set<std::string> seen;
  for (const auto& e : ctx.gateway().log().entries) {
    for (const auto& m : e.request.messages) {
      if (m.role == "system" && seen.insert(m.content).second) prompts.push_back(m.content);
      if (m.role == "system") break;
    }
  }
  json digests = json::array();
  for (const Chunk* c : ctx.world().all_chunks()) digests.push_back({{"id", c->id}, {"digest", c->digest}});
  json derived = json::array();
  for (const auto& [key, s] : ctx.random().derivations()) {
    derived.push_back({{"agent", key.first}, {"label", key.second}, {"seed", s}});
  }
  json searches = json::array();
  for (const auto& s : ctx.searches()) searches.push_back(to_json(s));
  json calls = json::array();
  for (const auto& e : ctx.gateway().log().entries) calls.push_back(to_json(e));

  json record = {{"status", failure ? "failed" : "ok"},
                 {"model", {{"name", ctx.model_name()}, {"version", ctx.model_version()}}},
                 {"system_prompts", prompts},
                 {"chunk_digests", digests},
                 {"seeds", {{"root", ctx.seed()}, {"derived", derived}}},
                 {"searches", searches},
                 {"calls", calls}};
  if (failure) {
    record["failure"] = {{"code", to_string(failure->code)}, {"step", failure->step}, {"message", failure->message}};
  }
  return record;
}

}  // namespace

RunOutput run(const TypeRegistry& registry, const json& config, const RunOptions& options) {
  validate_config(registry, config);
  const std::uint64_t seed = seed_of(config);
  const json& wm = section(config, "world_model");

  ChunkingConfig chunking;
  if (wm.contains("chunking")) {
    chunking.window_words = wm["chunking"].value("window_words", chunking.window_words);
    chunking.overlap_words = wm["chunking"].value("overlap_words", chunking.overlap_words);
  }
  chunking.allow_empty = wm.value("allow_empty", true);
  std::vector<Document> docs = wm.contains("documents") ? load_corpus_manifest(wm) : std::vector<Document>{};

  RunOutput out;
  RunContext ctx(config, seed, ingest(docs, chunking, wm.value("instance_id", std::string("world"))),
                 make_gateway(config, seed, options));
  register_persona_behaviors(ctx.gateway());

  std::unique_ptr<ScenarioType> type;
  json schedule_trace = json::array();
  json metrics = json::object();
  std::vector<Artifact> surfaces;
  try {
    const json& personas = section(config, "personas");
    if (personas.is_array()) {
      ctx.set_roster(load_roster(personas));
    } else if (personas.contains("generate")) {
      ctx.set_roster(generate_personas(ctx.world(), personas["generate"].get<std::size_t>(), ctx.gateway()));
    }
    type = registry.create(section(config, "run")["type"].get<std::string>(), ctx, ctx.type_params());
    for (;;) {
      if (ctx.step() >= options.max_steps) {
        throw Error(ErrorCode::RunFailed, "step limit " + std::to_string(options.max_steps) + " reached");
      }
      const Step step = type->schedule(ctx);
      json entry = to_json(step);
      entry["step"] = ctx.step();
      schedule_trace.push_back(std::move(entry));
      ctx.advance_step();
      if (std::holds_alternative<End>(step)) break;
    }
    if (ctx.gateway().is_replay() && ctx.gateway().replay_remaining() > 0) {
      throw Error(ErrorCode::ReplayDivergence,
                  std::to_string(ctx.gateway().replay_remaining()) + " cached calls were never reissued");
    }
    metrics = type->metrics(ctx);
    surfaces = type->surfaces(ctx);
  } catch (const Error& e) {
    out.failure = RunFailure{e.code(), ctx.step(), e.what()};
  } catch (const std::exception& e) {
    out.failure = RunFailure{ErrorCode::RunFailed, ctx.step(), e.what()};
  }

  json ledgers = json::array();
  for (const auto& p : ctx.roster()) ledgers.push_back(to_json(ctx.ledger(p.id)));

  out.record_ = build_record(ctx, out.failure);
  out.files["config.json"] = dump_file(config);
  out.files["record.json"] = dump_file(out.record_);
  out.files["calls.jsonl"] = serialize_log(ctx.gateway().log());
  out.files["exports/metrics.json"] = dump_file(metrics);
  out.files["exports/roster.json"] = dump_file(roster_to_json(ctx.roster()));
  out.files["exports/ledgers.json"] = dump_file(ledgers);
  out.files["exports/schedule.json"] = dump_file(schedule_trace);
  out.files["exports/notes.json"] = dump_file(ctx.notes());
  for (auto& a : surfaces) out.files["exports/" + a.path] = std::move(a.bytes);

  json files = json::array();
  json digests = json::object();
  for (const auto& path : hashed_files(out)) {
    files.push_back(path);
    digests[path] = sha256_hex(out.files[path]);
  }
  std::map<std::string, std::string> hashed;
  for (const auto& path : hashed_files(out)) hashed[path] = out.files[path];
  out.content_hash = content_hash_of_bytes(hashed);
  json manifest = {{"files", files},
                   {"digests", digests},
                   {"content_hash", out.content_hash},
                   {"engine_version", options.engine_version},
                   {"status", out.failure ? "failed" : "ok"}};
  out.files["manifest.json"] = dump_file(manifest);
  out.transport_calls = ctx.gateway().transport_calls();
  out.gateway_calls = ctx.gateway().log().entries.size();
  return out;
}

void write_run_directory(const RunOutput& output, const std::filesystem::path& directory) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + directory.string() + ": " + ec.message());
  fs::remove_all(directory / "exports", ec);
  for (const auto& [rel, bytes] : output.files) {
    const fs::path target = directory / rel;
    fs::create_directories(target.parent_path(), ec);
    std::ofstream out(target, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + target.string());
    out << bytes;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + target.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

VerifyResult verify_run_directory(const std::filesystem::path& directory) {
  namespace fs = std::filesystem;
  VerifyResult result;
  json manifest;
  try {
    manifest = json::parse(read_file(directory / "manifest.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("malformed manifest.json: ") + e.what());
  }
  result.recorded_hash = manifest.at("content_hash").get<std::string>();
  std::vector<std::pair<std::string, std::string>> pd;
  std::set<std::string> listed;
  for (const auto& f : manifest.at("files")) {
    const std::string rel = f.get<std::string>();
    listed.insert(rel);
    const fs::path p = directory / rel;
    if (!fs::exists(p)) {
      result.problems.push_back("missing file " + rel);
      pd.emplace_back(rel, "");
      continue;
    }
    const std::string digest = sha256_hex(read_file(p));
    if (digest != manifest.at("digests").value(rel, std::string())) {
      result.problems.push_back("digest mismatch for " + rel);
    }
    pd.emplace_back(rel, digest);
  }
  if (fs::is_directory(directory / "exports")) {
    for (const auto& entry : fs::recursive_directory_iterator(directory / "exports")) {
      if (!entry.is_regular_file()) continue;
      const std::string rel = fs::relative(entry.path(), directory).generic_string();
      if (!listed.count(rel)) result.problems.push_back("unlisted file " + rel);
    }
  }
  result.computed_hash = content_hash(std::move(pd));
  if (result.computed_hash != result.recorded_hash) {
    result.problems.push_back("content hash " + result.computed_hash + " != recorded " + result.recorded_hash);
  }
  result.ok = result.problems.empty();
  return result;
}

RunOutput replay(const TypeRegistry& registry, const std::filesystem::path& run_directory, RunOptions options) {
  json config;
  json manifest;
  try {
    config = json::parse(read_file(run_directory / "config.json"));
    manifest = json::parse(read_file(run_directory / "manifest.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("malformed run directory: ") + e.what());
  }
  options.replay_log = load_log(run_directory / "calls.jsonl");
  options.transport = nullptr;
  RunOutput out = run(registry, config, options);
  if (out.failure && out.failure->code == ErrorCode::ReplayDivergence) {
    throw Error(ErrorCode::ReplayDivergence, out.failure->message);
  }
  const std::string recorded = manifest.at("content_hash").get<std::string>();
  if (out.content_hash != recorded) {
    throw Error(ErrorCode::HashMismatch, "replayed content hash " + out.content_hash + " != recorded " + recorded);
  }
  const VerifyResult disk = verify_run_directory(run_directory);
  if (!disk.ok) throw Error(ErrorCode::HashMismatch, "run directory does not match its manifest: " + disk.problems.front());
  return out;
}

}  // namespace irsim
