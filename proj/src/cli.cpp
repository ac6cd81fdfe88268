#include "irsim/cli.hpp"

#include <cstdlib>
#include <sstream>

#include "CLI11.hpp"

namespace irsim {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json parse_json_file(const fs::path& path, const std::string& what) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, "cannot read " + what + " " + path.string());
  }
  try {
    return json::parse(bytes);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, what + " " + path.string() + " is not valid JSON: " + e.what());
  }
}

std::string fixed(double x, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << x;
  return s.str();
}

}  // namespace

json load_config_file(const fs::path& path) {
  json config = parse_json_file(path, "config");
  if (!config.is_object()) throw Error(ErrorCode::ConfigError, "config root must be an object");
  const fs::path base = path.parent_path();
  if (config.contains("world_model") && config["world_model"].is_object()) {
    json& wm = config["world_model"];
    if (wm.contains("directory")) {
      const fs::path dir = base / wm["directory"].get<std::string>();
      std::vector<Document> docs;
      try {
        docs = load_corpus_directory(dir);
      } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, "field 'world_model.directory': " + std::string(e.what()));
      }
      json arr = json::array();
      for (const auto& d : docs) arr.push_back({{"source_id", d.source_id}, {"text", d.text}});
      wm.erase("directory");
      wm["documents"] = arr;
    } else if (wm.contains("manifest")) {
      const json manifest = parse_json_file(base / wm["manifest"].get<std::string>(), "corpus manifest");
      wm.erase("manifest");
      wm["documents"] = manifest.value("documents", json::array());
    }
  }
  if (config.contains("personas") && config["personas"].is_string()) {
    config["personas"] = parse_json_file(base / config["personas"].get<std::string>(), "persona file");
    if (config["personas"].is_object() && config["personas"].contains("personas")) {
      config["personas"] = json(config["personas"]["personas"]);
    }
  }
  return config;
}

void apply_environment(json& config) {
  if (!config.contains("gateway")) config["gateway"] = json::object();
  json& gw = config["gateway"];
  if (gw.value("mode", std::string("scripted")) != "live") return;
  if (const char* endpoint = std::getenv("IRSIM_LLM_ENDPOINT"); endpoint && *endpoint) gw["endpoint"] = endpoint;
  if (const char* model = std::getenv("IRSIM_LLM_MODEL"); model && *model) gw["model"] = model;
}

std::string report_run(const fs::path& dir) {
  const json config = json::parse(read_file(dir / "config.json"));
  const json metrics = json::parse(read_file(dir / "exports" / "metrics.json"));
  const json record = json::parse(read_file(dir / "record.json"));
  const std::string type = config.at("run").at("type").get<std::string>();
  std::ostringstream out;
  out << "type: " << type << "\nstatus: " << record.value("status", std::string("?")) << "\n";
  if (type == "panel") {
    out << "utterances: " << metrics.value("utterances", 0) << "\n";
    const json per_round = metrics.value("utterances_per_round", json::object());
    for (const auto& [round, n] : per_round.items()) {
      out << "  " << round << ": " << n << "\n";
    }
    const json& g = metrics.at("graph");
    out << "claims by stance: " << g.value("claims_by_stance", json::object()).dump() << "\n"
        << "edges by kind: " << g.value("edges_by_kind", json::object()).dump() << "\n"
        << "convergence ratio: " << fixed(metrics.value("convergence_ratio", 0.0)) << "\n";
  } else if (type == "curated_feed") {
    out << "ranker: " << metrics.value("ranker", std::string()) << "\n"
        << "impressions: " << metrics.value("impressions", 0) << "\n"
        << "opinion variance: " << fixed(metrics.value("opinion_variance", 0.0), 6) << "\n"
        << "exposure entropy: " << fixed(metrics.value("exposure_entropy", 0.0)) << " bits\n"
        << "mean kendall tau: " << fixed(metrics.value("kendall_tau_mean", 0.0)) << "\n";
  } else if (type == "multigen") {
    out << "generations: " << metrics.value("generations", 0) << "\n";
    if (metrics.contains("final") && !metrics["final"].is_null()) {
      const json& f = metrics["final"];
      out << "final producer fitness: mean " << fixed(f.value("producer_mean", 0.0)) << ", max "
          << fixed(f.value("producer_max", 0.0)) << "\n"
          << "final detector fitness: mean " << fixed(f.value("detector_mean", 0.0)) << ", max "
          << fixed(f.value("detector_max", 0.0)) << "\n";
    }
    out << "mutations by locus: " << metrics.value("mutations_by_locus", json::object()).dump() << "\n";
  } else if (type == "social") {
    out << "rounds: " << metrics.value("rounds", 0) << "\n"
        << "posts: " << metrics.value("posts", json::object()).dump() << "\n"
        << "actions: " << metrics.value("actions", json::object()).dump() << "\n"
        << "max cascade size: " << metrics.value("max_cascade_size", 0) << "\n";
  } else {
    out << metrics.dump(2) << "\n";
  }
  return out.str();
}

int run_cli(const std::vector<std::string>& args, const TypeRegistry& registry, std::ostream& out, std::ostream& err) {
  CLI::App app{"Persona-driven simulation engine", args.empty() ? "irsim" : args.front()};
  app.require_subcommand(1);

  std::string config_path, out_dir, run_dir;
  std::optional<std::int64_t> seed;

  auto* run_cmd = app.add_subcommand("run", "Execute a config and write a run directory");
  run_cmd->add_option("--config", config_path, "Config file")->required();
  run_cmd->add_option("--seed", seed, "Override run.seed");
  run_cmd->add_option("--out", out_dir, "Run directory (default runs/<type>-<seed>)");

  auto* replay_cmd = app.add_subcommand("replay", "Re-execute a run against its call log and compare hashes");
  replay_cmd->add_option("run_dir", run_dir, "Run directory")->required();
  auto* verify_cmd = app.add_subcommand("verify", "Recompute a run directory's content hash");
  verify_cmd->add_option("run_dir", run_dir, "Run directory")->required();
  auto* report_cmd = app.add_subcommand("report", "Summarize a run's metrics");
  report_cmd->add_option("run_dir", run_dir, "Run directory")->required();
  auto* validate_cmd = app.add_subcommand("validate-config", "Check a config without running it");
  validate_cmd->add_option("config", config_path, "Config file")->required();
  auto* list_cmd = app.add_subcommand("list-types", "List registered scenario types");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*list_cmd) {
      for (const auto& n : registry.names()) out << n << "\n";
      return kExitOk;
    }
    if (*validate_cmd) {
      json config = load_config_file(config_path);
      apply_environment(config);
      validate_config(registry, config);
      out << "ok\n";
      return kExitOk;
    }
    if (*run_cmd) {
      json config = load_config_file(config_path);
      if (seed) {
        if (!config.contains("run")) config["run"] = json::object();
        config["run"]["seed"] = *seed;
      }
      apply_environment(config);
      validate_config(registry, config);
      const RunOutput output = run(registry, config);
      if (out_dir.empty()) {
        out_dir = (fs::path("runs") / (config["run"]["type"].get<std::string>() + "-" +
                                       std::to_string(config["run"]["seed"].get<std::int64_t>())))
                      .string();
      }
      write_run_directory(output, out_dir);
      out << "run directory: " << out_dir << "\n";
      if (!output.ok()) {
        err << "run failed at step " << output.failure->step << ": " << output.failure->message << "\n";
        return kExitRunFailure;
      }
      out << "content hash: " << output.content_hash << "\n";
      return kExitOk;
    }
    if (*replay_cmd) {
      const RunOutput output = replay(registry, run_dir);
      out << "content hash: " << output.content_hash << "\nreplay matches\n";
      return kExitOk;
    }
    if (*verify_cmd) {
      const VerifyResult v = verify_run_directory(run_dir);
      out << "recorded: " << v.recorded_hash << "\ncomputed: " << v.computed_hash << "\n";
      for (const auto& p : v.problems) err << p << "\n";
      out << (v.ok ? "verified\n" : "mismatch\n");
      return v.ok ? kExitOk : kExitMismatch;
    }
    if (*report_cmd) {
      out << report_run(run_dir);
      return kExitOk;
    }
  } catch (const Error& e) {
    err << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::ConfigError: return kExitConfig;
      case ErrorCode::ReplayDivergence:
      case ErrorCode::HashMismatch: return kExitMismatch;
      default: return kExitRunFailure;
    }
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return kExitRunFailure;
  }
  return kExitUsage;
}

}  // namespace irsim
