#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "irsim/runtime.hpp"
#include "json.hpp"

namespace irsim {

// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitRunFailure = 3,
  kExitMismatch = 4,
};

// Reads a config file and inlines what it points at: world_model.directory or
// world_model.manifest become world_model.documents, and a string "personas"
// section is read as a roster file. Paths resolve against the config's folder.
nlohmann::json load_config_file(const std::filesystem::path& path);

// Environment overrides for live mode: IRSIM_LLM_ENDPOINT, IRSIM_LLM_MODEL.
void apply_environment(nlohmann::json& config);

// Human-readable summary of a run directory's metrics.
std::string report_run(const std::filesystem::path& run_directory);

// argv-style entry point; args[0] is the program name.
int run_cli(const std::vector<std::string>& args, const TypeRegistry& registry, std::ostream& out, std::ostream& err);

}  // namespace irsim
