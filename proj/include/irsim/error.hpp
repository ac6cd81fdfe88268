#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace irsim {

enum class ErrorCode {
  InvalidField,
  AlreadyExhausted,
  SearchBudgetExhausted,
  GatewayError,
  EmptyCorpus,
  EmptyInstance,
  EmptyText,
  RejectedUnjustified,
  BackendError,
  DimensionMismatch,
  InvalidEdge,
  InvalidStance,
  IoError,
  MalformedLog,
  ReplayDivergence,
  EndpointError,
  DuplicateType,
  UnknownType,
  HashMismatch,
  ConfigError,
  EmptyCandidates,
  MissingParent,
  EmptyPopulation,
  PopulationTooSmall,
  UnknownAgent,
  RunFailed,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the engine; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by the runtime when a module error aborts a run.
class RunError : public Error {
 public:
  RunError(ErrorCode inner, std::int64_t step, const std::string& message)
      : Error(ErrorCode::RunFailed,
              "at step " + std::to_string(step) + " (" + std::string(to_string(inner)) + "): " + message),
        inner_(inner),
        step_(step) {}

  ErrorCode inner() const noexcept { return inner_; }
  std::int64_t step() const noexcept { return step_; }

 private:
  ErrorCode inner_;
  std::int64_t step_;
};

}  // namespace irsim
