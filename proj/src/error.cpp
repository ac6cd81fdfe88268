#include "irsim/error.hpp"

namespace irsim {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidField: return "InvalidField";
    case ErrorCode::AlreadyExhausted: return "AlreadyExhausted";
    case ErrorCode::SearchBudgetExhausted: return "SearchBudgetExhausted";
    case ErrorCode::GatewayError: return "GatewayError";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::EmptyInstance: return "EmptyInstance";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::RejectedUnjustified: return "RejectedUnjustified";
    case ErrorCode::BackendError: return "BackendError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidEdge: return "InvalidEdge";
    case ErrorCode::InvalidStance: return "InvalidStance";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MalformedLog: return "MalformedLog";
    case ErrorCode::ReplayDivergence: return "ReplayDivergence";
    case ErrorCode::EndpointError: return "EndpointError";
    case ErrorCode::DuplicateType: return "DuplicateType";
    case ErrorCode::UnknownType: return "UnknownType";
    case ErrorCode::HashMismatch: return "HashMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::EmptyCandidates: return "EmptyCandidates";
    case ErrorCode::MissingParent: return "MissingParent";
    case ErrorCode::EmptyPopulation: return "EmptyPopulation";
    case ErrorCode::PopulationTooSmall: return "PopulationTooSmall";
    case ErrorCode::UnknownAgent: return "UnknownAgent";
    case ErrorCode::RunFailed: return "RunFailed";
  }
  return "Unknown";
}

}  // namespace irsim
