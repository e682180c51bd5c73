#include "engage/error.hpp"

namespace engage {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::RoleViolation: return "RoleViolation";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::MissingState: return "MissingState";
    case ErrorKind::AmbiguousAmount: return "AmbiguousAmount";
    case ErrorKind::UnknownResponse: return "UnknownResponse";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::OrderViolation: return "OrderViolation";
    case ErrorKind::Exhausted: return "Exhausted";
    case ErrorKind::BackendUnavailable: return "BackendUnavailable";
    case ErrorKind::Degenerate: return "Degenerate";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::RoleViolation:
    case ErrorKind::InvalidArgument:
    case ErrorKind::ParseError:
    case ErrorKind::ConfigError:
    case ErrorKind::IoError:
      return 2;
    case ErrorKind::BackendUnavailable:
      return 3;
    default:
      return 4;
  }
}

EngageError::EngageError(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

}  // namespace engage
