#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace engage {

enum class ErrorKind {
  RoleViolation,
  InvalidArgument,
  ParseError,
  ConfigError,
  MissingState,
  AmbiguousAmount,
  UnknownResponse,
  ZeroVector,
  OrderViolation,
  Exhausted,
  BackendUnavailable,
  Degenerate,
  EmptyDataset,
  IoError,
  InvariantViolation,
};

std::string_view to_string(ErrorKind kind);

/// Process exit code for an error kind: 2 config/validation, 3 backend, 4 internal.
int exit_code_for(ErrorKind kind);

class EngageError : public std::runtime_error {
 public:
  EngageError(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

}  // namespace engage
