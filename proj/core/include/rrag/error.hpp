#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rrag {

enum class ErrorCode {
  InvalidConfig,
  InvalidArgument,
  UnclosedParagraph,
  MalformedRecord,
  MissingField,
  EmptyCorpus,
  DimensionMismatch,
  IndexFormat,
  WrongKind,
  InvalidDistribution,
  DegenerateDistribution,
  UnscriptedPrompt,
  Timeout,
  Transport,
  ProtocolViolation,
  EmptyCandidates,
  NotEnoughInstances,
  MalformedCriticOutput,
  IdMismatch,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;
std::optional<ErrorCode> parse_error_code(std::string_view name) noexcept;

/// True for failures that originate in a model backend (mock or remote).
bool is_backend_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the leading code name.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace rrag
