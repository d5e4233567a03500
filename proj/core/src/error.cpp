#include "rrag/error.hpp"

namespace rrag {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnclosedParagraph: return "UnclosedParagraph";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::IndexFormat: return "IndexFormat";
    case ErrorCode::WrongKind: return "WrongKind";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::DegenerateDistribution: return "DegenerateDistribution";
    case ErrorCode::UnscriptedPrompt: return "UnscriptedPrompt";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::Transport: return "Transport";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::EmptyCandidates: return "EmptyCandidates";
    case ErrorCode::NotEnoughInstances: return "NotEnoughInstances";
    case ErrorCode::MalformedCriticOutput: return "MalformedCriticOutput";
    case ErrorCode::IdMismatch: return "IdMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

std::optional<ErrorCode> parse_error_code(std::string_view name) noexcept {
  for (int i = 0; i <= static_cast<int>(ErrorCode::Io); ++i) {
    const auto code = static_cast<ErrorCode>(i);
    if (to_string(code) == name) return code;
  }
  return std::nullopt;
}

bool is_backend_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnscriptedPrompt:
    case ErrorCode::Timeout:
    case ErrorCode::Transport:
    case ErrorCode::ProtocolViolation:
      return true;
    default:
      return false;
  }
}

}  // namespace rrag
