#pragma once

// Reflective-token vocabulary and the interleaved generation wire format.
//
// A generation is a flat sequence of plain text, reflective tokens, and
// evidence paragraphs:
//
//   [Retrieval] <paragraph>beta cells ...</paragraph> [Relevant] Type 1. [Fully supported]
//
// Tokens are atomic surface strings. The thirteen canonical forms are the only
// strings serialize_stream() emits besides the paragraph markers.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace rrag {

enum class TokenKind : std::uint8_t { Ret, Rel, Sup, Use };

inline constexpr std::size_t k_token_kind_count = 4;

enum class RetValue : std::uint8_t { Retrieval, NoRetrieval, Continue };
enum class RelValue : std::uint8_t { Relevant, Irrelevant };
enum class SupValue : std::uint8_t { FullySupported, PartiallySupported, NoSupport };
enum class UseValue : std::uint8_t { U1, U2, U3, U4, U5 };

/// "RET", "REL", "SUP", "USE".
std::string_view kind_name(TokenKind kind) noexcept;
std::optional<TokenKind> parse_kind_name(std::string_view name) noexcept;

/// Number of values in the closed vocabulary of `kind`.
std::size_t vocabulary_size(TokenKind kind) noexcept;

class ReflectiveToken {
 public:
  using Value = std::variant<RetValue, RelValue, SupValue, UseValue>;

  constexpr ReflectiveToken(RetValue v) noexcept : value_(v) {}
  constexpr ReflectiveToken(RelValue v) noexcept : value_(v) {}
  constexpr ReflectiveToken(SupValue v) noexcept : value_(v) {}
  constexpr ReflectiveToken(UseValue v) noexcept : value_(v) {}

  /// Builds the `ordinal`-th value of `kind`; nullopt when out of range.
  static std::optional<ReflectiveToken> from_ordinal(TokenKind kind, std::size_t ordinal) noexcept;

  /// `[Utility:N]` for N in 1..5; nullopt otherwise.
  static std::optional<ReflectiveToken> utility(int score) noexcept;

  TokenKind kind() const noexcept { return static_cast<TokenKind>(value_.index()); }

  /// Position of the value inside its kind's vocabulary (declaration order).
  std::size_t ordinal() const noexcept;

  const Value& value() const noexcept { return value_; }

  template <class T>
  bool is(T v) const noexcept {
    const T* held = std::get_if<T>(&value_);
    return held != nullptr && *held == v;
  }

  friend bool operator==(const ReflectiveToken&, const ReflectiveToken&) = default;

 private:
  Value value_;
};

/// Canonical surface form, e.g. "[No support / Contradictory]".
std::string_view surface_form(const ReflectiveToken& token) noexcept;

/// Accepts the canonical forms plus `[Continue to Use Evidence]`.
std::optional<ReflectiveToken> parse_surface_form(std::string_view text) noexcept;

/// All tokens of `kind` in ordinal order.
std::span<const ReflectiveToken> vocabulary(TokenKind kind) noexcept;

inline constexpr std::string_view k_paragraph_open = "<paragraph>";
inline constexpr std::string_view k_paragraph_close = "</paragraph>";

struct Text {
  std::string text;
  friend bool operator==(const Text&, const Text&) = default;
};

struct Paragraph {
  std::string text;
  friend bool operator==(const Paragraph&, const Paragraph&) = default;
};

using Segment = std::variant<Text, ReflectiveToken, Paragraph>;
using SegmentStream = std::vector<Segment>;

struct ParseDiagnostic {
  std::size_t offset = 0;  // byte offset in the raw input
  std::string fragment;
  std::string message;
  friend bool operator==(const ParseDiagnostic&, const ParseDiagnostic&) = default;
};

struct ParseResult {
  SegmentStream stream;
  std::vector<ParseDiagnostic> diagnostics;
};

/// Splits raw model output into text, tokens, and paragraphs.
///
/// Whitespace touching a token or paragraph marker is dropped, so a Text item
/// never starts or ends with whitespace on a side that borders markup.
/// Whitespace-only text between markup disappears. Text with no markup at all
/// comes back as one unmodified Text item. Bracketed strings that are not
/// canonical surface forms stay in the text and yield a diagnostic, as does a
/// stray closing paragraph marker.
///
/// Throws Error(UnclosedParagraph) when `<paragraph>` is not closed before the
/// end of input or before another `<paragraph>`.
ParseResult parse_stream(std::string_view raw);

/// Items joined by single spaces; paragraphs as `<paragraph>x</paragraph>`.
std::string serialize_stream(const SegmentStream& stream);

/// Text items only, joined by single spaces, ends trimmed.
std::string strip_tokens(const SegmentStream& stream);

/// Tokens in stream order (paragraph contents are not scanned).
std::vector<ReflectiveToken> tokens_in(const SegmentStream& stream);

/// First token of `kind`, if any.
std::optional<ReflectiveToken> first_token(const SegmentStream& stream, TokenKind kind);

}  // namespace rrag
