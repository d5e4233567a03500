#include "rrag/tokens.hpp"

#include <array>

#include "rrag/error.hpp"
#include "text_util.hpp"

namespace rrag {
namespace {

constexpr std::array<ReflectiveToken, 3> k_ret_vocab{RetValue::Retrieval, RetValue::NoRetrieval,
                                                     RetValue::Continue};
constexpr std::array<ReflectiveToken, 2> k_rel_vocab{RelValue::Relevant, RelValue::Irrelevant};
constexpr std::array<ReflectiveToken, 3> k_sup_vocab{
    SupValue::FullySupported, SupValue::PartiallySupported, SupValue::NoSupport};
constexpr std::array<ReflectiveToken, 5> k_use_vocab{UseValue::U1, UseValue::U2, UseValue::U3,
                                                     UseValue::U4, UseValue::U5};

struct SurfaceEntry {
  std::string_view surface;
  ReflectiveToken token;
};

// Canonical forms first; the alias is parse-only.
constexpr std::array<SurfaceEntry, 14> k_surfaces{{
    {"[Retrieval]", RetValue::Retrieval},
    {"[No Retrieval]", RetValue::NoRetrieval},
    {"[Continue Generation]", RetValue::Continue},
    {"[Relevant]", RelValue::Relevant},
    {"[Irrelevant]", RelValue::Irrelevant},
    {"[Fully supported]", SupValue::FullySupported},
    {"[Partially supported]", SupValue::PartiallySupported},
    {"[No support / Contradictory]", SupValue::NoSupport},
    {"[Utility:1]", UseValue::U1},
    {"[Utility:2]", UseValue::U2},
    {"[Utility:3]", UseValue::U3},
    {"[Utility:4]", UseValue::U4},
    {"[Utility:5]", UseValue::U5},
    {"[Continue to Use Evidence]", RetValue::Continue},
}};

class StreamBuilder {
 public:
  explicit StreamBuilder(std::string_view raw) : raw_(raw) {}

  // Emits raw_[begin, end) as text. `before_markup` is true when markup follows.
  void flush_text(std::size_t begin, std::size_t end, bool before_markup) {
    std::string_view piece = raw_.substr(begin, end - begin);
    if (!result_.stream.empty()) piece = detail::ltrim(piece);
    if (before_markup) piece = detail::rtrim(piece);
    if (!piece.empty()) result_.stream.emplace_back(Text{std::string(piece)});
  }

  void push(Segment segment) { result_.stream.push_back(std::move(segment)); }

  void diagnose(std::size_t offset, std::string_view fragment, std::string message) {
    result_.diagnostics.push_back({offset, std::string(fragment), std::move(message)});
  }

  ParseResult take() { return std::move(result_); }

 private:
  std::string_view raw_;
  ParseResult result_;
};

}  // namespace

std::string_view kind_name(TokenKind kind) noexcept {
  switch (kind) {
    case TokenKind::Ret: return "RET";
    case TokenKind::Rel: return "REL";
    case TokenKind::Sup: return "SUP";
    case TokenKind::Use: return "USE";
  }
  return "?";
}

std::optional<TokenKind> parse_kind_name(std::string_view name) noexcept {
  if (name == "RET") return TokenKind::Ret;
  if (name == "REL") return TokenKind::Rel;
  if (name == "SUP") return TokenKind::Sup;
  if (name == "USE") return TokenKind::Use;
  return std::nullopt;
}

std::size_t vocabulary_size(TokenKind kind) noexcept { return vocabulary(kind).size(); }

std::span<const ReflectiveToken> vocabulary(TokenKind kind) noexcept {
  switch (kind) {
    case TokenKind::Ret: return k_ret_vocab;
    case TokenKind::Rel: return k_rel_vocab;
    case TokenKind::Sup: return k_sup_vocab;
    case TokenKind::Use: return k_use_vocab;
  }
  return {};
}

std::optional<ReflectiveToken> ReflectiveToken::from_ordinal(TokenKind kind,
                                                             std::size_t ordinal) noexcept {
  auto vocab = vocabulary(kind);
  if (ordinal >= vocab.size()) return std::nullopt;
  return vocab[ordinal];
}

std::optional<ReflectiveToken> ReflectiveToken::utility(int score) noexcept {
  if (score < 1 || score > 5) return std::nullopt;
  return from_ordinal(TokenKind::Use, static_cast<std::size_t>(score - 1));
}

std::size_t ReflectiveToken::ordinal() const noexcept {
  return std::visit([](auto v) { return static_cast<std::size_t>(v); }, value_);
}

std::string_view surface_form(const ReflectiveToken& token) noexcept {
  for (const auto& entry : k_surfaces) {
    if (entry.token == token) return entry.surface;
  }
  return {};
}

std::optional<ReflectiveToken> parse_surface_form(std::string_view text) noexcept {
  for (const auto& entry : k_surfaces) {
    if (entry.surface == text) return entry.token;
  }
  return std::nullopt;
}

ParseResult parse_stream(std::string_view raw) {
  StreamBuilder out(raw);
  std::size_t text_start = 0;
  std::size_t i = 0;
  while (i < raw.size()) {
    if (raw.compare(i, k_paragraph_open.size(), k_paragraph_open) == 0) {
      const std::size_t body = i + k_paragraph_open.size();
      const std::size_t close = raw.find(k_paragraph_close, body);
      const std::size_t nested = raw.find(k_paragraph_open, body);
      if (close == std::string_view::npos || nested < close) {
        throw Error(ErrorCode::UnclosedParagraph,
                    "<paragraph> at byte " + std::to_string(i) + " is not closed");
      }
      out.flush_text(text_start, i, true);
      out.push(Paragraph{std::string(detail::trim(raw.substr(body, close - body)))});
      i = close + k_paragraph_close.size();
      text_start = i;
      continue;
    }
    if (raw.compare(i, k_paragraph_close.size(), k_paragraph_close) == 0) {
      out.diagnose(i, k_paragraph_close, "closing paragraph marker without an opening marker");
      i += k_paragraph_close.size();
      continue;
    }
    if (raw[i] == '[') {
      const std::size_t close = raw.find(']', i + 1);
      const std::size_t inner = raw.find('[', i + 1);
      if (close != std::string_view::npos && (inner == std::string_view::npos || inner > close)) {
        const std::string_view candidate = raw.substr(i, close - i + 1);
        if (auto token = parse_surface_form(candidate)) {
          out.flush_text(text_start, i, true);
          out.push(*token);
          i = close + 1;
          text_start = i;
          continue;
        }
        out.diagnose(i, candidate, "unknown bracketed token kept as text");
        i = close + 1;
        continue;
      }
    }
    ++i;
  }
  out.flush_text(text_start, raw.size(), false);
  return out.take();
}

std::string serialize_stream(const SegmentStream& stream) {
  std::string out;
  for (const auto& item : stream) {
    if (!out.empty()) out.push_back(' ');
    std::visit(
        [&out](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, Text>) {
            out += v.text;
          } else if constexpr (std::is_same_v<T, Paragraph>) {
            out += k_paragraph_open;
            out += v.text;
            out += k_paragraph_close;
          } else {
            out += surface_form(v);
          }
        },
        item);
  }
  return out;
}

std::string strip_tokens(const SegmentStream& stream) {
  std::string out;
  for (const auto& item : stream) {
    if (const auto* text = std::get_if<Text>(&item)) {
      if (!out.empty()) out.push_back(' ');
      out += text->text;
    }
  }
  return std::string(detail::trim(out));
}

std::vector<ReflectiveToken> tokens_in(const SegmentStream& stream) {
  std::vector<ReflectiveToken> out;
  for (const auto& item : stream) {
    if (const auto* token = std::get_if<ReflectiveToken>(&item)) out.push_back(*token);
  }
  return out;
}

std::optional<ReflectiveToken> first_token(const SegmentStream& stream, TokenKind kind) {
  for (const auto& item : stream) {
    if (const auto* token = std::get_if<ReflectiveToken>(&item); token && token->kind() == kind) {
      return *token;
    }
  }
  return std::nullopt;
}

}  // namespace rrag
