#pragma once

// Language-model backends. A backend turns a prompt into text interleaved with
// reflective tokens, plus one probability distribution per emitted token.
//
// Wire format (POST {base_url}/v1/generate):
//   request  {"prompt": str, "max_tokens": int, "stop": [str],
//             "want_control_probs": ["RET", "REL", "SUP", "USE"]}
//   response {"text": str,
//             "control_probs": [{"kind": str, "probs": {surface_form: float}}],
//             "token_logprobs": [float]}

#include <atomic>
#include <cstddef>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rrag/scoring.hpp"
#include "rrag/tokens.hpp"

namespace rrag {

enum class BackendRole { Critic, Generator };

std::string_view to_string(BackendRole role) noexcept;
BackendRole parse_backend_role(std::string_view s);

struct GenerationRequest {
  std::string prompt;
  int max_tokens = 512;
  std::vector<std::string> stop;
  std::vector<TokenKind> want_control_probs;

  friend bool operator==(const GenerationRequest&, const GenerationRequest&) = default;
};

struct GenerationResponse {
  std::string text;
  std::vector<TokenDistribution> control_probs;  // one per reflective token in `text`
  std::vector<double> token_logprobs;

  friend bool operator==(const GenerationResponse&, const GenerationResponse&) = default;
};

nlohmann::ordered_json request_to_json(const GenerationRequest& req);
GenerationRequest request_from_json(const nlohmann::json& j);  // ProtocolViolation
nlohmann::ordered_json response_to_json(const GenerationResponse& resp);
GenerationResponse response_from_json(const nlohmann::json& j);  // ProtocolViolation
/// Parses a complete UTF-8 body; trailing data is a ProtocolViolation.
GenerationResponse response_from_body(std::string_view body);

/// Checks a response against the request: the text parses, control_probs line
/// up one-to-one (by kind) with the tokens in the text, every requested kind is
/// present, and logprobs are finite. Throws Error(ProtocolViolation).
void validate_response(const GenerationResponse& resp, const GenerationRequest& req);

/// Mean of token_logprobs; 0 when empty.
double mean_logprob(const GenerationResponse& resp) noexcept;

class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  virtual BackendRole role() const noexcept = 0;
  /// Must be safe to call from several threads at once.
  virtual GenerationResponse generate(const GenerationRequest& req) const = 0;
};

/// generate() followed by validate_response().
GenerationResponse checked_generate(const ModelBackend& backend, const GenerationRequest& req);

/// Replays scripted responses. Lookup is exact match first, then the longest
/// matching prefix entry; anything else raises UnscriptedPrompt.
class MockBackend final : public ModelBackend {
 public:
  enum class Match { Exact, Prefix };
  struct Entry {
    std::string key;
    Match match = Match::Exact;
    GenerationResponse response;
  };

  MockBackend(BackendRole role, std::vector<Entry> entries);

  /// `{"role": "Generator"|"Critic", "entries": [{"prompt", "match"?, "response"}]}`
  static std::shared_ptr<MockBackend> from_json(const nlohmann::json& script);
  static std::shared_ptr<MockBackend> from_file(const std::string& path);
  nlohmann::ordered_json to_json() const;

  BackendRole role() const noexcept override { return role_; }
  GenerationResponse generate(const GenerationRequest& req) const override;

  /// Number of generate() calls served so far.
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  BackendRole role_;
  std::vector<Entry> entries_;
  mutable std::atomic<std::size_t> calls_{0};
};

/// Caps the number of concurrent generate() calls on the wrapped backend.
class BoundedBackend final : public ModelBackend {
 public:
  BoundedBackend(std::shared_ptr<const ModelBackend> inner, std::ptrdiff_t max_inflight = 8);

  BackendRole role() const noexcept override { return inner_->role(); }
  GenerationResponse generate(const GenerationRequest& req) const override;

 private:
  std::shared_ptr<const ModelBackend> inner_;
  mutable std::counting_semaphore<> slots_;
};

}  // namespace rrag
