#pragma once

// HTTP client for the generation wire protocol (see backend.hpp).

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "rrag/backend.hpp"

namespace rrag {

struct HttpBackendOptions {
  std::string base_url;  // "http://host:port[/prefix]"
  int timeout_ms = 30000;
  int max_retries = 2;
  std::string bearer_token;  // sent as "Authorization: Bearer ..." when non-empty
  BackendRole role = BackendRole::Generator;

  // Retry schedule: attempt n (0-based) waits base * factor^n, scaled by a
  // uniform factor in [1 - jitter, 1 + jitter].
  std::chrono::milliseconds backoff_base{250};
  double backoff_factor = 2.0;
  double backoff_jitter = 0.2;
  std::uint64_t jitter_seed = 0;
  /// Replaceable so tests do not actually sleep.
  std::function<void(std::chrono::milliseconds)> sleep;

  void validate() const;
};

/// Delay before retry `attempt` (0-based) given a uniform draw u in [0, 1).
std::chrono::milliseconds backoff_delay(const HttpBackendOptions& opts, int attempt, double u);

/// One POST to {base_url}/v1/generate per attempt. Transport failures,
/// timeouts, and 5xx replies are retried up to max_retries times; 4xx replies
/// and invalid bodies raise ProtocolViolation immediately. Every accepted
/// response has passed validate_response().
class HttpBackend final : public ModelBackend {
 public:
  explicit HttpBackend(HttpBackendOptions opts);
  ~HttpBackend() override;

  BackendRole role() const noexcept override { return opts_.role; }
  GenerationResponse generate(const GenerationRequest& req) const override;

 private:
  struct State;
  HttpBackendOptions opts_;
  std::string host_;    // scheme://host:port
  std::string prefix_;  // path prefix without trailing slash
  std::unique_ptr<State> state_;
};

/// "mock:PATH" loads a MockBackend script; "http://..." builds an HttpBackend
/// from `http` with base_url replaced. Anything else is InvalidConfig.
std::shared_ptr<ModelBackend> open_backend(const std::string& spec, HttpBackendOptions http);

}  // namespace rrag
