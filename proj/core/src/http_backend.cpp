#include "rrag/http_backend.hpp"

#include <cmath>
#include <mutex>
#include <random>
#include <thread>

#include <httplib.h>

#include "rrag/error.hpp"

namespace rrag {

struct HttpBackend::State {
  std::mutex mutex;
  std::mt19937_64 rng;
};

void HttpBackendOptions::validate() const {
  if (timeout_ms < 1) throw Error(ErrorCode::InvalidConfig, "timeout_ms must be at least 1");
  if (max_retries < 0) throw Error(ErrorCode::InvalidConfig, "max_retries must be non-negative");
  if (backoff_base.count() < 0 || !(backoff_factor >= 1.0) || !(backoff_jitter >= 0.0) ||
      backoff_jitter >= 1.0) {
    throw Error(ErrorCode::InvalidConfig, "invalid retry backoff settings");
  }
}

std::chrono::milliseconds backoff_delay(const HttpBackendOptions& opts, int attempt, double u) {
  const double nominal =
      static_cast<double>(opts.backoff_base.count()) * std::pow(opts.backoff_factor, attempt);
  const double scale = 1.0 - opts.backoff_jitter + 2.0 * opts.backoff_jitter * u;
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(nominal * scale)));
}

HttpBackend::HttpBackend(HttpBackendOptions opts)
    : opts_(std::move(opts)), state_(std::make_unique<State>()) {
  opts_.validate();
  constexpr std::string_view scheme = "http://";
  if (!std::string_view(opts_.base_url).starts_with(scheme)) {
    throw Error(ErrorCode::InvalidConfig, "backend URL must start with http://: '" + opts_.base_url + "'");
  }
  const auto slash = opts_.base_url.find('/', scheme.size());
  host_ = opts_.base_url.substr(0, slash);
  if (slash != std::string::npos) prefix_ = opts_.base_url.substr(slash);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  if (host_.size() == scheme.size()) {
    throw Error(ErrorCode::InvalidConfig, "backend URL has no host: '" + opts_.base_url + "'");
  }
  state_->rng.seed(opts_.jitter_seed);
  if (!opts_.sleep) opts_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

HttpBackend::~HttpBackend() = default;

GenerationResponse HttpBackend::generate(const GenerationRequest& req) const {
  const std::string body = request_to_json(req).dump(-1, ' ', false, nlohmann::json::error_handler_t::strict);
  const std::string path = prefix_ + "/v1/generate";
  httplib::Headers headers;
  if (!opts_.bearer_token.empty()) headers.emplace("Authorization", "Bearer " + opts_.bearer_token);

  const auto timeout = std::chrono::milliseconds(opts_.timeout_ms);
  for (int attempt = 0;; ++attempt) {
    ErrorCode failure = ErrorCode::Transport;
    std::string detail;
    {
      httplib::Client client(host_);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      const auto started = std::chrono::steady_clock::now();
      auto res = client.Post(path, headers, body, "application/json");
      if (res) {
        if (res->status >= 200 && res->status < 300) {
          GenerationResponse resp = response_from_body(res->body);
          validate_response(resp, req);
          return resp;
        }
        if (res->status >= 400 && res->status < 500) {
          throw Error(ErrorCode::ProtocolViolation,
                      "backend rejected request with HTTP " + std::to_string(res->status));
        }
        detail = "HTTP " + std::to_string(res->status);
      } else {
        const auto elapsed = std::chrono::steady_clock::now() - started;
        const auto err = res.error();
        if (err == httplib::Error::ConnectionTimeout || elapsed >= timeout) failure = ErrorCode::Timeout;
        detail = httplib::to_string(err);
      }
    }
    if (attempt >= opts_.max_retries) {
      throw Error(failure, "POST " + host_ + path + " failed after " + std::to_string(attempt + 1) +
                               " attempt(s): " + detail);
    }
    double u;
    {
      std::lock_guard lock(state_->mutex);
      u = std::uniform_real_distribution<double>(0.0, 1.0)(state_->rng);
    }
    opts_.sleep(backoff_delay(opts_, attempt, u));
  }
}

std::shared_ptr<ModelBackend> open_backend(const std::string& spec, HttpBackendOptions http) {
  constexpr std::string_view mock = "mock:";
  if (std::string_view(spec).starts_with(mock)) {
    auto backend = MockBackend::from_file(spec.substr(mock.size()));
    return backend;
  }
  if (std::string_view(spec).starts_with("http://")) {
    http.base_url = spec;
    return std::make_shared<HttpBackend>(std::move(http));
  }
  throw Error(ErrorCode::InvalidConfig,
              "backend must be 'mock:PATH' or an http:// URL, got '" + spec + "'");
}

}  // namespace rrag
