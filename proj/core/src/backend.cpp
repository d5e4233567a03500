#include "rrag/backend.hpp"

#include <algorithm>
#include <cmath>

#include "rrag/error.hpp"

namespace rrag {
namespace {

[[noreturn]] void violation(const std::string& message) {
  throw Error(ErrorCode::ProtocolViolation, message);
}

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
  ~SlotGuard() { s_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<>& s_;
};

}  // namespace

std::string_view to_string(BackendRole role) noexcept {
  return role == BackendRole::Critic ? "Critic" : "Generator";
}

BackendRole parse_backend_role(std::string_view s) {
  if (s == "Critic") return BackendRole::Critic;
  if (s == "Generator") return BackendRole::Generator;
  throw Error(ErrorCode::InvalidConfig, "unknown backend role '" + std::string(s) + "'");
}

nlohmann::ordered_json request_to_json(const GenerationRequest& req) {
  nlohmann::ordered_json j;
  j["prompt"] = req.prompt;
  j["max_tokens"] = req.max_tokens;
  j["stop"] = req.stop;
  nlohmann::ordered_json kinds = nlohmann::ordered_json::array();
  for (auto k : req.want_control_probs) kinds.push_back(kind_name(k));
  j["want_control_probs"] = std::move(kinds);
  return j;
}

GenerationRequest request_from_json(const nlohmann::json& j) {
  if (!j.is_object()) violation("request is not an object");
  GenerationRequest req;
  auto prompt = j.find("prompt");
  auto max_tokens = j.find("max_tokens");
  if (prompt == j.end() || !prompt->is_string()) violation("request needs string 'prompt'");
  if (max_tokens == j.end() || !max_tokens->is_number_integer() || max_tokens->get<int>() < 1) {
    violation("request needs integer 'max_tokens' >= 1");
  }
  req.prompt = prompt->get<std::string>();
  req.max_tokens = max_tokens->get<int>();
  if (auto stop = j.find("stop"); stop != j.end()) {
    if (!stop->is_array()) violation("'stop' must be an array");
    for (const auto& s : *stop) {
      if (!s.is_string()) violation("'stop' entries must be strings");
      req.stop.push_back(s.get<std::string>());
    }
  }
  if (auto want = j.find("want_control_probs"); want != j.end()) {
    if (!want->is_array()) violation("'want_control_probs' must be an array");
    for (const auto& k : *want) {
      auto kind = k.is_string() ? parse_kind_name(k.get<std::string>()) : std::nullopt;
      if (!kind) violation("unknown control kind in 'want_control_probs'");
      req.want_control_probs.push_back(*kind);
    }
  }
  return req;
}

nlohmann::ordered_json response_to_json(const GenerationResponse& resp) {
  nlohmann::ordered_json j;
  j["text"] = resp.text;
  nlohmann::ordered_json probs = nlohmann::ordered_json::array();
  for (const auto& d : resp.control_probs) probs.push_back(distribution_to_json(d));
  j["control_probs"] = std::move(probs);
  j["token_logprobs"] = resp.token_logprobs;
  return j;
}

GenerationResponse response_from_json(const nlohmann::json& j) {
  if (!j.is_object()) violation("response is not an object");
  GenerationResponse resp;
  auto text = j.find("text");
  if (text == j.end() || !text->is_string()) violation("response needs string 'text'");
  resp.text = text->get<std::string>();
  if (auto probs = j.find("control_probs"); probs != j.end() && !probs->is_null()) {
    if (!probs->is_array()) violation("'control_probs' must be an array");
    for (const auto& d : *probs) resp.control_probs.push_back(distribution_from_json(d));
  }
  if (auto lp = j.find("token_logprobs"); lp != j.end() && !lp->is_null()) {
    if (!lp->is_array()) violation("'token_logprobs' must be an array");
    for (const auto& v : *lp) {
      if (!v.is_number()) violation("'token_logprobs' entries must be numbers");
      resp.token_logprobs.push_back(v.get<double>());
    }
  }
  return resp;
}

GenerationResponse response_from_body(std::string_view body) {
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) violation("response body is not a single JSON document");
  return response_from_json(j);
}

void validate_response(const GenerationResponse& resp, const GenerationRequest& req) {
  SegmentStream stream;
  try {
    stream = parse_stream(resp.text).stream;
  } catch (const Error& e) {
    violation(std::string("response text does not parse: ") + e.what());
  }
  const auto tokens = tokens_in(stream);
  if (tokens.size() != resp.control_probs.size()) {
    violation("text carries " + std::to_string(tokens.size()) + " reflective tokens but " +
              std::to_string(resp.control_probs.size()) + " control distributions");
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].kind() != resp.control_probs[i].kind()) {
      violation("control distribution " + std::to_string(i) + " is " +
                std::string(kind_name(resp.control_probs[i].kind())) + " but token is " +
                std::string(surface_form(tokens[i])));
    }
  }
  for (auto kind : req.want_control_probs) {
    const bool present = std::any_of(resp.control_probs.begin(), resp.control_probs.end(),
                                     [kind](const TokenDistribution& d) { return d.kind() == kind; });
    if (!present) {
      violation("requested " + std::string(kind_name(kind)) + " distribution is missing");
    }
  }
  for (double lp : resp.token_logprobs) {
    if (!std::isfinite(lp)) violation("token logprob is not finite");
  }
}

double mean_logprob(const GenerationResponse& resp) noexcept {
  if (resp.token_logprobs.empty()) return 0.0;
  double sum = 0.0;
  for (double lp : resp.token_logprobs) sum += lp;
  return sum / static_cast<double>(resp.token_logprobs.size());
}

GenerationResponse checked_generate(const ModelBackend& backend, const GenerationRequest& req) {
  GenerationResponse resp = backend.generate(req);
  validate_response(resp, req);
  return resp;
}

BoundedBackend::BoundedBackend(std::shared_ptr<const ModelBackend> inner, std::ptrdiff_t max_inflight)
    : inner_(std::move(inner)), slots_(std::max<std::ptrdiff_t>(max_inflight, 1)) {
  if (!inner_) throw Error(ErrorCode::InvalidArgument, "BoundedBackend needs a backend");
  if (max_inflight < 1) throw Error(ErrorCode::InvalidConfig, "max_inflight must be at least 1");
}

GenerationResponse BoundedBackend::generate(const GenerationRequest& req) const {
  SlotGuard guard(slots_);
  return inner_->generate(req);
}

}  // namespace rrag
