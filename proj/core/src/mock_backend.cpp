#include "rrag/error.hpp"
#include "rrag/backend.hpp"
#include "rrag/jsonl.hpp"

namespace rrag {

MockBackend::MockBackend(BackendRole role, std::vector<Entry> entries)
    : role_(role), entries_(std::move(entries)) {}

GenerationResponse MockBackend::generate(const GenerationRequest& req) const {
  calls_.fetch_add(1);
  const Entry* best = nullptr;
  for (const auto& e : entries_) {
    if (e.match == Match::Exact && e.key == req.prompt) return e.response;
  }
  for (const auto& e : entries_) {
    if (e.match == Match::Prefix && req.prompt.starts_with(e.key) &&
        (best == nullptr || e.key.size() > best->key.size())) {
      best = &e;
    }
  }
  if (best == nullptr) {
    const std::string head = req.prompt.substr(0, 80);
    throw Error(ErrorCode::UnscriptedPrompt, "no scripted response for prompt '" + head + "...'");
  }
  return best->response;
}

std::shared_ptr<MockBackend> MockBackend::from_json(const nlohmann::json& script) {
  if (!script.is_object()) throw Error(ErrorCode::InvalidConfig, "mock script must be an object");
  const BackendRole role = parse_backend_role(script.value("role", std::string("Generator")));
  auto entries_it = script.find("entries");
  if (entries_it == script.end() || !entries_it->is_array()) {
    throw Error(ErrorCode::InvalidConfig, "mock script needs an 'entries' array");
  }
  std::vector<Entry> entries;
  for (const auto& item : *entries_it) {
    Entry e;
    e.key = require_string(item, "prompt");
    const std::string match = item.value("match", std::string("exact"));
    if (match == "exact") e.match = Match::Exact;
    else if (match == "prefix") e.match = Match::Prefix;
    else throw Error(ErrorCode::InvalidConfig, "unknown match mode '" + match + "'");
    auto resp = item.find("response");
    if (resp == item.end()) throw Error(ErrorCode::MissingField, "mock entry needs 'response'");
    e.response = response_from_json(*resp);
    entries.push_back(std::move(e));
  }
  return std::make_shared<MockBackend>(role, std::move(entries));
}

std::shared_ptr<MockBackend> MockBackend::from_file(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::InvalidConfig, "mock script '" + path + "' is not JSON");
  return from_json(j);
}

nlohmann::ordered_json MockBackend::to_json() const {
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (const auto& e : entries_) {
    entries.push_back({{"prompt", e.key},
                       {"match", e.match == Match::Exact ? "exact" : "prefix"},
                       {"response", response_to_json(e.response)}});
  }
  return {{"role", to_string(role_)}, {"entries", std::move(entries)}};
}

}  // namespace rrag
