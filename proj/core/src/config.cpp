#include "rrag/config.hpp"

#include <limits>

#include "rrag/error.hpp"
#include "rrag/jsonl.hpp"

namespace rrag {
namespace {

[[noreturn]] void invalid(const std::string& message) { throw Error(ErrorCode::InvalidConfig, message); }

const nlohmann::json& object(const nlohmann::json& j, const std::string& key) {
  if (!j.is_object()) invalid("'" + key + "' must be an object");
  return j;
}

template <class Int>
Int integer(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer()) invalid("'" + key + "' must be an integer");
  if (v.is_number_unsigned()) {
    const auto u = v.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(std::numeric_limits<Int>::max())) invalid("'" + key + "' is out of range");
    return static_cast<Int>(u);
  }
  const auto s = v.get<std::int64_t>();
  if (s < static_cast<std::int64_t>(std::numeric_limits<Int>::min()) ||
      (s > 0 && static_cast<std::uint64_t>(s) > static_cast<std::uint64_t>(std::numeric_limits<Int>::max()))) {
    invalid("'" + key + "' is out of range");
  }
  return static_cast<Int>(s);
}

}  // namespace

void EngineConfig::validate() const {
  chunk.validate();
  retrieval.validate();
  scoring.validate();
  if (backend.timeout_ms < 1) invalid("backend.timeout_ms must be at least 1");
  if (backend.max_retries < 0) invalid("backend.max_retries must be non-negative");
  if (backend.max_inflight < 1) invalid("backend.max_inflight must be at least 1");
}

EngineConfig engine_config_from_json(const nlohmann::json& j, EngineConfig cfg) {
  if (!j.is_object()) invalid("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "chunk") {
      for (const auto& [k, v] : object(value, key).items()) {
        if (k == "size") cfg.chunk.chunk_size = integer<std::uint32_t>(v, "chunk.size");
        else if (k == "overlap") cfg.chunk.overlap = integer<std::uint32_t>(v, "chunk.overlap");
        else invalid("unknown key 'chunk." + k + "'");
      }
    } else if (key == "retrieval") {
      for (const auto& [k, v] : object(value, key).items()) {
        if (k == "k_per_source") cfg.retrieval.k_per_source = integer<std::size_t>(v, "retrieval." + k);
        else if (k == "k_final") cfg.retrieval.k_final = integer<std::size_t>(v, "retrieval." + k);
        else invalid("unknown key 'retrieval." + k + "'");
      }
    } else if (key == "scoring") {
      cfg.scoring = scoring_config_from_json(object(value, key), cfg.scoring);
    } else if (key == "backend") {
      for (const auto& [k, v] : object(value, key).items()) {
        if (k == "url") {
          if (!v.is_string()) invalid("'backend.url' must be a string");
          cfg.backend.url = v.get<std::string>();
        } else if (k == "timeout_ms") {
          cfg.backend.timeout_ms = integer<int>(v, "backend." + k);
        } else if (k == "max_retries") {
          cfg.backend.max_retries = integer<int>(v, "backend." + k);
        } else if (k == "max_inflight") {
          cfg.backend.max_inflight = integer<int>(v, "backend." + k);
        } else {
          invalid("unknown key 'backend." + k + "'");
        }
      }
    } else if (key == "seed") {
      cfg.seed = integer<std::uint64_t>(value, "seed");
    } else {
      invalid("unknown config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

EngineConfig load_engine_config(const std::string& path, EngineConfig base) {
  nlohmann::json j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) invalid("config file '" + path + "' is not valid JSON");
  return engine_config_from_json(j, std::move(base));
}

nlohmann::ordered_json engine_config_to_json(const EngineConfig& cfg) {
  nlohmann::ordered_json j;
  j["chunk"] = {{"size", cfg.chunk.chunk_size}, {"overlap", cfg.chunk.overlap}};
  j["retrieval"] = {{"k_per_source", cfg.retrieval.k_per_source}, {"k_final", cfg.retrieval.k_final}};
  j["scoring"] = scoring_config_to_json(cfg.scoring);
  j["backend"] = {{"url", cfg.backend.url},
                  {"timeout_ms", cfg.backend.timeout_ms},
                  {"max_retries", cfg.backend.max_retries},
                  {"max_inflight", cfg.backend.max_inflight}};
  j["seed"] = cfg.seed;
  return j;
}

}  // namespace rrag
