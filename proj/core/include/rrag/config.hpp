#pragma once

// Engine-wide configuration file:
//
//   {"chunk": {"size": 128, "overlap": 32},
//    "retrieval": {"k_per_source": 10, "k_final": 10},
//    "scoring": {"weights": {"rel": 1.0, "sup": 1.0, "use": 1.0}, "delta": 0.2, "lambda_lm": 1.0},
//    "backend": {"url": "", "timeout_ms": 30000, "max_retries": 2, "max_inflight": 8},
//    "seed": 0}
//
// Every key is optional; unknown keys are rejected.

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "rrag/corpus.hpp"
#include "rrag/retriever.hpp"
#include "rrag/scoring.hpp"

namespace rrag {

struct BackendConfig {
  std::string url;
  int timeout_ms = 30000;
  int max_retries = 2;
  int max_inflight = 8;
};

struct EngineConfig {
  ChunkConfig chunk;
  RetrievalConfig retrieval;
  ScoringConfig scoring;
  BackendConfig backend;
  std::uint64_t seed = 0;

  /// Throws Error(InvalidConfig) naming the first broken invariant.
  void validate() const;
};

/// Overlays `j` on `base`; throws Error(InvalidConfig) for unknown keys,
/// wrong types, or invalid values.
EngineConfig engine_config_from_json(const nlohmann::json& j, EngineConfig base = {});
EngineConfig load_engine_config(const std::string& path, EngineConfig base = {});
nlohmann::ordered_json engine_config_to_json(const EngineConfig& cfg);

}  // namespace rrag
