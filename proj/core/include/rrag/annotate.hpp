#pragma once

// Training-data construction: sample instruction instances, ask a critic
// backend for reflective tokens, interleave them with the output, filter, and
// export generator training records.
//
// Annotated stream layouts:
//   [No Retrieval] output [Utility:N]
//   [Retrieval] <paragraph>evidence</paragraph> [Relevant] output [Fully supported] [Utility:N]

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rrag/backend.hpp"
#include "rrag/retriever.hpp"
#include "rrag/tokens.hpp"

namespace rrag {

struct InstructionInstance {
  std::string id;
  std::string source;
  std::string instruction;
  std::string input;
  std::string output;
  friend bool operator==(const InstructionInstance&, const InstructionInstance&) = default;
};

/// `{"id", "source"?, "instruction", "input"?, "output"}`; instruction and
/// output must be non-empty (MissingField).
InstructionInstance instance_from_json(const nlohmann::json& j);
nlohmann::ordered_json instance_to_json(const InstructionInstance& inst);
std::vector<InstructionInstance> read_instances_file(const std::string& path);

/// n distinct instances drawn uniformly under `seed`, in draw order. The
/// generator is a partial Fisher-Yates over mt19937_64 with rejection
/// sampling, so results are identical across standard libraries.
/// Throws Error(NotEnoughInstances) when n > instances.size().
std::vector<InstructionInstance> sample_for_critic(const std::vector<InstructionInstance>& instances,
                                                   std::size_t n, std::uint64_t seed);

struct Annotations {
  std::optional<ReflectiveToken> ret;
  std::optional<ReflectiveToken> rel;
  std::optional<ReflectiveToken> sup;
  std::optional<ReflectiveToken> use;
  friend bool operator==(const Annotations&, const Annotations&) = default;
};

inline constexpr std::string_view k_flag_malformed_critic_output = "malformed-critic-output";
inline constexpr std::string_view k_flag_missing_evidence = "missing-evidence";

struct AnnotationFlag {
  std::string code;
  std::string message;
  friend bool operator==(const AnnotationFlag&, const AnnotationFlag&) = default;
};

struct AnnotatedInstance {
  InstructionInstance base;
  SegmentStream stream;
  Annotations annotations;
  std::optional<Evidence> evidence;
  std::vector<AnnotationFlag> flags;
  friend bool operator==(const AnnotatedInstance&, const AnnotatedInstance&) = default;
};

/// Reads the critic's verdict of `kind`: the first such token in the reply.
/// For USE a bare leading digit 1-5 is also accepted, since the utility
/// prompt asks for a number. nullopt when the reply holds no usable verdict.
std::optional<ReflectiveToken> read_critic_verdict(std::string_view reply, TokenKind kind);

struct AnnotateConfig {
  int max_tokens = 64;
};

/// Asks the critic for RET; on [Retrieval] retrieves evidence and asks for REL
/// and SUP against the top passage; always asks for USE. Unusable critic
/// replies are flagged rather than thrown so the filter can drop them.
/// Backend and retriever errors propagate.
AnnotatedInstance annotate_instance(const InstructionInstance& inst, const ModelBackend& critic,
                                    const EvidenceSource* evidence, const AnnotateConfig& cfg = {});

/// annotate_instance over every input on up to `workers` threads, in input order.
std::vector<AnnotatedInstance> annotate_batch(const std::vector<InstructionInstance>& instances,
                                              const ModelBackend& critic, const EvidenceSource* evidence,
                                              const AnnotateConfig& cfg = {}, std::size_t workers = 1);

inline constexpr std::string_view k_drop_malformed = "malformed-critic-output";
inline constexpr std::string_view k_drop_continue_at_start = "continue-at-start";
inline constexpr std::string_view k_drop_invariant = "invariant-violation";

/// Structural check of an annotated stream; describes the first violation.
std::optional<std::string> invariant_violation(const AnnotatedInstance& inst);

/// The rule that drops `inst`, checked in precedence order: malformed critic
/// output, RET=Continue at the start, then any invariant violation.
std::optional<std::string_view> drop_reason(const AnnotatedInstance& inst);

struct FilterReport {
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::map<std::string, std::size_t> reasons;
  friend bool operator==(const FilterReport&, const FilterReport&) = default;
};

nlohmann::ordered_json filter_report_to_json(const FilterReport& report);

std::pair<std::vector<AnnotatedInstance>, FilterReport> filter_annotated(
    std::vector<AnnotatedInstance> instances);

/// `{"id", "source", "instruction", "input", "output", "text",
///   "annotations": {"ret", "rel", "sup", "use"}, "evidence", "flags"}`
nlohmann::ordered_json annotated_to_json(const AnnotatedInstance& inst);
AnnotatedInstance annotated_from_json(const nlohmann::json& j);
std::vector<AnnotatedInstance> read_annotated_file(const std::string& path);

/// Generator training record `{"id", "instruction", "input", "text"}`.
nlohmann::ordered_json training_record(const AnnotatedInstance& inst);
void export_training(std::ostream& out, const std::vector<AnnotatedInstance>& instances);
void export_training_file(const std::string& path, const std::vector<AnnotatedInstance>& instances);

}  // namespace rrag
