#pragma once

// Critique calculus over reflective-token distributions.
//
//   s_rel = p(Relevant) / (p(Relevant) + p(Irrelevant))
//   s_sup = (p(Fully) + 0.5 p(Partial)) / (p(Fully) + p(Partial) + p(No))
//   s_use = sum_i w_i p(i) / sum_t p(t),  w = (-1, -0.5, 0, 0.5, 1) for Utility 1..5
//   critique = w_rel s_rel + w_sup s_sup + w_use s_use
//   combined = lambda_lm * mean token logprob + critique
//
// Retrieval is gated on p(Retrieval) / (p(Retrieval) + p(No Retrieval)) > delta;
// Continue mass is excluded from the ratio.

#include <array>
#include <cstddef>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "rrag/tokens.hpp"

namespace rrag {

/// Probability assigned to vocabulary values a backend did not report.
inline constexpr double k_probability_floor = 1e-10;

class TokenDistribution {
 public:
  /// Values of `kind` missing from `probs` get k_probability_floor.
  /// Errors: WrongKind (token of another kind), InvalidDistribution (negative,
  /// non-finite, duplicated, or all-zero mass).
  TokenDistribution(TokenKind kind, std::initializer_list<std::pair<ReflectiveToken, double>> probs);

  /// Same, keyed by surface form (the wire representation).
  static TokenDistribution from_surface_map(TokenKind kind, const std::map<std::string, double>& probs);

  TokenKind kind() const noexcept { return kind_; }
  double prob(const ReflectiveToken& token) const;   // WrongKind on mismatch
  double prob_at(std::size_t ordinal) const { return probs_.at(ordinal); }
  std::size_t size() const noexcept { return vocabulary_size(kind_); }
  /// Highest-probability value (lowest ordinal on ties).
  ReflectiveToken argmax() const;

  friend bool operator==(const TokenDistribution&, const TokenDistribution&) = default;

 private:
  TokenDistribution(TokenKind kind, const std::array<std::optional<double>, 5>& raw);

  TokenKind kind_;
  std::array<double, 5> probs_{};
};

nlohmann::ordered_json distribution_to_json(const TokenDistribution& d);
/// Throws Error(ProtocolViolation) for unknown kinds or surface forms.
TokenDistribution distribution_from_json(const nlohmann::json& j);

double score_rel(const TokenDistribution& d);
double score_sup(const TokenDistribution& d);
double score_use(const TokenDistribution& d);

struct CritiqueWeights {
  double w_rel = 1.0;
  double w_sup = 1.0;
  double w_use = 1.0;
  friend bool operator==(const CritiqueWeights&, const CritiqueWeights&) = default;
};

double score_critique(double s_rel, double s_sup, double s_use, const CritiqueWeights& w) noexcept;

/// Weighted sum over the components that are present.
double score_critique(std::optional<double> s_rel, std::optional<double> s_sup,
                      std::optional<double> s_use, const CritiqueWeights& w) noexcept;

double combined_score(double lm_logprob_mean, double critique, double lambda_lm) noexcept;

struct AdaptiveGateConfig {
  double delta = 0.2;
  void validate() const;
  friend bool operator==(const AdaptiveGateConfig&, const AdaptiveGateConfig&) = default;
};

enum class GateDecision { Retrieve, NoRetrieve };

std::string_view to_string(GateDecision d) noexcept;
std::optional<GateDecision> parse_gate_decision(std::string_view s) noexcept;

/// p(Retrieval) / (p(Retrieval) + p(No Retrieval)). DegenerateDistribution when
/// the denominator is zero.
double retrieval_ratio(const TokenDistribution& d);

GateDecision adaptive_gate(const TokenDistribution& d, const AdaptiveGateConfig& cfg);

struct ScoringConfig {
  CritiqueWeights weights;
  AdaptiveGateConfig gate;
  double lambda_lm = 1.0;

  void validate() const;
  friend bool operator==(const ScoringConfig&, const ScoringConfig&) = default;
};

/// `{"weights": {"rel", "sup", "use"}, "delta", "lambda_lm"}`; missing keys keep
/// defaults, unknown keys raise InvalidConfig.
ScoringConfig scoring_config_from_json(const nlohmann::json& j, ScoringConfig base = {});
nlohmann::ordered_json scoring_config_to_json(const ScoringConfig& cfg);

struct CandidateScore {
  std::optional<double> s_rel;
  std::optional<double> s_sup;
  std::optional<double> s_use;
  double critique = 0.0;
  double lm_logprob_mean = 0.0;
  double combined = 0.0;

  friend bool operator==(const CandidateScore&, const CandidateScore&) = default;
};

/// Scores a candidate from whichever distributions it carries.
CandidateScore score_candidate(const TokenDistribution* rel, const TokenDistribution* sup,
                               const TokenDistribution* use, double lm_logprob_mean,
                               const ScoringConfig& cfg);

}  // namespace rrag
