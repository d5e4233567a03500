#include "rrag/scoring.hpp"

#include <cmath>

#include "rrag/error.hpp"

namespace rrag {
namespace {

constexpr std::array<double, 5> k_utility_weights{-1.0, -0.5, 0.0, 0.5, 1.0};

void require_kind(const TokenDistribution& d, TokenKind kind) {
  if (d.kind() != kind) {
    throw Error(ErrorCode::WrongKind, "expected " + std::string(kind_name(kind)) +
                                          " distribution, got " + std::string(kind_name(d.kind())));
  }
}

void check_probability(double p) {
  if (!std::isfinite(p) || p < 0.0) {
    throw Error(ErrorCode::InvalidDistribution, "probability " + std::to_string(p) +
                                                    " is negative or not finite");
  }
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw Error(ErrorCode::InvalidConfig, std::string(what) + " is not finite");
}

}  // namespace

TokenDistribution::TokenDistribution(TokenKind kind, const std::array<std::optional<double>, 5>& raw)
    : kind_(kind) {
  const std::size_t n = vocabulary_size(kind);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    probs_[i] = raw[i].value_or(k_probability_floor);
    total += probs_[i];
  }
  if (!(total > 0.0)) {
    throw Error(ErrorCode::InvalidDistribution,
                std::string(kind_name(kind)) + " distribution carries no probability mass");
  }
}

TokenDistribution::TokenDistribution(TokenKind kind,
                                     std::initializer_list<std::pair<ReflectiveToken, double>> probs)
    : TokenDistribution(kind, [&] {
        std::array<std::optional<double>, 5> raw;
        for (const auto& [token, p] : probs) {
          if (token.kind() != kind) {
            throw Error(ErrorCode::WrongKind, std::string(surface_form(token)) + " is not a " +
                                                  std::string(kind_name(kind)) + " token");
          }
          check_probability(p);
          if (raw[token.ordinal()]) {
            throw Error(ErrorCode::InvalidDistribution,
                        std::string(surface_form(token)) + " listed twice");
          }
          raw[token.ordinal()] = p;
        }
        return raw;
      }()) {}

TokenDistribution TokenDistribution::from_surface_map(TokenKind kind,
                                                      const std::map<std::string, double>& probs) {
  std::array<std::optional<double>, 5> raw;
  for (const auto& [surface, p] : probs) {
    auto token = parse_surface_form(surface);
    if (!token) throw Error(ErrorCode::InvalidDistribution, "unknown token '" + surface + "'");
    if (token->kind() != kind) {
      throw Error(ErrorCode::WrongKind,
                  surface + " is not a " + std::string(kind_name(kind)) + " token");
    }
    check_probability(p);
    if (raw[token->ordinal()]) {
      throw Error(ErrorCode::InvalidDistribution, surface + " listed twice");
    }
    raw[token->ordinal()] = p;
  }
  return TokenDistribution(kind, raw);
}

double TokenDistribution::prob(const ReflectiveToken& token) const {
  if (token.kind() != kind_) {
    throw Error(ErrorCode::WrongKind, std::string(surface_form(token)) + " is not a " +
                                          std::string(kind_name(kind_)) + " token");
  }
  return probs_[token.ordinal()];
}

ReflectiveToken TokenDistribution::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < size(); ++i) {
    if (probs_[i] > probs_[best]) best = i;
  }
  return *ReflectiveToken::from_ordinal(kind_, best);
}

nlohmann::ordered_json distribution_to_json(const TokenDistribution& d) {
  nlohmann::ordered_json probs = nlohmann::ordered_json::object();
  for (const auto& token : vocabulary(d.kind())) {
    probs[std::string(surface_form(token))] = d.prob(token);
  }
  return {{"kind", kind_name(d.kind())}, {"probs", std::move(probs)}};
}

TokenDistribution distribution_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ProtocolViolation, "distribution is not an object");
  auto kind_it = j.find("kind");
  auto probs_it = j.find("probs");
  if (kind_it == j.end() || !kind_it->is_string() || probs_it == j.end() || !probs_it->is_object()) {
    throw Error(ErrorCode::ProtocolViolation, "distribution needs 'kind' and 'probs'");
  }
  auto kind = parse_kind_name(kind_it->get<std::string>());
  if (!kind) {
    throw Error(ErrorCode::ProtocolViolation, "unknown kind '" + kind_it->get<std::string>() + "'");
  }
  std::map<std::string, double> probs;
  for (const auto& [key, value] : probs_it->items()) {
    if (!value.is_number()) {
      throw Error(ErrorCode::ProtocolViolation, "probability for '" + key + "' is not a number");
    }
    probs[key] = value.get<double>();
  }
  try {
    return TokenDistribution::from_surface_map(*kind, probs);
  } catch (const Error& e) {
    throw Error(ErrorCode::ProtocolViolation, e.what());
  }
}

double score_rel(const TokenDistribution& d) {
  require_kind(d, TokenKind::Rel);
  const double rel = d.prob(RelValue::Relevant);
  const double irr = d.prob(RelValue::Irrelevant);
  return rel / (rel + irr);
}

double score_sup(const TokenDistribution& d) {
  require_kind(d, TokenKind::Sup);
  const double full = d.prob(SupValue::FullySupported);
  const double partial = d.prob(SupValue::PartiallySupported);
  const double none = d.prob(SupValue::NoSupport);
  return (full + 0.5 * partial) / (full + partial + none);
}

double score_use(const TokenDistribution& d) {
  require_kind(d, TokenKind::Use);
  double total = 0.0;
  for (std::size_t i = 0; i < 5; ++i) total += d.prob_at(i);
  double s = 0.0;
  for (std::size_t i = 0; i < 5; ++i) s += k_utility_weights[i] * (d.prob_at(i) / total);
  return s;
}

double score_critique(double s_rel, double s_sup, double s_use, const CritiqueWeights& w) noexcept {
  return w.w_rel * s_rel + w.w_sup * s_sup + w.w_use * s_use;
}

double score_critique(std::optional<double> s_rel, std::optional<double> s_sup,
                      std::optional<double> s_use, const CritiqueWeights& w) noexcept {
  return score_critique(s_rel.value_or(0.0), s_sup.value_or(0.0), s_use.value_or(0.0),
                        CritiqueWeights{s_rel ? w.w_rel : 0.0, s_sup ? w.w_sup : 0.0,
                                        s_use ? w.w_use : 0.0});
}

double combined_score(double lm_logprob_mean, double critique, double lambda_lm) noexcept {
  return lambda_lm * lm_logprob_mean + critique;
}

void AdaptiveGateConfig::validate() const {
  if (!(delta >= 0.0 && delta <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "delta must lie in [0, 1]");
  }
}

std::string_view to_string(GateDecision d) noexcept {
  return d == GateDecision::Retrieve ? "Retrieve" : "NoRetrieve";
}

std::optional<GateDecision> parse_gate_decision(std::string_view s) noexcept {
  if (s == "Retrieve") return GateDecision::Retrieve;
  if (s == "NoRetrieve") return GateDecision::NoRetrieve;
  return std::nullopt;
}

double retrieval_ratio(const TokenDistribution& d) {
  require_kind(d, TokenKind::Ret);
  const double yes = d.prob(RetValue::Retrieval);
  const double no = d.prob(RetValue::NoRetrieval);
  if (!(yes + no > 0.0)) {
    throw Error(ErrorCode::DegenerateDistribution,
                "RET distribution has no mass on [Retrieval] or [No Retrieval]");
  }
  return yes / (yes + no);
}

GateDecision adaptive_gate(const TokenDistribution& d, const AdaptiveGateConfig& cfg) {
  return retrieval_ratio(d) > cfg.delta ? GateDecision::Retrieve : GateDecision::NoRetrieve;
}

void ScoringConfig::validate() const {
  require_finite(weights.w_rel, "weights.rel");
  require_finite(weights.w_sup, "weights.sup");
  require_finite(weights.w_use, "weights.use");
  require_finite(lambda_lm, "lambda_lm");
  gate.validate();
}

ScoringConfig scoring_config_from_json(const nlohmann::json& j, ScoringConfig cfg) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "scoring config must be an object");
  auto number = [](const nlohmann::json& v, const std::string& key) {
    if (!v.is_number()) throw Error(ErrorCode::InvalidConfig, "'" + key + "' must be a number");
    return v.get<double>();
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "weights") {
      if (!value.is_object()) throw Error(ErrorCode::InvalidConfig, "'weights' must be an object");
      for (const auto& [wkey, wval] : value.items()) {
        if (wkey == "rel") cfg.weights.w_rel = number(wval, "weights.rel");
        else if (wkey == "sup") cfg.weights.w_sup = number(wval, "weights.sup");
        else if (wkey == "use") cfg.weights.w_use = number(wval, "weights.use");
        else throw Error(ErrorCode::InvalidConfig, "unknown key 'weights." + wkey + "'");
      }
    } else if (key == "delta") {
      cfg.gate.delta = number(value, key);
    } else if (key == "lambda_lm") {
      cfg.lambda_lm = number(value, key);
    } else {
      throw Error(ErrorCode::InvalidConfig, "unknown scoring key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

nlohmann::ordered_json scoring_config_to_json(const ScoringConfig& cfg) {
  nlohmann::ordered_json j;
  j["weights"] = {{"rel", cfg.weights.w_rel}, {"sup", cfg.weights.w_sup}, {"use", cfg.weights.w_use}};
  j["delta"] = cfg.gate.delta;
  j["lambda_lm"] = cfg.lambda_lm;
  return j;
}

CandidateScore score_candidate(const TokenDistribution* rel, const TokenDistribution* sup,
                               const TokenDistribution* use, double lm_logprob_mean,
                               const ScoringConfig& cfg) {
  CandidateScore s;
  if (rel) s.s_rel = score_rel(*rel);
  if (sup) s.s_sup = score_sup(*sup);
  if (use) s.s_use = score_use(*use);
  s.critique = score_critique(s.s_rel, s.s_sup, s.s_use, cfg.weights);
  s.lm_logprob_mean = lm_logprob_mean;
  s.combined = combined_score(lm_logprob_mean, s.critique, cfg.lambda_lm);
  return s;
}

}  // namespace rrag
