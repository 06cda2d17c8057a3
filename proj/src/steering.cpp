#include "anchor/steering.hpp"

#include <algorithm>

namespace anchor {

AnchorSet::AnchorSet(std::vector<TokenSpan> spans) {
  for (const auto& s : spans) {
    if (s.start > s.end) throw ContractViolation("TokenSpan start > end");
  }
  std::erase_if(spans, [](const TokenSpan& s) { return s.empty(); });
  std::sort(spans.begin(), spans.end(),
            [](const TokenSpan& a, const TokenSpan& b) { return a.start < b.start; });
  for (const auto& s : spans) {
    if (!spans_.empty() && s.start <= spans_.back().end) {
      spans_.back().end = std::max(spans_.back().end, s.end);
    } else {
      spans_.push_back(s);
    }
  }
}

bool AnchorSet::contains(std::size_t i) const {
  auto it = std::upper_bound(spans_.begin(), spans_.end(), i,
                             [](std::size_t v, const TokenSpan& s) { return v < s.start; });
  return it != spans_.begin() && std::prev(it)->contains(i);
}

std::string_view to_string(MeanKind kind) {
  switch (kind) {
    case MeanKind::harmonic: return "harmonic";
    case MeanKind::geometric: return "geometric";
    case MeanKind::arithmetic: return "arithmetic";
  }
  return "harmonic";
}

std::string_view to_string(AnchorMode mode) {
  switch (mode) {
    case AnchorMode::question_plus_current_plan: return "question_plus_current_plan";
    case AnchorMode::question_plus_all_plans: return "question_plus_all_plans";
    case AnchorMode::question_only: return "question_only";
    case AnchorMode::none: return "none";
  }
  return "none";
}

MeanKind parse_mean_kind(std::string_view s) {
  if (s == "harmonic") return MeanKind::harmonic;
  if (s == "geometric") return MeanKind::geometric;
  if (s == "arithmetic") return MeanKind::arithmetic;
  throw ConfigError("unknown mean kind '" + std::string(s) + "'");
}

AnchorMode parse_anchor_mode(std::string_view s) {
  if (s == "current" || s == "question_plus_current_plan") return AnchorMode::question_plus_current_plan;
  if (s == "all-prior" || s == "question_plus_all_plans") return AnchorMode::question_plus_all_plans;
  if (s == "question-only" || s == "question_only") return AnchorMode::question_only;
  if (s == "none") return AnchorMode::none;
  throw ConfigError("unknown anchor mode '" + std::string(s) + "'");
}

void SteeringConfig::validate() const {
  if (!std::isfinite(omega_base) || omega_base < 0.0) {
    throw ConfigError("omega must be a finite value >= 0");
  }
  if (selection.temperature && !(*selection.temperature > 0.0 && std::isfinite(*selection.temperature))) {
    throw ConfigError("temperature must be > 0");
  }
  if (mask_token && *mask_token < 0) throw ConfigError("mask token must be non-negative");
}

std::vector<TokenId> mask_anchor_tokens(std::span<const TokenId> tokens, const AnchorSet& anchors,
                                        TokenId mask) {
  std::vector<TokenId> out(tokens.begin(), tokens.end());
  for (const auto& span : anchors.spans()) {
    if (span.end > out.size()) {
      throw ContractViolation("anchor span [" + std::to_string(span.start) + ", " +
                              std::to_string(span.end) + ") exceeds buffer of " +
                              std::to_string(out.size()) + " tokens");
    }
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(span.start),
              out.begin() + static_cast<std::ptrdiff_t>(span.end), mask);
  }
  return out;
}

double effective_strength(double omega_base, double p_avg) {
  if (!std::isfinite(omega_base) || omega_base < 0.0) {
    throw ContractViolation("effective_strength: omega_base must be >= 0");
  }
  if (!(p_avg >= 0.0 && p_avg <= 1.0)) {
    throw ContractViolation("effective_strength: p_avg must lie in [0, 1]");
  }
  return 1.0 + (omega_base - 1.0) * (1.0 - p_avg);
}

namespace {

Eigen::Index greedy_index(const LogitVector& logits) {
  // maxCoeff does not promise which index it returns on ties
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < logits.size(); ++k) {
    if (logits[k] > logits[best]) best = k;
  }
  return best;
}

}  // namespace

TokenChoice select_token(const LogitVector& logits, const SelectionPolicy& policy,
                         std::mt19937_64& rng) {
  if (logits.size() == 0) throw ContractViolation("select_token: empty logit vector");
  detail::require_finite(logits, "logits");

  Eigen::Index chosen = 0;
  if (!policy.temperature) {
    chosen = greedy_index(logits);
  } else {
    if (!(*policy.temperature > 0.0)) throw ContractViolation("select_token: temperature must be > 0");
    const LogitVector probs = softmax(logits, *policy.temperature);
    // 53 random bits -> [0, 1), identical on every standard library
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    double acc = 0.0;
    chosen = probs.size() - 1;
    for (Eigen::Index k = 0; k < probs.size(); ++k) {
      acc += probs[k];
      if (u < acc) {
        chosen = k;
        break;
      }
    }
    // never land on a zero-probability tail entry through rounding
    while (chosen > 0 && probs[chosen] == 0.0) --chosen;
  }
  const LogitVector p1 = softmax(logits);
  return {static_cast<TokenId>(chosen), p1[chosen]};
}

TokenChoice select_token(const LogitVector& logits) {
  std::mt19937_64 unused(0);
  return select_token(logits, SelectionPolicy{}, unused);
}

}  // namespace anchor
