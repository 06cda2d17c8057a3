#pragma once

// Numeric core of anchored decoding: logit combination, anchor masking,
// confidence aggregation, strength modulation and token selection.
// Everything here is a pure function of its inputs.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anchor/errors.hpp"

namespace anchor {

using TokenId = std::int32_t;

template <typename Scalar>
using Logits = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using LogitVector = Logits<double>;

/// Half-open token range [start, end).
struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - start; }
  bool empty() const { return start == end; }
  bool contains(std::size_t i) const { return i >= start && i < end; }
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

/// Sorted, pairwise-disjoint set of token spans. Construction normalizes:
/// spans are sorted, empty spans dropped and overlapping or touching spans merged.
class AnchorSet {
 public:
  AnchorSet() = default;
  explicit AnchorSet(std::vector<TokenSpan> spans);

  const std::vector<TokenSpan>& spans() const { return spans_; }
  bool empty() const { return spans_.empty(); }
  bool contains(std::size_t i) const;
  friend bool operator==(const AnchorSet&, const AnchorSet&) = default;

 private:
  std::vector<TokenSpan> spans_;
};

enum class MeanKind { harmonic, geometric, arithmetic };

enum class AnchorMode { question_plus_current_plan, question_plus_all_plans, question_only, none };

std::string_view to_string(MeanKind kind);
std::string_view to_string(AnchorMode mode);
MeanKind parse_mean_kind(std::string_view s);
/// Accepts both the long names and the CLI short forms (current, all-prior, question-only, none).
AnchorMode parse_anchor_mode(std::string_view s);

/// Greedy when temperature is empty; otherwise softmax(logits / temperature) sampling.
struct SelectionPolicy {
  std::optional<double> temperature;
  std::uint64_t seed = 0;
};

struct Budget {
  std::size_t max_steps = 32;
  std::size_t max_new_tokens = 2048;
};

struct SteeringConfig {
  double omega_base = 1.5;
  MeanKind mean_kind = MeanKind::harmonic;
  AnchorMode anchor_mode = AnchorMode::question_plus_current_plan;
  std::optional<TokenId> mask_token;  // empty: use the backend-declared token
  SelectionPolicy selection;
  Budget budget;

  /// Throws ConfigError on omega_base < 0, non-finite omega, or temperature <= 0.
  void validate() const;
};

struct ConfidenceWindow {
  std::vector<double> probs;

  bool empty() const { return probs.empty(); }
  std::size_t size() const { return probs.size(); }
};

struct TokenChoice {
  TokenId token = 0;
  double probability = 0.0;
};

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& v, const char* what) {
  if (!v.allFinite()) {
    throw ContractViolation(std::string(what) + " contains non-finite values");
  }
}

}  // namespace detail

/// Steered logits: omega * original + (1 - omega) * masked.
/// omega == 1 returns an exact copy of `original`.
template <typename DerivedA, typename DerivedB>
Logits<typename DerivedA::Scalar> combine_logits(const Eigen::MatrixBase<DerivedA>& original,
                                                 const Eigen::MatrixBase<DerivedB>& masked,
                                                 typename DerivedA::Scalar omega) {
  using Scalar = typename DerivedA::Scalar;
  if (original.size() != masked.size()) {
    throw ContractViolation("combine_logits: length mismatch (" + std::to_string(original.size()) +
                            " vs " + std::to_string(masked.size()) + ")");
  }
  if (!std::isfinite(omega)) throw ContractViolation("combine_logits: omega is not finite");
  detail::require_finite(original, "original logits");
  detail::require_finite(masked, "masked logits");
  if (omega == Scalar(1)) return original;
  return omega * original + (Scalar(1) - omega) * masked;
}

/// Numerically stable softmax at the given temperature.
template <typename Derived>
Logits<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits,
                                         typename Derived::Scalar temperature = 1) {
  using Scalar = typename Derived::Scalar;
  const Scalar peak = logits.maxCoeff();
  Logits<Scalar> e = ((logits.array() - peak) / temperature).exp().matrix();
  return e / e.sum();
}

/// Replaces every token inside `anchors` with `mask`; length is preserved.
std::vector<TokenId> mask_anchor_tokens(std::span<const TokenId> tokens, const AnchorSet& anchors,
                                        TokenId mask);

/// Harmonic, geometric or arithmetic mean of a non-empty window of probabilities in (0, 1].
template <typename Scalar>
Scalar aggregate_confidence(std::span<const Scalar> probs, MeanKind kind) {
  if (probs.empty()) throw EmptyWindowError();
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Map<const Array> p(probs.data(), static_cast<Eigen::Index>(probs.size()));
  if (!p.allFinite() || (p <= Scalar(0)).any() || (p > Scalar(1)).any()) {
    throw ContractViolation("aggregate_confidence: probabilities must lie in (0, 1]");
  }
  const auto n = static_cast<Scalar>(p.size());
  Scalar mean{};
  switch (kind) {
    case MeanKind::harmonic:
      mean = n / p.inverse().sum();
      break;
    case MeanKind::geometric:
      // log-domain to avoid underflow on long windows
      mean = std::exp(p.log().sum() / n);
      break;
    case MeanKind::arithmetic:
      mean = p.sum() / n;
      break;
  }
  // rounding can push a mean of values <= 1 a hair above the largest input
  const Scalar hi = p.maxCoeff();
  const Scalar lo = p.minCoeff();
  return std::clamp(mean, lo, hi);
}

inline double aggregate_confidence(const ConfidenceWindow& window, MeanKind kind) {
  return aggregate_confidence<double>(std::span<const double>(window.probs), kind);
}

/// Step strength from base strength and step confidence: 1 + (omega_base - 1) * (1 - p_avg).
/// Full confidence disables steering, zero confidence applies omega_base.
double effective_strength(double omega_base, double p_avg);

/// Greedy (ties to the lowest id) or seeded temperature sampling. The reported
/// probability is always the temperature-1 softmax probability of the chosen id.
TokenChoice select_token(const LogitVector& logits, const SelectionPolicy& policy,
                         std::mt19937_64& rng);

/// Greedy-only convenience overload.
TokenChoice select_token(const LogitVector& logits);

}  // namespace anchor
