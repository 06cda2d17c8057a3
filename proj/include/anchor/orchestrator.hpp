#pragma once

// The anchored plan/reason generation loop.
//
// Two token buffers run in lockstep: the original context and a copy whose
// anchor tokens are replaced by the mask token. At every position the
// next-token logits of both are combined with the current step strength,
// and the chosen token is appended to both. The streamed output is
// segmented into plan keys and reason values; each completed segment
// updates the anchor set and, through its confidence, the next strength.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anchor/backend.hpp"
#include "anchor/segmenter.hpp"
#include "anchor/steering.hpp"

namespace anchor {

struct PromptParts {
  std::string system_text;
  std::string question_text;
  friend bool operator==(const PromptParts&, const PromptParts&) = default;
};

/// Prompt layout with exactly one "{question}" placeholder and any number of
/// "{system}" placeholders.
struct PromptTemplate {
  std::string text = "{system}{question}";
};

struct AssembledPrompt {
  std::vector<TokenId> tokens;
  TokenSpan question;
};

/// Renders the template to plain text.
std::string render_text(const PromptParts& parts, const PromptTemplate& tmpl);

/// Tokenizes the prefix, the question and the suffix separately and
/// concatenates them, so `question` covers exactly the question's tokens.
AssembledPrompt assemble_prompt(const PromptParts& parts, const PromptTemplate& tmpl,
                                const ModelBackend& backend);

enum class Phase { preamble, plan_key, reason_value, final_answer, done };

std::string_view to_string(Phase phase);
Phase parse_phase(std::string_view s);

struct StepRecord {
  std::size_t index = 0;
  Phase phase = Phase::plan_key;
  std::string text;
  TokenSpan token_span;  // absolute, in the original buffer
  ConfidenceWindow chosen_probs;
  double omega_used = 1.0;
  AnchorSet anchors;  // in effect when the step began; not serialized
};

enum class TraceStatus { answered, no_answer, truncated, backend_error };

std::string_view to_string(TraceStatus status);
TraceStatus parse_trace_status(std::string_view s);

struct Trace {
  PromptParts prompt;
  std::vector<StepRecord> steps;
  std::optional<std::string> final_answer;
  TraceStatus status = TraceStatus::no_answer;
  std::size_t tokens_generated = 0;
  double wall_seconds = 0.0;
  std::size_t backend_calls = 0;

  // In-memory only.
  std::vector<TokenId> prompt_tokens;
  TokenSpan question_span;
  std::vector<TokenId> generated;
  std::vector<double> generated_probs;
  std::string text;
  std::optional<std::string> error;
};

/// Serialized form: {prompt:{system,question}, steps:[{index,phase,text,
/// token_start,token_end,probs,omega}], final_answer, status,
/// tokens_generated, wall_seconds, backend_calls}.
std::string trace_to_json(const Trace& trace, int indent = 2);
Trace trace_from_json(std::string_view json_text);

struct SessionState {
  Phase phase = Phase::preamble;
  bool in_segment = false;  // false between segments: structural tokens use preamble rules
  TokenSpan question;
  std::vector<TokenSpan> plan_spans;
};

/// Anchors for the next token: {Q} outside reason values; inside reason value i
/// {Q, plan_i} (current), {Q, plan_1..plan_i} (all prior) or {Q} (question only);
/// always empty for AnchorMode::none.
AnchorSet current_anchors(const SessionState& state, AnchorMode mode);

/// ω_base without history (or with an empty window), otherwise
/// effective_strength(ω_base, mean of the previous step's probabilities).
double step_strength(const StepRecord* previous, const SteeringConfig& config);

/// Snapshot handed to GenerateOptions::on_token after each emitted token.
struct TokenObservation {
  std::span<const TokenId> original;
  std::span<const TokenId> masked;
  const AnchorSet& anchors;  // anchors for the next position
  const SessionState& state;
  double omega;  // strength for the next position
};

struct GenerateOptions {
  PromptTemplate prompt_template;
  // false: free-form output; only EOS or the token budget end generation
  bool structured = true;
  std::function<void(const TokenObservation&)> on_token;
};

/// Runs one anchored generation. Backend failures end the run with status
/// backend_error and a partial trace; configuration problems throw ConfigError.
Trace generate(const PromptParts& parts, const SteeringConfig& config, const ModelBackend& backend,
               const GenerateOptions& options = {});

}  // namespace anchor
