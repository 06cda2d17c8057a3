#include "anchor/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <limits>

namespace anchor {

namespace {

constexpr std::string_view kQuestionSlot = "{question}";
constexpr std::string_view kSystemSlot = "{system}";

std::string fill_system(std::string_view text, const std::string& system) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto hit = text.find(kSystemSlot, pos);
    if (hit == std::string_view::npos) break;
    out.append(text.substr(pos, hit - pos));
    out += system;
    pos = hit + kSystemSlot.size();
  }
  out.append(text.substr(pos));
  return out;
}

struct SplitTemplate {
  std::string prefix;
  std::string suffix;
};

SplitTemplate split(const PromptParts& parts, const PromptTemplate& tmpl) {
  const std::string_view text = tmpl.text;
  const auto first = text.find(kQuestionSlot);
  if (first == std::string_view::npos) throw TemplateError("prompt template has no {question} placeholder");
  if (text.find(kQuestionSlot, first + 1) != std::string_view::npos) {
    throw TemplateError("prompt template has more than one {question} placeholder");
  }
  return {fill_system(text.substr(0, first), parts.system_text),
          fill_system(text.substr(first + kQuestionSlot.size()), parts.system_text)};
}

}  // namespace

std::string render_text(const PromptParts& parts, const PromptTemplate& tmpl) {
  auto [prefix, suffix] = split(parts, tmpl);
  return prefix + parts.question_text + suffix;
}

AssembledPrompt assemble_prompt(const PromptParts& parts, const PromptTemplate& tmpl,
                                const ModelBackend& backend) {
  if (parts.question_text.empty()) throw ContractViolation("prompt question is empty");
  const auto [prefix, suffix] = split(parts, tmpl);
  AssembledPrompt out;
  if (!prefix.empty()) out.tokens = backend.tokenize(prefix);
  const auto question = backend.tokenize(parts.question_text);
  out.question = {out.tokens.size(), out.tokens.size() + question.size()};
  out.tokens.insert(out.tokens.end(), question.begin(), question.end());
  if (!suffix.empty()) {
    const auto tail = backend.tokenize(suffix);
    out.tokens.insert(out.tokens.end(), tail.begin(), tail.end());
  }
  return out;
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::preamble: return "preamble";
    case Phase::plan_key: return "plan_key";
    case Phase::reason_value: return "reason_value";
    case Phase::final_answer: return "final_answer";
    case Phase::done: return "done";
  }
  return "preamble";
}

Phase parse_phase(std::string_view s) {
  for (auto p : {Phase::preamble, Phase::plan_key, Phase::reason_value, Phase::final_answer, Phase::done}) {
    if (to_string(p) == s) return p;
  }
  throw LoadError("unknown phase '" + std::string(s) + "'");
}

std::string_view to_string(TraceStatus status) {
  switch (status) {
    case TraceStatus::answered: return "answered";
    case TraceStatus::no_answer: return "no_answer";
    case TraceStatus::truncated: return "truncated";
    case TraceStatus::backend_error: return "backend_error";
  }
  return "no_answer";
}

TraceStatus parse_trace_status(std::string_view s) {
  for (auto st : {TraceStatus::answered, TraceStatus::no_answer, TraceStatus::truncated,
                  TraceStatus::backend_error}) {
    if (to_string(st) == s) return st;
  }
  throw LoadError("unknown trace status '" + std::string(s) + "'");
}

AnchorSet current_anchors(const SessionState& state, AnchorMode mode) {
  if (mode == AnchorMode::none) return {};
  std::vector<TokenSpan> spans{state.question};
  if (state.phase == Phase::reason_value && state.in_segment && !state.plan_spans.empty()) {
    if (mode == AnchorMode::question_plus_current_plan) {
      spans.push_back(state.plan_spans.back());
    } else if (mode == AnchorMode::question_plus_all_plans) {
      spans.insert(spans.end(), state.plan_spans.begin(), state.plan_spans.end());
    }
  }
  return AnchorSet(std::move(spans));
}

double step_strength(const StepRecord* previous, const SteeringConfig& config) {
  if (previous == nullptr || previous->chosen_probs.empty()) return config.omega_base;
  return effective_strength(config.omega_base, aggregate_confidence(previous->chosen_probs, config.mean_kind));
}

namespace {

class Session {
 public:
  Session(const SteeringConfig& config, const ModelBackend& backend, const GenerateOptions& options,
          Trace& trace)
      : config_(config), backend_(backend), options_(options), trace_(trace), rng_(config.selection.seed) {}

  void run(const AssembledPrompt& prompt, std::optional<TokenId> mask, TokenId eos);

 private:
  enum class Stop { none, answered, closed, eos, budget };

  void on_event(const SegmentEvent& ev);
  std::string next_piece();
  TokenSpan tokens_overlapping(const CharSpan& chars) const;
  ConfidenceWindow window_for(const TokenSpan& relative) const;
  void record(Phase phase, std::size_t index, const SegmentEvent& ev);
  void refresh_anchors();
  bool steering_on() const { return config_.anchor_mode != AnchorMode::none; }

  const SteeringConfig& config_;
  const ModelBackend& backend_;
  const GenerateOptions& options_;
  Trace& trace_;
  std::mt19937_64 rng_;

  std::vector<TokenId> original_;
  std::vector<TokenId> masked_;
  TokenId mask_ = 0;
  std::size_t prompt_len_ = 0;
  SessionState state_;
  AnchorSet anchors_;
  double omega_ = 1.0;
  StreamSegmenter segmenter_;

  std::vector<std::size_t> piece_start_;
  std::vector<std::size_t> piece_end_;

  // segment currently being generated
  AnchorSet open_anchors_;
  double open_omega_ = 1.0;
  std::size_t plan_count_ = 0;
  Stop stop_ = Stop::none;
};

std::string Session::next_piece() {
  // Decode a short window with and without the newest token and take the
  // difference, so tokenizers whose pieces depend on their left neighbour
  // still stream the right characters.
  const std::span<const TokenId> gen(trace_.generated);
  const std::size_t n = gen.size();
  const std::size_t start = n > 5 ? n - 5 : 0;
  const auto before = backend_.detokenize(gen.subspan(start, n - 1 - start));
  const auto after = backend_.detokenize(gen.subspan(start));
  if (after.size() >= before.size() && after.compare(0, before.size(), before) == 0) {
    return after.substr(before.size());
  }
  return backend_.detokenize(gen.subspan(n - 1));
}

TokenSpan Session::tokens_overlapping(const CharSpan& chars) const {
  if (piece_end_.empty()) return {};
  std::size_t first = 0;
  std::size_t last = 0;
  if (chars.start == chars.end) {
    // empty content: the token carrying the closing delimiter
    auto it = std::upper_bound(piece_end_.begin(), piece_end_.end(), chars.start);
    first = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - piece_end_.begin(),
                                                              static_cast<std::ptrdiff_t>(piece_end_.size()) - 1));
    last = first;
  } else {
    auto lo = std::upper_bound(piece_end_.begin(), piece_end_.end(), chars.start);
    auto hi = std::lower_bound(piece_start_.begin(), piece_start_.end(), chars.end);
    first = static_cast<std::size_t>(lo - piece_end_.begin());
    last = static_cast<std::size_t>(hi - piece_start_.begin()) - 1;
  }
  return {first, last + 1};
}

ConfidenceWindow Session::window_for(const TokenSpan& relative) const {
  ConfidenceWindow w;
  for (std::size_t k = relative.start; k < relative.end && k < trace_.generated_probs.size(); ++k) {
    w.probs.push_back(trace_.generated_probs[k]);
  }
  return w;
}

void Session::record(Phase phase, std::size_t index, const SegmentEvent& ev) {
  const auto rel = tokens_overlapping(ev.span);
  StepRecord step;
  step.index = index;
  step.phase = phase;
  step.text = ev.text;
  step.token_span = {prompt_len_ + rel.start, prompt_len_ + rel.end};
  step.chosen_probs = window_for(rel);
  step.omega_used = open_omega_;
  step.anchors = open_anchors_;
  trace_.steps.push_back(std::move(step));
  state_.in_segment = false;
  if (steering_on()) omega_ = step_strength(&trace_.steps.back(), config_);
}

void Session::on_event(const SegmentEvent& ev) {
  switch (ev.kind) {
    case SegmentKind::PlanKeyStart:
      state_.phase = Phase::plan_key;
      state_.in_segment = true;
      open_anchors_ = current_anchors(state_, config_.anchor_mode);
      open_omega_ = omega_;
      break;
    case SegmentKind::PlanKeyEnd:
      if (plan_count_ + 1 > config_.budget.max_steps) {
        stop_ = Stop::budget;
        return;
      }
      record(Phase::plan_key, ++plan_count_, ev);
      state_.plan_spans.push_back(trace_.steps.back().token_span);
      break;
    case SegmentKind::ReasonValueStart:
      state_.phase = Phase::reason_value;
      state_.in_segment = true;
      open_anchors_ = current_anchors(state_, config_.anchor_mode);
      open_omega_ = omega_;
      break;
    case SegmentKind::ReasonValueEnd:
      record(Phase::reason_value, plan_count_, ev);
      break;
    case SegmentKind::FinalAnswerKeySeen:
      state_.phase = Phase::final_answer;
      state_.in_segment = true;
      open_anchors_ = current_anchors(state_, config_.anchor_mode);
      open_omega_ = omega_;
      break;
    case SegmentKind::FinalAnswerValueEnd:
      record(Phase::final_answer, plan_count_ + 1, ev);
      trace_.final_answer = ev.text;
      state_.phase = Phase::done;
      stop_ = Stop::answered;
      break;
    case SegmentKind::ObjectClosed:
      state_.phase = Phase::done;
      stop_ = Stop::closed;
      break;
  }
}

void Session::refresh_anchors() {
  auto next = current_anchors(state_, config_.anchor_mode);
  if (next == anchors_) return;
  anchors_ = std::move(next);
  masked_ = mask_anchor_tokens(original_, anchors_, mask_);
}

void Session::run(const AssembledPrompt& prompt, std::optional<TokenId> mask, TokenId eos) {
  original_ = prompt.tokens;
  prompt_len_ = original_.size();
  mask_ = mask.value_or(0);
  state_.question = prompt.question;
  omega_ = steering_on() ? config_.omega_base : 1.0;
  anchors_ = current_anchors(state_, config_.anchor_mode);
  masked_ = mask_anchor_tokens(original_, anchors_, mask_);

  while (stop_ == Stop::none) {
    if (trace_.generated.size() >= config_.budget.max_new_tokens) {
      stop_ = Stop::budget;
      break;
    }
    LogitVector scores = backend_.logits(original_);
    ++trace_.backend_calls;
    if (!anchors_.empty() && omega_ != 1.0) {
      const LogitVector masked_scores = backend_.logits(masked_);
      ++trace_.backend_calls;
      scores = combine_logits(scores, masked_scores, omega_);
    }
    const auto choice = select_token(scores, config_.selection, rng_);
    ++trace_.tokens_generated;
    if (choice.token == eos) {
      stop_ = Stop::eos;
      break;
    }
    trace_.generated.push_back(choice.token);
    // a sampled token can have a temperature-1 probability that underflows
    trace_.generated_probs.push_back(std::max(choice.probability, std::numeric_limits<double>::min()));
    original_.push_back(choice.token);
    masked_.push_back(choice.token);

    const auto piece = next_piece();
    piece_start_.push_back(trace_.text.size());
    trace_.text += piece;
    piece_end_.push_back(trace_.text.size());

    if (options_.structured) {
      for (const auto& ev : segmenter_.feed(piece)) {
        on_event(ev);
        if (stop_ != Stop::none) break;
      }
    }
    refresh_anchors();
    if (options_.on_token) options_.on_token({original_, masked_, anchors_, state_, omega_});
  }

  switch (stop_) {
    case Stop::answered: trace_.status = TraceStatus::answered; break;
    case Stop::budget: trace_.status = TraceStatus::truncated; break;
    default: trace_.status = TraceStatus::no_answer; break;
  }
}

}  // namespace

Trace generate(const PromptParts& parts, const SteeringConfig& config, const ModelBackend& backend,
               const GenerateOptions& options) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Trace trace;
  trace.prompt = parts;
  auto finish = [&] {
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    trace.wall_seconds = std::max(dt.count(), 1e-9);
    return trace;
  };
  auto fail = [&](const BackendError& e) {
    trace.status = TraceStatus::backend_error;
    trace.error = e.what();
    trace.final_answer.reset();
    return finish();
  };

  BackendDescriptor desc;
  AssembledPrompt prompt;
  try {
    desc = backend.descriptor();
  } catch (const BackendError& e) {
    return fail(e);
  }
  const std::optional<TokenId> mask = config.mask_token ? config.mask_token : desc.mask_token;
  if (config.anchor_mode != AnchorMode::none && !mask) {
    throw ConfigError("no mask token: backend '" + desc.name + "' declares none and none was configured");
  }
  if (mask && static_cast<std::size_t>(*mask) >= desc.vocab_size) {
    throw ConfigError("mask token " + std::to_string(*mask) + " outside vocabulary of " +
                      std::to_string(desc.vocab_size));
  }
  try {
    prompt = assemble_prompt(parts, options.prompt_template, backend);
  } catch (const BackendError& e) {
    return fail(e);
  }
  trace.prompt_tokens = prompt.tokens;
  trace.question_span = prompt.question;

  Session session(config, backend, options, trace);
  try {
    session.run(prompt, mask, desc.eos_token);
  } catch (const BackendError& e) {
    return fail(e);
  }
  return finish();
}

}  // namespace anchor
