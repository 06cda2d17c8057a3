#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace anchor {

/// Byte range [start, end) in the generated text stream.
struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

enum class SegmentKind {
  PlanKeyStart,
  PlanKeyEnd,
  ReasonValueStart,
  ReasonValueEnd,
  FinalAnswerKeySeen,
  FinalAnswerValueEnd,
  ObjectClosed,
};

std::string_view to_string(SegmentKind kind);

/// One boundary in the streamed output. For *Start events `span` is empty and
/// begins at the first content byte; for *End, FinalAnswerKeySeen and
/// FinalAnswerValueEnd it covers the content (string contents exclude the
/// quotes) and `text` is the decoded content. ObjectClosed carries the
/// position of the closing brace.
struct SegmentEvent {
  SegmentKind kind;
  CharSpan span;
  std::string text;
  friend bool operator==(const SegmentEvent&, const SegmentEvent&) = default;
};

/// True when `key` reads "final answer" ignoring ASCII case and runs of whitespace.
bool is_final_answer_key(std::string_view key);

/// Incremental recognizer for the plan/reason JSON output format: a top-level
/// object whose keys are plan steps and whose values are their reasoning.
/// Anything before the first '{' is ignored. Malformed input never throws;
/// unterminated constructs just never produce their End event.
class StreamSegmenter {
 public:
  std::vector<SegmentEvent> feed(std::string_view chunk);

  std::size_t consumed() const { return pos_; }
  bool closed() const { return state_ == State::closed; }

 private:
  enum class State {
    outside,
    expect_key,
    in_key,
    after_key,
    expect_value,
    in_string_value,
    in_composite_value,
    in_bare_value,
    after_value,
    closed,
  };

  void step(char c, std::vector<SegmentEvent>& out);
  bool string_char(char c);  // returns true when the closing quote is consumed
  void reset_string();
  void flush_escape();
  void append_code_point(std::uint32_t cp);
  void begin_value(char c, std::vector<SegmentEvent>& out);
  void end_value(std::size_t end, std::vector<SegmentEvent>& out);

  State state_ = State::outside;
  std::size_t pos_ = 0;

  // current string being decoded (key or string value)
  std::string decoded_;
  bool escape_ = false;
  std::string unicode_hex_;  // collecting \uXXXX digits
  bool in_unicode_ = false;
  std::uint32_t high_surrogate_ = 0;

  // current value
  std::size_t content_start_ = 0;
  std::string raw_;
  int depth_ = 0;
  bool nested_string_ = false;
  bool nested_escape_ = false;
  bool value_is_final_ = false;
  bool final_seen_ = false;
};

}  // namespace anchor
