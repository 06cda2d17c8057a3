#pragma once

// Offline reference segmentation: parses a complete document by recursive
// descent and lists the events a streaming segmenter should report, each with
// the byte position at which it becomes knowable.

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "anchor/segmenter.hpp"
#include "json.hpp"

namespace anchor::testing {

struct OracleEvent {
  SegmentEvent event;
  std::size_t emit_at;  // index of the byte whose arrival completes the event
};

class OfflineSegmenter {
 public:
  explicit OfflineSegmenter(std::string text) : s_(std::move(text)) {}

  std::vector<OracleEvent> run() {
    const auto open = s_.find('{');
    if (open == std::string::npos) return {};
    i_ = open + 1;
    ws();
    if (peek() == '}') {
      emit(SegmentKind::ObjectClosed, {i_, i_ + 1}, "", i_);
      return out_;
    }
    bool final_seen = false;
    while (true) {
      ws();
      const std::size_t q = expect('"');
      emit(SegmentKind::PlanKeyStart, {q + 1, q + 1}, "", q);
      const std::size_t close = skip_string(q);
      const std::string key = decode(q, close);
      const bool is_final = !final_seen && is_final_answer_key(key);
      final_seen = final_seen || is_final;
      emit(is_final ? SegmentKind::FinalAnswerKeySeen : SegmentKind::PlanKeyEnd, {q + 1, close}, key, close);
      ws();
      expect(':');
      ws();
      value(is_final);
      ws();
      if (peek() == ',') {
        ++i_;
        continue;
      }
      if (peek() == '}') {
        emit(SegmentKind::ObjectClosed, {i_, i_ + 1}, "", i_);
        return out_;
      }
      throw std::runtime_error("oracle: expected , or }");
    }
  }

 private:
  char peek() const {
    if (i_ >= s_.size()) throw std::runtime_error("oracle: unexpected end");
    return s_[i_];
  }
  std::size_t expect(char c) {
    if (peek() != c) throw std::runtime_error(std::string("oracle: expected ") + c);
    return i_++;
  }
  void ws() {
    while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\n' || s_[i_] == '\t' || s_[i_] == '\r')) ++i_;
  }
  // i_ at the opening quote; returns the closing quote position and moves past it
  std::size_t skip_string(std::size_t open) {
    i_ = open + 1;
    while (true) {
      const char c = peek();
      if (c == '\\') {
        i_ += 2;
      } else if (c == '"') {
        return i_++;
      } else {
        ++i_;
      }
    }
  }
  std::string decode(std::size_t open, std::size_t close) const {
    return nlohmann::json::parse(s_.substr(open, close - open + 1)).get<std::string>();
  }
  void skip_composite() {
    const char open = s_[i_++];
    const char close = open == '{' ? '}' : ']';
    while (true) {
      ws();
      if (peek() == close) {
        ++i_;
        return;
      }
      if (open == '{') {
        skip_string(i_);
        ws();
        expect(':');
        ws();
      }
      skip_any();
      ws();
      if (peek() == ',') ++i_;
    }
  }
  void skip_any() {
    const char c = peek();
    if (c == '"') {
      skip_string(i_);
    } else if (c == '{' || c == '[') {
      skip_composite();
    } else {
      while (i_ < s_.size() && std::string_view(" \t\r\n,}]").find(s_[i_]) == std::string_view::npos) ++i_;
    }
  }
  void value(bool is_final) {
    const std::size_t start = i_;
    const char c = peek();
    if (c == '"') {
      if (!is_final) emit(SegmentKind::ReasonValueStart, {start + 1, start + 1}, "", start);
      const std::size_t close = skip_string(start);
      emit(is_final ? SegmentKind::FinalAnswerValueEnd : SegmentKind::ReasonValueEnd, {start + 1, close},
           decode(start, close), close);
      return;
    }
    if (!is_final) emit(SegmentKind::ReasonValueStart, {start, start}, "", start);
    skip_any();
    const bool composite = c == '{' || c == '[';
    // composites end on their closing bracket; bare values on the delimiter after them
    const std::size_t emit_at = composite ? i_ - 1 : i_;
    emit(is_final ? SegmentKind::FinalAnswerValueEnd : SegmentKind::ReasonValueEnd, {start, i_},
         s_.substr(start, i_ - start), emit_at);
  }
  void emit(SegmentKind k, CharSpan span, std::string text, std::size_t at) {
    out_.push_back({{k, span, std::move(text)}, at});
  }

  std::string s_;
  std::size_t i_ = 0;
  std::vector<OracleEvent> out_;
};

inline std::vector<SegmentEvent> events_only(const std::vector<OracleEvent>& ev, std::size_t upto = SIZE_MAX) {
  std::vector<SegmentEvent> out;
  for (const auto& e : ev) {
    if (e.emit_at < upto) out.push_back(e.event);
  }
  return out;
}

/// Feeds `text` in chunks of the given sizes (cycled) and collects the events.
inline std::vector<SegmentEvent> stream(std::string_view text, const std::vector<std::size_t>& chunks) {
  StreamSegmenter seg;
  std::vector<SegmentEvent> out;
  std::size_t pos = 0;
  for (std::size_t k = 0; pos < text.size(); ++k) {
    const std::size_t n = std::min(chunks[k % chunks.size()], text.size() - pos);
    for (auto& e : seg.feed(text.substr(pos, n))) out.push_back(std::move(e));
    pos += n;
  }
  return out;
}

namespace detail {

inline std::string random_string_literal(std::mt19937_64& rng) {
  static const char* const kPieces[] = {"plan",     " ",      "step 2",  "\\\"q\\\"", "\\\\",     "\\n",
                                        "\\t",      "\\/",    "\\u00e9", "\\u4e2d",  "\\ud83d\\ude00",
                                        "caf\xc3\xa9", "\xe2\x82\xac", "{", "}",     ":",        ",",
                                        "[1]",      "x = 3",  "\\b\\f\\r", "\\u0041"};
  std::string s = "\"";
  const auto n = rng() % 6;
  for (std::size_t k = 0; k < n; ++k) s += kPieces[rng() % std::size(kPieces)];
  return s + "\"";
}

inline std::string random_value(std::mt19937_64& rng, int depth) {
  switch (rng() % (depth > 2 ? 3 : 5)) {
    case 0: return random_string_literal(rng);
    case 1: return std::vector<std::string>{"42", "-3.5e2", "true", "false", "null", "0"}[rng() % 6];
    case 2: return random_string_literal(rng);
    case 3: {
      std::string s = "[";
      const auto n = rng() % 4;
      for (std::size_t k = 0; k < n; ++k) s += (k ? ", " : "") + random_value(rng, depth + 1);
      return s + "]";
    }
    default: {
      std::string s = "{";
      const auto n = rng() % 3;
      for (std::size_t k = 0; k < n; ++k) {
        s += (k ? ", " : "") + random_string_literal(rng) + ": " + random_value(rng, depth + 1);
      }
      return s + "}";
    }
  }
}

}  // namespace detail

/// Valid plan/reason documents: hand-picked edge cases followed by seeded
/// random ones with escapes, non-ASCII text and nested values.
inline std::vector<std::string> valid_documents(std::size_t random_count, std::uint64_t seed) {
  std::vector<std::string> docs = {
      R"({})",
      R"(  {"Final answer": "7"})",
      R"(Sure! {"Step 1": "add", "Final answer": "7"})",
      R"({"a":"b","final   ANSWER":"x"})",
      R"({"k\"ey": "v\\al", "Final answer": "é"})",
      R"({"Step 1": {"nested": [1, {"deep": "}"}]}, "Final answer": 12})",
      R"({"Step 1": [], "Step 2": {}, "Final answer": true})",
      R"({"Step 1": "", "": "empty key", "Final answer": ""})",
      R"({"Step 1": "😀 smile", "Final answer": "中"})",
      "{\n  \"Step 1\" : \"multi\\nline\",\n  \"Final answer\" : \"B\"\n}",
      R"({"Final answer": "1", "Final answer": "2"})",
      R"({"Step 1": 3.25e-1 , "Final answer": null})",
  };
  std::mt19937_64 rng(seed);
  for (std::size_t d = 0; d < random_count; ++d) {
    std::string s = (rng() % 3 == 0) ? "Here is my plan:\n" : "";
    s += "{";
    const auto steps = rng() % 5;
    for (std::size_t k = 0; k < steps; ++k) {
      s += (k ? ", " : "") + detail::random_string_literal(rng) + (rng() % 2 ? ": " : ":") +
           detail::random_value(rng, 0);
    }
    if (rng() % 4 != 0) s += std::string(steps ? ", " : "") + "\"Final answer\": " + detail::random_value(rng, 2);
    docs.push_back(s + "}");
  }
  return docs;
}

}  // namespace anchor::testing
