#include "anchor/segmenter.hpp"

#include <cctype>

namespace anchor {

namespace {

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

bool is_hex(char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; }

constexpr std::uint32_t kReplacement = 0xFFFD;

}  // namespace

std::string_view to_string(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::PlanKeyStart: return "PlanKeyStart";
    case SegmentKind::PlanKeyEnd: return "PlanKeyEnd";
    case SegmentKind::ReasonValueStart: return "ReasonValueStart";
    case SegmentKind::ReasonValueEnd: return "ReasonValueEnd";
    case SegmentKind::FinalAnswerKeySeen: return "FinalAnswerKeySeen";
    case SegmentKind::FinalAnswerValueEnd: return "FinalAnswerValueEnd";
    case SegmentKind::ObjectClosed: return "ObjectClosed";
  }
  return "?";
}

bool is_final_answer_key(std::string_view key) {
  std::string norm;
  bool pending_space = false;
  for (char c : key) {
    if (is_ws(c)) {
      pending_space = !norm.empty();
      continue;
    }
    if (pending_space) norm += ' ';
    pending_space = false;
    norm += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return norm == "final answer";
}

std::vector<SegmentEvent> StreamSegmenter::feed(std::string_view chunk) {
  std::vector<SegmentEvent> out;
  for (char c : chunk) {
    step(c, out);
    ++pos_;
  }
  return out;
}

void StreamSegmenter::append_code_point(std::uint32_t cp) {
  if (cp < 0x80) {
    decoded_ += static_cast<char>(cp);
  } else if (cp < 0x800) {
    decoded_ += static_cast<char>(0xC0 | (cp >> 6));
    decoded_ += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    decoded_ += static_cast<char>(0xE0 | (cp >> 12));
    decoded_ += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    decoded_ += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    decoded_ += static_cast<char>(0xF0 | (cp >> 18));
    decoded_ += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    decoded_ += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    decoded_ += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

void StreamSegmenter::reset_string() {
  decoded_.clear();
  escape_ = false;
  in_unicode_ = false;
  unicode_hex_.clear();
  high_surrogate_ = 0;
}

void StreamSegmenter::flush_escape() {
  if (in_unicode_) {
    decoded_ += "\\u" + unicode_hex_;
    in_unicode_ = false;
    unicode_hex_.clear();
  }
  if (high_surrogate_) {
    append_code_point(kReplacement);
    high_surrogate_ = 0;
  }
}

bool StreamSegmenter::string_char(char c) {
  if (in_unicode_) {
    if (is_hex(c)) {
      unicode_hex_ += c;
      if (unicode_hex_.size() < 4) return false;
      const auto cp = static_cast<std::uint32_t>(std::stoul(unicode_hex_, nullptr, 16));
      in_unicode_ = false;
      unicode_hex_.clear();
      if (cp >= 0xD800 && cp <= 0xDBFF) {
        if (high_surrogate_) append_code_point(kReplacement);
        high_surrogate_ = cp;
      } else if (cp >= 0xDC00 && cp <= 0xDFFF) {
        if (high_surrogate_) {
          append_code_point(0x10000 + ((high_surrogate_ - 0xD800) << 10) + (cp - 0xDC00));
          high_surrogate_ = 0;
        } else {
          append_code_point(kReplacement);
        }
      } else {
        flush_escape();
        append_code_point(cp);
      }
      return false;
    }
    // malformed \u escape: keep it verbatim and fall through for `c`
    flush_escape();
  }
  if (escape_) {
    escape_ = false;
    if (c == 'u') {
      in_unicode_ = true;
      unicode_hex_.clear();
      return false;
    }
    flush_escape();
    switch (c) {
      case '"': decoded_ += '"'; break;
      case '\\': decoded_ += '\\'; break;
      case '/': decoded_ += '/'; break;
      case 'b': decoded_ += '\b'; break;
      case 'f': decoded_ += '\f'; break;
      case 'n': decoded_ += '\n'; break;
      case 'r': decoded_ += '\r'; break;
      case 't': decoded_ += '\t'; break;
      default:
        decoded_ += '\\';
        decoded_ += c;
    }
    return false;
  }
  if (c == '\\') {
    escape_ = true;
    return false;
  }
  flush_escape();
  if (c == '"') return true;
  decoded_ += c;
  return false;
}

void StreamSegmenter::begin_value(char c, std::vector<SegmentEvent>& out) {
  raw_.clear();
  reset_string();
  if (c == '"') {
    content_start_ = pos_ + 1;
    state_ = State::in_string_value;
  } else {
    content_start_ = pos_;
    raw_ += c;
    if (c == '{' || c == '[') {
      depth_ = 1;
      nested_string_ = false;
      nested_escape_ = false;
      state_ = State::in_composite_value;
    } else {
      state_ = State::in_bare_value;
    }
  }
  if (!value_is_final_) out.push_back({SegmentKind::ReasonValueStart, {content_start_, content_start_}, {}});
}

void StreamSegmenter::end_value(std::size_t end, std::vector<SegmentEvent>& out) {
  std::string text = state_ == State::in_string_value ? decoded_ : raw_;
  const auto kind = value_is_final_ ? SegmentKind::FinalAnswerValueEnd : SegmentKind::ReasonValueEnd;
  out.push_back({kind, {content_start_, end}, std::move(text)});
  value_is_final_ = false;
  state_ = State::after_value;
}

void StreamSegmenter::step(char c, std::vector<SegmentEvent>& out) {
  switch (state_) {
    case State::outside:
      if (c == '{') state_ = State::expect_key;
      return;

    case State::expect_key:
      if (c == '"') {
        reset_string();
        content_start_ = pos_ + 1;
        state_ = State::in_key;
        out.push_back({SegmentKind::PlanKeyStart, {content_start_, content_start_}, {}});
      } else if (c == '}') {
        state_ = State::closed;
        out.push_back({SegmentKind::ObjectClosed, {pos_, pos_ + 1}, {}});
      }
      return;

    case State::in_key:
      if (string_char(c)) {
        const CharSpan span{content_start_, pos_};
        if (!final_seen_ && is_final_answer_key(decoded_)) {
          final_seen_ = true;
          value_is_final_ = true;
          out.push_back({SegmentKind::FinalAnswerKeySeen, span, decoded_});
        } else {
          value_is_final_ = false;
          out.push_back({SegmentKind::PlanKeyEnd, span, decoded_});
        }
        state_ = State::after_key;
      }
      return;

    case State::after_key:
      if (c == ':') {
        state_ = State::expect_value;
        return;
      }
      if (is_ws(c)) return;
      // missing colon: treat the character as the start of the value
      state_ = State::expect_value;
      [[fallthrough]];

    case State::expect_value:
      if (is_ws(c)) return;
      if (c == '}') {
        state_ = State::closed;
        out.push_back({SegmentKind::ObjectClosed, {pos_, pos_ + 1}, {}});
        return;
      }
      if (c == ',') {
        value_is_final_ = false;
        state_ = State::expect_key;
        return;
      }
      begin_value(c, out);
      return;

    case State::in_string_value:
      if (string_char(c)) end_value(pos_, out);
      return;

    case State::in_composite_value:
      raw_ += c;
      if (nested_string_) {
        if (nested_escape_) {
          nested_escape_ = false;
        } else if (c == '\\') {
          nested_escape_ = true;
        } else if (c == '"') {
          nested_string_ = false;
        }
      } else if (c == '"') {
        nested_string_ = true;
      } else if (c == '{' || c == '[') {
        ++depth_;
      } else if (c == '}' || c == ']') {
        if (--depth_ == 0) end_value(pos_ + 1, out);
      }
      return;

    case State::in_bare_value:
      if (is_ws(c) || c == ',' || c == '}' || c == ']') {
        end_value(pos_, out);
        step(c, out);  // re-dispatch in after_value
        return;
      }
      raw_ += c;
      return;

    case State::after_value:
      if (c == ',') {
        state_ = State::expect_key;
      } else if (c == '}') {
        state_ = State::closed;
        out.push_back({SegmentKind::ObjectClosed, {pos_, pos_ + 1}, {}});
      }
      return;

    case State::closed:
      return;
  }
}

}  // namespace anchor
