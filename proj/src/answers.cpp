#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <regex>

#include "anchor/eval.hpp"

namespace anchor::eval {

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::multiple_choice: return "multiple_choice";
    case TaskKind::numeric: return "numeric";
    case TaskKind::boolean: return "boolean";
    case TaskKind::free_text: return "free_text";
  }
  return "free_text";
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::cot: return "cot";
    case Method::ps_plus: return "ps_plus";
    case Method::re2: return "re2";
    case Method::self_anchor: return "self_anchor";
    case Method::self_anchor_no_steer: return "self_anchor_no_steer";
  }
  return "cot";
}

TaskKind parse_task_kind(std::string_view s) {
  for (auto k : {TaskKind::multiple_choice, TaskKind::numeric, TaskKind::boolean, TaskKind::free_text}) {
    if (to_string(k) == s) return k;
  }
  throw LoadError("unknown task_kind '" + std::string(s) + "'");
}

Method parse_method(std::string_view s) {
  for (auto m : {Method::cot, Method::ps_plus, Method::re2, Method::self_anchor, Method::self_anchor_no_steer}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string collapse_ws(std::string_view s) {
  std::string out;
  bool gap = false;
  for (char c : trim(s)) {
    if (is_space(c)) {
      gap = true;
      continue;
    }
    if (gap) out += ' ';
    gap = false;
    out += c;
  }
  return out;
}

std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::string buf(s);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string canonical_number(double v) {
  if (v == 0.0) return "0";
  if (std::abs(v) < 1e15 && v == std::trunc(v)) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", v);
    return buf;
  }
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::optional<std::string> normalize_choice(std::string_view s) {
  std::optional<char> lower_hit;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    const bool alone = (i == 0 || !is_alpha(s[i - 1])) && (i + 1 == s.size() || !is_alpha(s[i + 1]));
    if (!alone) continue;
    if (c >= 'A' && c <= 'E') return std::string(1, c);
    if (c >= 'a' && c <= 'e' && !lower_hit) lower_hit = static_cast<char>(c - 'a' + 'A');
  }
  if (lower_hit) return std::string(1, *lower_hit);
  return std::nullopt;
}

std::optional<std::string> normalize_numeric(std::string_view s) {
  static const std::vector<std::string> currency = {"$", "€", "£", "¥", "₹"};
  std::string t(trim(s));
  for (const auto& sym : currency) {
    for (auto at = t.find(sym); at != std::string::npos; at = t.find(sym)) t.erase(at, sym.size());
  }
  std::erase(t, ',');
  t = std::string(trim(t));
  while (!t.empty() && t.back() == '.') t.pop_back();
  if (auto v = parse_number(t)) return canonical_number(*v);
  // fall back to the first number in the text, e.g. "18 apples"
  static const std::regex number(R"(-?\d+(\.\d+)?)");
  std::smatch m;
  if (std::regex_search(t, m, number)) {
    if (auto v = parse_number(m.str())) return canonical_number(*v);
  }
  return std::nullopt;
}

std::optional<std::string> normalize_boolean(std::string_view s) {
  const auto l = lower(s);
  std::size_t i = 0;
  while (i < l.size()) {
    while (i < l.size() && !is_alpha(l[i])) ++i;
    std::size_t j = i;
    while (j < l.size() && is_alpha(l[j])) ++j;
    const auto word = std::string_view(l).substr(i, j - i);
    if (word == "yes" || word == "true") return "yes";
    if (word == "no" || word == "false") return "no";
    i = j;
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> normalize_answer(std::string_view raw, TaskKind kind) {
  const auto s = trim(raw);
  if (s.empty()) return std::nullopt;
  switch (kind) {
    case TaskKind::multiple_choice: return normalize_choice(s);
    case TaskKind::numeric: return normalize_numeric(s);
    case TaskKind::boolean: return normalize_boolean(s);
    case TaskKind::free_text: {
      auto t = collapse_ws(s);
      while (!t.empty() && t.back() == '.') t.pop_back();
      if (t.empty()) return std::nullopt;
      return t;
    }
  }
  return std::nullopt;
}

std::optional<std::string> extract_answer(std::string_view text, TaskKind kind) {
  static constexpr std::string_view marker = "final answer";
  const auto l = lower(text);
  const auto at = l.rfind(marker);
  if (at == std::string::npos) return std::nullopt;

  std::size_t i = at + marker.size();
  auto skip = [&](auto pred) {
    while (i < text.size() && pred(text[i])) ++i;
  };
  auto inline_space = [](char c) { return c == ' ' || c == '\t'; };
  skip([&](char c) { return c == '"' || c == '*' || inline_space(c); });
  if (i < text.size() && text[i] == ':') ++i;
  skip([&](char c) { return c == '*' || inline_space(c); });
  if (l.compare(i, 3, "is ") == 0) {
    i += 3;
    skip(inline_space);
  }

  std::string captured;
  if (i < text.size() && text[i] == '"') {
    for (++i; i < text.size() && text[i] != '"' && text[i] != '\n'; ++i) {
      if (text[i] == '\\' && i + 1 < text.size()) {
        ++i;
        captured += text[i] == 'n' ? '\n' : text[i];
      } else {
        captured += text[i];
      }
    }
  } else {
    const auto eol = text.find('\n', i);
    captured = std::string(text.substr(i, eol == std::string_view::npos ? std::string_view::npos : eol - i));
  }
  return normalize_answer(captured, kind);
}

bool score(const std::optional<std::string>& prediction, std::string_view gold, TaskKind kind) {
  if (!prediction) return false;
  switch (kind) {
    case TaskKind::numeric: {
      const auto a = parse_number(*prediction);
      const auto b = parse_number(gold);
      if (a && b) return std::abs(*a - *b) <= 1e-6 * std::max(std::abs(*a), std::abs(*b));
      return *prediction == gold;
    }
    case TaskKind::free_text:
      return lower(*prediction) == lower(gold);
    case TaskKind::multiple_choice:
    case TaskKind::boolean:
      return *prediction == gold;
  }
  return false;
}

std::size_t chain_length(std::string_view text) {
  std::size_t n = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    if (!trim(text.substr(pos, eol - pos)).empty()) ++n;
    pos = eol + 1;
  }
  return n;
}

}  // namespace anchor::eval
