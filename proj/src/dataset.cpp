#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "anchor/eval.hpp"
#include "json.hpp"

namespace anchor::eval {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

std::string text_field(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return v.dump();
  throw LoadError(std::string("field '") + key + "' must be a string");
}

std::vector<Choice> parse_options(const json& j) {
  std::vector<Choice> out;
  if (!j.contains("options") || j.at("options").is_null()) return out;
  const auto& opts = j.at("options");
  if (!opts.is_array()) throw LoadError("field 'options' must be an array");
  for (std::size_t k = 0; k < opts.size(); ++k) {
    const std::string expected(1, static_cast<char>('A' + k));
    if (opts[k].is_string()) {
      out.push_back({expected, opts[k].get<std::string>()});
    } else {
      Choice c{opts[k].at("label").get<std::string>(), opts[k].at("text").get<std::string>()};
      if (c.label != expected) throw LoadError("option " + std::to_string(k) + " must be labeled " + expected);
      out.push_back(std::move(c));
    }
  }
  return out;
}

void validate(const BenchmarkItem& item) {
  if (item.id.empty()) throw LoadError("empty id");
  if (item.question.empty()) throw LoadError("empty question");
  switch (item.task_kind) {
    case TaskKind::multiple_choice: {
      if (item.options.size() < 2) throw LoadError("multiple_choice item needs at least 2 options");
      const bool known = std::any_of(item.options.begin(), item.options.end(),
                                     [&](const Choice& c) { return c.label == item.gold; });
      if (!known) throw LoadError("gold '" + item.gold + "' is not an option label");
      break;
    }
    case TaskKind::numeric:
    case TaskKind::boolean:
    case TaskKind::free_text: {
      const auto norm = normalize_answer(item.gold, item.task_kind);
      if (!norm || *norm != item.gold) {
        throw LoadError("gold '" + item.gold + "' is not in normal form for " +
                        std::string(to_string(item.task_kind)));
      }
      break;
    }
  }
}

}  // namespace

std::vector<BenchmarkItem> parse_dataset(std::istream& in) {
  std::vector<BenchmarkItem> items;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    try {
      const auto j = json::parse(line);
      if (!j.is_object()) throw LoadError("expected a JSON object");
      BenchmarkItem item;
      item.id = text_field(j, "id");
      item.task_kind = parse_task_kind(j.at("task_kind").get<std::string>());
      item.question = j.at("question").get<std::string>();
      item.options = parse_options(j);
      item.gold = text_field(j, "gold");
      if (j.contains("suite") && !j.at("suite").is_null()) item.suite = j.at("suite").get<std::string>();
      validate(item);
      if (!ids.insert(item.id).second) throw LoadError("duplicate id '" + item.id + "'");
      items.push_back(std::move(item));
    } catch (const json::exception& e) {
      throw LoadError(e.what(), lineno);
    } catch (const LoadError& e) {
      if (e.line()) throw;
      throw LoadError(e.what(), lineno);
    }
  }
  return items;
}

std::vector<BenchmarkItem> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open dataset " + path.string());
  return parse_dataset(in);
}

std::string record_to_json(const EvalRecord& r) {
  auto opt = [](const std::optional<std::string>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
  ordered_json j;
  j["item_id"] = r.item_id;
  j["method"] = r.method;
  j["model_name"] = r.model_name;
  j["prediction_raw"] = r.prediction_raw;
  j["prediction_norm"] = opt(r.prediction_norm);
  j["correct"] = r.correct;
  j["tokens_generated"] = r.tokens_generated;
  j["wall_seconds"] = r.wall_seconds;
  j["chain_length"] = r.chain_length;
  j["trace_ref"] = opt(r.trace_ref);
  j["suite"] = r.suite;
  j["mean_kind"] = opt(r.mean_kind);
  j["status"] = r.status;
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

EvalRecord record_from_json(std::string_view line) {
  auto opt = [](const json& j, const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
  };
  EvalRecord r;
  try {
    const auto j = json::parse(line);
    r.item_id = j.at("item_id").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.model_name = j.at("model_name").get<std::string>();
    r.prediction_raw = j.at("prediction_raw").get<std::string>();
    r.prediction_norm = opt(j, "prediction_norm");
    r.correct = j.at("correct").get<bool>();
    r.tokens_generated = j.at("tokens_generated").get<std::size_t>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.chain_length = j.at("chain_length").get<std::size_t>();
    r.trace_ref = opt(j, "trace_ref");
    if (auto s = opt(j, "suite")) r.suite = *s;
    r.mean_kind = opt(j, "mean_kind");
    if (auto s = opt(j, "status")) r.status = *s;
  } catch (const json::exception& e) {
    throw LoadError(e.what());
  }
  if (r.correct && !r.prediction_norm) throw LoadError("record marked correct without prediction_norm");
  if (!(r.wall_seconds > 0.0)) throw LoadError("wall_seconds must be > 0");
  return r;
}

std::vector<EvalRecord> load_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open results " + path.string());
  std::vector<EvalRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    try {
      out.push_back(record_from_json(line));
    } catch (const LoadError& e) {
      throw LoadError(path.string() + ": " + e.what(), lineno);
    }
  }
  return out;
}

void write_results(const std::filesystem::path& path, std::span<const EvalRecord> records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) out << record_to_json(r) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace anchor::eval
