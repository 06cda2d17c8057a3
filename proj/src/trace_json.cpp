#include "anchor/orchestrator.hpp"
#include "json.hpp"

namespace anchor {

using nlohmann::json;
using nlohmann::ordered_json;

std::string trace_to_json(const Trace& trace, int indent) {
  ordered_json steps = ordered_json::array();
  for (const auto& s : trace.steps) {
    ordered_json step;
    step["index"] = s.index;
    step["phase"] = to_string(s.phase);
    step["text"] = s.text;
    step["token_start"] = s.token_span.start;
    step["token_end"] = s.token_span.end;
    step["probs"] = s.chosen_probs.probs;
    step["omega"] = s.omega_used;
    steps.push_back(std::move(step));
  }
  ordered_json j;
  j["prompt"] = {{"system", trace.prompt.system_text}, {"question", trace.prompt.question_text}};
  j["steps"] = std::move(steps);
  j["final_answer"] = trace.final_answer ? ordered_json(*trace.final_answer) : ordered_json(nullptr);
  j["status"] = to_string(trace.status);
  j["tokens_generated"] = trace.tokens_generated;
  j["wall_seconds"] = trace.wall_seconds;
  j["backend_calls"] = trace.backend_calls;
  // invalid UTF-8 from a remote tokenizer must not abort serialization
  return j.dump(indent, ' ', false, json::error_handler_t::replace);
}

Trace trace_from_json(std::string_view json_text) {
  Trace t;
  try {
    const auto j = json::parse(json_text);
    t.prompt.system_text = j.at("prompt").at("system").get<std::string>();
    t.prompt.question_text = j.at("prompt").at("question").get<std::string>();
    for (const auto& s : j.at("steps")) {
      StepRecord r;
      r.index = s.at("index").get<std::size_t>();
      r.phase = parse_phase(s.at("phase").get<std::string>());
      r.text = s.at("text").get<std::string>();
      r.token_span = {s.at("token_start").get<std::size_t>(), s.at("token_end").get<std::size_t>()};
      r.chosen_probs.probs = s.at("probs").get<std::vector<double>>();
      r.omega_used = s.at("omega").get<double>();
      t.steps.push_back(std::move(r));
    }
    if (!j.at("final_answer").is_null()) t.final_answer = j.at("final_answer").get<std::string>();
    t.status = parse_trace_status(j.at("status").get<std::string>());
    t.tokens_generated = j.at("tokens_generated").get<std::size_t>();
    t.wall_seconds = j.at("wall_seconds").get<double>();
    t.backend_calls = j.at("backend_calls").get<std::size_t>();
  } catch (const json::exception& e) {
    throw LoadError(std::string("trace: ") + e.what());
  }
  return t;
}

}  // namespace anchor
