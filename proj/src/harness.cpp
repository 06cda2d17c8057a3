#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <mutex>
#include <thread>

#include "anchor/eval.hpp"

namespace anchor::eval {

namespace {

std::string safe_filename(std::string_view id) {
  std::string out;
  for (char c : id) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out.empty() ? "item" : out;
}

EvalRecord run_item(const BenchmarkItem& item, std::size_t index, const ModelBackend& backend,
                    const EvalOptions& options, const std::string& model_name) {
  auto [config, gen] = method_settings(options.method, options.steering);
  config.selection.seed = options.steering.selection.seed + index;
  gen.prompt_template = method_template(options.method);

  const Trace trace = generate(render_prompt(item, options.method), config, backend, gen);

  EvalRecord r;
  r.item_id = item.id;
  r.method = std::string(to_string(options.method));
  r.model_name = model_name;
  r.prediction_raw = trace.text;
  r.prediction_norm = extract_answer(trace.text, item.task_kind);
  if (!r.prediction_norm && trace.final_answer) r.prediction_norm = normalize_answer(*trace.final_answer, item.task_kind);
  r.correct = score(r.prediction_norm, item.gold, item.task_kind);
  r.tokens_generated = trace.tokens_generated;
  r.wall_seconds = trace.wall_seconds;
  r.chain_length = chain_length(trace.text);
  r.suite = item.suite;
  r.status = std::string(to_string(trace.status));
  if (options.method == Method::self_anchor || options.method == Method::self_anchor_no_steer) {
    r.mean_kind = std::string(to_string(config.mean_kind));
  }
  if (options.trace_dir) {
    const auto path = *options.trace_dir / (safe_filename(item.id) + ".json");
    std::ofstream out(path);
    out << trace_to_json(trace) << '\n';
    if (!out) throw std::runtime_error("cannot write trace " + path.string());
    r.trace_ref = path.string();
  }
  return r;
}

}  // namespace

std::pair<SteeringConfig, GenerateOptions> method_settings(Method method, const SteeringConfig& base) {
  SteeringConfig config = base;
  GenerateOptions gen;
  switch (method) {
    case Method::self_anchor:
      break;
    case Method::self_anchor_no_steer:
      config.anchor_mode = AnchorMode::none;
      break;
    case Method::cot:
    case Method::ps_plus:
    case Method::re2:
      config.anchor_mode = AnchorMode::none;
      gen.structured = false;
      break;
  }
  return {config, gen};
}

EvalOutcome evaluate(std::span<const BenchmarkItem> items, const ModelBackend& backend,
                     const EvalOptions& options) {
  options.steering.validate();
  if (options.trace_dir) std::filesystem::create_directories(*options.trace_dir);
  std::string model_name = "unknown";
  try {
    model_name = backend.descriptor().name;
  } catch (const BackendError&) {
    // every item will report backend_error on its own
  }

  EvalOutcome outcome;
  outcome.records.resize(items.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      try {
        outcome.records[i] = run_item(items[i], i, backend, options, model_name);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = items.size();
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, std::max<std::size_t>(items.size(), 1));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  for (const auto& r : outcome.records) {
    if (r.status == to_string(TraceStatus::backend_error)) ++outcome.backend_errors;
  }
  return outcome;
}

}  // namespace anchor::eval
