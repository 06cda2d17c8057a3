#include "anchor/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "anchor/backend.hpp"
#include "anchor/eval.hpp"
#include "anchor/orchestrator.hpp"
#include "json.hpp"

namespace anchor::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Flags {
  std::string config;
  std::string backend;
  double omega = 1.5;
  std::string mean = "harmonic";
  std::string anchor_mode = "current";
  std::string method = "self_anchor";
  std::size_t max_steps = 32;
  std::size_t max_new_tokens = 2048;
  double temperature = 0.0;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string trace;
  std::string out;

  std::map<std::string, CLI::Option*> given;

  bool set(const std::string& name) const {
    auto it = given.find(name);
    return it != given.end() && it->second->count() > 0;
  }
};

void add_common_flags(CLI::App& cmd, Flags& f, bool with_method) {
  f.given["config"] = cmd.add_option("--config", f.config, "JSON file with default settings");
  f.given["backend"] = cmd.add_option("--backend", f.backend, "stub:<fixture.json> or remote:<base URL>");
  f.given["omega"] = cmd.add_option("--omega", f.omega, "base steering strength (default 1.5)");
  f.given["mean"] = cmd.add_option("--mean", f.mean, "confidence mean")
                        ->check(CLI::IsMember({"harmonic", "geometric", "arithmetic"}));
  f.given["anchor_mode"] = cmd.add_option("--anchor-mode", f.anchor_mode, "anchor selection")
                               ->check(CLI::IsMember({"current", "all-prior", "question-only", "none"}));
  if (with_method) {
    f.given["method"] = cmd.add_option("--method", f.method,
                                       "cot, ps_plus, re2, self_anchor or self_anchor_no_steer");
  }
  f.given["max_steps"] = cmd.add_option("--max-steps", f.max_steps, "plan step budget (default 32)");
  f.given["max_new_tokens"] = cmd.add_option("--max-new-tokens", f.max_new_tokens, "token budget (default 2048)");
  f.given["temperature"] = cmd.add_option("--temperature", f.temperature, "sample at this temperature (default greedy)");
  f.given["seed"] = cmd.add_option("--seed", f.seed, "random seed (default 0)");
  f.given["jobs"] = cmd.add_option("--jobs", f.jobs, "items evaluated concurrently");
  f.given["trace"] = cmd.add_option("--trace", f.trace, "trace output (file for run, directory for eval)");
  f.given["out"] = cmd.add_option("--out", f.out, "output path");
}

struct Settings {
  std::unique_ptr<ModelBackend> backend;
  std::string backend_spec;
  SteeringConfig steering;
  std::string method = "self_anchor";
  std::size_t jobs = 1;
  std::string trace;
  std::string out;
};

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    auto j = json::parse(in);
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

std::unique_ptr<ModelBackend> make_backend(const std::string& spec, const json& file) {
  if (spec.rfind("stub:", 0) == 0) {
    return std::make_unique<StubBackend>(load_stub_fixture(spec.substr(5)));
  }
  std::string url = spec.rfind("remote:", 0) == 0 ? spec.substr(7) : spec;
  if (url.rfind("http://", 0) != 0 && url.rfind("https://", 0) != 0) {
    throw ConfigError("--backend must be stub:<path> or remote:<url>, got '" + spec + "'");
  }
  RemoteOptions opts;
  opts.base_url = url;
  if (file.contains("timeout_seconds")) {
    const auto ms = std::chrono::milliseconds(static_cast<long long>(file.at("timeout_seconds").get<double>() * 1000));
    opts.connect_timeout = ms;
    opts.read_timeout = ms;
  }
  if (const char* token = std::getenv("ANCHOR_BACKEND_TOKEN")) opts.bearer_token = token;
  return std::make_unique<RemoteBackend>(std::move(opts));
}

template <typename T>
T pick(const Flags& f, const std::string& name, const T& flag_value, const json& file, const T& fallback) {
  if (f.set(name)) return flag_value;
  if (file.contains(name)) {
    try {
      return file.at(name).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + name + "': " + e.what());
    }
  }
  return fallback;
}

Settings resolve(const Flags& f) {
  const json file = f.set("config") ? load_config_file(f.config) : json::object();
  Settings s;
  s.backend_spec = pick<std::string>(f, "backend", f.backend, file, "");
  if (s.backend_spec.empty()) {
    if (const char* url = std::getenv("ANCHOR_BACKEND_URL"); url && *url) s.backend_spec = std::string("remote:") + url;
  }
  if (s.backend_spec.empty()) throw ConfigError("no backend selected: pass --backend stub:<path> or remote:<url>");

  auto& st = s.steering;
  st.omega_base = pick(f, "omega", f.omega, file, 1.5);
  st.mean_kind = parse_mean_kind(pick<std::string>(f, "mean", f.mean, file, "harmonic"));
  st.anchor_mode = parse_anchor_mode(pick<std::string>(f, "anchor_mode", f.anchor_mode, file, "current"));
  st.budget.max_steps = pick<std::size_t>(f, "max_steps", f.max_steps, file, 32);
  st.budget.max_new_tokens = pick<std::size_t>(f, "max_new_tokens", f.max_new_tokens, file, 2048);
  st.selection.seed = pick<std::uint64_t>(f, "seed", f.seed, file, 0);
  if (f.set("temperature") || file.contains("temperature")) {
    st.selection.temperature = pick(f, "temperature", f.temperature, file, 0.0);
  }
  if (file.contains("mask_token")) st.mask_token = file.at("mask_token").get<TokenId>();
  st.validate();

  s.method = pick<std::string>(f, "method", f.method, file, "self_anchor");
  eval::parse_method(s.method);
  s.jobs = pick<std::size_t>(f, "jobs", f.jobs, file, 1);
  s.trace = pick<std::string>(f, "trace", f.trace, file, "");
  s.out = pick<std::string>(f, "out", f.out, file, "");
  s.backend = make_backend(s.backend_spec, file);
  return s;
}

std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

int cmd_run(const Flags& f, const std::string& question, std::ostream& out, std::ostream& err) {
  Settings s = resolve(f);
  const auto method = eval::parse_method(s.method);
  eval::BenchmarkItem item;
  item.id = "cli";
  item.question = question;
  auto [config, gen] = eval::method_settings(method, s.steering);
  gen.prompt_template = eval::method_template(method);

  const Trace trace = generate(eval::render_prompt(item, method), config, *s.backend, gen);
  if (!s.trace.empty()) write_text(s.trace, trace_to_json(trace) + "\n");

  for (const auto& step : trace.steps) {
    out << "step " << step.index << ' ' << to_string(step.phase) << " omega=" << fmt4(step.omega_used) << ": "
        << step.text << '\n';
  }
  if (trace.status == TraceStatus::backend_error) {
    err << "backend error: " << trace.error.value_or("unknown") << '\n';
    return kBackendError;
  }
  if (trace.final_answer) {
    out << "final answer: " << *trace.final_answer << '\n';
    return kOk;
  }
  if (!gen.structured) {
    if (auto a = eval::extract_answer(trace.text, eval::TaskKind::free_text)) {
      out << "final answer: " << *a << '\n';
      return kOk;
    }
  }
  out << "no final answer (" << to_string(trace.status) << ")\n";
  return kNoAnswer;
}

struct ArmResult {
  eval::EvalOutcome outcome;
  eval::SummaryReport summary;
};

ArmResult run_eval_arm(const std::vector<eval::BenchmarkItem>& items, const Settings& s, eval::Method method,
                       const SteeringConfig& steering, const fs::path& dir, const std::string& trace_dir) {
  eval::EvalOptions opts;
  opts.method = method;
  opts.steering = steering;
  opts.jobs = s.jobs;
  if (!trace_dir.empty()) opts.trace_dir = fs::path(trace_dir);
  ArmResult arm;
  arm.outcome = eval::evaluate(items, *s.backend, opts);
  fs::create_directories(dir);
  eval::write_results(dir / "results.jsonl", arm.outcome.records);
  if (!arm.outcome.records.empty()) {
    arm.summary = eval::summarize(arm.outcome.records);
    eval::write_summary_csv(dir / "summary.csv", arm.summary);
    eval::write_summary_json(dir / "summary.json", arm.summary);
  }
  return arm;
}

int cmd_eval(const Flags& f, const std::string& dataset, std::ostream& out, std::ostream& err) {
  Settings s = resolve(f);
  const auto items = eval::load_dataset(dataset);
  const fs::path dir = s.out.empty() ? fs::path("results") : fs::path(s.out);
  auto arm = run_eval_arm(items, s, eval::parse_method(s.method), s.steering, dir, s.trace);
  out << eval::summary_csv(arm.summary);
  if (arm.outcome.backend_errors) {
    err << arm.outcome.backend_errors << " item(s) hit backend errors\n";
    return kBackendError;
  }
  return kOk;
}

int cmd_ablate_means(const Flags& f, const std::string& dataset, std::ostream& out, std::ostream& err) {
  Settings s = resolve(f);
  const auto items = eval::load_dataset(dataset);
  const fs::path dir = s.out.empty() ? fs::path("ablation") : fs::path(s.out);
  auto method = eval::parse_method(s.method);
  if (method != eval::Method::self_anchor) {
    err << "ablate-means always runs method self_anchor\n";
    method = eval::Method::self_anchor;
  }
  std::ostringstream merged;
  merged << "mean_kind,suite,method,model,n,accuracy,mean_chain_length,tokens_per_sec\n";
  std::size_t backend_errors = 0;
  for (auto kind : {MeanKind::harmonic, MeanKind::geometric, MeanKind::arithmetic}) {
    SteeringConfig steering = s.steering;
    steering.mean_kind = kind;
    const std::string name(to_string(kind));
    const std::string trace_dir = s.trace.empty() ? "" : (fs::path(s.trace) / name).string();
    auto arm = run_eval_arm(items, s, method, steering, dir / name, trace_dir);
    backend_errors += arm.outcome.backend_errors;
    std::istringstream rows(eval::summary_csv(arm.summary));
    std::string line;
    std::getline(rows, line);  // header
    while (std::getline(rows, line)) merged << name << ',' << line << '\n';
  }
  write_text(dir / "ablation_means.csv", merged.str());
  out << merged.str();
  return backend_errors ? kBackendError : kOk;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

int cmd_analyze(const std::vector<std::string>& files, const std::string& report, const std::string& methods,
                const std::string& out_path, std::optional<std::size_t> sample, std::uint64_t seed,
                std::size_t buckets, std::ostream& out) {
  std::vector<eval::EvalRecord> records;
  for (const auto& file : files) {
    auto part = eval::load_results(file);
    records.insert(records.end(), part.begin(), part.end());
  }
  std::vector<std::string> wanted = split_commas(methods);

  std::ostringstream csv;
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  if (report == "complexity") {
    std::vector<eval::EvalRecord> subset;
    for (const auto& r : records) {
      if (wanted.empty() || std::find(wanted.begin(), wanted.end(), r.method) != wanted.end()) subset.push_back(r);
    }
    csv << "item_id,mean_accuracy,complexity\n";
    for (const auto& c : eval::task_complexity(subset, sample, seed)) {
      csv << c.item_id << ',' << fmt4(c.mean_accuracy) << ',' << fmt4(c.complexity) << '\n';
      doc.push_back({{"item_id", c.item_id}, {"mean_accuracy", c.mean_accuracy}, {"complexity", c.complexity}});
    }
  } else if (report == "gains") {
    if (wanted.empty()) {
      for (const auto& r : records) {
        if (std::find(wanted.begin(), wanted.end(), r.method) == wanted.end()) wanted.push_back(r.method);
      }
    }
    if (wanted.size() != 2) throw AnalysisError("gains needs exactly two methods: --method A,B");
    const auto g = eval::performance_gain(records, wanted[0], wanted[1], buckets);
    csv << "complexity_lo,complexity_hi,count,min,q1,median,q3,mean,max\n";
    nlohmann::ordered_json items = nlohmann::ordered_json::array();
    nlohmann::ordered_json bks = nlohmann::ordered_json::array();
    for (const auto& b : g.buckets) {
      const auto& d = b.gains;
      csv << fmt4(b.lo) << ',' << fmt4(b.hi) << ',' << d.count << ',' << fmt4(d.min) << ',' << fmt4(d.q1) << ','
          << fmt4(d.median) << ',' << fmt4(d.q3) << ',' << fmt4(d.mean) << ',' << fmt4(d.max) << '\n';
      bks.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", d.count}, {"min", d.min}, {"q1", d.q1},
                     {"median", d.median}, {"q3", d.q3}, {"mean", d.mean}, {"max", d.max}});
    }
    for (const auto& i : g.items) items.push_back({{"item_id", i.item_id}, {"gain", i.gain}, {"complexity", i.complexity}});
    doc = {{"method_a", g.method_a}, {"method_b", g.method_b}, {"items", items}, {"buckets", bks}};
  } else if (report == "chains") {
    csv << "suite,method,model,n,mean_chain_length,min,median,max\n";
    std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> groups;
    for (const auto& r : records) {
      groups[{r.suite, r.method, r.model_name}].push_back(static_cast<double>(r.chain_length));
    }
    for (const auto& [key, v] : groups) {
      const auto& [suite, method, model] = key;
      const auto d = eval::describe(v);
      csv << suite << ',' << method << ',' << model << ',' << d.count << ',' << eval::format_fixed2(d.mean) << ','
          << d.min << ',' << d.median << ',' << d.max << '\n';
      doc.push_back({{"suite", suite}, {"method", method}, {"model", model}, {"n", d.count}, {"mean_chain_length", d.mean},
                     {"min", d.min}, {"median", d.median}, {"max", d.max}});
    }
  } else if (report == "throughput") {
    csv << "model,method,tokens,seconds,tokens_per_sec\n";
    for (const auto& t : eval::throughput(records)) {
      csv << t.model << ',' << t.method << ',' << t.tokens << ',' << fmt4(t.seconds) << ','
          << eval::format_fixed2(t.tokens_per_sec) << '\n';
      doc.push_back({{"model", t.model}, {"method", t.method}, {"tokens", t.tokens}, {"seconds", t.seconds},
                     {"tokens_per_sec", eval::format_fixed2(t.tokens_per_sec)}});
    }
  } else {
    throw ConfigError("unknown report '" + report + "'");
  }

  out << csv.str();
  if (!out_path.empty()) {
    const bool as_json = fs::path(out_path).extension() == ".json";
    write_text(out_path, as_json ? doc.dump(2) + "\n" : csv.str());
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Anchored plan/reason decoding and evaluation"};
  app.require_subcommand(1);

  Flags run_flags, eval_flags, ablate_flags;
  std::string question, dataset, ablate_dataset, report, analyze_methods, analyze_out;
  std::vector<std::string> result_files;
  std::size_t sample = 0, buckets = 4;
  std::uint64_t analyze_seed = 0;

  auto* run_cmd = app.add_subcommand("run", "generate an answer for one question");
  run_cmd->add_option("question", question, "problem statement")->required();
  add_common_flags(*run_cmd, run_flags, true);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a JSONL dataset with one method");
  eval_cmd->add_option("dataset", dataset, "dataset JSONL")->required();
  add_common_flags(*eval_cmd, eval_flags, true);

  auto* ablate_cmd = app.add_subcommand("ablate-means", "compare harmonic, geometric and arithmetic confidence");
  ablate_cmd->add_option("dataset", ablate_dataset, "dataset JSONL")->required();
  add_common_flags(*ablate_cmd, ablate_flags, true);

  auto* analyze_cmd = app.add_subcommand("analyze", "complexity, gain, chain-length and throughput reports");
  analyze_cmd->add_option("results", result_files, "results JSONL files")->required();
  analyze_cmd->add_option("--report", report, "report kind")
      ->required()
      ->check(CLI::IsMember({"complexity", "gains", "chains", "throughput"}));
  analyze_cmd->add_option("--method", analyze_methods, "method filter; for gains 'A,B' computes A - B");
  analyze_cmd->add_option("--out", analyze_out, "write the report here (.json for JSON, else CSV)");
  auto* sample_opt = analyze_cmd->add_option("--sample", sample, "complexity: random subset of N items");
  analyze_cmd->add_option("--seed", analyze_seed, "subsample seed (default 0)");
  analyze_cmd->add_option("--buckets", buckets, "gains: complexity buckets (default 4)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return kUsageError;
  }

  try {
    if (*run_cmd) return cmd_run(run_flags, question, out, err);
    if (*eval_cmd) return cmd_eval(eval_flags, dataset, out, err);
    if (*ablate_cmd) return cmd_ablate_means(ablate_flags, ablate_dataset, out, err);
    if (*analyze_cmd) {
      std::optional<std::size_t> n;
      if (sample_opt->count()) n = sample;
      return cmd_analyze(result_files, report, analyze_methods, analyze_out, n, analyze_seed, buckets, out);
    }
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << '\n';
    return kBackendError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n\n" << app.help();
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }
  return kUsageError;
}

}  // namespace anchor::cli
