#pragma once

// Benchmark harness: dataset loading, method prompts, answer extraction and
// scoring, plus the chain-length / complexity / gain / throughput analytics.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anchor/backend.hpp"
#include "anchor/orchestrator.hpp"

namespace anchor::eval {

enum class TaskKind { multiple_choice, numeric, boolean, free_text };
enum class Method { cot, ps_plus, re2, self_anchor, self_anchor_no_steer };

std::string_view to_string(TaskKind kind);
std::string_view to_string(Method method);
TaskKind parse_task_kind(std::string_view s);
/// Throws ConfigError for unknown names.
Method parse_method(std::string_view s);

struct Choice {
  std::string label;
  std::string text;
};

struct BenchmarkItem {
  std::string id;
  TaskKind task_kind = TaskKind::free_text;
  std::string question;
  std::vector<Choice> options;
  std::string gold;
  std::string suite = "default";
};

/// JSONL, one item per line; blank lines are skipped. Throws LoadError naming
/// the offending line on schema violations or duplicate ids.
std::vector<BenchmarkItem> load_dataset(const std::filesystem::path& path);
std::vector<BenchmarkItem> parse_dataset(std::istream& in);

// ---- prompts ---------------------------------------------------------------

/// The instruction every method uses to request a parseable answer.
extern const std::string_view kAnswerInstruction;

/// Problem statement as anchored: the question, followed by the lettered
/// choices for multiple-choice items.
std::string question_block(const BenchmarkItem& item);

PromptParts render_prompt(const BenchmarkItem& item, Method method);
PromptTemplate method_template(Method method);

// ---- answers ---------------------------------------------------------------

/// Normal form of a candidate answer, or nullopt when nothing usable remains.
std::optional<std::string> normalize_answer(std::string_view raw, TaskKind kind);

/// Captures the answer following the last "final answer" marker (quoted
/// string, else the rest of that line) and normalizes it.
std::optional<std::string> extract_answer(std::string_view text, TaskKind kind);

/// Exact match after normalization; numbers compare with 1e-6 relative tolerance.
bool score(const std::optional<std::string>& prediction, std::string_view gold, TaskKind kind);

/// Non-empty lines after splitting on '\n' and trimming.
std::size_t chain_length(std::string_view text);

// ---- records ---------------------------------------------------------------

struct EvalRecord {
  std::string item_id;
  std::string method;
  std::string model_name;
  std::string prediction_raw;
  std::optional<std::string> prediction_norm;
  bool correct = false;
  std::size_t tokens_generated = 0;
  double wall_seconds = 0.0;
  std::size_t chain_length = 0;
  std::optional<std::string> trace_ref;
  std::string suite = "default";
  std::optional<std::string> mean_kind;
  std::string status = "no_answer";
};

std::string record_to_json(const EvalRecord& record);
EvalRecord record_from_json(std::string_view line);
std::vector<EvalRecord> load_results(const std::filesystem::path& path);
void write_results(const std::filesystem::path& path, std::span<const EvalRecord> records);

// ---- analytics ---------------------------------------------------------------

struct ItemComplexity {
  std::string item_id;
  double mean_accuracy = 0.0;
  double complexity = 0.0;  // 1 - mean_accuracy
};

/// complexity(item) = 1 - mean over models of that model's accuracy on the
/// item. Every item must have records for every model in the set. With
/// `sample`, a seeded random subset of that many items is kept.
std::vector<ItemComplexity> task_complexity(std::span<const EvalRecord> records,
                                            std::optional<std::size_t> sample = std::nullopt,
                                            std::uint64_t seed = 0);

struct ItemGain {
  std::string item_id;
  double gain = 0.0;
  double complexity = 0.0;
};

struct Distribution {
  std::size_t count = 0;
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, mean = 0.0, max = 0.0;
};

/// Linear-interpolation quartiles; count 0 leaves every field at zero.
Distribution describe(std::vector<double> values);

struct GainBucket {
  double lo = 0.0;
  double hi = 0.0;
  Distribution gains;
};

struct GainReport {
  std::string method_a;
  std::string method_b;
  std::vector<ItemGain> items;
  std::vector<GainBucket> buckets;
};

/// Per-item accuracy difference (a - b), bucketed into `buckets` equal-width
/// complexity ranges over [0, 1]. Complexity is computed from all records
/// supplied. Throws AnalysisError when the two methods cover different items.
GainReport performance_gain(std::span<const EvalRecord> records, std::string_view method_a,
                            std::string_view method_b, std::size_t buckets = 4);

struct ThroughputRow {
  std::string model;
  std::string method;
  std::size_t tokens = 0;
  double seconds = 0.0;
  double tokens_per_sec = 0.0;
};

/// sum(tokens) / sum(seconds) per (model, method).
std::vector<ThroughputRow> throughput(std::span<const EvalRecord> records);

/// Two-decimal rendering used in every report.
std::string format_fixed2(double value);

struct SummaryRow {
  std::string suite;
  std::string method;
  std::string model;
  std::size_t n = 0;
  double accuracy = 0.0;
  double mean_chain_length = 0.0;
  double tokens_per_sec = 0.0;
};

struct SummaryReport {
  std::vector<SummaryRow> rows;              // per (suite, method, model)
  std::vector<ItemComplexity> complexity;    // empty when models cover different items
  std::vector<GainReport> gains;             // per method pair over identical item sets
};

SummaryReport summarize(std::span<const EvalRecord> records);
void write_summary_csv(const std::filesystem::path& path, const SummaryReport& report);
void write_summary_json(const std::filesystem::path& path, const SummaryReport& report);
std::string summary_csv(const SummaryReport& report);

// ---- harness -----------------------------------------------------------------

struct EvalOptions {
  Method method = Method::self_anchor;
  SteeringConfig steering;
  std::size_t jobs = 1;
  std::optional<std::filesystem::path> trace_dir;
};

struct EvalOutcome {
  std::vector<EvalRecord> records;
  std::size_t backend_errors = 0;
};

/// Generation settings a method implies on top of the user's steering config:
/// baselines and the no-steer ablation decode without anchors, and only the
/// self-anchor methods stop on the structured output.
std::pair<SteeringConfig, GenerateOptions> method_settings(Method method, const SteeringConfig& base);

/// One generation per item, up to `jobs` at a time; records keep dataset order.
/// Item i samples with seed steering.selection.seed + i.
EvalOutcome evaluate(std::span<const BenchmarkItem> items, const ModelBackend& backend,
                     const EvalOptions& options);

}  // namespace anchor::eval
