#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "anchor/eval.hpp"
#include "json.hpp"

namespace anchor::eval {

using nlohmann::ordered_json;

namespace {

struct Tally {
  std::size_t correct = 0;
  std::size_t n = 0;
  double accuracy() const { return static_cast<double>(correct) / static_cast<double>(n); }
};

// item -> model -> tally, with items in first-seen order
struct ItemModelTable {
  std::vector<std::string> items;
  std::map<std::string, std::map<std::string, Tally>> cells;
  std::set<std::string> models;

  explicit ItemModelTable(std::span<const EvalRecord> records) {
    for (const auto& r : records) {
      auto [it, fresh] = cells.try_emplace(r.item_id);
      if (fresh) items.push_back(r.item_id);
      auto& t = it->second[r.model_name];
      t.correct += r.correct ? 1 : 0;
      ++t.n;
      models.insert(r.model_name);
    }
  }

  // mean over the model set of per-model accuracy
  double mean_accuracy(const std::string& item) const {
    const auto& row = cells.at(item);
    double sum = 0.0;
    for (const auto& m : models) {
      auto it = row.find(m);
      if (it == row.end()) throw AnalysisError("item '" + item + "' has no records for model '" + m + "'");
      sum += it->second.accuracy();
    }
    return sum / static_cast<double>(models.size());
  }
};

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::string format_fixed2(double value) { return fixed(value, 2); }

std::vector<ItemComplexity> task_complexity(std::span<const EvalRecord> records,
                                            std::optional<std::size_t> sample, std::uint64_t seed) {
  if (records.empty()) throw AnalysisError("task complexity: no records");
  const ItemModelTable table(records);
  std::vector<std::string> items = table.items;
  if (sample && *sample < items.size()) {
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(*sample);
    std::sort(order.begin(), order.end());
    std::vector<std::string> kept;
    for (auto k : order) kept.push_back(items[k]);
    items = std::move(kept);
  }
  std::vector<ItemComplexity> out;
  for (const auto& id : items) {
    const double acc = table.mean_accuracy(id);
    out.push_back({id, acc, 1.0 - acc});
  }
  return out;
}

Distribution describe(std::vector<double> values) {
  Distribution d;
  d.count = values.size();
  if (values.empty()) return d;
  std::sort(values.begin(), values.end());
  d.min = values.front();
  d.max = values.back();
  d.q1 = quantile(values, 0.25);
  d.median = quantile(values, 0.5);
  d.q3 = quantile(values, 0.75);
  d.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  return d;
}

GainReport performance_gain(std::span<const EvalRecord> records, std::string_view method_a,
                            std::string_view method_b, std::size_t buckets) {
  if (buckets == 0) throw AnalysisError("performance gain: bucket count must be >= 1");
  std::vector<EvalRecord> rec_a, rec_b;
  for (const auto& r : records) {
    if (r.method == method_a) rec_a.push_back(r);
    if (r.method == method_b) rec_b.push_back(r);
  }
  if (rec_a.empty() || rec_b.empty()) {
    throw AnalysisError("performance gain: no records for method '" +
                        std::string(rec_a.empty() ? method_a : method_b) + "'");
  }
  const ItemModelTable table_a(rec_a), table_b(rec_b);
  const std::set<std::string> items_a(table_a.items.begin(), table_a.items.end());
  const std::set<std::string> items_b(table_b.items.begin(), table_b.items.end());
  if (items_a != items_b) {
    throw AnalysisError("performance gain: methods '" + std::string(method_a) + "' and '" +
                        std::string(method_b) + "' cover different item sets");
  }

  std::map<std::string, double> complexity;
  for (const auto& c : task_complexity(records)) complexity[c.item_id] = c.complexity;

  GainReport report{std::string(method_a), std::string(method_b), {}, {}};
  std::vector<std::vector<double>> per_bucket(buckets);
  for (const auto& id : table_a.items) {
    const double gain = table_a.mean_accuracy(id) - table_b.mean_accuracy(id);
    const double c = complexity.at(id);
    report.items.push_back({id, gain, c});
    const auto b = std::min(static_cast<std::size_t>(std::floor(c * static_cast<double>(buckets))), buckets - 1);
    per_bucket[b].push_back(gain);
  }
  for (std::size_t b = 0; b < buckets; ++b) {
    const double width = 1.0 / static_cast<double>(buckets);
    report.buckets.push_back({static_cast<double>(b) * width, static_cast<double>(b + 1) * width,
                              describe(per_bucket[b])});
  }
  return report;
}

std::vector<ThroughputRow> throughput(std::span<const EvalRecord> records) {
  std::map<std::pair<std::string, std::string>, ThroughputRow> groups;
  for (const auto& r : records) {
    auto& row = groups[{r.model_name, r.method}];
    row.model = r.model_name;
    row.method = r.method;
    row.tokens += r.tokens_generated;
    row.seconds += r.wall_seconds;
  }
  std::vector<ThroughputRow> out;
  for (auto& [key, row] : groups) {
    if (!(row.seconds > 0.0)) {
      throw AnalysisError("throughput: zero total time for " + row.model + "/" + row.method);
    }
    row.tokens_per_sec = static_cast<double>(row.tokens) / row.seconds;
    out.push_back(row);
  }
  return out;
}

SummaryReport summarize(std::span<const EvalRecord> records) {
  if (records.empty()) throw AnalysisError("summary: no records");
  struct Acc {
    std::size_t n = 0, correct = 0, chain = 0, tokens = 0;
    double seconds = 0.0;
  };
  std::map<std::tuple<std::string, std::string, std::string>, Acc> groups;
  std::set<std::string> methods;
  for (const auto& r : records) {
    auto& a = groups[{r.suite, r.method, r.model_name}];
    ++a.n;
    a.correct += r.correct ? 1 : 0;
    a.chain += r.chain_length;
    a.tokens += r.tokens_generated;
    a.seconds += r.wall_seconds;
    methods.insert(r.method);
  }
  SummaryReport report;
  for (const auto& [key, a] : groups) {
    const auto& [suite, method, model] = key;
    const double n = static_cast<double>(a.n);
    report.rows.push_back({suite, method, model, a.n, static_cast<double>(a.correct) / n,
                           static_cast<double>(a.chain) / n,
                           a.seconds > 0.0 ? static_cast<double>(a.tokens) / a.seconds : 0.0});
  }
  try {
    report.complexity = task_complexity(records);
  } catch (const AnalysisError&) {
    // models evaluated on different items: no per-item complexity
  }
  for (auto a = methods.begin(); a != methods.end(); ++a) {
    for (auto b = std::next(a); b != methods.end(); ++b) {
      try {
        report.gains.push_back(performance_gain(records, *a, *b));
      } catch (const AnalysisError&) {
      }
    }
  }
  return report;
}

std::string summary_csv(const SummaryReport& report) {
  std::ostringstream os;
  os << "suite,method,model,n,accuracy,mean_chain_length,tokens_per_sec\n";
  for (const auto& r : report.rows) {
    os << csv_field(r.suite) << ',' << csv_field(r.method) << ',' << csv_field(r.model) << ',' << r.n << ','
       << fixed(r.accuracy, 4) << ',' << fixed(r.mean_chain_length, 2) << ',' << format_fixed2(r.tokens_per_sec)
       << '\n';
  }
  return os.str();
}

void write_summary_csv(const std::filesystem::path& path, const SummaryReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << summary_csv(report);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_summary_json(const std::filesystem::path& path, const SummaryReport& report) {
  ordered_json j;
  j["rows"] = ordered_json::array();
  for (const auto& r : report.rows) {
    j["rows"].push_back({{"suite", r.suite},
                         {"method", r.method},
                         {"model", r.model},
                         {"n", r.n},
                         {"accuracy", r.accuracy},
                         {"mean_chain_length", r.mean_chain_length},
                         {"tokens_per_sec", r.tokens_per_sec}});
  }
  j["complexity"] = ordered_json::array();
  for (const auto& c : report.complexity) {
    j["complexity"].push_back({{"item_id", c.item_id}, {"mean_accuracy", c.mean_accuracy}, {"complexity", c.complexity}});
  }
  j["gains"] = ordered_json::array();
  for (const auto& g : report.gains) {
    ordered_json items = ordered_json::array();
    for (const auto& i : g.items) items.push_back({{"item_id", i.item_id}, {"gain", i.gain}, {"complexity", i.complexity}});
    ordered_json buckets = ordered_json::array();
    for (const auto& b : g.buckets) {
      buckets.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.gains.count}, {"min", b.gains.min},
                         {"q1", b.gains.q1}, {"median", b.gains.median}, {"q3", b.gains.q3},
                         {"mean", b.gains.mean}, {"max", b.gains.max}});
    }
    j["gains"].push_back({{"method_a", g.method_a}, {"method_b", g.method_b}, {"items", items}, {"buckets", buckets}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace anchor::eval
