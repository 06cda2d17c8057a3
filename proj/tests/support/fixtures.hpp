#pragma once

// Builders for deterministic stub backends used across the test suites.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "anchor/backend.hpp"
#include "anchor/orchestrator.hpp"

namespace anchor::testing {

inline constexpr TokenId kMask = 0;
inline constexpr TokenId kEos = 1;

/// "<mask>", "<eos>", printable ASCII, newline, then multi-character pieces
/// that make the JSON output format cheap to spell.
inline std::vector<std::string> base_vocab() {
  std::vector<std::string> v{"<mask>", "<eos>"};
  for (char c = 32; c < 127; ++c) v.emplace_back(1, c);
  v.emplace_back("\n");
  for (const char* s : {"{\"", "\": \"", "\", \"", "\"}", "Final answer", "Step ", "plan", "because "}) {
    v.emplace_back(s);
  }
  return v;
}

inline TokenId id_of(const std::vector<std::string>& vocab, const std::string& piece) {
  auto it = std::find(vocab.begin(), vocab.end(), piece);
  if (it == vocab.end()) throw std::invalid_argument("no vocab entry '" + piece + "'");
  return static_cast<TokenId>(it - vocab.begin());
}

inline std::vector<double> one_hot(std::size_t n, TokenId hot, double margin, double rest = 0.0) {
  std::vector<double> v(n, rest);
  v[static_cast<std::size_t>(hot)] = margin;
  return v;
}

/// Turns "prompt tokens followed by a scripted continuation" into stub rules.
/// Each rule keys on the shortest suffix that separates its context from every
/// other scripted context with a different next token, so the script replays
/// no matter what happens to tokens further left (masking included).
struct ScriptBuilder {
  std::vector<std::string> vocab = base_vocab();
  double margin = 8.0;
  // random perturbation of the non-target logits, in [-noise, noise]
  double noise = 0.0;
  std::uint64_t seed = 0;

  struct Line {
    std::vector<TokenId> context;
    TokenId next;
  };
  std::vector<Line> lines;

  /// `output` is appended after `prompt`, followed by EOS.
  void script(const std::vector<TokenId>& prompt, const std::vector<TokenId>& output) {
    std::vector<TokenId> ctx = prompt;
    for (TokenId t : output) {
      lines.push_back({ctx, t});
      ctx.push_back(t);
    }
    lines.push_back({ctx, kEos});
  }

  StubFixture build(const std::string& name = "scripted") const {
    StubFixture f;
    f.vocab = vocab;
    f.mask_token = kMask;
    f.eos_token = kEos;
    f.name = name;
    f.default_logits.assign(vocab.size(), 0.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-noise, noise);

    auto common_suffix = [](const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
      const auto m = std::mismatch(a.rbegin(), a.rend(), b.rbegin(), b.rend());
      return static_cast<std::size_t>(m.first - a.rbegin());
    };
    std::vector<StubRule> rules;
    for (const auto& line : lines) {
      std::size_t len = 1;
      for (const auto& other : lines) {
        if (other.next != line.next) len = std::max(len, common_suffix(line.context, other.context) + 1);
      }
      len = std::min(len, line.context.size());
      const std::vector<TokenId> suffix(line.context.end() - static_cast<std::ptrdiff_t>(len), line.context.end());
      auto logits = one_hot(vocab.size(), line.next, margin);
      if (noise > 0.0) {
        for (std::size_t k = 0; k < logits.size(); ++k) {
          if (static_cast<TokenId>(k) != line.next) logits[k] += jitter(rng);
        }
      }
      rules.push_back({suffix, logits});
    }
    std::stable_sort(rules.begin(), rules.end(),
                     [](const StubRule& a, const StubRule& b) { return a.suffix.size() > b.suffix.size(); });
    // identical suffixes carry the same next token; keep one
    rules.erase(std::unique(rules.begin(), rules.end(),
                            [](const StubRule& a, const StubRule& b) { return a.suffix == b.suffix; }),
                rules.end());
    f.rules = std::move(rules);
    return f;
  }
};

inline StubBackend tokenizer_backend() {
  StubFixture f;
  f.vocab = base_vocab();
  f.default_logits.assign(f.vocab.size(), 0.0);
  f.mask_token = kMask;
  f.eos_token = kEos;
  return StubBackend(f);
}

/// Stub replaying `output` verbatim after the prompt built from `parts`.
inline StubFixture scripted_fixture(const PromptParts& parts, const PromptTemplate& tmpl,
                                    const std::string& output, double margin = 8.0, double noise = 0.0,
                                    std::uint64_t seed = 0) {
  const auto tok = tokenizer_backend();
  ScriptBuilder b;
  b.margin = margin;
  b.noise = noise;
  b.seed = seed;
  b.script(assemble_prompt(parts, tmpl, tok).tokens, tok.tokenize(output));
  return b.build();
}

/// Plain greedy decoding straight off the backend: argmax with ties to the
/// lowest id, stopping after EOS or `limit` tokens. EOS is not included.
inline std::vector<TokenId> greedy_decode(const ModelBackend& backend, std::vector<TokenId> context,
                                          TokenId eos, std::size_t limit) {
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < limit; ++i) {
    const LogitVector l = backend.logits(context);
    const TokenId best = static_cast<TokenId>(std::max_element(l.data(), l.data() + l.size()) - l.data());
    if (best == eos) break;
    out.push_back(best);
    context.push_back(best);
  }
  return out;
}

/// A plan/reason output with `steps` steps and a final answer.
inline std::string plan_output(std::size_t steps, const std::string& answer, std::uint64_t seed = 0) {
  static const char* const kSteps[] = {"Read the numbers", "Add them up", "Check the units", "Compare options",
                                       "Write it down"};
  static const char* const kReasons[] = {"3 + 4 = 7", "the total is 7", "so it holds", "x is \\\"odd\\\"",
                                         "then 12 / 3 = 4"};
  std::mt19937_64 rng(seed);
  std::string s = "{";
  for (std::size_t i = 0; i < steps; ++i) {
    s += "\"Step " + std::to_string(i + 1) + ": " + kSteps[rng() % 5] + "\": \"" + kReasons[rng() % 5] + "\", ";
  }
  return s + "\"Final answer\": \"" + answer + "\"}";
}

/// Hand-built backend where steering flips exactly one token.
///
/// Greedy output: {"planA": "x", "Final answer": "42"}. The plan key is
/// "plan" (p = 1) then "A" from a three-way tie (p = 1/3), so the harmonic
/// confidence of the plan step is 1/2 and ω_base = 2 gives ω = 1.5 for the
/// reason value. At its first token the original context scores x = 2,
/// y = 1.6 and the masked context (plan key masked) x = 2, y = 0.5:
/// 1.5 * 1.6 - 0.5 * 0.5 = 2.15 > 2 = 1.5 * 2 - 0.5 * 2, so y wins.
struct FlipFixture {
  StubFixture fixture;
  PromptParts parts{"Solve: ", "What is 6 times 7?"};
  PromptTemplate tmpl{"{system}{question}\n"};
  TokenId x = 0, y = 0;
  std::size_t flip_index = 0;  // position in the generated tokens
};

inline FlipFixture flip_fixture() {
  FlipFixture out;
  const auto vocab = base_vocab();
  const auto id = [&](const std::string& s) { return id_of(vocab, s); };
  const std::size_t n = vocab.size();
  constexpr double kOff = -1000.0;
  auto only = [&](std::initializer_list<std::pair<std::string, double>> hot) {
    std::vector<double> v(n, kOff);
    for (const auto& [piece, value] : hot) v[static_cast<std::size_t>(id(piece))] = value;
    return v;
  };
  const std::string colon = "\": \"";
  const std::string comma = "\", \"";
  auto& f = out.fixture;
  f.vocab = vocab;
  f.mask_token = kMask;
  f.eos_token = kEos;
  f.name = "flip";
  f.default_logits.assign(n, 0.0);
  f.rules = {
      {{id("A"), id(colon)}, only({{"x", 2.0}, {"y", 1.6}})},
      {{kMask, id(colon)}, only({{"x", 2.0}, {"y", 0.5}})},
      {{id("Final answer"), id(colon)}, only({{"4", 0.0}})},
      {{id("\n")}, only({{"{\"", 0.0}})},
      {{id("{\"")}, only({{"plan", 0.0}})},
      {{id("plan")}, only({{"A", 0.0}, {"B", 0.0}, {"C", 0.0}})},
      {{id("A")}, only({{colon, 0.0}})},
      {{id("x")}, only({{comma, 0.0}})},
      {{id("y")}, only({{comma, 0.0}})},
      {{id(comma)}, only({{"Final answer", 0.0}})},
      {{id("Final answer")}, only({{colon, 0.0}})},
      {{id("4")}, only({{"2", 0.0}})},
      {{id("2")}, only({{"\"}", 0.0}})},
      {{id("\"}")}, only({{"<eos>", 0.0}})},
  };
  out.x = id("x");
  out.y = id("y");
  out.flip_index = 4;  // {"  plan  A  ": "  x
  return out;
}

}  // namespace anchor::testing
