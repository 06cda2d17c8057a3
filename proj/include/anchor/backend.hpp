#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "anchor/steering.hpp"

namespace anchor {

struct BackendDescriptor {
  std::size_t vocab_size = 0;
  std::optional<TokenId> mask_token;
  TokenId eos_token = 0;
  std::string name;
};

/// Token-level model interface. Every call is stateless: `logits` receives the
/// full context each time. Implementations must tolerate concurrent callers.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  virtual BackendDescriptor descriptor() const = 0;
  virtual std::vector<TokenId> tokenize(std::string_view text) const = 0;
  virtual std::string detokenize(std::span<const TokenId> tokens) const = 0;
  /// Next-token scores after `context`; length equals descriptor().vocab_size.
  virtual LogitVector logits(std::span<const TokenId> context) const = 0;
};

struct StubRule {
  std::vector<TokenId> suffix;
  std::vector<double> logits;
};

struct StubFixture {
  std::vector<std::string> vocab;
  std::vector<StubRule> rules;
  std::vector<double> default_logits;
  TokenId mask_token = 0;
  TokenId eos_token = 0;
  std::string name = "stub";

  /// Throws ContractViolation when lengths, ids or vocab entries are inconsistent.
  void validate() const;
};

StubFixture load_stub_fixture(const std::filesystem::path& path);
StubFixture stub_fixture_from_json(std::string_view json_text);
std::string stub_fixture_to_json(const StubFixture& fixture);

/// Table-driven deterministic backend. The first rule whose suffix matches the
/// end of the context wins; otherwise default_logits. Tokenization is greedy
/// longest-match over the vocabulary strings.
class StubBackend final : public ModelBackend {
 public:
  explicit StubBackend(StubFixture fixture);

  BackendDescriptor descriptor() const override;
  std::vector<TokenId> tokenize(std::string_view text) const override;
  std::string detokenize(std::span<const TokenId> tokens) const override;
  LogitVector logits(std::span<const TokenId> context) const override;

  const StubFixture& fixture() const { return fixture_; }

 private:
  StubFixture fixture_;
  std::vector<LogitVector> rule_logits_;
  LogitVector default_logits_;
  std::unordered_map<std::string, TokenId> by_text_;
  std::size_t longest_entry_ = 0;
};

struct RemoteOptions {
  std::string base_url;
  std::chrono::milliseconds connect_timeout{30'000};
  std::chrono::milliseconds read_timeout{30'000};
  std::optional<std::string> bearer_token;
};

/// JSON-over-HTTP client for a model server exposing
/// /v1/tokenize, /v1/detokenize, /v1/logits and /v1/descriptor.
class RemoteBackend final : public ModelBackend {
 public:
  explicit RemoteBackend(RemoteOptions options);

  BackendDescriptor descriptor() const override;
  std::vector<TokenId> tokenize(std::string_view text) const override;
  std::string detokenize(std::span<const TokenId> tokens) const override;
  LogitVector logits(std::span<const TokenId> context) const override;

 private:
  std::string post(const std::string& path, const std::string& body) const;
  std::string get(const std::string& path) const;

  RemoteOptions options_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  mutable std::mutex descriptor_mutex_;
  mutable std::optional<BackendDescriptor> descriptor_;
};

/// Wraps a backend and counts logits requests. Thread-safe.
class CountingBackend final : public ModelBackend {
 public:
  explicit CountingBackend(const ModelBackend& inner) : inner_(inner) {}

  BackendDescriptor descriptor() const override { return inner_.descriptor(); }
  std::vector<TokenId> tokenize(std::string_view text) const override { return inner_.tokenize(text); }
  std::string detokenize(std::span<const TokenId> tokens) const override {
    return inner_.detokenize(tokens);
  }
  LogitVector logits(std::span<const TokenId> context) const override;

  std::size_t logits_calls() const;

 private:
  const ModelBackend& inner_;
  mutable std::mutex mutex_;
  mutable std::size_t calls_ = 0;
};

}  // namespace anchor
