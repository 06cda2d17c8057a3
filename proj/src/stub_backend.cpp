#include <algorithm>
#include <fstream>
#include <sstream>

#include "anchor/backend.hpp"
#include "json.hpp"

namespace anchor {

using nlohmann::json;

void StubFixture::validate() const {
  if (vocab.empty()) throw ContractViolation("stub fixture: vocab is empty");
  const auto n = vocab.size();
  auto check_id = [n](TokenId id, const char* what) {
    if (id < 0 || static_cast<std::size_t>(id) >= n) {
      throw ContractViolation(std::string("stub fixture: ") + what + " " + std::to_string(id) +
                              " out of range");
    }
  };
  check_id(mask_token, "mask_token");
  check_id(eos_token, "eos_token");
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < n; ++i) {
    if (vocab[i].empty()) throw ContractViolation("stub fixture: empty vocab entry " + std::to_string(i));
    if (!seen.emplace(vocab[i], i).second) {
      throw ContractViolation("stub fixture: duplicate vocab entry '" + vocab[i] + "'");
    }
  }
  if (default_logits.size() != n) throw ContractViolation("stub fixture: default_logits length != vocab size");
  for (std::size_t r = 0; r < rules.size(); ++r) {
    const auto& rule = rules[r];
    if (rule.suffix.empty()) throw ContractViolation("stub fixture: rule " + std::to_string(r) + " has empty suffix");
    if (rule.logits.size() != n) {
      throw ContractViolation("stub fixture: rule " + std::to_string(r) + " logits length != vocab size");
    }
    for (auto id : rule.suffix) check_id(id, "rule token");
  }
}

StubFixture stub_fixture_from_json(std::string_view json_text) {
  StubFixture f;
  try {
    const auto j = json::parse(json_text);
    f.vocab = j.at("vocab").get<std::vector<std::string>>();
    for (const auto& r : j.at("rules")) {
      f.rules.push_back({r.at("suffix").get<std::vector<TokenId>>(), r.at("logits").get<std::vector<double>>()});
    }
    f.default_logits = j.at("default_logits").get<std::vector<double>>();
    f.mask_token = j.at("mask_token").get<TokenId>();
    f.eos_token = j.at("eos_token").get<TokenId>();
    if (j.contains("name")) f.name = j.at("name").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("stub fixture: ") + e.what());
  }
  f.validate();
  return f;
}

StubFixture load_stub_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open stub fixture " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return stub_fixture_from_json(ss.str());
}

std::string stub_fixture_to_json(const StubFixture& f) {
  json rules = json::array();
  for (const auto& r : f.rules) rules.push_back({{"suffix", r.suffix}, {"logits", r.logits}});
  json j = {{"name", f.name},           {"vocab", f.vocab},           {"rules", rules},
            {"default_logits", f.default_logits}, {"mask_token", f.mask_token}, {"eos_token", f.eos_token}};
  return j.dump();
}

namespace {

LogitVector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const LogitVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

StubBackend::StubBackend(StubFixture fixture) : fixture_(std::move(fixture)) {
  fixture_.validate();
  for (const auto& r : fixture_.rules) rule_logits_.push_back(to_vector(r.logits));
  default_logits_ = to_vector(fixture_.default_logits);
  for (std::size_t i = 0; i < fixture_.vocab.size(); ++i) {
    by_text_.emplace(fixture_.vocab[i], static_cast<TokenId>(i));
    longest_entry_ = std::max(longest_entry_, fixture_.vocab[i].size());
  }
}

BackendDescriptor StubBackend::descriptor() const {
  return {fixture_.vocab.size(), fixture_.mask_token, fixture_.eos_token, fixture_.name};
}

std::vector<TokenId> StubBackend::tokenize(std::string_view text) const {
  std::vector<TokenId> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t len = std::min(longest_entry_, text.size() - pos);
    for (; len > 0; --len) {
      auto it = by_text_.find(std::string(text.substr(pos, len)));
      if (it != by_text_.end()) {
        out.push_back(it->second);
        break;
      }
    }
    if (len == 0) {
      throw TokenizationError("stub tokenizer: no vocab entry matches at byte " + std::to_string(pos) +
                              " ('" + std::string(text.substr(pos, 8)) + "')");
    }
    pos += len;
  }
  return out;
}

std::string StubBackend::detokenize(std::span<const TokenId> tokens) const {
  std::string out;
  for (auto id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= fixture_.vocab.size()) {
      throw ContractViolation("detokenize: token " + std::to_string(id) + " out of range");
    }
    out += fixture_.vocab[static_cast<std::size_t>(id)];
  }
  return out;
}

LogitVector StubBackend::logits(std::span<const TokenId> context) const {
  for (auto id : context) {
    if (id < 0 || static_cast<std::size_t>(id) >= fixture_.vocab.size()) {
      throw ContractViolation("logits: token " + std::to_string(id) + " out of range");
    }
  }
  for (std::size_t r = 0; r < fixture_.rules.size(); ++r) {
    const auto& suffix = fixture_.rules[r].suffix;
    if (suffix.size() <= context.size() &&
        std::equal(suffix.begin(), suffix.end(), context.end() - static_cast<std::ptrdiff_t>(suffix.size()))) {
      return rule_logits_[r];
    }
  }
  return default_logits_;
}

LogitVector CountingBackend::logits(std::span<const TokenId> context) const {
  {
    std::lock_guard lock(mutex_);
    ++calls_;
  }
  return inner_.logits(context);
}

std::size_t CountingBackend::logits_calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

}  // namespace anchor
