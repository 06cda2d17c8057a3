#include "anchor/backend.hpp"
#include "httplib.h"
#include "json.hpp"

namespace anchor {

using nlohmann::json;

namespace {

json parse_reply(const std::string& body, const std::string& path) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw BackendError(path + ": malformed JSON reply: " + e.what());
  }
}

template <typename F>
auto field(const json& j, const char* key, const std::string& path, F&& convert) {
  try {
    return convert(j.at(key));
  } catch (const json::exception& e) {
    throw BackendError(path + ": bad field '" + key + "': " + e.what());
  }
}

}  // namespace

RemoteBackend::RemoteBackend(RemoteOptions options) : options_(std::move(options)) {
  const auto& url = options_.base_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("remote backend URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  if (path_start != std::string::npos) {
    path_prefix_ = url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  }
}

std::string RemoteBackend::post(const std::string& path, const std::string& body) const {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(options_.connect_timeout);
  client.set_read_timeout(options_.read_timeout);
  if (options_.bearer_token) client.set_bearer_token_auth(*options_.bearer_token);
  auto res = client.Post(path_prefix_ + path, body, "application/json");
  if (!res) throw BackendError("POST " + path + ": " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw BackendError("POST " + path + ": HTTP " + std::to_string(res->status) + " " + res->body);
  }
  return res->body;
}

std::string RemoteBackend::get(const std::string& path) const {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(options_.connect_timeout);
  client.set_read_timeout(options_.read_timeout);
  if (options_.bearer_token) client.set_bearer_token_auth(*options_.bearer_token);
  auto res = client.Get(path_prefix_ + path);
  if (!res) throw BackendError("GET " + path + ": " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw BackendError("GET " + path + ": HTTP " + std::to_string(res->status) + " " + res->body);
  }
  return res->body;
}

BackendDescriptor RemoteBackend::descriptor() const {
  std::lock_guard lock(descriptor_mutex_);
  if (descriptor_) return *descriptor_;
  const std::string path = "/v1/descriptor";
  const auto j = parse_reply(get(path), path);
  BackendDescriptor d;
  d.vocab_size = field(j, "vocab_size", path, [](const json& v) { return v.get<std::size_t>(); });
  d.mask_token = field(j, "mask_token_id", path, [](const json& v) -> std::optional<TokenId> {
    if (v.is_null()) return std::nullopt;
    return v.get<TokenId>();
  });
  d.eos_token = field(j, "eos_token_id", path, [](const json& v) { return v.get<TokenId>(); });
  d.name = field(j, "name", path, [](const json& v) { return v.get<std::string>(); });
  if (d.vocab_size == 0) throw BackendError(path + ": vocab_size must be >= 1");
  descriptor_ = d;
  return d;
}

std::vector<TokenId> RemoteBackend::tokenize(std::string_view text) const {
  const std::string path = "/v1/tokenize";
  const auto j = parse_reply(post(path, json{{"text", text}}.dump()), path);
  return field(j, "tokens", path, [](const json& v) { return v.get<std::vector<TokenId>>(); });
}

std::string RemoteBackend::detokenize(std::span<const TokenId> tokens) const {
  const std::string path = "/v1/detokenize";
  const json body = {{"tokens", std::vector<TokenId>(tokens.begin(), tokens.end())}};
  const auto j = parse_reply(post(path, body.dump()), path);
  return field(j, "text", path, [](const json& v) { return v.get<std::string>(); });
}

LogitVector RemoteBackend::logits(std::span<const TokenId> context) const {
  const auto vocab = descriptor().vocab_size;
  for (auto id : context) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw ContractViolation("logits: token " + std::to_string(id) + " out of range");
    }
  }
  const std::string path = "/v1/logits";
  const json body = {{"tokens", std::vector<TokenId>(context.begin(), context.end())}};
  const auto j = parse_reply(post(path, body.dump()), path);
  const auto values = field(j, "logits", path, [](const json& v) { return v.get<std::vector<double>>(); });
  if (values.size() != vocab) {
    throw BackendError(path + ": expected " + std::to_string(vocab) + " logits, got " +
                       std::to_string(values.size()));
  }
  return Eigen::Map<const LogitVector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace anchor
