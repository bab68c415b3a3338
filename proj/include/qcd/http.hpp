#pragma once

// HTTP clients: the logits wire protocol (v1) and the remote embedding
// endpoint. Both open one connection per request, so concurrent calls are
// independent.
//
//   GET  /v1/vocab   -> {"version": "1", "tokens": [...], "eos": "<eos>"}
//   POST /v1/logits  {"context": str, "prefix": [str...]}
//                    -> {"logits": {tok: real|null, ...}, "default": real|null}
//   POST <embedding url>  {"texts": [str...]} -> {"vectors": [[real...]...]}
//
// Errors are non-200 replies carrying {"error": str}. Transport failures and
// 5xx replies are retried; 4xx replies are not.

#include <qcd/dist.hpp>
#include <qcd/embedding.hpp>
#include <qcd/error.hpp>
#include <qcd/provider.hpp>

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qcd {

inline constexpr std::string_view kProtocolVersion = "1";
inline constexpr int kMaxRetries = 5;

struct LogitEndpointConfig {
  std::string base_url;
  std::chrono::milliseconds timeout{10000};
  int max_retries = 2;
  std::optional<std::string> auth_token;

  void validate() const {
    if (base_url.empty()) throw ConfigError("endpoint base_url is empty");
    if (timeout.count() <= 0) throw ConfigError("endpoint timeout must be > 0");
    if (max_retries < 0 || max_retries > kMaxRetries) throw ConfigError("max_retries must be in [0, 5]");
  }
};

namespace detail {

struct SplitUrl {
  std::string origin;  // scheme://host:port
  std::string path;    // always starts with '/'
};

inline SplitUrl split_url(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0)
    throw ConfigError("unsupported endpoint url '" + url + "' (expected http://host:port[/path])");
  auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

inline std::string join_path(const std::string& base, std::string_view suffix) {
  std::string out = base;
  while (!out.empty() && out.back() == '/') out.pop_back();
  out += suffix;
  return out;
}

inline std::string server_error(const httplib::Result& res) {
  std::string msg = "HTTP " + std::to_string(res->status);
  auto body = nlohmann::json::parse(res->body, nullptr, false);
  if (body.is_object() && body.contains("error") && body["error"].is_string())
    msg += ": " + body["error"].get<std::string>();
  return msg;
}

/// One request with retries. Returns the parsed JSON body of a 200 reply.
inline nlohmann::json request(const LogitEndpointConfig& cfg, const std::string& path,
                              const std::optional<nlohmann::json>& body) {
  cfg.validate();
  const auto url = split_url(cfg.base_url);
  const std::string full_path = join_path(url.path == "/" ? "" : url.path, path);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout - secs);
  const int attempts = 1 + cfg.max_retries;
  std::string last_error;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    httplib::Client client(url.origin);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    if (cfg.auth_token) client.set_bearer_token_auth(*cfg.auth_token);
    auto res = body ? client.Post(full_path.empty() ? "/" : full_path, body->dump(), "application/json")
                    : client.Get(full_path.empty() ? "/" : full_path);
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = server_error(res);
      continue;
    }
    if (res->status != 200) throw BackendError(cfg.base_url + full_path + ": " + server_error(res));
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) throw BackendError(cfg.base_url + full_path + ": reply is not valid JSON");
    return parsed;
  }
  throw BackendError(cfg.base_url + full_path + ": failed after " + std::to_string(attempts) +
                     (attempts == 1 ? " attempt: " : " attempts: ") + last_error);
}

}  // namespace detail

struct EndpointInfo {
  Vocabulary vocab;
  std::string version;
};

/// Fetches the server's vocabulary and refuses protocol versions other than v1.
inline EndpointInfo endpoint_probe(const LogitEndpointConfig& cfg) {
  auto j = detail::request(cfg, "/v1/vocab", std::nullopt);
  if (!j.is_object() || !j.contains("version") || !j.contains("tokens") || !j["tokens"].is_array())
    throw BackendError("malformed /v1/vocab reply");
  std::string version = j["version"].is_string() ? j["version"].get<std::string>() : j["version"].dump();
  if (version != kProtocolVersion)
    throw BackendError("protocol mismatch: server speaks version " + version + ", client speaks " +
                       std::string(kProtocolVersion));
  std::vector<std::string> tokens;
  try {
    tokens = j["tokens"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception&) {
    throw BackendError("malformed /v1/vocab reply: tokens must be strings");
  }
  std::string eos = j.value("eos", std::string("<eos>"));
  try {
    return {Vocabulary(std::move(tokens), eos), version};
  } catch (const ConfigError& e) {
    throw BackendError(std::string("server vocabulary rejected: ") + e.what());
  }
}

class HttpProvider final : public NextTokenProvider {
 public:
  static HttpProvider connect(LogitEndpointConfig cfg) {
    auto info = endpoint_probe(cfg);
    return HttpProvider(std::move(cfg), std::move(info.vocab));
  }

  const Vocabulary& vocab() const override { return vocab_; }

  LogitVector next_logits(std::string_view context, std::span<const TokenId> prefix) const override {
    check_prefix(vocab_, prefix);
    nlohmann::json body;
    body["context"] = std::string(context);
    body["prefix"] = nlohmann::json::array();
    for (TokenId id : prefix) body["prefix"].push_back(vocab_.token(id));
    auto j = detail::request(cfg_, "/v1/logits", body);
    if (!j.is_object() || !j.contains("logits") || !j["logits"].is_object())
      throw BackendError("malformed /v1/logits reply");

    auto value_of = [](const nlohmann::json& v) -> double {
      if (v.is_null()) return kNegInf;
      if (!v.is_number()) throw BackendError("logit values must be numbers or null");
      return v.get<double>();
    };
    std::optional<double> fallback;
    if (j.contains("default")) fallback = value_of(j["default"]);
    LogitVector out;
    out.values.assign(vocab_.size(), 0.0);
    std::vector<bool> seen(vocab_.size(), false);
    for (const auto& [tok, v] : j["logits"].items()) {
      auto id = vocab_.find(tok);
      if (!id) throw BackendError("server returned a logit for unknown token '" + tok + "'");
      out.values[*id] = value_of(v);
      seen[*id] = true;
    }
    for (size_t i = 0; i < seen.size(); ++i) {
      if (seen[i]) continue;
      if (!fallback) throw BackendError("server reply omits token '" + vocab_.token(static_cast<TokenId>(i)) + "' and has no default");
      out.values[i] = *fallback;
    }
    return out;
  }

  const LogitEndpointConfig& config() const { return cfg_; }

 private:
  HttpProvider(LogitEndpointConfig cfg, Vocabulary vocab) : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {}

  LogitEndpointConfig cfg_;
  Vocabulary vocab_;
};

class HttpEmbeddings final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddings(LogitEndpointConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) const override {
    nlohmann::json body;
    body["texts"] = texts;
    auto j = detail::request(cfg_, "", body);
    if (!j.is_object() || !j.contains("vectors") || !j["vectors"].is_array())
      throw BackendError("malformed embedding reply");
    std::vector<std::vector<double>> out;
    try {
      out = j["vectors"].get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception&) {
      throw BackendError("malformed embedding reply: vectors must be arrays of numbers");
    }
    if (out.size() != texts.size())
      throw BackendError("embedding endpoint returned " + std::to_string(out.size()) + " vectors for " +
                         std::to_string(texts.size()) + " texts");
    return out;
  }

 private:
  LogitEndpointConfig cfg_;
};

}  // namespace qcd
