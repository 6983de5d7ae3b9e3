#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <json.hpp>
#include <thread>

#include "tstr/embedding.hpp"
#include "tstr/error.hpp"

namespace tstr {

using nlohmann::json;

HttpProviderConfig HttpProviderConfig::from_environment(std::string model) {
  HttpProviderConfig cfg;
  cfg.model = std::move(model);
  if (const char* url = std::getenv("EMBED_API_URL")) cfg.url = url;
  if (const char* key = std::getenv("EMBED_API_KEY")) cfg.api_key = key;
  return cfg;
}

HttpProvider::HttpProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.url.empty()) throw UsageError("embedding provider URL not configured (EMBED_API_URL)");
  if (cfg_.model.empty()) throw UsageError("embedding provider model not configured");
  const auto scheme_end = cfg_.url.find("://");
  if (scheme_end == std::string::npos) throw UsageError("provider URL needs a scheme: " + cfg_.url);
  const auto path_start = cfg_.url.find('/', scheme_end + 3);
  scheme_host_port_ = cfg_.url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : cfg_.url.substr(path_start);
}

std::string HttpProvider::tag() const { return "http/" + cfg_.model; }

namespace {

std::chrono::milliseconds retry_after(const httplib::Response& res, std::chrono::milliseconds fallback,
                                      std::chrono::milliseconds cap) {
  if (res.has_header("Retry-After")) {
    const std::string v = res.get_header_value("Retry-After");
    char* end = nullptr;
    const double secs = std::strtod(v.c_str(), &end);
    if (end != v.c_str() && secs >= 0) {
      return std::min(cap, std::chrono::milliseconds(static_cast<long long>(secs * 1000.0)));
    }
  }
  return fallback;
}

std::vector<std::vector<double>> parse_response(const std::string& body, std::size_t expected) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("provider returned invalid JSON: ") + e.what());
  }
  if (!doc.contains("data") || !doc["data"].is_array()) throw IntegrityError("provider response has no data array");
  const json& data = doc["data"];
  if (data.size() != expected) {
    throw IntegrityError("provider returned " + std::to_string(data.size()) + " embeddings for " +
                         std::to_string(expected) + " inputs");
  }
  std::vector<std::vector<double>> out(expected);
  std::vector<bool> filled(expected, false);
  for (std::size_t k = 0; k < data.size(); ++k) {
    const json& item = data[k];
    const std::size_t idx = item.contains("index") ? item["index"].get<std::size_t>() : k;
    if (idx >= expected || filled[idx]) throw IntegrityError("provider returned a bad or repeated index");
    if (!item.contains("embedding") || !item["embedding"].is_array()) {
      throw IntegrityError("provider item has no embedding array");
    }
    out[idx] = item["embedding"].get<std::vector<double>>();
    filled[idx] = true;
    if (out[idx].empty()) throw IntegrityError("provider returned an empty embedding");
  }
  const std::size_t dim = out[0].size();
  for (const auto& v : out) {
    if (v.size() != dim) throw IntegrityError("provider returned embeddings of differing dimension");
  }
  return out;
}

}  // namespace

std::vector<std::vector<double>> HttpProvider::embed(std::span<const std::string> texts) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(cfg_.timeout);
  client.set_read_timeout(cfg_.timeout);
  client.set_write_timeout(cfg_.timeout);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
  const std::string body = json{{"model", cfg_.model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}}.dump();

  auto backoff = cfg_.retry.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= cfg_.retry.max_attempts; ++attempt) {
    ++requests_;
    auto res = client.Post(path_, headers, body, "application/json");
    std::chrono::milliseconds wait = backoff;
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 429) {
      last_error = "rate limited (429)";
      wait = retry_after(*res, backoff, cfg_.retry.max_retry_after);
    } else if (res->status >= 500) {
      last_error = "server error " + std::to_string(res->status);
    } else if (res->status != 200) {
      throw ProviderError("provider rejected request with status " + std::to_string(res->status) + ": " +
                          res->body.substr(0, 200));
    } else {
      return parse_response(res->body, texts.size());
    }
    if (attempt == cfg_.retry.max_attempts) break;
    std::this_thread::sleep_for(wait);
    backoff = std::min(cfg_.retry.max_backoff, backoff * 2);
  }
  throw ProviderError("provider failed after " + std::to_string(cfg_.retry.max_attempts) +
                      " attempts: " + last_error);
}

}  // namespace tstr
