#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "ppibench/llmclient.hpp"

namespace ppibench::llm {

using nlohmann::json;

LiveConfig LiveConfig::from_env(std::string base_url) {
  LiveConfig cfg;
  cfg.base_url = std::move(base_url);
  const char* key = std::getenv("PPIBENCH_API_KEY");
  if (key == nullptr || *key == '\0') throw AuthError("PPIBENCH_API_KEY is not set");
  cfg.api_key = key;
  return cfg;
}

LiveBackend::LiveBackend(LiveConfig config) : config_(std::move(config)) {
  const auto& url = config_.base_url;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url must include a scheme: '" + url + "'");
  auto path_start = url.find('/', scheme_end + 3);
  host_ = url.substr(0, path_start);
  prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

std::string LiveBackend::request_body(const ChatRequest& request) {
  json body;
  body["model"] = request.model;
  body["messages"] = json::array({{{"role", "user"}, {"content", request.prompt_text}}});
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  return body.dump();
}

std::string LiveBackend::extract_content(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw EnvelopeError(std::string("response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw EnvelopeError("response has no choices");
  }
  const auto& first = j["choices"][0];
  if (!first.is_object() || !first.contains("message") || !first["message"].is_object()) {
    throw EnvelopeError("first choice has no message");
  }
  const auto& msg = first["message"];
  if (!msg.contains("content") || !msg["content"].is_string()) {
    throw EnvelopeError("message content is missing or not a string");
  }
  return msg["content"].get<std::string>();
}

std::string LiveBackend::send(const ChatRequest& request) {
  httplib::Client client(host_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  httplib::Headers headers = {{"Authorization", "Bearer " + config_.api_key}};

  auto res = client.Post(prefix_ + "/chat/completions", headers, request_body(request), "application/json");
  if (!res) throw TransientError("request failed: " + httplib::to_string(res.error()));
  const int status = res->status;
  if (status == 401 || status == 403) throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(status) + ")");
  if (status == 408 || status == 429 || status >= 500) {
    throw TransientError("HTTP " + std::to_string(status));
  }
  if (status != 200) throw EnvelopeError("unexpected HTTP " + std::to_string(status) + ": " + res->body.substr(0, 200));
  return extract_content(res->body);
}

}  // namespace ppibench::llm
