#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "offscript/chat_backend.hpp"

namespace offscript {

HttpBackendConfig http_config_from_environment() {
  HttpBackendConfig config;
  const char* key = std::getenv(kApiKeyEnv);
  if (key == nullptr || *key == '\0') {
    throw Error(ErrorCode::backend_unconfigured, std::string(kApiKeyEnv) + " is not set");
  }
  config.api_key = key;
  if (const char* base = std::getenv(kBaseUrlEnv); base != nullptr && *base != '\0') {
    config.base_url = base;
  }
  return config;
}

HttpChatBackend::HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::validation_error, "base url lacks a scheme: " + config_.base_url);
  }
  const auto path_start = config_.base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    scheme_host_port_ = config_.base_url;
  } else {
    scheme_host_port_ = config_.base_url.substr(0, path_start);
    path_prefix_ = config_.base_url.substr(path_start);
  }
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (!config_.sleep) {
    config_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
}

HttpChatBackend::~HttpChatBackend() = default;

namespace {

bool is_transient_status(int status) { return status == 429 || status >= 500; }

}  // namespace

ChatResponse HttpChatBackend::complete(const ChatRequest& request) {
  const std::string body = serialize_request(request).dump();
  const std::string path = path_prefix_ + "/chat/completions";
  const auto timeout = config_.retry.request_timeout;

  std::string last_failure;
  auto backoff = config_.retry.initial_backoff;
  for (int attempt = 0; attempt <= config_.retry.max_retries; ++attempt) {
    if (attempt > 0) {
      config_.sleep(backoff);
      backoff *= 2;
    }
    ++attempts_;

    // httplib clients are not safe for concurrent use; one per call.
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers{{"Authorization", "Bearer " + config_.api_key}};

    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_failure = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      // Protocol errors are not retried.
      return parse_tool_calls(res->body);
    }
    last_failure = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 512);
    if (!is_transient_status(res->status)) break;
  }
  throw Error(ErrorCode::transport_error, last_failure);
}

}  // namespace offscript
