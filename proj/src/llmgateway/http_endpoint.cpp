#include <httplib.h>

#include <cstdlib>

#include "prewrite/llmgateway/endpoint.hpp"

namespace prewrite::llm {

namespace {

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

UrlParts split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kConfig, "base_url must include a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  UrlParts parts;
  parts.origin = url.substr(0, path_start);
  parts.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!parts.path.empty() && parts.path.back() == '/') parts.path.pop_back();
  return parts;
}

ErrorCode code_for_status(int status) {
  if (status == 429) return ErrorCode::kRateLimited;
  if (status == 408 || status == 504) return ErrorCode::kTimeout;
  if (status >= 500) return ErrorCode::kTransient;
  return ErrorCode::kHttpError;
}

}  // namespace

HttpEndpoint::HttpEndpoint(EndpointConfig config) : Endpoint(std::move(config)) {
  split_url(this->config().base_url);  // validate eagerly
}

void HttpEndpoint::check_ready() const {
  const auto& var = config().auth_env_var;
  if (var.empty()) return;
  const char* value = std::getenv(var.c_str());
  if (value == nullptr || *value == '\0') {
    throw Error(ErrorCode::kAuthMissing,
                "endpoint '" + name() + "': environment variable " + var + " is not set");
  }
}

json HttpEndpoint::request_body(const ChatRequest& req) const {
  json messages = json::array();
  for (const auto& m : req.messages) {
    messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  json body = {{"model", config().model}, {"messages", std::move(messages)},
               {"temperature", req.temperature}};
  if (config().max_tokens) body["max_tokens"] = *config().max_tokens;
  if (req.seed_hint && config().supports_seed) body["seed"] = *req.seed_hint;
  return body;
}

Completion HttpEndpoint::parse_response_body(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedResponse, std::string("response is not JSON: ") + e.what());
  }
  const auto* choices = j.is_object() && j.contains("choices") ? &j["choices"] : nullptr;
  if (!choices || !choices->is_array() || choices->empty()) {
    throw Error(ErrorCode::kMalformedResponse, "response has no choices");
  }
  const auto& choice = (*choices)[0];
  if (!choice.contains("message") || !choice["message"].contains("content") ||
      !choice["message"]["content"].is_string()) {
    throw Error(ErrorCode::kMalformedResponse, "response choice has no message content");
  }
  Completion c;
  c.text = choice["message"]["content"].get<std::string>();
  c.truncated = choice.value("finish_reason", std::string()) == "length";
  return c;
}

Completion HttpEndpoint::send(const ChatRequest& req) {
  const auto url = split_url(config().base_url);
  httplib::Client client(url.origin);
  const auto timeout_s = config().timeout_ms / 1000;
  const auto timeout_us = (config().timeout_ms % 1000) * 1000;
  client.set_connection_timeout(timeout_s, timeout_us);
  client.set_read_timeout(timeout_s, timeout_us);
  client.set_write_timeout(timeout_s, timeout_us);

  httplib::Headers headers;
  if (!config().auth_env_var.empty()) {
    const char* key = std::getenv(config().auth_env_var.c_str());
    if (key == nullptr || *key == '\0') {
      throw Error(ErrorCode::kAuthMissing, "endpoint '" + name() + "': no credentials");
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  auto res = client.Post(url.path + "/chat/completions", headers, dump_line(request_body(req)),
                         "application/json");
  if (!res) {
    const auto err = res.error();
    const auto code = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                          ? ErrorCode::kTimeout
                          : ErrorCode::kTransient;
    throw Error(code, "endpoint '" + name() + "': " + httplib::to_string(err));
  }
  if (res->status != 200) {
    throw Error(code_for_status(res->status),
                "endpoint '" + name() + "': HTTP " + std::to_string(res->status));
  }
  return parse_response_body(res->body);
}

}  // namespace prewrite::llm
