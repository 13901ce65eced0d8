#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace prewrite::llm {

enum class Purpose { kRewrite, kSimulate, kJudge, kLabel, kTaxonomy };
enum class Role { kSystem, kUser, kAssistant };

std::string_view to_string(Purpose p);
std::optional<Purpose> parse_purpose(std::string_view s);
std::string_view to_string(Role r);

struct Message {
  Role role = Role::kUser;
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

struct ChatRequest {
  std::vector<Message> messages;
  double temperature = 1.0;
  Purpose purpose = Purpose::kRewrite;
  std::optional<std::int64_t> seed_hint;
};

/// Throws Error(kInvalidRequest) unless messages are non-empty and roles
/// alternate user/assistant after an optional leading system message,
/// starting with user.
void validate(const ChatRequest& req);

struct ChatResponse {
  std::string text;
  std::string endpoint_name;
  double latency_ms = 0.0;
  int attempt_count = 1;
  bool truncated = false;
};

/// Static description of a model endpoint. The model parameters themselves
/// live behind base_url and are never locally visible.
struct EndpointConfig {
  std::string name;
  std::string base_url;      // e.g. https://api.example.com/v1
  std::string model;         // provider model id; defaults to name
  std::string auth_env_var;  // empty: no auth header
  std::size_t max_context = 128000;  // token-count hint
  std::optional<int> max_tokens;
  std::map<Purpose, double> role_default_temperature = default_temperatures();
  int timeout_ms = 120000;
  int concurrency_limit = 4;
  bool supports_seed = false;

  static std::map<Purpose, double> default_temperatures();
  double temperature_for(Purpose p) const;
};

/// Throws Error(kConfig) if any temperature leaves [0, 2] or the judge default
/// is not exactly zero.
void validate(const EndpointConfig& cfg);

/// Rough token estimate used against max_context: one token per four bytes,
/// rounded up.
std::size_t estimate_tokens(std::string_view text);
std::size_t estimate_tokens(const ChatRequest& req);

}  // namespace prewrite::llm
