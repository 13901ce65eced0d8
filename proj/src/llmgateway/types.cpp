#include "prewrite/llmgateway/types.hpp"

#include "prewrite/common/error.hpp"

namespace prewrite::llm {

std::string_view to_string(Purpose p) {
  switch (p) {
    case Purpose::kRewrite: return "REWRITE";
    case Purpose::kSimulate: return "SIMULATE";
    case Purpose::kJudge: return "JUDGE";
    case Purpose::kLabel: return "LABEL";
    case Purpose::kTaxonomy: return "TAXONOMY";
  }
  return "REWRITE";
}

std::optional<Purpose> parse_purpose(std::string_view s) {
  for (auto p : {Purpose::kRewrite, Purpose::kSimulate, Purpose::kJudge, Purpose::kLabel,
                 Purpose::kTaxonomy}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

std::string_view to_string(Role r) {
  switch (r) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

void validate(const ChatRequest& req) {
  if (req.messages.empty()) throw Error(ErrorCode::kInvalidRequest, "request has no messages");
  std::size_t i = 0;
  if (req.messages.front().role == Role::kSystem) ++i;
  if (i == req.messages.size()) throw Error(ErrorCode::kInvalidRequest, "request has only a system message");
  Role expected = Role::kUser;
  for (; i < req.messages.size(); ++i) {
    if (req.messages[i].role != expected) {
      throw Error(ErrorCode::kInvalidRequest,
                  "message " + std::to_string(i) + " breaks user/assistant alternation");
    }
    expected = expected == Role::kUser ? Role::kAssistant : Role::kUser;
  }
}

std::map<Purpose, double> EndpointConfig::default_temperatures() {
  return {{Purpose::kRewrite, 1.0},  {Purpose::kSimulate, 1.0}, {Purpose::kJudge, 0.0},
          {Purpose::kLabel, 0.0},    {Purpose::kTaxonomy, 0.0}};
}

double EndpointConfig::temperature_for(Purpose p) const {
  auto it = role_default_temperature.find(p);
  if (it != role_default_temperature.end()) return it->second;
  return default_temperatures().at(p);
}

void validate(const EndpointConfig& cfg) {
  if (cfg.name.empty()) throw Error(ErrorCode::kConfig, "endpoint has no name");
  for (const auto& [purpose, t] : cfg.role_default_temperature) {
    if (!(t >= 0.0 && t <= 2.0)) {
      throw Error(ErrorCode::kConfig, "endpoint '" + cfg.name + "': temperature for " +
                                          std::string(to_string(purpose)) + " outside [0, 2]");
    }
  }
  if (cfg.temperature_for(Purpose::kJudge) != 0.0) {
    throw Error(ErrorCode::kConfig, "endpoint '" + cfg.name + "': judge temperature must be 0");
  }
  if (cfg.concurrency_limit < 1) {
    throw Error(ErrorCode::kConfig, "endpoint '" + cfg.name + "': concurrency_limit < 1");
  }
}

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

std::size_t estimate_tokens(const ChatRequest& req) {
  std::size_t total = 0;
  for (const auto& m : req.messages) total += estimate_tokens(m.content) + 4;
  return total;
}

}  // namespace prewrite::llm
