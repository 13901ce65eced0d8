#pragma once

#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "prewrite/common/error.hpp"
#include "prewrite/common/jsonl.hpp"
#include "prewrite/llmgateway/types.hpp"

namespace prewrite::llm {

struct Completion {
  std::string text;
  bool truncated = false;
};

/// A chat-completion target. send() performs exactly one attempt; retries,
/// auditing and timing belong to Gateway.
class Endpoint {
 public:
  explicit Endpoint(EndpointConfig config);
  virtual ~Endpoint() = default;

  Endpoint(const Endpoint&) = delete;
  Endpoint& operator=(const Endpoint&) = delete;

  const EndpointConfig& config() const { return config_; }
  const std::string& name() const { return config_.name; }

  /// Preconditions checked once before the first attempt (credentials etc).
  virtual void check_ready() const {}

  virtual Completion send(const ChatRequest& req) = 0;

  /// RAII in-flight slot bounded by config().concurrency_limit.
  class Slot {
   public:
    explicit Slot(Endpoint& ep);
    ~Slot();
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    Endpoint& ep_;
  };

  int in_flight() const;
  int peak_in_flight() const;

 private:
  EndpointConfig config_;
  mutable std::mutex slot_mu_;
  std::condition_variable slot_cv_;
  int in_flight_ = 0;
  int peak_in_flight_ = 0;
};

// ---------------------------------------------------------------------------
// Scripted mock
// ---------------------------------------------------------------------------

/// One scripted reply. A fixture matches a request when the purposes agree and
/// `match` is "*" or a substring of the request's concatenated message text.
/// Non-repeating fixtures are consumed on use, so repeated identical requests
/// walk the script in order.
struct Fixture {
  Purpose purpose = Purpose::kRewrite;
  std::string match = "*";
  std::string text;
  std::optional<ErrorCode> error;  // fail this attempt with the given code
  bool repeat = false;
  std::function<std::string(const ChatRequest&)> respond;  // overrides text
};

/// Reply with the last user message verbatim.
std::function<std::string(const ChatRequest&)> echo_responder();

/// Order-symmetric judge: finds which ending section holds `preferred` and
/// reports `score` (rewrite-centric 1..5) in the judge's position-relative
/// convention. Sections are split at `second_marker`. Neither/both found -> 3.
std::function<std::string(const ChatRequest&)> content_judge_responder(
    std::string preferred, int score, std::string second_marker = "### Ending 2");

/// Parses fixtures from a JSON array. Each entry carries "purpose", optional
/// "match", "repeat", and exactly one of: "text", "echo": true,
/// "error": "<CODE>", or "judge": {"prefer", "score", "second_marker"?}.
std::vector<Fixture> fixtures_from_json(const json& j);

class MockEndpoint final : public Endpoint {
 public:
  MockEndpoint(EndpointConfig config, std::vector<Fixture> script);

  Completion send(const ChatRequest& req) override;

  std::size_t consumed() const;
  std::size_t requests_seen() const;

 private:
  mutable std::mutex mu_;
  std::vector<Fixture> script_;
  std::vector<bool> used_;
  std::size_t consumed_ = 0;
  std::size_t seen_ = 0;
};

std::shared_ptr<MockEndpoint> mock_endpoint(std::vector<Fixture> script,
                                            std::string name = "mock");

// ---------------------------------------------------------------------------
// Live HTTP endpoint (OpenAI-style chat completions)
// ---------------------------------------------------------------------------

class HttpEndpoint final : public Endpoint {
 public:
  explicit HttpEndpoint(EndpointConfig config);

  /// Throws Error(kAuthMissing) when auth_env_var is set but unresolvable.
  void check_ready() const override;
  Completion send(const ChatRequest& req) override;

  /// Body posted to {base_url}/chat/completions.
  json request_body(const ChatRequest& req) const;
  /// Extracts choices[0].message.content; throws kMalformedResponse.
  static Completion parse_response_body(const std::string& body);
};

}  // namespace prewrite::llm
