#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "prewrite/common/jsonl.hpp"
#include "prewrite/llmgateway/endpoint.hpp"

namespace prewrite::llm {

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{30000};
  double jitter = 0.2;  // fraction of the computed delay added at random

  /// Delay before retry number `retry` (0-based), jitter excluded.
  std::chrono::milliseconds base_delay(int retry) const;
};

struct AuditEntry {
  std::string ts;
  std::string endpoint;
  Purpose purpose = Purpose::kRewrite;
  double temperature = 0.0;
  std::string request_sha256;
  std::string response_sha256;  // empty when the call failed
  int attempts = 0;
  std::string error;  // ErrorCode name, empty on success

  json to_json() const;
  static AuditEntry from_json(const json& j);
};

/// Serialized single-writer append channel. Entries are kept in memory and,
/// when a path is given, appended to it as they arrive.
class AuditLog {
 public:
  /// `tags` are merged into every line written to `path` (e.g. a run id).
  explicit AuditLog(Clock clock = system_clock(), std::optional<std::filesystem::path> path = {},
                    json tags = json::object());

  void note_request();
  void record(AuditEntry entry);
  std::string now() const { return clock_(); }

  std::vector<AuditEntry> entries() const;
  std::size_t requests() const;

 private:
  Clock clock_;
  std::optional<std::filesystem::path> path_;
  json tags_;
  mutable std::mutex mu_;
  std::vector<AuditEntry> entries_;
  std::size_t requests_ = 0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

Sleeper real_sleeper();

/// Canonical digest of a request (messages, temperature, purpose, seed).
std::string request_digest(const ChatRequest& req);

class Gateway {
 public:
  Gateway(RetryPolicy policy, std::shared_ptr<AuditLog> audit, Sleeper sleeper = real_sleeper(),
          std::uint64_t jitter_seed = 0);

  /// First successful completion. Retryable failures back off exponentially
  /// up to policy.max_attempts; the last error is rethrown on exhaustion.
  /// Every call, successful or not, produces exactly one audit entry.
  ChatResponse complete(Endpoint& endpoint, const ChatRequest& req);

  /// Request whose temperature is the endpoint's default for `purpose`.
  static ChatRequest make_request(const EndpointConfig& endpoint, Purpose purpose,
                                  std::vector<Message> messages,
                                  std::optional<std::int64_t> seed_hint = {});

  const RetryPolicy& policy() const { return policy_; }
  AuditLog& audit() { return *audit_; }

 private:
  std::chrono::milliseconds jittered(int retry);

  RetryPolicy policy_;
  std::shared_ptr<AuditLog> audit_;
  Sleeper sleeper_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
};

}  // namespace prewrite::llm
