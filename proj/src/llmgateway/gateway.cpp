#include "prewrite/llmgateway/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "prewrite/common/hash.hpp"

namespace prewrite::llm {

std::chrono::milliseconds RetryPolicy::base_delay(int retry) const {
  const double ms = static_cast<double>(initial_backoff.count()) * std::pow(multiplier, retry);
  const double capped = std::min(ms, static_cast<double>(max_backoff.count()));
  return std::chrono::milliseconds(static_cast<long long>(capped));
}

json AuditEntry::to_json() const {
  json j = {{"ts", ts},
            {"endpoint", endpoint},
            {"purpose", std::string(to_string(purpose))},
            {"temperature", temperature},
            {"request_sha256", request_sha256},
            {"attempts", attempts}};
  j["response_sha256"] = response_sha256.empty() ? json(nullptr) : json(response_sha256);
  if (!error.empty()) j["error"] = error;
  return j;
}

AuditEntry AuditEntry::from_json(const json& j) {
  AuditEntry e;
  e.ts = j.value("ts", std::string());
  e.endpoint = j.value("endpoint", std::string());
  e.purpose = parse_purpose(j.value("purpose", std::string())).value_or(Purpose::kRewrite);
  e.temperature = j.value("temperature", 0.0);
  e.request_sha256 = j.value("request_sha256", std::string());
  if (j.contains("response_sha256") && j["response_sha256"].is_string()) {
    e.response_sha256 = j["response_sha256"].get<std::string>();
  }
  e.attempts = j.value("attempts", 0);
  e.error = j.value("error", std::string());
  return e;
}

AuditLog::AuditLog(Clock clock, std::optional<std::filesystem::path> path, json tags)
    : clock_(std::move(clock)), path_(std::move(path)), tags_(std::move(tags)) {}

void AuditLog::note_request() {
  std::lock_guard lock(mu_);
  ++requests_;
}

void AuditLog::record(AuditEntry entry) {
  std::lock_guard lock(mu_);
  if (path_) {
    auto line = entry.to_json();
    line.update(tags_);
    append_jsonl(*path_, line);
  }
  entries_.push_back(std::move(entry));
}

std::vector<AuditEntry> AuditLog::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t AuditLog::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string request_digest(const ChatRequest& req) {
  json messages = json::array();
  for (const auto& m : req.messages) {
    messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  json j = {{"messages", std::move(messages)},
            {"temperature", req.temperature},
            {"purpose", std::string(to_string(req.purpose))}};
  if (req.seed_hint) j["seed"] = *req.seed_hint;
  return sha256_hex(dump_line(j));
}

Gateway::Gateway(RetryPolicy policy, std::shared_ptr<AuditLog> audit, Sleeper sleeper,
                 std::uint64_t jitter_seed)
    : policy_(policy),
      audit_(audit ? std::move(audit) : std::make_shared<AuditLog>()),
      sleeper_(std::move(sleeper)),
      rng_(jitter_seed) {
  if (policy_.max_attempts < 1) policy_.max_attempts = 1;
}

std::chrono::milliseconds Gateway::jittered(int retry) {
  auto base = policy_.base_delay(retry);
  if (policy_.jitter <= 0.0 || base.count() == 0) return base;
  std::lock_guard lock(rng_mu_);
  std::uniform_real_distribution<double> dist(0.0, policy_.jitter);
  return base + std::chrono::milliseconds(
                    static_cast<long long>(static_cast<double>(base.count()) * dist(rng_)));
}

ChatResponse Gateway::complete(Endpoint& endpoint, const ChatRequest& req) {
  audit_->note_request();
  AuditEntry entry;
  entry.endpoint = endpoint.name();
  entry.purpose = req.purpose;
  entry.temperature = req.temperature;
  entry.request_sha256 = request_digest(req);

  auto fail = [&](const Error& e, int attempts) {
    entry.ts = audit_->now();
    entry.attempts = attempts;
    entry.error = std::string(to_string(e.code()));
    audit_->record(entry);
  };

  try {
    validate(req);
    endpoint.check_ready();
  } catch (const Error& e) {
    fail(e, 0);
    throw;
  }

  const auto start = std::chrono::steady_clock::now();
  for (int attempt = 1;; ++attempt) {
    try {
      Completion c;
      {
        Endpoint::Slot slot(endpoint);
        c = endpoint.send(req);
      }
      ChatResponse resp;
      resp.text = std::move(c.text);
      resp.truncated = c.truncated;
      resp.endpoint_name = endpoint.name();
      resp.attempt_count = attempt;
      resp.latency_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start)
                            .count();
      entry.ts = audit_->now();
      entry.attempts = attempt;
      entry.response_sha256 = sha256_hex(resp.text);
      audit_->record(entry);
      return resp;
    } catch (const Error& e) {
      if (!is_retryable(e.code()) || attempt >= policy_.max_attempts) {
        fail(e, attempt);
        throw;
      }
      sleeper_(jittered(attempt - 1));
    } catch (const std::exception&) {
      entry.ts = audit_->now();
      entry.attempts = attempt;
      entry.error = "INTERNAL";
      audit_->record(entry);
      throw;
    }
  }
}

ChatRequest Gateway::make_request(const EndpointConfig& endpoint, Purpose purpose,
                                  std::vector<Message> messages,
                                  std::optional<std::int64_t> seed_hint) {
  ChatRequest req;
  req.messages = std::move(messages);
  req.purpose = purpose;
  req.temperature = endpoint.temperature_for(purpose);
  req.seed_hint = seed_hint;
  return req;
}

}  // namespace prewrite::llm
