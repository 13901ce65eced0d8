#include "prewrite/llmgateway/endpoint.hpp"

#include <algorithm>

#include "prewrite/common/text.hpp"

namespace prewrite::llm {

Endpoint::Endpoint(EndpointConfig config) : config_(std::move(config)) {
  if (config_.model.empty()) config_.model = config_.name;
}

Endpoint::Slot::Slot(Endpoint& ep) : ep_(ep) {
  std::unique_lock lock(ep_.slot_mu_);
  ep_.slot_cv_.wait(lock, [&] { return ep_.in_flight_ < ep_.config_.concurrency_limit; });
  ++ep_.in_flight_;
  ep_.peak_in_flight_ = std::max(ep_.peak_in_flight_, ep_.in_flight_);
}

Endpoint::Slot::~Slot() {
  {
    std::lock_guard lock(ep_.slot_mu_);
    --ep_.in_flight_;
  }
  ep_.slot_cv_.notify_one();
}

int Endpoint::in_flight() const {
  std::lock_guard lock(slot_mu_);
  return in_flight_;
}

int Endpoint::peak_in_flight() const {
  std::lock_guard lock(slot_mu_);
  return peak_in_flight_;
}

// ---------------------------------------------------------------------------

namespace {

std::string request_text(const ChatRequest& req) {
  std::string all;
  for (const auto& m : req.messages) {
    all += m.content;
    all += '\n';
  }
  return all;
}

}  // namespace

std::function<std::string(const ChatRequest&)> echo_responder() {
  return [](const ChatRequest& req) {
    for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
      if (it->role == Role::kUser) return it->content;
    }
    return std::string();
  };
}

std::function<std::string(const ChatRequest&)> content_judge_responder(std::string preferred,
                                                                       int score,
                                                                       std::string second_marker) {
  return [preferred = std::move(preferred), score,
          marker = std::move(second_marker)](const ChatRequest& req) {
    const std::string all = request_text(req);
    const auto split = all.rfind(marker);
    if (split == std::string::npos) return std::string("Score: 3");
    const std::string_view first(all.data(), split);
    const std::string_view second(all.data() + split, all.size() - split);
    const bool in_first = first.find(preferred) != std::string_view::npos;
    const bool in_second = second.find(preferred) != std::string_view::npos;
    int raw = 3;
    if (in_second && !in_first) raw = score;
    if (in_first && !in_second) raw = 6 - score;
    return "Score: " + std::to_string(raw);
  };
}

std::vector<Fixture> fixtures_from_json(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::kConfig, "fixtures must be a JSON array");
  std::vector<Fixture> out;
  for (const auto& f : j) {
    Fixture fx;
    auto purpose = parse_purpose(f.value("purpose", std::string()));
    if (!purpose) throw Error(ErrorCode::kConfig, "fixture has bad purpose: " + dump_line(f));
    fx.purpose = *purpose;
    fx.match = f.value("match", std::string("*"));
    fx.repeat = f.value("repeat", false);
    int kinds = 0;
    if (f.contains("text")) {
      fx.text = f.at("text").get<std::string>();
      ++kinds;
    }
    if (f.value("echo", false)) {
      fx.respond = echo_responder();
      ++kinds;
    }
    if (f.contains("error")) {
      const auto code = f.at("error").get<std::string>();
      static constexpr ErrorCode kAllowed[] = {
          ErrorCode::kRateLimited, ErrorCode::kTimeout, ErrorCode::kTransient,
          ErrorCode::kHttpError, ErrorCode::kMalformedResponse, ErrorCode::kAuthMissing};
      for (auto c : kAllowed) {
        if (to_string(c) == code) fx.error = c;
      }
      if (!fx.error) throw Error(ErrorCode::kConfig, "fixture has unknown error code " + code);
      ++kinds;
    }
    if (f.contains("judge")) {
      const auto& jj = f.at("judge");
      fx.respond = content_judge_responder(jj.at("prefer").get<std::string>(),
                                           jj.at("score").get<int>(),
                                           jj.value("second_marker", std::string("### Ending 2")));
      ++kinds;
    }
    if (kinds != 1) {
      throw Error(ErrorCode::kConfig, "fixture needs exactly one of text/echo/error/judge: " +
                                          dump_line(f));
    }
    out.push_back(std::move(fx));
  }
  return out;
}

MockEndpoint::MockEndpoint(EndpointConfig config, std::vector<Fixture> script)
    : Endpoint(std::move(config)), script_(std::move(script)), used_(script_.size(), false) {}

Completion MockEndpoint::send(const ChatRequest& req) {
  const std::string all = request_text(req);
  const Fixture* chosen = nullptr;
  {
    std::lock_guard lock(mu_);
    ++seen_;
    for (std::size_t i = 0; i < script_.size(); ++i) {
      const auto& f = script_[i];
      if (used_[i] || f.purpose != req.purpose) continue;
      if (f.match != "*" && all.find(f.match) == std::string::npos) continue;
      if (!f.repeat) {
        used_[i] = true;
        ++consumed_;
      }
      chosen = &f;
      break;
    }
  }
  if (!chosen) {
    throw Error(ErrorCode::kNoFixtureMatch, "mock '" + name() + "': no fixture for " +
                                                std::string(to_string(req.purpose)) + " request");
  }
  if (chosen->error) {
    throw Error(*chosen->error, "mock '" + name() + "': scripted " +
                                    std::string(to_string(*chosen->error)));
  }
  return {chosen->respond ? chosen->respond(req) : chosen->text, false};
}

std::size_t MockEndpoint::consumed() const {
  std::lock_guard lock(mu_);
  return consumed_;
}

std::size_t MockEndpoint::requests_seen() const {
  std::lock_guard lock(mu_);
  return seen_;
}

std::shared_ptr<MockEndpoint> mock_endpoint(std::vector<Fixture> script, std::string name) {
  EndpointConfig cfg;
  cfg.name = std::move(name);
  cfg.base_url = "mock://";
  return std::make_shared<MockEndpoint>(std::move(cfg), std::move(script));
}

}  // namespace prewrite::llm
