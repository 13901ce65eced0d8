#include <httplib.h>

#include "prewrite/annotsvc/annotsvc.hpp"
#include "prewrite/common/error.hpp"

namespace prewrite::annotsvc {

namespace {

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownTask: return 404;
    case ErrorCode::kNotAssigned: return 403;
    default: return 400;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, status_for(code), {{"error", to_string(code)}, {"message", message}});
}

}  // namespace

struct Server::Impl {
  httplib::Server http;
};

Server::Server(RatingStore& store, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>()) {
  auto& http = impl_->http;
  RatingStore* s = &store;

  http.Get("/api/tasks", [s](const httplib::Request& req, httplib::Response& res) {
    const auto who = req.get_param_value("annotator");
    if (who.empty()) return send_error(res, ErrorCode::kInvalidRequest, "missing annotator parameter");
    auto t = s->next_task(who);
    if (!t) return send_json(res, 200, {{"done", true}});
    send_json(res, 200, {{"done", false}, {"task", t->payload()}});
  });

  http.Get(R"(/api/tasks/([^/]+))", [s](const httplib::Request& req, httplib::Response& res) {
    const auto* t = s->find(req.matches[1].str());
    if (!t) return send_error(res, ErrorCode::kUnknownTask, "unknown task " + req.matches[1].str());
    send_json(res, 200, t->payload());
  });

  http.Post("/api/ratings", [s](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return send_error(res, ErrorCode::kInvalidRequest, "body is not JSON");
    }
    if (!body.is_object() || !body.contains("task_id") || !body["task_id"].is_string() ||
        !body.contains("annotator_id") || !body["annotator_id"].is_string()) {
      return send_error(res, ErrorCode::kInvalidRequest, "task_id and annotator_id are required strings");
    }
    std::optional<int> score;
    if (body.contains("score") && !body["score"].is_null()) {
      if (!body["score"].is_number_integer()) {
        return send_error(res, ErrorCode::kRange, "score must be an integer");
      }
      score = body["score"].get<int>();
    }
    const bool none = body.value("no_assumptions", false);
    try {
      auto r = s->record(body["task_id"].get<std::string>(), body["annotator_id"].get<std::string>(), score,
                         none);
      send_json(res, 200, r.to_json());
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    }
  });

  http.Get("/api/progress", [s](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, s->progress());
  });

  if (static_dir) http.set_mount_point("/", static_dir->string());
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  if (port == 0) return impl_->http.bind_to_any_port(host);
  return impl_->http.bind_to_port(host, port) ? port : -1;
}

bool Server::listen() { return impl_->http.listen_after_bind(); }

void Server::wait_until_ready() const { impl_->http.wait_until_ready(); }

void Server::stop() {
  if (impl_->http.is_running()) impl_->http.stop();
}

}  // namespace prewrite::annotsvc
