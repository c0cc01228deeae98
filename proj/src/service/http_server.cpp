#include "http_server.hpp"

#include "httplib.h"

namespace postcorr::service {
namespace {

constexpr const char* kJson = "application/json";

void send(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message, Json details = Json::object()) {
  send(res, http_status(code), error_body(code, message, std::move(details)));
}

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("request body is not valid JSON: ") + e.what());
  }
}

std::size_t index_param(const std::string& text, const char* name) {
  std::size_t used = 0;
  try {
    const unsigned long long v = std::stoull(text, &used);
    if (used == text.size() && text.front() != '-') return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
  }
  fail(ErrorCode::Validation, std::string(name) + ": expected a non-negative integer");
}

UploadRequest upload_request(const httplib::Request& req) {
  UploadRequest up;
  const std::string type = req.get_header_value("Content-Type");
  if (type.rfind("text/csv", 0) == 0) {
    up.csv = req.body;
    Json dataset = Json::object();
    for (const char* key : {"window", "horizon", "stride", "baseline", "ridge_lambda"}) {
      if (!req.has_param(key)) continue;
      const std::string v = req.get_param_value(key);
      if (std::string_view(key) == "baseline") {
        dataset[key] = v;
      } else {
        try {
          dataset[key] = Json::parse(v);
        } catch (const nlohmann::json::exception&) {
          fail(ErrorCode::Validation, std::string(key) + ": not a number");
        }
      }
    }
    if (req.has_param("normalize")) dataset["normalize"] = req.get_param_value("normalize") == "true";
    if (!dataset.empty()) up.dataset = dataset;
    return up;
  }
  const Json body = parse_body(req);
  if (!body.contains("csv") || !body.at("csv").is_string()) fail(ErrorCode::Validation, "csv: required string field");
  up.csv = body.at("csv").get<std::string>();
  if (body.contains("dataset")) up.dataset = body.at("dataset");
  if (body.contains("predictions")) {
    const Json& p = body.at("predictions");
    if (!p.is_object() || !p.contains("csv") || !p.contains("meta")) {
      fail(ErrorCode::Validation, "predictions: expected {csv, meta}");
    }
    const PredictionMeta meta = parse_prediction_meta(p.at("meta").dump());
    up.predictions = parse_prediction_csv(p.at("csv").get<std::string>(), meta);
  }
  return up;
}

std::string sse_event(const std::string& event, const std::string& id, const Json& data) {
  std::string out;
  if (!id.empty()) out += "id: " + id + "\n";
  out += "event: " + event + "\ndata: " + data.dump() + "\n\n";
  return out;
}

}  // namespace

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Conflict:
      return 409;
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::Transport:
      return 502;
    case ErrorCode::Internal:
      return 500;
    default:
      return 422;
  }
}

Json error_body(ErrorCode code, const std::string& message, Json details) {
  return Json{{"code", error_code_name(code)}, {"message", message}, {"details", std::move(details)}};
}

HttpServer::HttpServer(ServiceConfig cfg)
    : cfg_(std::move(cfg)), sessions_(std::make_unique<SessionManager>(cfg_)), http_(std::make_unique<httplib::Server>()) {
  routes();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  if (cfg_.port == 0) {
    port_ = http_->bind_to_any_port(cfg_.host);
  } else {
    port_ = http_->bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1;
  }
  if (port_ < 0) fail(ErrorCode::Internal, "cannot listen on " + cfg_.host + ":" + std::to_string(cfg_.port));
  return port_;
}

void HttpServer::start() {
  if (port_ < 0) bind();
  thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
}

void HttpServer::stop() {
  // cancel rounds first so open event streams notice and finish
  sessions_->shutdown();
  if (http_->is_running()) http_->stop();
  if (thread_.joinable()) thread_.join();
}

void HttpServer::routes() {
  auto& svr = *http_;
  SessionManager& mgr = *sessions_;

  // SO_REUSEADDR only: a second instance on a busy port must fail to bind
  svr.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof yes);
  });

  svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const std::exception& e) {
      send_error(res, ErrorCode::Internal, e.what());
    }
  });

  if (!cfg_.token.empty()) {
    svr.set_pre_routing_handler([token = cfg_.token](const httplib::Request& req, httplib::Response& res) {
      if (req.path.rfind("/sessions", 0) != 0) return httplib::Server::HandlerResponse::Unhandled;
      const std::string auth = req.get_header_value("Authorization");
      if (auth == "Bearer " + token || req.get_header_value("X-Postcorr-Token") == token) {
        return httplib::Server::HandlerResponse::Unhandled;
      }
      res.status = 401;
      res.set_content(Json{{"code", "Unauthorized"}, {"message", "missing or wrong token"}, {"details", Json::object()}}.dump(),
                      kJson);
      return httplib::Server::HandlerResponse::Handled;
    });
  }

  svr.Get("/health", [&mgr](const httplib::Request&, httplib::Response& res) {
    send(res, 200, Json{{"status", mgr.stopping() ? "stopping" : "ok"}, {"sessions", mgr.list().size()}});
  });

  svr.Get("/phrasebook", [](const httplib::Request&, httplib::Response& res) {
    send(res, 200, Json{{"templates", grammar_templates()}});
  });

  svr.Get("/sessions", [&mgr](const httplib::Request&, httplib::Response& res) { send(res, 200, mgr.list()); });

  svr.Post("/sessions", [&mgr](const httplib::Request& req, httplib::Response& res) {
    send(res, 201, mgr.create(parse_body(req)));
  });

  svr.Get(R"(/sessions/([0-9a-f]+))", [&mgr](const httplib::Request& req, httplib::Response& res) {
    send(res, 200, mgr.get(req.matches[1]));
  });

  svr.Post(R"(/sessions/([0-9a-f]+)/data)", [&mgr](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    mgr.get(id);  // 404 before body errors
    send(res, 200, mgr.upload(id, upload_request(req)));
  });

  svr.Post(R"(/sessions/([0-9a-f]+)/optimize)", [&mgr](const httplib::Request& req, httplib::Response& res) {
    send(res, 202, mgr.optimize(req.matches[1]));
  });

  svr.Get(R"(/sessions/([0-9a-f]+)/events)", [&mgr](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    std::size_t from = req.has_param("from") ? index_param(req.get_param_value("from"), "from") : 0;
    const std::string last = req.get_header_value("Last-Event-ID");
    if (!last.empty()) from = std::max(from, index_param(last, "Last-Event-ID") + 1);
    const auto first = mgr.events(id, from);  // 404 before streaming

    if (req.get_header_value("Accept").find("text/event-stream") == std::string::npos) {
      Json events = Json::array();
      for (auto& e : first.events) events.push_back(e);
      send(res, 200,
           Json{{"events", events},
                {"next", first.next},
                {"state", std::string(state_name(first.state))},
                {"complete", first.complete}});
      return;
    }
    res.set_header("Cache-Control", "no-cache");
    auto offset = std::make_shared<std::size_t>(from);
    res.set_chunked_content_provider("text/event-stream", [&mgr, id, offset](std::size_t, httplib::DataSink& sink) {
      const auto page = mgr.wait_events(id, *offset, std::chrono::milliseconds(500));
      for (const auto& e : page.events) {
        const std::string chunk = sse_event("episode", std::to_string(e.value("seq", std::size_t{0})), e);
        if (!sink.write(chunk.data(), chunk.size())) return false;
      }
      *offset = page.next;
      if ((page.complete && page.events.empty()) || mgr.stopping()) {
        const std::string end =
            sse_event("end", "", Json{{"state", std::string(state_name(page.state))}, {"next", page.next}});
        sink.write(end.data(), end.size());
        sink.done();
        return true;
      }
      if (page.events.empty()) {
        static constexpr char kKeepAlive[] = ": keep-alive\n\n";
        if (!sink.write(kKeepAlive, sizeof kKeepAlive - 1)) return false;
      }
      return true;
    });
  });

  svr.Post(R"(/sessions/([0-9a-f]+)/feedback)", [&mgr](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    mgr.get(id);
    const Json body = parse_body(req);
    if (!body.contains("text") || !body.at("text").is_string()) fail(ErrorCode::Validation, "text: required string field");
    const std::string path = body.value("path", "grammar");
    const auto prov = provenance_from_name(path);
    if (!prov) fail(ErrorCode::Validation, "path: must be grammar or llm");
    const Json echo = mgr.feedback(id, body.at("text").get<std::string>(), *prov);
    if (echo.value("accepted", false)) {
      send(res, 200, echo);
    } else {
      send(res, 422, error_body(ErrorCode::Validation, echo.value("rejection", "feedback rejected"), echo));
    }
  });

  svr.Post(R"(/sessions/([0-9a-f]+)/finalize)", [&mgr](const httplib::Request& req, httplib::Response& res) {
    const auto result = mgr.finalize(req.matches[1]);
    if (result.repeated) {
      send(res, 409, error_body(ErrorCode::Conflict, "session already finalized", Json{{"report", result.report}}));
    } else {
      send(res, 200, result.report);
    }
  });

  svr.Get(R"(/sessions/([0-9a-f]+)/report)", [&mgr](const httplib::Request& req, httplib::Response& res) {
    send(res, 200, mgr.report(req.matches[1]));
  });

  svr.Get(R"(/sessions/([0-9a-f]+)/samples/([^/]+))", [&mgr](const httplib::Request& req, httplib::Response& res) {
    send(res, 200, mgr.sample(req.matches[1], index_param(req.matches[2], "sample index")));
  });

  if (!cfg_.static_dir.empty() && std::filesystem::is_directory(cfg_.static_dir)) {
    svr.set_mount_point("/", cfg_.static_dir.string());
  }

  svr.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) send_error(res, ErrorCode::NotFound, "no route for " + req.method + " " + req.path);
  });
}

}  // namespace postcorr::service
