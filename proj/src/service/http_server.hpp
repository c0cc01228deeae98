#pragma once

#include <memory>
#include <thread>

#include "session_manager.hpp"

namespace httplib {
class Server;
}

namespace postcorr::service {

int http_status(ErrorCode code) noexcept;
Json error_body(ErrorCode code, const std::string& message, Json details = Json::object());

// Routes:
//   GET  /health
//   GET  /phrasebook
//   GET  /sessions
//   POST /sessions
//   GET  /sessions/{id}
//   POST /sessions/{id}/data        JSON {csv, dataset?, predictions?{csv, meta}} or text/csv
//   POST /sessions/{id}/optimize
//   GET  /sessions/{id}/events?from=n   SSE with Accept: text/event-stream
//   POST /sessions/{id}/feedback    {text, path: grammar|llm}
//   POST /sessions/{id}/finalize
//   GET  /sessions/{id}/report
//   GET  /sessions/{id}/samples/{k}
class HttpServer {
 public:
  explicit HttpServer(ServiceConfig cfg);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds the listen socket; returns the bound port. Throws Internal when
  // the address is unavailable.
  int bind();
  // Serves on a background thread; bind() first.
  void start();
  // Cancels running rounds, closes connections, joins threads. Idempotent.
  void stop();

  int port() const noexcept { return port_; }
  SessionManager& sessions() noexcept { return *sessions_; }

 private:
  void routes();

  ServiceConfig cfg_;
  std::unique_ptr<SessionManager> sessions_;
  std::unique_ptr<httplib::Server> http_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace postcorr::service
