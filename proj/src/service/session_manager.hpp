#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "feedback.hpp"
#include "pipeline.hpp"

namespace postcorr::service {

enum class SessionState { Created, DataLoaded, Optimizing, AwaitingFeedback, Finalized, Failed };

std::string_view state_name(SessionState s) noexcept;
std::optional<SessionState> state_from_name(std::string_view name) noexcept;

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::size_t workers = 2;
  std::filesystem::path store = "postcorr-store";
  std::string token;  // empty disables auth
  std::filesystem::path static_dir;
  LlmConfig llm;
  LlmTransport llm_transport;  // defaults to http_transport(); not serialized
  // Called on the worker after each event is recorded, outside the session
  // lock; not serialized.
  std::function<void(const std::string& session_id, std::size_t seq)> on_event;
};

// Fields present in `j` replace those of `base`.
ServiceConfig service_config_from_json(const Json& j, ServiceConfig base = {});
Json to_json(const ServiceConfig& cfg);
// POSTCORR_HOST, _PORT, _WORKERS, _STORE, _TOKEN, _STATIC_DIR, _LLM_ENDPOINT,
// _LLM_MODEL, _LLM_API_KEY, _LLM_TIMEOUT_MS.
void apply_env_overrides(ServiceConfig& cfg, const std::function<const char*(const char*)>& getenv = std::getenv);
ServiceConfig load_service_config(const std::filesystem::path& path);

struct UploadRequest {
  std::string csv;
  std::optional<Json> dataset;  // DatasetConfig; session default when absent
  std::optional<PredictionFile> predictions;
};

struct EventsPage {
  std::vector<Json> events;
  std::size_t next = 0;
  SessionState state = SessionState::Created;
  bool complete = true;  // no round in progress
};

struct FinalizeResult {
  Json report;
  bool repeated = false;
};

// Thread-safe session store backed by one directory per session:
//   session.json   state, configs, rounds, best plan, reports
//   data.csv       uploaded series
//   predictions.*  external base forecasts, when uploaded
//   trace.jsonl    every episode event, in order
//   feedback.jsonl audit log of all feedback, accepted or not
class SessionManager {
 public:
  explicit SessionManager(ServiceConfig cfg);
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  Json create(const Json& body);
  Json get(const std::string& id) const;
  Json list() const;
  Json upload(const std::string& id, const UploadRequest& request);
  Json optimize(const std::string& id);
  EventsPage events(const std::string& id, std::size_t from) const;
  // Blocks until there are events at or after `from`, the round ends, or
  // the timeout passes.
  EventsPage wait_events(const std::string& id, std::size_t from, std::chrono::milliseconds timeout) const;
  Json feedback(const std::string& id, const std::string& text, Provenance path);
  FinalizeResult finalize(const std::string& id);
  Json report(const std::string& id) const;
  // Context, truth, base and corrected forecast of one test window.
  Json sample(const std::string& id, std::size_t index) const;

  bool wait_idle(const std::string& id, std::chrono::milliseconds timeout) const;

  // Cancels running rounds (they stay Optimizing on disk and are restarted
  // by the next instance) and joins the workers. Idempotent.
  void shutdown();
  bool stopping() const noexcept { return stopping_; }
  const ServiceConfig& config() const noexcept { return cfg_; }

 private:
  struct Session;

  std::shared_ptr<Session> find(const std::string& id) const;
  void persist(const Session& s) const;
  void restore();
  void prepare(Session& s) const;
  void schedule(std::shared_ptr<Session> s);
  void run_round(const std::shared_ptr<Session>& s);
  void worker_loop();
  std::filesystem::path dir(const std::string& id) const { return cfg_.store / id; }
  std::string new_id();

  ServiceConfig cfg_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<std::shared_ptr<Session>> queue_;
  std::vector<std::thread> workers_;
  std::atomic<bool> stopping_{false};
};

}  // namespace postcorr::service
