#include "session_manager.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

namespace postcorr::service {
namespace fs = std::filesystem;

namespace {

constexpr std::array<std::pair<SessionState, std::string_view>, 6> kStates{{
    {SessionState::Created, "Created"},
    {SessionState::DataLoaded, "DataLoaded"},
    {SessionState::Optimizing, "Optimizing"},
    {SessionState::AwaitingFeedback, "AwaitingFeedback"},
    {SessionState::Finalized, "Finalized"},
    {SessionState::Failed, "Failed"},
}};

// Thrown from the episode observer to abandon a round on shutdown.
struct Cancelled {};

std::string utc_now() {
  char buf[32];
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  write_text_file(tmp, text);
  fs::rename(tmp, path);
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) fail(ErrorCode::Internal, "cannot append to " + path.string());
  out << line << '\n';
}

std::vector<Json> read_jsonl(const fs::path& path) {
  std::vector<Json> rows;
  if (!fs::exists(path)) return rows;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const nlohmann::json::exception&) {
      break;  // torn final line after a crash
    }
  }
  return rows;
}

[[noreturn]] void conflict(SessionState state, const std::string& what) {
  fail(ErrorCode::Conflict, what + " is not allowed in state " + std::string(state_name(state)));
}

}  // namespace

std::string_view state_name(SessionState s) noexcept {
  for (const auto& [v, n] : kStates)
    if (v == s) return n;
  return "?";
}

std::optional<SessionState> state_from_name(std::string_view name) noexcept {
  for (const auto& [v, n] : kStates)
    if (n == name) return v;
  return std::nullopt;
}

ServiceConfig service_config_from_json(const Json& j, ServiceConfig base) {
  if (!j.is_object()) fail(ErrorCode::Validation, "service config must be an object");
  ServiceConfig c = std::move(base);
  try {
    if (j.contains("listen")) {
      const auto listen = j.at("listen").get<std::string>();
      const auto colon = listen.rfind(':');
      if (colon == std::string::npos) fail(ErrorCode::Validation, "listen: expected host:port");
      c.host = listen.substr(0, colon);
      c.port = std::stoi(listen.substr(colon + 1));
    }
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.workers = j.value("workers", c.workers);
    c.store = j.value("store", c.store.string());
    c.token = j.value("token", c.token);
    c.static_dir = j.value("static_dir", c.static_dir.string());
    if (j.contains("llm")) {
      const Json& l = j.at("llm");
      c.llm.endpoint = l.value("endpoint", c.llm.endpoint);
      c.llm.model = l.value("model", c.llm.model);
      c.llm.api_key = l.value("api_key", c.llm.api_key);
      c.llm.max_retries = l.value("max_retries", c.llm.max_retries);
      c.llm.timeout = std::chrono::milliseconds(l.value("timeout_ms", static_cast<long long>(c.llm.timeout.count())));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Validation, std::string("service config: ") + e.what());
  } catch (const std::logic_error&) {
    fail(ErrorCode::Validation, "listen: bad port");
  }
  if (c.port < 0 || c.port > 65535) fail(ErrorCode::Validation, "port: must be in 0..65535");
  if (c.workers == 0) fail(ErrorCode::Validation, "workers: must be positive");
  return c;
}

Json to_json(const ServiceConfig& c) {
  return Json{{"host", c.host},
              {"port", c.port},
              {"workers", c.workers},
              {"store", c.store.string()},
              {"auth", !c.token.empty()},
              {"static_dir", c.static_dir.string()},
              {"llm", Json{{"endpoint", c.llm.endpoint},
                           {"model", c.llm.model},
                           {"timeout_ms", c.llm.timeout.count()},
                           {"max_retries", c.llm.max_retries}}}};
}

void apply_env_overrides(ServiceConfig& c, const std::function<const char*(const char*)>& getenv) {
  auto str = [&](const char* name, auto& field) {
    if (const char* v = getenv(name); v && *v) field = v;
  };
  auto num = [&](const char* name, auto& field) {
    const char* v = getenv(name);
    if (!v || !*v) return;
    try {
      std::size_t used = 0;
      const long long x = std::stoll(v, &used);
      if (used != std::string_view(v).size() || x < 0) throw std::invalid_argument(v);
      field = static_cast<std::remove_reference_t<decltype(field)>>(x);
    } catch (const std::logic_error&) {
      fail(ErrorCode::Validation, std::string(name) + ": not a non-negative integer");
    }
  };
  str("POSTCORR_HOST", c.host);
  num("POSTCORR_PORT", c.port);
  num("POSTCORR_WORKERS", c.workers);
  std::string store = c.store.string(), static_dir = c.static_dir.string();
  str("POSTCORR_STORE", store);
  str("POSTCORR_STATIC_DIR", static_dir);
  c.store = store;
  c.static_dir = static_dir;
  str("POSTCORR_TOKEN", c.token);
  str("POSTCORR_LLM_ENDPOINT", c.llm.endpoint);
  str("POSTCORR_LLM_MODEL", c.llm.model);
  str("POSTCORR_LLM_API_KEY", c.llm.api_key);
  long long timeout = c.llm.timeout.count();
  num("POSTCORR_LLM_TIMEOUT_MS", timeout);
  c.llm.timeout = std::chrono::milliseconds(timeout);
  if (c.port > 65535) fail(ErrorCode::Validation, "POSTCORR_PORT: must be in 0..65535");
  if (c.workers == 0) fail(ErrorCode::Validation, "POSTCORR_WORKERS: must be positive");
}

ServiceConfig load_service_config(const fs::path& path) {
  ServiceConfig c;
  if (!path.empty()) {
    Json j;
    try {
      j = Json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::Parse, path.string() + ": " + e.what());
    }
    c = service_config_from_json(j);
  }
  apply_env_overrides(c);
  return c;
}

struct SessionManager::Session {
  std::string id;
  mutable std::mutex mu;
  mutable std::condition_variable cv;

  SessionState state = SessionState::Created;
  std::string created_at;
  OptimizerConfig base_config;
  OptimizerConfig config;  // next round; base_config with the latest directive injected
  DatasetConfig dataset;
  bool external = false;
  std::unique_ptr<PreparedData> data;

  std::vector<Json> events;
  std::size_t round = 0;
  std::vector<Json> rounds;
  std::optional<CorrectionPlan> best_plan;
  double best_val_mse = 0.0;
  double baseline_val_mse = 0.0;
  bool best_consistent = true;
  std::optional<Json> interim_report;
  std::optional<Json> final_report;
  std::vector<Json> feedback;
  std::string error;

  mutable std::optional<ForecastBatch> test_cache;
  mutable std::optional<Tensor3> corrected_cache;

  Json view() const {
    Json j{{"id", id},
           {"state", std::string(state_name(state))},
           {"created_at", created_at},
           {"config", postcorr::to_json(config)},
           {"base_config", postcorr::to_json(base_config)},
           {"dataset", postcorr::to_json(dataset)},
           {"external_predictions", external},
           {"round", round},
           {"rounds", rounds},
           {"events", events.size()},
           {"feedback", feedback}};
    if (data) j["summary"] = data->summary();
    if (best_plan) {
      j["best_plan"] = postcorr::to_json(*best_plan);
      j["best_val_mse"] = best_val_mse;
      j["baseline_val_mse"] = baseline_val_mse;
      j["best_description"] = describe(*best_plan);
    }
    if (!error.empty()) j["error"] = error;
    return j;
  }

  Json document() const {
    Json j = view();
    j.erase("events");
    j.erase("summary");
    j["best_consistent"] = best_consistent;
    if (interim_report) j["interim_report"] = *interim_report;
    if (final_report) j["final_report"] = *final_report;
    return j;
  }
};

SessionManager::SessionManager(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  if (!cfg_.llm_transport) cfg_.llm_transport = http_transport();
  fs::create_directories(cfg_.store);
  restore();
  for (std::size_t i = 0; i < cfg_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

SessionManager::~SessionManager() { shutdown(); }

void SessionManager::shutdown() {
  stopping_ = true;
  queue_cv_.notify_all();
  {
    std::lock_guard lock(mu_);
    for (auto& [id, s] : sessions_) {
      std::lock_guard sl(s->mu);
      s->cv.notify_all();
    }
  }
  for (auto& t : workers_)
    if (t.joinable()) t.join();
  workers_.clear();
}

std::string SessionManager::new_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng()),
                static_cast<unsigned long long>(rng()));
  return buf;
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorCode::NotFound, "no session '" + id + "'");
  return it->second;
}

void SessionManager::persist(const Session& s) const {
  fs::create_directories(dir(s.id));
  write_atomic(dir(s.id) / "session.json", s.document().dump(2));
}

void SessionManager::prepare(Session& s) const {
  const RawSeries series = read_csv_file(dir(s.id) / "data.csv");
  std::optional<PredictionFile> ext;
  if (s.external) ext = load_prediction_file(dir(s.id) / "predictions.csv");
  s.data = std::make_unique<PreparedData>(series, s.dataset, ext ? &*ext : nullptr);
}

void SessionManager::restore() {
  for (const auto& entry : fs::directory_iterator(cfg_.store)) {
    const fs::path doc_path = entry.path() / "session.json";
    if (!entry.is_directory() || !fs::exists(doc_path)) continue;
    auto s = std::make_shared<Session>();
    try {
      const Json doc = Json::parse(read_text_file(doc_path));
      s->id = doc.at("id").get<std::string>();
      s->state = state_from_name(doc.at("state").get<std::string>()).value_or(SessionState::Failed);
      s->created_at = doc.value("created_at", "");
      s->base_config = config_from_json(doc.at("base_config"));
      s->config = config_from_json(doc.at("config"));
      s->dataset = dataset_config_from_json(doc.at("dataset"));
      s->external = doc.value("external_predictions", false);
      s->round = doc.value("round", std::size_t{0});
      s->rounds = doc.value("rounds", std::vector<Json>{});
      s->feedback = doc.value("feedback", std::vector<Json>{});
      s->error = doc.value("error", "");
      s->best_consistent = doc.value("best_consistent", true);
      if (doc.contains("best_plan")) {
        s->best_plan = plan_from_json(doc.at("best_plan"));
        s->best_val_mse = doc.at("best_val_mse").get<double>();
        s->baseline_val_mse = doc.at("baseline_val_mse").get<double>();
      }
      if (doc.contains("interim_report")) s->interim_report = doc.at("interim_report");
      if (doc.contains("final_report")) s->final_report = doc.at("final_report");
      s->events = read_jsonl(entry.path() / "trace.jsonl");
    } catch (const std::exception& e) {
      std::fprintf(stderr, "postcorr: skipping unreadable session %s: %s\n", entry.path().c_str(), e.what());
      continue;
    }
    if (s->state != SessionState::Created && s->state != SessionState::Failed) {
      try {
        prepare(*s);
      } catch (const std::exception& e) {
        s->state = SessionState::Failed;
        s->error = std::string("restore: ") + e.what();
      }
    }
    if (s->state == SessionState::Optimizing) {
      // the interrupted round is replayed from its stored config; its
      // partial episodes are regenerated identically
      const std::size_t r = s->round;
      std::erase_if(s->events, [r](const Json& e) { return e.value("round", std::size_t{0}) == r; });
      std::string text;
      for (const auto& e : s->events) text += e.dump() + "\n";
      write_atomic(entry.path() / "trace.jsonl", text);
    }
    persist(*s);
    sessions_.emplace(s->id, s);
    if (s->state == SessionState::Optimizing) schedule(s);
  }
}

Json SessionManager::create(const Json& body) {
  if (!body.is_object()) fail(ErrorCode::Validation, "request body must be a JSON object");
  auto s = std::make_shared<Session>();
  const bool structured = body.contains("config") || body.contains("dataset");
  if (structured) {
    if (body.contains("config")) s->base_config = config_from_json(body.at("config"));
    if (body.contains("dataset")) s->dataset = dataset_config_from_json(body.at("dataset"));
  } else {
    s->base_config = config_from_json(body);
  }
  s->config = s->base_config;
  s->created_at = utc_now();
  std::lock_guard lock(mu_);
  do {
    s->id = new_id();
  } while (sessions_.contains(s->id));
  persist(*s);
  sessions_.emplace(s->id, s);
  return s->view();
}

Json SessionManager::get(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->view();
}

Json SessionManager::list() const {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, s] : sessions_) all.push_back(s);
  }
  Json out = Json::array();
  for (const auto& s : all) {
    std::lock_guard lock(s->mu);
    out.push_back(Json{{"id", s->id}, {"state", std::string(state_name(s->state))}, {"created_at", s->created_at}});
  }
  return out;
}

Json SessionManager::upload(const std::string& id, const UploadRequest& req) {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  if (s->state != SessionState::Created) conflict(s->state, "data upload");

  // everything is validated before the session changes
  DatasetConfig dataset = s->dataset;
  if (req.dataset) {
    Json merged = postcorr::to_json(s->dataset);
    merged.merge_patch(*req.dataset);
    dataset = dataset_config_from_json(merged);
  }
  if (req.predictions && !req.dataset) dataset.baseline = Baseline::External;
  if (dataset.baseline == Baseline::External && !req.predictions) {
    fail(ErrorCode::Configuration, "baseline 'external' needs an uploaded prediction file");
  }
  const RawSeries series = parse_csv(req.csv);
  auto data = std::make_unique<PreparedData>(series, dataset, req.predictions ? &*req.predictions : nullptr);

  fs::create_directories(dir(id));
  write_text_file(dir(id) / "data.csv", serialize_csv(series));
  if (req.predictions) save_prediction_file(*req.predictions, dir(id) / "predictions.csv");
  s->dataset = dataset;
  s->external = req.predictions.has_value() && dataset.baseline == Baseline::External;
  s->data = std::move(data);
  s->state = SessionState::DataLoaded;
  persist(*s);
  return s->data->summary();
}

Json SessionManager::optimize(const std::string& id) {
  if (stopping_) fail(ErrorCode::Conflict, "service is shutting down");
  auto s = find(id);
  {
    std::lock_guard lock(s->mu);
    if (s->state != SessionState::DataLoaded && s->state != SessionState::AwaitingFeedback) {
      conflict(s->state, "optimization");
    }
    ++s->round;
    OptimizerConfig cfg = s->config;
    cfg.seed = s->base_config.seed + (s->round - 1);
    s->rounds.push_back(Json{{"round", s->round},
                             {"status", "running"},
                             {"first_event", s->events.size()},
                             {"config", postcorr::to_json(cfg)}});
    s->state = SessionState::Optimizing;
    persist(*s);
  }
  schedule(s);
  return get(id);
}

void SessionManager::schedule(std::shared_ptr<Session> s) {
  {
    std::lock_guard lock(queue_mu_);
    queue_.push_back(std::move(s));
  }
  queue_cv_.notify_one();
}

void SessionManager::worker_loop() {
  for (;;) {
    std::shared_ptr<Session> s;
    {
      std::unique_lock lock(queue_mu_);
      queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      s = std::move(queue_.front());
      queue_.pop_front();
    }
    run_round(s);
  }
}

void SessionManager::run_round(const std::shared_ptr<Session>& s) {
  OptimizerConfig cfg;
  Objective obj;
  std::size_t round = 0;
  double running_best = 0.0;
  {
    std::lock_guard lock(s->mu);
    cfg = config_from_json(s->rounds.back().at("config"));
    obj = s->data->objective();
    round = s->round;
    running_best = s->best_plan ? s->best_val_mse : INFINITY;
  }
  const fs::path trace_path = dir(s->id) / "trace.jsonl";
  cfg.on_episode = [&](const EpisodeRecord& rec) {
    if (stopping_) throw Cancelled{};
    std::size_t seq = 0;
    {
      std::lock_guard lock(s->mu);
      if (rec.episode == 0 || rec.accepted) running_best = std::min(running_best, rec.val_mse);
      EpisodeRecord copy = rec;
      copy.round = round;
      Json e = postcorr::to_json(copy);
      seq = s->events.size();
      e["seq"] = seq;
      e["best_val_mse"] = running_best;
      append_line(trace_path, e.dump());
      s->events.push_back(std::move(e));
      s->cv.notify_all();
    }
    if (cfg_.on_event) cfg_.on_event(s->id, seq);
  };

  try {
    const SearchTrace trace = postcorr::optimize(obj, cfg);
    const EvalReport val_report = evaluate_plan_on(trace.best_plan, obj.val);
    std::lock_guard lock(s->mu);
    Json& r = s->rounds.back();
    r["status"] = "complete";
    r["summary"] = trace_summary(trace);
    if (!s->best_plan || trace.best_val_mse < s->best_val_mse) {
      s->best_plan = trace.best_plan;
      s->best_val_mse = trace.best_val_mse;
      s->baseline_val_mse = trace.baseline_val_mse;
      s->best_consistent = true;
      for (const auto& e : trace.episodes)
        if (e.plan == trace.best_plan) {
          s->best_consistent = e.consistent;
          break;
        }
      Json interim = postcorr::to_json(val_report);
      interim["split"] = "validation";
      interim["round"] = round;
      interim["plan"] = postcorr::to_json(trace.best_plan);
      s->interim_report = interim;
    }
    s->state = SessionState::AwaitingFeedback;
    persist(*s);
    s->cv.notify_all();
  } catch (const Cancelled&) {
    // stays Optimizing on disk; the next instance replays the round
  } catch (const std::exception& e) {
    std::lock_guard lock(s->mu);
    s->state = SessionState::Failed;
    s->error = std::string("optimization failed: ") + e.what();
    s->rounds.back()["status"] = "failed";
    persist(*s);
    s->cv.notify_all();
  }
}

EventsPage SessionManager::events(const std::string& id, std::size_t from) const {
  return wait_events(id, from, std::chrono::milliseconds(0));
}

EventsPage SessionManager::wait_events(const std::string& id, std::size_t from, std::chrono::milliseconds timeout) const {
  auto s = find(id);
  std::unique_lock lock(s->mu);
  if (timeout.count() > 0) {
    s->cv.wait_for(lock, timeout, [&] {
      return stopping_ || s->events.size() > from || s->state != SessionState::Optimizing;
    });
  }
  EventsPage page;
  for (std::size_t i = from; i < s->events.size(); ++i) page.events.push_back(s->events[i]);
  page.next = std::max(from, s->events.size());
  page.state = s->state;
  page.complete = s->state != SessionState::Optimizing;
  return page;
}

bool SessionManager::wait_idle(const std::string& id, std::chrono::milliseconds timeout) const {
  auto s = find(id);
  std::unique_lock lock(s->mu);
  return s->cv.wait_for(lock, timeout, [&] { return s->state != SessionState::Optimizing; });
}

Json SessionManager::feedback(const std::string& id, const std::string& text, Provenance path) {
  auto s = find(id);
  {
    std::lock_guard lock(s->mu);
    if (s->state != SessionState::AwaitingFeedback) conflict(s->state, "feedback");
  }
  // parsed without the session lock: the model call may be slow
  FeedbackDirective d =
      path == Provenance::Grammar ? parse_grammar(text) : parse_llm(text, cfg_.llm, cfg_.llm_transport);

  std::lock_guard lock(s->mu);
  if (s->state != SessionState::AwaitingFeedback) conflict(s->state, "feedback");
  append_audit(dir(id) / "feedback.jsonl", d);
  Json echo = postcorr::to_json(d);
  Json entry = echo;
  entry["round"] = s->round;
  if (d.accepted()) {
    const std::uint64_t seed = s->config.seed;
    s->config = inject(d, s->base_config);
    s->config.seed = seed;
    echo["config"] = postcorr::to_json(s->config);
  }
  s->feedback.push_back(std::move(entry));
  persist(*s);
  return echo;
}

FinalizeResult SessionManager::finalize(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  if (s->state == SessionState::Finalized) return {*s->final_report, true};
  if (s->state != SessionState::AwaitingFeedback || !s->best_plan) conflict(s->state, "finalize");

  // the only place the test split is materialized before finalization
  const ForecastBatch test = s->data->test_batch();
  EvalReport report = evaluate_plan_on(*s->best_plan, test);
  report.train_consistent = s->best_consistent;
  Json j = postcorr::to_json(report);
  j["split"] = "test";
  j["plan"] = postcorr::to_json(*s->best_plan);
  j["plan_description"] = describe(*s->best_plan);
  j["best_val_mse"] = s->best_val_mse;
  j["rounds"] = s->round;
  j["samples"] = test.shape().samples;
  j["channels"] = test.shape().channels;
  j["horizon"] = test.shape().horizon;
  s->final_report = j;
  s->state = SessionState::Finalized;
  write_atomic(dir(id) / "report.json", j.dump(2));
  persist(*s);
  s->cv.notify_all();
  return {j, false};
}

Json SessionManager::report(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  if (s->final_report) return *s->final_report;
  if (s->interim_report) return *s->interim_report;
  conflict(s->state, "report");
}

Json SessionManager::sample(const std::string& id, std::size_t index) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  if (s->state != SessionState::Finalized) conflict(s->state, "sample inspection");
  if (!s->test_cache) {
    s->test_cache = s->data->test_batch();
    s->corrected_cache = apply_plan(*s->best_plan, s->test_cache->predictions(), s->test_cache->sample_ids());
  }
  const ForecastBatch& test = *s->test_cache;
  const Shape shape = test.shape();
  if (index >= shape.samples) {
    fail(ErrorCode::NotFound, "sample index " + std::to_string(index) + " out of range (n_samples " +
                                  std::to_string(shape.samples) + ")");
  }
  const std::string& sid = test.sample_ids()[index];
  const Window* window = nullptr;
  const auto all = s->data->all_windows();
  for (const auto& w : all)
    if (w.sample_id == sid) window = &w;
  Json channels = Json::array();
  const std::size_t d = shape.channels;
  for (std::size_t c = 0; c < d; ++c) {
    Json context = Json::array(), truth = Json::array(), base = Json::array(), corrected = Json::array();
    if (window)
      for (std::size_t t = 0; t < window->context.size() / d; ++t) context.push_back(window->context[t * d + c]);
    for (std::size_t h = 0; h < shape.horizon; ++h) {
      truth.push_back(test.truth().at(index, h, c));
      base.push_back(test.predictions().at(index, h, c));
      corrected.push_back(s->corrected_cache->at(index, h, c));
    }
    const auto& names = s->data->series().column_names;
    channels.push_back(Json{{"channel", c},
                            {"name", c < names.size() ? names[c] : std::to_string(c)},
                            {"context", context},
                            {"truth", truth},
                            {"base", base},
                            {"corrected", corrected}});
  }
  return Json{{"index", index}, {"n_samples", shape.samples}, {"sample_id", sid}, {"channels", channels}};
}

}  // namespace postcorr::service
