#include <cstring>
#include <optional>
#include <unordered_map>
#include <unordered_set>

#include "http_server.hpp"
#include "pipeline.hpp"
#include "postcorr/postcorr.h"

using namespace postcorr;

struct postcorr_dataset {
  std::unique_ptr<PreparedData> data;
};

struct postcorr_result {
  SearchTrace trace;
  EvalReport report;
  ForecastBatch test;
  PredictionMeta meta;
  std::string plan_json, trace_jsonl, report_json, summary_json;
};

struct postcorr_server {
  std::unique_ptr<service::HttpServer> server;
};

namespace {

thread_local std::string g_last_error;

// Raised when an episode callback asks to stop.
struct CallbackCancelled {};

postcorr_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::Dimension: return POSTCORR_E_DIMENSION;
    case ErrorCode::Validation: return POSTCORR_E_VALIDATION;
    case ErrorCode::Domain: return POSTCORR_E_DOMAIN;
    case ErrorCode::Parse: return POSTCORR_E_PARSE;
    case ErrorCode::Structural: return POSTCORR_E_STRUCTURAL;
    case ErrorCode::Configuration: return POSTCORR_E_CONFIGURATION;
    case ErrorCode::Alignment: return POSTCORR_E_ALIGNMENT;
    case ErrorCode::Conflict: return POSTCORR_E_CONFLICT;
    case ErrorCode::NotFound: return POSTCORR_E_NOT_FOUND;
    case ErrorCode::Transport: return POSTCORR_E_TRANSPORT;
    case ErrorCode::Internal: return POSTCORR_E_INTERNAL;
  }
  return POSTCORR_E_INTERNAL;
}

postcorr_status set_error(postcorr_status s, std::string message) {
  g_last_error = std::move(message);
  return s;
}

template <class F>
postcorr_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return POSTCORR_OK;
  } catch (const Error& e) {
    return set_error(status_of(e.code()), e.what());
  } catch (const CallbackCancelled&) {
    return set_error(POSTCORR_E_CANCELLED, "cancelled by the episode callback");
  } catch (const nlohmann::json::exception& e) {
    return set_error(POSTCORR_E_PARSE, e.what());
  } catch (const std::bad_alloc&) {
    return set_error(POSTCORR_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(POSTCORR_E_INTERNAL, e.what());
  } catch (...) {
    return set_error(POSTCORR_E_INTERNAL, "unknown error");
  }
}

#define POSTCORR_REQUIRE(cond, what) \
  if (!(cond)) return set_error(POSTCORR_E_INVALID_ARGUMENT, what)

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

Json parse_json_arg(const char* text, const char* what) {
  if (!text || !*text) return Json::object();
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string(what) + " is not valid JSON: " + e.what());
  }
}

Json read_json_file(const char* path, const char* what) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string(what) + " " + path + " is not valid JSON: " + e.what());
  }
}

// Truth windows whose ids appear in `file`, in series order.
std::vector<Window> truth_for(const PredictionFile& file, const std::vector<Window>& all) {
  std::unordered_set<std::string> wanted;
  for (const auto& r : file.records) wanted.insert(r.sample_id);
  std::vector<Window> out;
  for (const auto& w : all)
    if (wanted.erase(w.sample_id)) out.push_back(w);
  if (!wanted.empty()) {
    fail(ErrorCode::Alignment, "prediction sample '" + *wanted.begin() + "' has no truth window");
  }
  return out;
}

}  // namespace

extern "C" {

const char* postcorr_version(void) { return "1.0.0"; }

const char* postcorr_status_name(postcorr_status status) {
  switch (status) {
    case POSTCORR_OK: return "ok";
    case POSTCORR_E_INVALID_ARGUMENT: return "invalid_argument";
    case POSTCORR_E_VALIDATION: return "validation_error";
    case POSTCORR_E_PARSE: return "parse_error";
    case POSTCORR_E_STRUCTURAL: return "structural_error";
    case POSTCORR_E_ALIGNMENT: return "alignment_error";
    case POSTCORR_E_DIMENSION: return "dimension_error";
    case POSTCORR_E_DOMAIN: return "domain_error";
    case POSTCORR_E_CONFIGURATION: return "configuration_error";
    case POSTCORR_E_CONFLICT: return "conflict";
    case POSTCORR_E_NOT_FOUND: return "not_found";
    case POSTCORR_E_TRANSPORT: return "transport_error";
    case POSTCORR_E_CANCELLED: return "cancelled";
    case POSTCORR_E_INTERNAL: return "internal_error";
  }
  return "unknown";
}

const char* postcorr_last_error(void) { return g_last_error.c_str(); }

void postcorr_string_free(char* s) { std::free(s); }

postcorr_status postcorr_dataset_load(const char* csv_path, const char* dataset_json, const char* predictions_path,
                                      postcorr_dataset** out) {
  POSTCORR_REQUIRE(csv_path && out, "csv_path and out are required");
  *out = nullptr;
  return guarded([&] {
    const Json dj = parse_json_arg(dataset_json, "dataset config");
    DatasetConfig cfg = dataset_config_from_json(dj);
    std::optional<PredictionFile> ext;
    if (predictions_path && *predictions_path) {
      ext = load_prediction_file(predictions_path);
      if (!dj.contains("baseline")) cfg.baseline = Baseline::External;
    }
    const RawSeries series = read_csv_file(csv_path);
    auto ds = std::make_unique<postcorr_dataset>();
    ds->data = std::make_unique<PreparedData>(series, cfg, ext ? &*ext : nullptr);
    *out = ds.release();
  });
}

void postcorr_dataset_free(postcorr_dataset* ds) { delete ds; }

postcorr_status postcorr_dataset_summary(const postcorr_dataset* ds, char** summary_json) {
  POSTCORR_REQUIRE(ds && summary_json, "ds and summary_json are required");
  return guarded([&] { *summary_json = dup_string(ds->data->summary().dump()); });
}

postcorr_status postcorr_optimize(const postcorr_dataset* ds, const char* config_json, postcorr_episode_cb cb,
                                  void* user, postcorr_result** out) {
  POSTCORR_REQUIRE(ds && out, "ds and out are required");
  *out = nullptr;
  return guarded([&] {
    OptimizerConfig cfg = config_from_json(parse_json_arg(config_json, "optimizer config"));
    if (cb) {
      cfg.on_episode = [cb, user](const EpisodeRecord& rec) {
        if (cb(to_json(rec).dump().c_str(), user) != 0) throw CallbackCancelled{};
      };
    }
    auto r = std::make_unique<postcorr_result>();
    const Objective obj = ds->data->objective();
    r->test = ds->data->test_batch();
    RunResult run_result = run(obj, cfg, r->test);
    r->trace = std::move(run_result.trace);
    r->report = std::move(run_result.test_report);
    r->meta = ds->data->predictions().meta;
    r->plan_json = to_json(r->trace.best_plan).dump(2) + "\n";
    r->trace_jsonl = trace_jsonl(r->trace, &r->report);
    r->report_json = to_json(r->report).dump(2) + "\n";
    r->summary_json = trace_summary(r->trace).dump();
    *out = r.release();
  });
}

void postcorr_result_free(postcorr_result* r) { delete r; }

const char* postcorr_result_plan(const postcorr_result* r) { return r ? r->plan_json.c_str() : nullptr; }
const char* postcorr_result_trace(const postcorr_result* r) { return r ? r->trace_jsonl.c_str() : nullptr; }
const char* postcorr_result_report(const postcorr_result* r) { return r ? r->report_json.c_str() : nullptr; }
const char* postcorr_result_summary(const postcorr_result* r) { return r ? r->summary_json.c_str() : nullptr; }

postcorr_status postcorr_result_save_predictions(const postcorr_result* r, const char* base_path,
                                                 const char* corrected_path) {
  POSTCORR_REQUIRE(r, "r is required");
  return guarded([&] {
    if (base_path && *base_path) {
      save_prediction_file(prediction_file_from(r->test.predictions(), r->test.sample_ids(), r->meta), base_path);
    }
    if (corrected_path && *corrected_path) {
      const Tensor3 corrected = apply_plan(r->trace.best_plan, r->test.predictions(), r->test.sample_ids());
      PredictionMeta meta = r->meta;
      meta.model += "+corrected";
      save_prediction_file(prediction_file_from(corrected, r->test.sample_ids(), meta), corrected_path);
    }
  });
}

postcorr_status postcorr_apply(const char* plan_path, const char* predictions_path, const char* out_path) {
  POSTCORR_REQUIRE(plan_path && predictions_path && out_path, "plan_path, predictions_path and out_path are required");
  return guarded([&] {
    const CorrectionPlan plan = plan_from_json(read_json_file(plan_path, "plan"));
    const PredictionFile file = load_prediction_file(predictions_path);
    const PredictionTensor t = prediction_tensor(file);
    const Tensor3 corrected = apply_plan(plan, t.values, t.sample_ids);
    save_prediction_file(prediction_file_from(corrected, t.sample_ids, file.meta), out_path);
  });
}

postcorr_status postcorr_evaluate(const char* predictions_path, const char* truth_csv_path, const char* dataset_json,
                                  const char* baseline_path, char** report_json) {
  POSTCORR_REQUIRE(predictions_path && truth_csv_path && report_json, "predictions_path, truth_csv_path and report_json are required");
  return guarded([&] {
    DatasetConfig cfg = dataset_config_from_json(parse_json_arg(dataset_json, "dataset config"));
    cfg.baseline = Baseline::Persistence;  // only the truth windows are used
    const PreparedData truth(read_csv_file(truth_csv_path), cfg);
    const auto all = truth.all_windows();
    const PredictionFile preds = load_prediction_file(predictions_path);
    const auto windows = truth_for(preds, all);
    const ForecastBatch after = load_predictions(preds, windows, truth.channels());
    Json j;
    if (baseline_path && *baseline_path) {
      const PredictionFile base = load_prediction_file(baseline_path);
      const ForecastBatch before = load_predictions(base, windows, truth.channels());
      j = to_json(per_channel_report(before, after));
    } else {
      const double m = mse(after.predictions(), after.truth());
      Json channels = Json::array();
      for (std::size_t c = 0; c < truth.channels(); ++c) {
        channels.push_back(Json{{"channel", c}, {"mse", channel_mse(after.predictions(), after.truth(), c)}});
      }
      j = Json{{"mse", m}, {"rmse", rmse(m)}, {"per_channel", channels}};
    }
    j["samples"] = windows.size();
    *report_json = dup_string(j.dump(2) + "\n");
  });
}

postcorr_status postcorr_parse_feedback(const char* text, char** directive_json) {
  POSTCORR_REQUIRE(text && directive_json, "text and directive_json are required");
  return guarded([&] { *directive_json = dup_string(to_json(parse_grammar(text)).dump()); });
}

postcorr_status postcorr_server_create(const char* config_path, const char* overrides_json, postcorr_server** out) {
  POSTCORR_REQUIRE(out, "out is required");
  *out = nullptr;
  return guarded([&] {
    service::ServiceConfig cfg = service::load_service_config(config_path ? config_path : "");
    if (overrides_json && *overrides_json) {
      cfg = service::service_config_from_json(parse_json_arg(overrides_json, "server overrides"), std::move(cfg));
    }
    auto srv = std::make_unique<postcorr_server>();
    srv->server = std::make_unique<service::HttpServer>(std::move(cfg));
    *out = srv.release();
  });
}

postcorr_status postcorr_server_start(postcorr_server* srv, int* port) {
  POSTCORR_REQUIRE(srv, "srv is required");
  return guarded([&] {
    const int bound = srv->server->bind();
    srv->server->start();
    if (port) *port = bound;
  });
}

postcorr_status postcorr_server_stop(postcorr_server* srv) {
  POSTCORR_REQUIRE(srv, "srv is required");
  return guarded([&] { srv->server->stop(); });
}

void postcorr_server_free(postcorr_server* srv) { delete srv; }

}  // extern "C"
