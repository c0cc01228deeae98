#include <csignal>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "postcorr/postcorr.h"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

volatile std::sig_atomic_t g_interrupted = 0;

void on_signal(int) { g_interrupted = 1; }

int exit_code(postcorr_status s) {
  switch (s) {
    case POSTCORR_OK: return 0;
    case POSTCORR_E_INTERNAL:
    case POSTCORR_E_TRANSPORT:
    case POSTCORR_E_CANCELLED: return 1;
    default: return 2;
  }
}

int report_failure(postcorr_status s, const char* context) {
  std::cerr << "postcorr " << context << ": " << postcorr_status_name(s) << ": " << postcorr_last_error() << "\n";
  return exit_code(s);
}

// Owns a string returned through a char** out-parameter.
struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { postcorr_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

bool write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  return static_cast<bool>(out);
}

struct DatasetFlags {
  std::size_t window = 96, horizon = 96, stride = 1;
  std::vector<double> split;
  bool normalize = false;
  std::string baseline;
  double ridge_lambda = 1e-2;
  CLI::Option* baseline_opt = nullptr;
  CLI::Option* lambda_opt = nullptr;

  void add(CLI::App& cmd) {
    cmd.add_option("--window,--window_size", window, "Context length W")->capture_default_str()->check(CLI::PositiveNumber);
    cmd.add_option("--horizon,--prediction_horizon", horizon, "Forecast horizon H")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd.add_option("--stride", stride, "Window stride")->capture_default_str()->check(CLI::PositiveNumber);
    cmd.add_option("--split", split, "Train/validation/test fractions")->expected(3)->delimiter(',');
    cmd.add_flag("--normalize", normalize, "Per-channel z-score fitted on train");
  }

  Json json() const {
    Json j{{"window", window}, {"horizon", horizon}, {"stride", stride}, {"normalize", normalize}};
    if (!split.empty()) j["split"] = split;
    if (!baseline.empty()) j["baseline"] = baseline;
    if (lambda_opt && lambda_opt->count() > 0) j["ridge_lambda"] = ridge_lambda;
    return j;
  }
};

int episode_progress(const char* episode_json, void* user) {
  auto* best = static_cast<double*>(user);
  const Json e = Json::parse(episode_json);
  const double v = e["val_mse"];
  if (e["episode"] == 0 || (e["accepted"].get<bool>() && v < *best)) {
    *best = v;
    std::cerr << "episode " << e["episode"].get<std::size_t>() << ": val_mse " << v << "  " << e["action"].get<std::string>()
              << "\n";
  }
  return g_interrupted ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Post-training forecast correction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", postcorr_version());

  // optimize
  auto* opt = app.add_subcommand("optimize", "Search for a correction plan and evaluate it on the test split");
  std::string data_path, predictions_path, out_dir, config_path, strategy, affine_scope;
  std::vector<std::string> actions;
  std::size_t budget = 0, episodes = 0, jobs = 1, max_steps = 0;
  std::uint64_t seed = 0;
  double guard = 0.0;
  bool affine_tail = false, verbose = false;
  DatasetFlags opt_data;
  opt->add_option("--data,--train_path", data_path, "Series CSV (header row, optional leading date column)")
      ->required()
      ->check(CLI::ExistingFile);
  auto* pred_opt = opt->add_option("--predictions", predictions_path, "External base forecasts (CSV + JSON sidecar)")
                       ->check(CLI::ExistingFile);
  opt_data.baseline_opt = opt->add_option("--baseline", opt_data.baseline, "Built-in base forecaster")
                              ->check(CLI::IsMember({"persistence", "ridge"}))
                              ->excludes(pred_opt);
  opt_data.lambda_opt = opt->add_option("--ridge-lambda", opt_data.ridge_lambda, "Ridge penalty");
  opt_data.add(*opt);
  opt->add_option("--config", config_path, "Optimizer config JSON; flags override it")->check(CLI::ExistingFile);
  auto* strategy_opt = opt->add_option("--strategy", strategy, "Search strategy")
                           ->check(CLI::IsMember({"random", "sh-hpo", "ppo", "ga"}));
  auto* budget_opt = opt->add_option("--budget", budget, "Candidate evaluations");
  auto* episodes_opt = opt->add_option("--episodes", episodes, "Policy-update rounds (ppo)");
  auto* seed_opt = opt->add_option("--seed", seed, "Random seed");
  auto* jobs_opt = opt->add_option("--jobs,--n-jobs,--n_jobs", jobs, "Parallel evaluations")->check(CLI::PositiveNumber);
  auto* steps_opt = opt->add_option("--max-steps", max_steps, "Maximum actions per plan");
  auto* guard_opt = opt->add_option("--guard-tolerance", guard, "Allowed relative train-MSE increase");
  auto* tail_opt = opt->add_flag("--affine-tail", affine_tail, "Append a fitted affine correction to every candidate");
  auto* scope_opt = opt->add_option("--affine-scope", affine_scope, "Affine grouping")
                        ->check(CLI::IsMember({"global", "per_channel", "per_horizon"}));
  auto* actions_opt = opt->add_option("--actions", actions, "Restrict the action space")->delimiter(',');
  opt->add_option("--out", out_dir, "Output directory")->required();
  opt->add_flag("-v,--verbose", verbose, "Print improving episodes to standard error");

  // apply
  auto* apply = app.add_subcommand("apply", "Apply a stored plan to a prediction file");
  std::string plan_path, apply_in, apply_out;
  apply->add_option("--plan", plan_path, "Plan JSON")->required()->check(CLI::ExistingFile);
  apply->add_option("--predictions", apply_in, "Prediction file (CSV + JSON sidecar)")->required()->check(CLI::ExistingFile);
  apply->add_option("--out", apply_out, "Corrected prediction file")->required();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score a prediction file against the truth");
  std::string eval_pred, truth_path, eval_base;
  DatasetFlags eval_data;
  eval->add_option("--predictions", eval_pred, "Prediction file")->required()->check(CLI::ExistingFile);
  eval->add_option("--truth-data,--truth_data", truth_path, "Series CSV holding the truth")->required()->check(CLI::ExistingFile);
  eval->add_option("--baseline-predictions", eval_base, "Base forecasts; enables the improvement report")
      ->check(CLI::ExistingFile);
  eval_data.add(*eval);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the correction service");
  std::string serve_config, host, store, static_dir;
  int port = -1;
  std::size_t workers = 0;
  serve->add_option("--config", serve_config, "Service config JSON")->check(CLI::ExistingFile);
  auto* host_opt = serve->add_option("--host", host, "Listen address");
  auto* port_opt = serve->add_option("--port", port, "Listen port (0 picks one)")->check(CLI::Range(0, 65535));
  auto* store_opt = serve->add_option("--store", store, "Session store directory");
  auto* workers_opt = serve->add_option("--workers", workers, "Optimization workers")->check(CLI::PositiveNumber);
  auto* static_opt = serve->add_option("--static-dir", static_dir, "Directory served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "postcorr: " << e.what() << "\n\n";
    const CLI::App* failing = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << failing->help();
    return 2;
  }

  if (*opt) {
    Json cfg = Json::object();
    if (!config_path.empty()) {
      try {
        std::ifstream in(config_path);
        cfg = Json::parse(in);
      } catch (const Json::exception& e) {
        std::cerr << "postcorr optimize: --config: " << e.what() << "\n";
        return 2;
      }
    }
    if (strategy_opt->count()) cfg["strategy"] = strategy;
    if (budget_opt->count()) cfg["budget"] = budget;
    if (episodes_opt->count()) cfg["episodes"] = episodes;
    if (seed_opt->count()) cfg["seed"] = seed;
    if (jobs_opt->count()) cfg["jobs"] = jobs;
    if (steps_opt->count()) cfg["max_steps"] = max_steps;
    if (guard_opt->count()) cfg["guard_tolerance"] = guard;
    if (tail_opt->count()) cfg["affine_tail"] = affine_tail;
    if (scope_opt->count()) cfg["affine_scope"] = affine_scope;
    if (actions_opt->count()) cfg["action_space"] = actions;

    postcorr_dataset* ds = nullptr;
    const std::string dataset = opt_data.json().dump();
    postcorr_status s = postcorr_dataset_load(data_path.c_str(), dataset.c_str(),
                                              predictions_path.empty() ? nullptr : predictions_path.c_str(), &ds);
    if (s != POSTCORR_OK) return report_failure(s, "optimize");
    std::signal(SIGINT, on_signal);
    double best = INFINITY;
    postcorr_result* result = nullptr;
    s = postcorr_optimize(ds, cfg.dump().c_str(), verbose ? episode_progress : nullptr, &best, &result);
    postcorr_dataset_free(ds);
    if (s != POSTCORR_OK) return report_failure(s, "optimize");

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    const fs::path out(out_dir);
    const bool written = write_file(out / "plan.json", postcorr_result_plan(result)) &&
                         write_file(out / "trace.jsonl", postcorr_result_trace(result)) &&
                         write_file(out / "report.json", postcorr_result_report(result));
    if (!written) {
      postcorr_result_free(result);
      std::cerr << "postcorr optimize: cannot write to " << out_dir << "\n";
      return 1;
    }
    s = postcorr_result_save_predictions(result, (out / "base_predictions.csv").c_str(),
                                         (out / "corrected_predictions.csv").c_str());
    if (s != POSTCORR_OK) {
      postcorr_result_free(result);
      return report_failure(s, "optimize");
    }
    const Json report = Json::parse(postcorr_result_report(result));
    const Json summary = Json::parse(postcorr_result_summary(result));
    std::cerr << "strategy " << summary["strategy"].get<std::string>() << ", " << summary["evaluations"] << " evaluations\n";
    std::cerr << "best plan: " << summary["best_description"].get<std::string>() << "\n";
    if (report.contains("improvement") && !report["improvement"].is_null()) {
      std::cerr << "test MSE " << report["mse_before"] << " -> " << report["mse_after"] << " (M = " << report["improvement"]
                << ")\n";
    }
    postcorr_result_free(result);
    return 0;
  }

  if (*apply) {
    const postcorr_status s = postcorr_apply(plan_path.c_str(), apply_in.c_str(), apply_out.c_str());
    return s == POSTCORR_OK ? 0 : report_failure(s, "apply");
  }

  if (*eval) {
    OwnedString report;
    const std::string dataset = eval_data.json().dump();
    const postcorr_status s = postcorr_evaluate(eval_pred.c_str(), truth_path.c_str(), dataset.c_str(),
                                                eval_base.empty() ? nullptr : eval_base.c_str(), &report.p);
    if (s != POSTCORR_OK) return report_failure(s, "evaluate");
    std::cout << report.str();
    return 0;
  }

  if (*serve) {
    Json overrides = Json::object();
    if (host_opt->count()) overrides["host"] = host;
    if (port_opt->count()) overrides["port"] = port;
    if (store_opt->count()) overrides["store"] = store;
    if (workers_opt->count()) overrides["workers"] = workers;
    if (static_opt->count()) overrides["static_dir"] = static_dir;
    postcorr_server* srv = nullptr;
    postcorr_status s =
        postcorr_server_create(serve_config.empty() ? nullptr : serve_config.c_str(), overrides.dump().c_str(), &srv);
    if (s != POSTCORR_OK) return report_failure(s, "serve");
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    int bound = 0;
    s = postcorr_server_start(srv, &bound);
    if (s != POSTCORR_OK) {
      postcorr_server_free(srv);
      return report_failure(s, "serve");
    }
    std::cerr << "listening on port " << bound << "\n";
    while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    std::cerr << "shutting down\n";
    s = postcorr_server_stop(srv);
    postcorr_server_free(srv);
    return s == POSTCORR_OK ? 0 : report_failure(s, "serve");
  }
  return 2;
}
