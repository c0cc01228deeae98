#ifndef POSTCORR_H
#define POSTCORR_H

/*
 * C interface to the post-training forecast correction engine.
 *
 * Conventions:
 *   - Every function returns a postcorr_status; POSTCORR_OK is 0.
 *   - On failure, postcorr_last_error() describes the error of the most
 *     recent failing call on the calling thread.
 *   - Strings returned through char** out-parameters are owned by the caller
 *     and released with postcorr_string_free().
 *   - Structured values (configs, plans, reports) cross the boundary as JSON
 *     text; see README.md for the schemas.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define POSTCORR_API __declspec(dllexport)
#else
#define POSTCORR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum postcorr_status {
  POSTCORR_OK = 0,
  POSTCORR_E_INVALID_ARGUMENT = 1, /* null or malformed argument */
  POSTCORR_E_VALIDATION = 2,
  POSTCORR_E_PARSE = 3,
  POSTCORR_E_STRUCTURAL = 4,
  POSTCORR_E_ALIGNMENT = 5,
  POSTCORR_E_DIMENSION = 6,
  POSTCORR_E_DOMAIN = 7,
  POSTCORR_E_CONFIGURATION = 8,
  POSTCORR_E_CONFLICT = 9,
  POSTCORR_E_NOT_FOUND = 10,
  POSTCORR_E_TRANSPORT = 11,
  POSTCORR_E_CANCELLED = 12,
  POSTCORR_E_INTERNAL = 13
} postcorr_status;

typedef struct postcorr_dataset postcorr_dataset;
typedef struct postcorr_result postcorr_result;
typedef struct postcorr_server postcorr_server;

/* Called once per recorded episode with the episode as JSON. A nonzero
 * return cancels the run with POSTCORR_E_CANCELLED. */
typedef int (*postcorr_episode_cb)(const char* episode_json, void* user);

POSTCORR_API const char* postcorr_version(void);
POSTCORR_API const char* postcorr_status_name(postcorr_status status);
POSTCORR_API const char* postcorr_last_error(void);
POSTCORR_API void postcorr_string_free(char* s);

/* Datasets ---------------------------------------------------------------- */

/* Loads a CSV series, splits it chronologically, windows it and attaches base
 * forecasts. dataset_json is a dataset config (window, horizon, stride,
 * split, normalize, baseline, ridge_lambda); NULL means defaults.
 * predictions_path is required for baseline "external" and may be NULL
 * otherwise; giving it implies "external" unless dataset_json names a
 * baseline. */
POSTCORR_API postcorr_status postcorr_dataset_load(const char* csv_path, const char* dataset_json,
                                                   const char* predictions_path, postcorr_dataset** out);
POSTCORR_API void postcorr_dataset_free(postcorr_dataset* ds);
POSTCORR_API postcorr_status postcorr_dataset_summary(const postcorr_dataset* ds, char** summary_json);

/* Optimization ------------------------------------------------------------ */

/* Searches for a correction plan on the train/validation splits, then
 * evaluates the best plan once on the test split. config_json is an
 * optimizer config; NULL means defaults. cb may be NULL. */
POSTCORR_API postcorr_status postcorr_optimize(const postcorr_dataset* ds, const char* config_json,
                                               postcorr_episode_cb cb, void* user, postcorr_result** out);
POSTCORR_API void postcorr_result_free(postcorr_result* r);
/* Views valid until postcorr_result_free. */
POSTCORR_API const char* postcorr_result_plan(const postcorr_result* r);
POSTCORR_API const char* postcorr_result_trace(const postcorr_result* r); /* JSON Lines */
POSTCORR_API const char* postcorr_result_report(const postcorr_result* r);
POSTCORR_API const char* postcorr_result_summary(const postcorr_result* r);
/* Writes the test-split base forecasts and their corrected counterparts as
 * prediction files (CSV plus JSON sidecar). */
POSTCORR_API postcorr_status postcorr_result_save_predictions(const postcorr_result* r, const char* base_path,
                                                              const char* corrected_path);

/* Plans and prediction files ---------------------------------------------- */

/* Applies the plan in plan_path to every forecast in predictions_path and
 * writes a prediction file to out_path. */
POSTCORR_API postcorr_status postcorr_apply(const char* plan_path, const char* predictions_path, const char* out_path);

/* Scores predictions_path against truth windows cut from truth_csv_path with
 * the windowing of dataset_json. With baseline_path, the result is a full
 * before/after report; otherwise only the MSE of the predictions. */
POSTCORR_API postcorr_status postcorr_evaluate(const char* predictions_path, const char* truth_csv_path,
                                               const char* dataset_json, const char* baseline_path,
                                               char** report_json);

/* Natural-language feedback through the fixed grammar. */
POSTCORR_API postcorr_status postcorr_parse_feedback(const char* text, char** directive_json);

/* Service ------------------------------------------------------------------ */

/* config_path may be NULL; environment overrides are applied either way.
 * overrides_json (may be NULL) is merged over the file. */
POSTCORR_API postcorr_status postcorr_server_create(const char* config_path, const char* overrides_json,
                                                    postcorr_server** out);
/* Binds and serves on a background thread; *port receives the bound port. */
POSTCORR_API postcorr_status postcorr_server_start(postcorr_server* srv, int* port);
POSTCORR_API postcorr_status postcorr_server_stop(postcorr_server* srv);
POSTCORR_API void postcorr_server_free(postcorr_server* srv);

#ifdef __cplusplus
}
#endif

#endif /* POSTCORR_H */
