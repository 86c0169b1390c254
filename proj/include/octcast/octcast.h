/* octcast - joint hand-trajectory and interaction-hotspot forecasting.
 *
 * C API over the shared library. Every function returns an oc_status; on
 * failure oc_last_error() describes the problem (thread-local). Strings
 * returned through char** are heap-allocated; release them with
 * oc_string_free.
 */

#ifndef OCTCAST_H
#define OCTCAST_H

#include <stdint.h>

#if defined(_WIN32)
#define OCTCAST_API __declspec(dllexport)
#else
#define OCTCAST_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum oc_status {
  OC_OK = 0,
  OC_ERR_CONFIG = 2,  /* usage, config, schema */
  OC_ERR_IO = 3,      /* file system */
  OC_ERR_NUMERIC = 4  /* non-finite losses, degenerate geometry */
} oc_status;

/* Opaque handle holding loaded weights plus their model configuration. */
typedef struct oc_model oc_model;

OCTCAST_API const char* oc_version(void);

/* Message for the most recent failure on this thread. */
OCTCAST_API const char* oc_last_error(void);

OCTCAST_API void oc_string_free(char* s);

/* Layered option resolution for one namespace (synth | labels | train |
 * eval | predict | anticipate): built-in defaults, then the optional config
 * file, then explicit overrides. Unknown keys are rejected. */
OCTCAST_API oc_status oc_resolve_options(const char* kind, const char* config_path_or_null,
                                         const char* overrides_json_or_null, char** out_json);

/* Builds n synthetic scenes into a dataset file (JSON-lines, or the OCTD1
 * container when the path ends in .octd). Optionally also writes the
 * label-generation requests for oc_labels. stats_json_out reports the count
 * and the label-fidelity summary. */
OCTCAST_API oc_status oc_synth(const char* options_json, int n, uint64_t seed,
                               const char* out_path, const char* detections_out_path_or_null,
                               char** stats_json_out);

/* Runs the homography label pipeline over JSON-lines detection records and
 * writes one label record per clip. */
OCTCAST_API oc_status oc_labels(const char* detections_path, const char* out_path,
                                const char* options_json, char** stats_json_out);

/* Trains on a dataset file and writes OCTW1 weights (checkpointed per epoch,
 * so the last good state survives a numeric failure) plus a JSON-lines
 * training log. */
OCTCAST_API oc_status oc_train(const char* data_path, const char* options_json,
                               const char* weights_out_path, const char* log_out_path);

/* Forecasts and scores a whole dataset; returns the evaluation report JSON.
 * Baselines are included when the options enable them. */
OCTCAST_API oc_status oc_eval(const char* data_path, const char* weights_path,
                              const char* options_json, char** report_json_out);

/* Trains the action-anticipation head on top of a frozen encoder and returns
 * the holdout accuracy report. The weights file is not modified. */
OCTCAST_API oc_status oc_anticipate(const char* data_path, const char* weights_path,
                                    const char* options_json, char** report_json_out);

OCTCAST_API oc_status oc_model_open(const char* weights_path, oc_model** out);
OCTCAST_API void oc_model_close(oc_model* m);
OCTCAST_API oc_status oc_model_config(const oc_model* m, char** config_json_out);

/* K-sample stochastic forecast for one sample id from a dataset file. */
OCTCAST_API oc_status oc_forecast(const oc_model* m, const char* data_path,
                                  const char* sample_id, const char* options_json,
                                  char** forecast_json_out);

/* Same forecast rendered as an SVG plot. */
OCTCAST_API oc_status oc_forecast_svg(const oc_model* m, const char* data_path,
                                      const char* sample_id, const char* options_json,
                                      char** svg_out);

#ifdef __cplusplus
}
#endif

#endif /* OCTCAST_H */
