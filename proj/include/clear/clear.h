#ifndef CLEAR_CLEAR_H
#define CLEAR_CLEAR_H

/*
 * C interface of the continual-learning engine.
 *
 * All strings crossing the boundary are UTF-8 JSON unless noted. Strings
 * returned through char** out-parameters are owned by the caller and must be
 * released with clr_string_free. Functions return CLR_OK or an error status;
 * clr_last_error() then describes the failure on the calling thread.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CLR_API __declspec(dllexport)
#elif defined(__GNUC__)
#define CLR_API __attribute__((visibility("default")))
#else
#define CLR_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum clr_status {
    CLR_OK = 0,
    CLR_ERR_ARGUMENT = 1,
    CLR_ERR_SHAPE = 2,
    CLR_ERR_NOT_FOUND = 3,
    CLR_ERR_CONFLICT = 4,
    CLR_ERR_VALIDATION = 5,
    CLR_ERR_IO = 6,
    CLR_ERR_PARSE = 7,
    CLR_ERR_DIVERGENCE = 8,
    CLR_ERR_INCOMPATIBLE_SNAPSHOT = 9,
    CLR_ERR_STRATEGY = 10,
    CLR_ERR_SCHEMA = 11,
    CLR_ERR_ORDERING = 12,
    CLR_ERR_INTERNAL = 13,
    CLR_ERR_MISSING_TARGET = 14,
    CLR_ERR_SCENARIO = 15
} clr_status;

typedef struct clr_engine clr_engine;

CLR_API const char* clr_version(void);
CLR_API const char* clr_status_name(clr_status status);
/* Message of the last failed call on this thread; "" after a success. */
CLR_API const char* clr_last_error(void);
CLR_API void clr_string_free(char* s);

/*
 * options_json: {"scenario": "<path>" | {inline script},
 *                "auto_policy": bool, "out_dir": "<path>", "ring_capacity": n}
 * The engine pretrains on the scenario's pretraining slice before returning.
 */
CLR_API clr_status clr_engine_create(const char* options_json, clr_engine** out);
CLR_API void clr_engine_destroy(clr_engine* engine);

/*
 * Dispatches one API request (GET /state, GET /events, POST /ingest,
 * POST /decisions, PATCH /hyperparameters, POST /targets, POST /rollback,
 * GET /metrics). query is "a=1&b=2" or NULL; body is JSON or NULL.
 * Returns CLR_OK once the request was dispatched; the outcome is in
 * *http_status and *response_json.
 */
CLR_API clr_status clr_engine_request(clr_engine* engine, const char* method, const char* path, const char* query,
                                      const char* body, int* http_status, char** response_json);

/*
 * Events with seq >= from_seq, waiting up to wait_ms for the first.
 * *events_json: {"events": [...], "next": n, "dropped": n, "last_seq": n}.
 */
CLR_API clr_status clr_engine_wait_events(clr_engine* engine, uint64_t from_seq, uint32_t limit, uint32_t wait_ms,
                                          char** events_json);

/* Runs up to max_steps scenario steps (one sample or event each). */
CLR_API clr_status clr_engine_step(clr_engine* engine, uint32_t max_steps, uint32_t* performed);
CLR_API int clr_engine_feed_done(clr_engine* engine);
/* Writes reports and the manifest when the engine has an out_dir. */
CLR_API clr_status clr_engine_flush(clr_engine* engine);

/*
 * Batch run: writes the run directory and returns a summary
 * {"events", "versions", "updates", "report"}. options_json may be NULL or
 * {"auto_policy": bool}.
 */
CLR_API clr_status clr_run_scenario(const char* scenario_path, const char* out_dir, const char* options_json,
                                    char** summary_json);
CLR_API clr_status clr_export_run(const char* run_dir, const char* archive_path);
/* Replays an archive and compares it with the recorded log and snapshots. */
CLR_API clr_status clr_replay_archive(const char* archive_path, char** report_json);

#ifdef __cplusplus
}
#endif

#endif
