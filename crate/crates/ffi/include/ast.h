#ifndef AST_H
#define AST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  AST_STATUS_OK = 0,
  AST_STATUS_NULL_ARGUMENT = 1,
  AST_STATUS_INVALID_UTF8 = 2,
  AST_STATUS_INVALID_JSON = 3,
  AST_STATUS_BAD_MAGIC = 4,
  AST_STATUS_CORRUPT_LOG = 5,
  AST_STATUS_INVALID_LOG = 6,
  AST_STATUS_INVALID_RULE_SET = 7,
  AST_STATUS_INVALID_CONFIG = 8,
  AST_STATUS_PANIC = 99,
} AstStatus;

typedef enum {
  AST_DOCUMENT_KIND_MISSION_PLAN = 0,
  AST_DOCUMENT_KIND_SIM_SETTINGS = 1,
} AstDocumentKind;

/**
 * A parsed flight log.
 */
typedef struct AstFlightLog AstFlightLog;

/**
 * A compiled validation rule set.
 */
typedef struct AstRuleSet AstRuleSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into the library on the same thread.
 */
const char *ast_last_error(void);

/**
 * Library version as a static string.
 */
const char *ast_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void ast_string_free(char *s);

/**
 * # Safety
 * `data`/`len` must be null/0 or a buffer returned by this library, freed once.
 */
void ast_bytes_free(uint8_t *data, size_t len);

/**
 * Parses a ULog or CSV flight log.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
AstStatus ast_flight_log_parse(const uint8_t *data, size_t len, AstFlightLog **out);

/**
 * # Safety
 * `log` must be null or a handle from [`ast_flight_log_parse`], freed once.
 */
void ast_flight_log_free(AstFlightLog *log);

/**
 * Number of data series, or 0 for a null handle.
 *
 * # Safety
 * `log` must be null or a live handle.
 */
size_t ast_flight_log_series_count(const AstFlightLog *log);

/**
 * JSON summary: format, start time, duration, series names with lengths,
 * and the logged messages.
 *
 * # Safety
 * `log` must be a live handle; `out_json` must be writable.
 */
AstStatus ast_flight_log_summary(const AstFlightLog *log, char **out_json);

/**
 * Serializes the log as ULog bytes; free with [`ast_bytes_free`].
 *
 * # Safety
 * `log` must be a live handle; `out_data` and `out_len` must be writable.
 */
AstStatus ast_flight_log_write_ulog(const AstFlightLog *log, uint8_t **out_data, size_t *out_len);

/**
 * Runs the seven sensor detectors; the result is a JSON array of
 * verdicts. `config_json` may be null for the default thresholds.
 *
 * # Safety
 * `log` must be a live handle; `config_json` null or a C string;
 * `out_json` writable.
 */
AstStatus ast_detect_sensor_failures(const AstFlightLog *log,
                                     const char *config_json,
                                     char **out_json);

/**
 * Bundled mission-plan rules.
 */
AstRuleSet *ast_ruleset_default_mission(void);

/**
 * Bundled simulator-settings rules.
 */
AstRuleSet *ast_ruleset_default_env(void);

/**
 * Compiles a rule set from its JSON file form.
 *
 * # Safety
 * `json` must be a C string; `out` writable.
 */
AstStatus ast_ruleset_from_json(const char *json, AstRuleSet **out);

/**
 * # Safety
 * `rules` must be null or a rule-set handle, freed once.
 */
void ast_ruleset_free(AstRuleSet *rules);

/**
 * Checks a mission plan or simulator settings document. `out_ok` receives
 * whether it passed and `out_report_json` the full report.
 *
 * # Safety
 * `rules` must be a live handle, `document_json` a C string, and both out
 * pointers writable.
 */
AstStatus ast_validate_document(const AstRuleSet *rules,
                                AstDocumentKind kind,
                                const char *document_json,
                                bool *out_ok,
                                char **out_report_json);

/**
 * Token-set Jaccard similarity of two texts, in [0, 1].
 *
 * # Safety
 * `a` and `b` must be C strings; `out` writable.
 */
AstStatus ast_jaccard(const char *a, const char *b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AST_H */
