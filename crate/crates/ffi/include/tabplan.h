#ifndef TABPLAN_H
#define TABPLAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum tp_status {
  TP_STATUS_OK = 0,
  TP_STATUS_NULL_ARGUMENT = 1,
  TP_STATUS_INVALID_UTF8 = 2,
  TP_STATUS_IO = 3,
  /**
   * Malformed input document (CSV, JSON, plan).
   */
  TP_STATUS_PARSE = 4,
  /**
   * Well-formed input that breaks a schema or plan rule.
   */
  TP_STATUS_INVALID = 5,
  TP_STATUS_PLANNING_FAILED = 6,
  TP_STATUS_REALIZATION_FAILED = 7,
  TP_STATUS_LLM = 8,
  TP_STATUS_PANIC = 9,
} tp_status;

/**
 * A language-model gateway.
 */
typedef struct tp_gateway tp_gateway;

/**
 * A knowledge base: schema, field notes, constraints and examples.
 */
typedef struct tp_kb tp_kb;

/**
 * A plan bound to the schema it was parsed against.
 */
typedef struct tp_plan tp_plan;

/**
 * A typed in-memory table.
 */
typedef struct tp_table tp_table;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The message of the last failed call on this thread, or null. Valid until
 * the next `tp_*` call on the same thread.
 */
const char *tp_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from a `tp_*` out-parameter and not be freed twice.
 */
void tp_string_free(char *s);

/**
 * Library version as a static string.
 */
const char *tp_version(void);

/**
 * Generates the seeded synthetic dataset and its knowledge base. Either
 * out-parameter may be null when not wanted.
 *
 * # Safety
 * Non-null out-parameters must be valid for writes.
 */
enum tp_status tp_synthetic_generate(uint64_t seed,
                                     size_t rows,
                                     struct tp_table **out_table,
                                     struct tp_kb **out_kb);

/**
 * Parses and validates a knowledge-base JSON document.
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be valid for writes.
 */
enum tp_status tp_kb_from_json(const char *json, struct tp_kb **out_kb);

/**
 * Serializes a knowledge base to JSON.
 *
 * # Safety
 * `kb` must be a live handle; `out_json` must be valid for writes.
 */
enum tp_status tp_kb_to_json(const struct tp_kb *kb, char **out_json);

/**
 * # Safety
 * `kb` must be null or a handle not yet freed.
 */
void tp_kb_free(struct tp_kb *kb);

/**
 * Loads CSV bytes against the knowledge base's schema.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `kb` must be live; `out_table`
 * must be valid for writes.
 */
enum tp_status tp_table_load_csv(const uint8_t *data,
                                 size_t len,
                                 const struct tp_kb *kb,
                                 struct tp_table **out_table);

/**
 * # Safety
 * `table` must be a live handle.
 */
size_t tp_table_row_count(const struct tp_table *table);

/**
 * # Safety
 * `table` must be a live handle.
 */
size_t tp_table_column_count(const struct tp_table *table);

/**
 * Writes the table as CSV text.
 *
 * # Safety
 * `table` must be live; `out_csv` must be valid for writes.
 */
enum tp_status tp_table_to_csv(const struct tp_table *table, char **out_csv);

/**
 * Writes the table as a JSON document with typed column headers and rows.
 *
 * # Safety
 * `table` must be live; `out_json` must be valid for writes.
 */
enum tp_status tp_table_to_json(const struct tp_table *table, char **out_json);

/**
 * # Safety
 * `table` must be null or a handle not yet freed.
 */
void tp_table_free(struct tp_table *table);

/**
 * Parses a plan document and binds it to `table`'s schema. Fails with
 * `Parse` on a malformed document and `Invalid` on rule violations.
 *
 * # Safety
 * `document` must be nul-terminated; `table` live; `out_plan` writable.
 */
enum tp_status tp_plan_parse(const char *document,
                             const struct tp_table *table,
                             struct tp_plan **out_plan);

/**
 * Difficulty level 1-4, or 0 for a null plan.
 *
 * # Safety
 * `plan` must be null or live.
 */
uint8_t tp_plan_difficulty(const struct tp_plan *plan);

/**
 * The plan's steps as plain sentences, one per line.
 *
 * # Safety
 * `plan` must be live; `out_text` writable.
 */
enum tp_status tp_plan_render_steps(const struct tp_plan *plan, char **out_text);

/**
 * The plan as a wire document.
 *
 * # Safety
 * `plan` must be live; `out_json` writable.
 */
enum tp_status tp_plan_to_json(const struct tp_plan *plan, char **out_json);

/**
 * # Safety
 * `plan` must be null or a handle not yet freed.
 */
void tp_plan_free(struct tp_plan *plan);

/**
 * Executes `plan` over `table`. The plan is revalidated against the
 * table's schema first, so a plan parsed for another schema fails with
 * `Invalid` rather than executing.
 *
 * # Safety
 * `plan` and `table` must be live; `out_table` writable.
 */
enum tp_status tp_execute(const struct tp_plan *plan,
                          const struct tp_table *table,
                          struct tp_table **out_table);

/**
 * Strict match of `actual` against `expected`. On a mismatch `out_diff`
 * (when non-null) receives a description; on a match it is set to null.
 *
 * # Safety
 * Tables must be live; `out_matched` writable; `out_diff` null or writable.
 */
enum tp_status tp_strict_match(const struct tp_table *actual,
                               const struct tp_table *expected,
                               bool ordered,
                               bool *out_matched,
                               char **out_diff);

/**
 * A gateway replaying a JSON array of scripted fixtures.
 *
 * # Safety
 * `fixtures_json` must be nul-terminated; `out_gateway` writable.
 */
enum tp_status tp_gateway_scripted(const char *fixtures_json, struct tp_gateway **out_gateway);

/**
 * # Safety
 * `gateway` must be null or a handle not yet freed.
 */
void tp_gateway_free(struct tp_gateway *gateway);

/**
 * Plans `question` with `n_samples` votes and `k_shot` examples, then
 * executes the chosen plan in safe mode. `out_plan_json` may be null.
 *
 * # Safety
 * Handles must be live; `question` nul-terminated; `out_table` writable;
 * `out_plan_json` null or writable.
 */
enum tp_status tp_answer_query(const char *question,
                               const struct tp_table *table,
                               const struct tp_kb *kb,
                               const struct tp_gateway *gateway,
                               size_t k_shot,
                               size_t n_samples,
                               struct tp_table **out_table,
                               char **out_plan_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TABPLAN_H */
