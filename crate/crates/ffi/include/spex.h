/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef SPEX_H
#define SPEX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum SxStatus {
  SX_STATUS_OK = 0,
  SX_STATUS_NULL_ARGUMENT = 1,
  SX_STATUS_INVALID_UTF8 = 2,
  SX_STATUS_IO = 3,
  SX_STATUS_PARSE = 4,
  SX_STATUS_MODEL = 5,
  SX_STATUS_MISCLASSIFIED = 6,
  SX_STATUS_PIPELINE = 7,
  SX_STATUS_TIMEOUT = 8,
  SX_STATUS_INVALID = 9,
  SX_STATUS_INTERNAL = 10,
} SxStatus;

/*
 A certified explanation.
 */
typedef struct SxExplanation SxExplanation;

/*
 A loaded network together with its cached encodings.
 */
typedef struct SxNetwork SxNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message describing the last failure on this thread, or NULL. After
 [`sx_check`] reports an invalid formula it holds the counterexample. The
 pointer stays valid until the next failing call on the same thread.
 */
const char *sx_last_error(void);

/*
 Library version as a static string.
 */
const char *sx_version(void);

/*
 Loads a network description from a JSON file.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SxStatus sx_network_load(const char *path, struct SxNetwork **out);

/*
 Parses a network description from a JSON string.

 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SxStatus sx_network_from_json(const char *json, struct SxNetwork **out);

/*
 # Safety
 `net` must come from this library and not be used afterwards.
 */
void sx_network_free(struct SxNetwork *net);

/*
 Number of input features; 0 for a NULL handle.

 # Safety
 `net` must be NULL or a live handle.
 */
size_t sx_network_input_count(const struct SxNetwork *net);

/*
 Number of classes; 0 for a NULL handle.

 # Safety
 `net` must be NULL or a live handle.
 */
size_t sx_network_class_count(const struct SxNetwork *net);

/*
 Name of class `class`, or NULL when out of range. Free with
 [`sx_string_free`].

 # Safety
 `net` must be NULL or a live handle.
 */
char *sx_network_class_name(const struct SxNetwork *net, size_t class_);

/*
 Classifies a point given as `len` rational strings.

 # Safety
 `values` must point to `len` NUL-terminated strings; `out_class` must be valid.
 */
enum SxStatus sx_classify(const struct SxNetwork *net,
                          const char *const *values,
                          size_t len,
                          size_t *out_class);

/*
 Runs a pipeline descriptor such as `"A;I:8;G:weak"` on a sample and
 returns the certified explanation of its predicted class. A
 non-positive `timeout_s` means no limit.

 # Safety
 Pointers must be valid as for [`sx_classify`]; `pipeline` NUL-terminated.
 */
enum SxStatus sx_explain(const struct SxNetwork *net,
                         const char *const *values,
                         size_t len,
                         const char *pipeline,
                         double timeout_s,
                         struct SxExplanation **out);

/*
 Checks that `formula` (s-expression syntax) implies class `class`;
 writes 1 to `out_valid` when it does and 0 otherwise.

 # Safety
 `formula` must be NUL-terminated and `out_valid` valid.
 */
enum SxStatus sx_check(const struct SxNetwork *net,
                       const char *formula,
                       size_t class_,
                       int32_t *out_valid);

/*
 The explanation formula in s-expression syntax. Free with
 [`sx_string_free`].

 # Safety
 `e` must be NULL or a live handle.
 */
char *sx_explanation_formula(const struct SxExplanation *e);

/*
 The pipeline that produced the explanation. Free with [`sx_string_free`].

 # Safety
 `e` must be NULL or a live handle.
 */
char *sx_explanation_pipeline(const struct SxExplanation *e);

/*
 # Safety
 `e` must be a live handle.
 */
size_t sx_explanation_class(const struct SxExplanation *e);

/*
 # Safety
 `e` must be NULL or a live handle.
 */
size_t sx_explanation_terms(const struct SxExplanation *e);

/*
 Top-level solver calls spent by the pipeline.

 # Safety
 `e` must be NULL or a live handle.
 */
uint64_t sx_explanation_solver_calls(const struct SxExplanation *e);

/*
 # Safety
 `e` must come from this library and not be used afterwards.
 */
void sx_explanation_free(struct SxExplanation *e);

/*
 # Safety
 `s` must be NULL or a string returned by this library.
 */
void sx_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPEX_H */
