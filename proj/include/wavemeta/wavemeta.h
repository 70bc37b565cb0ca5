/*
 * Copyright 2026 The wavemeta Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef WAVEMETA_WAVEMETA_H_
#define WAVEMETA_WAVEMETA_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define WM_API __declspec(dllexport)
#else
#define WM_API __attribute__((visibility("default")))
#endif

/* Status codes; nonzero values match the core error categories. */
typedef enum wm_status {
  WM_OK = 0,
  WM_INVALID_ARGUMENT = 1,
  WM_PARSE = 2,
  WM_DIMENSION = 3,
  WM_NUMERICAL_BLOWUP = 4,
  WM_CONVERGENCE = 5,
  WM_STABILITY_ASSUMPTION = 6,
  WM_PRECONDITION = 7,
  WM_DEGENERATE_MODE = 8,
  WM_INFEASIBLE_CONTROL = 9,
  WM_CONSTRUCTION_FAILED = 10,
  WM_ORACLE_INCONSISTENCY = 11,
  WM_CONFIGURATION = 12,
  WM_IO = 13,
  WM_INTERNAL = 99
} wm_status;

typedef struct wm_config wm_config;
typedef struct wm_result wm_result;

WM_API const char* wm_version(void);

/* Message of the last failed call on this thread; empty after success. */
WM_API const char* wm_last_error(void);

/* Symbolic name of a status, e.g. "parse_error". */
WM_API const char* wm_status_name(wm_status status);

WM_API wm_status wm_config_parse(const char* json_text, wm_config** out);
WM_API wm_status wm_config_set_seed(wm_config* cfg, uint64_t seed);
WM_API wm_status wm_config_seed(const wm_config* cfg, uint64_t* out);
/* Resolved config as JSON; release with wm_string_free. */
WM_API wm_status wm_config_serialize(const wm_config* cfg, char** out);
WM_API void wm_config_free(wm_config* cfg);
WM_API void wm_string_free(char* s);

/* Number of subcommands and the name at an index. */
WM_API size_t wm_subcommand_count(void);
WM_API const char* wm_subcommand_name(size_t index);

/* Runs a subcommand; out_dir may be NULL to use the config's output dir, workers 0 means default. */
WM_API wm_status wm_run(const wm_config* cfg, const char* subcommand, const char* out_dir, int workers,
                        wm_result** out);
WM_API int wm_result_passed(const wm_result* result);
WM_API size_t wm_result_check_count(const wm_result* result);
/* Borrowed strings stay valid until wm_result_free. */
WM_API wm_status wm_result_check(const wm_result* result, size_t index, const char** name, int* passed,
                                 const char** detail);
WM_API const char* wm_result_summary(const wm_result* result);
WM_API void wm_result_free(wm_result* result);

/* Structured JSON error record; release with wm_string_free. */
WM_API char* wm_error_json(wm_status status, const char* message, const char* subcommand);

#ifdef __cplusplus
}
#endif

#endif  // WAVEMETA_WAVEMETA_H_
