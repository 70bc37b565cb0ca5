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

#include "wavemeta/wavemeta.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "wavemeta/error.hpp"
#include "wavemeta/harness.hpp"
#include "wavemeta/version.hpp"

struct wm_config {
  wavemeta::ExperimentConfig cfg;
};

struct wm_result {
  wavemeta::RunReport report;
  std::string summary;
};

namespace {

thread_local std::string g_last_error;

wm_status fail(wm_status s, const std::string& message) {
  g_last_error = message;
  return s;
}

// Maps exceptions from the core onto status codes.
template <class F>
wm_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return WM_OK;
  } catch (const wavemeta::Error& e) {
    return fail(static_cast<wm_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(WM_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(WM_INTERNAL, e.what());
  } catch (...) {
    return fail(WM_INTERNAL, "unknown failure");
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* wm_version(void) { return wavemeta::kVersion; }

const char* wm_last_error(void) { return g_last_error.c_str(); }

const char* wm_status_name(wm_status status) {
  if (status == WM_OK) return "ok";
  return wavemeta::error_code_name(static_cast<wavemeta::ErrorCode>(status));
}

wm_status wm_config_parse(const char* json_text, wm_config** out) {
  if (!json_text || !out) return fail(WM_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] { *out = new wm_config{wavemeta::parse_config(json_text)}; });
}

wm_status wm_config_set_seed(wm_config* cfg, uint64_t seed) {
  if (!cfg) return fail(WM_INVALID_ARGUMENT, "null config");
  cfg->cfg.seed = seed;
  g_last_error.clear();
  return WM_OK;
}

wm_status wm_config_seed(const wm_config* cfg, uint64_t* out) {
  if (!cfg || !out) return fail(WM_INVALID_ARGUMENT, "null argument");
  *out = cfg->cfg.seed;
  g_last_error.clear();
  return WM_OK;
}

wm_status wm_config_serialize(const wm_config* cfg, char** out) {
  if (!cfg || !out) return fail(WM_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = dup(wavemeta::serialize_config(cfg->cfg));
    if (!*out) throw std::bad_alloc();
  });
}

void wm_config_free(wm_config* cfg) { delete cfg; }

void wm_string_free(char* s) { std::free(s); }

size_t wm_subcommand_count(void) { return wavemeta::subcommands().size(); }

const char* wm_subcommand_name(size_t index) {
  const auto& names = wavemeta::subcommands();
  return index < names.size() ? names[index].c_str() : nullptr;
}

wm_status wm_run(const wm_config* cfg, const char* subcommand, const char* out_dir, int workers, wm_result** out) {
  if (!cfg || !subcommand || !out) return fail(WM_INVALID_ARGUMENT, "null argument");
  if (workers < 0) return fail(WM_INVALID_ARGUMENT, "workers must be nonnegative");
  *out = nullptr;
  return guarded([&] {
    auto* r = new wm_result;
    try {
      r->report = wavemeta::run_experiment(cfg->cfg, subcommand, out_dir ? out_dir : "", workers);
      r->summary = r->report.summary.dump(2);
    } catch (...) {
      delete r;
      throw;
    }
    *out = r;
  });
}

int wm_result_passed(const wm_result* result) { return result && result->report.passed() ? 1 : 0; }

size_t wm_result_check_count(const wm_result* result) { return result ? result->report.checks.size() : 0; }

wm_status wm_result_check(const wm_result* result, size_t index, const char** name, int* passed,
                          const char** detail) {
  if (!result) return fail(WM_INVALID_ARGUMENT, "null result");
  if (index >= result->report.checks.size()) return fail(WM_INVALID_ARGUMENT, "check index out of range");
  const wavemeta::CheckResult& c = result->report.checks[index];
  if (name) *name = c.name.c_str();
  if (passed) *passed = c.passed ? 1 : 0;
  if (detail) *detail = c.detail.c_str();
  g_last_error.clear();
  return WM_OK;
}

const char* wm_result_summary(const wm_result* result) { return result ? result->summary.c_str() : ""; }

void wm_result_free(wm_result* result) { delete result; }

char* wm_error_json(wm_status status, const char* message, const char* subcommand) {
  try {
    return dup(wavemeta::error_record(static_cast<int>(status), wm_status_name(status), message ? message : "",
                                      subcommand ? subcommand : "")
                   .dump());
  } catch (...) {
    return nullptr;
  }
}

}  // extern "C"
