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

// Command-line front end; talks to the toolkit only through the C API.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "wavemeta/wavemeta.h"

namespace {

// Exit status for a run whose checks failed; errors use 2 + status.
constexpr int kChecksFailed = 1;

int report_error(wm_status status, const std::string& message, const std::string& subcommand,
                 const std::string& out_dir) {
  char* record = wm_error_json(status, message.c_str(), subcommand.c_str());
  const std::string text = record ? record : "{}";
  wm_string_free(record);
  std::cerr << text << "\n";
  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    std::ofstream f(std::filesystem::path(out_dir) / "error.json", std::ios::binary);
    if (f) f << text << "\n";
  }
  return 2 + static_cast<int>(status == WM_INTERNAL ? 20 : status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metastability toolkit for the stochastically forced damped wave equation", "wavemeta"};
  app.set_version_flag("--version", wm_version());
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  int workers = -1;
  std::string out_dir;
  const std::map<std::string, std::string> about = {
      {"decay", "fit the E-norm decay rate of the damped linear flow"},
      {"attract", "attraction radius certificate and uniform-attraction check"},
      {"simulate", "stochastic paths or the stochastic-convolution moment probe"},
      {"quasipotential", "minimize the rate functional to the domain boundary"},
      {"exit-mc", "Monte Carlo exit times and exit places over an epsilon list"},
      {"classify-boundary", "classify boundary points and replay their witness controls"},
      {"exit-rates", "exit rate functions J1 and J2 on sampled boundary points"},
      {"control", "exact nonlinear controls and the minimal-norm linear bound"},
  };
  for (std::size_t i = 0; i < wm_subcommand_count(); ++i) {
    const std::string name = wm_subcommand_name(i);
    const auto it = about.find(name);
    CLI::App* sub = app.add_subcommand(name, it == about.end() ? "" : it->second);
    sub->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed, overrides the config");
    sub->add_option("--workers", workers, "worker threads (default WAVEMETA_WORKERS or all cores)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--out", out_dir, "output directory, overrides the config");
  }
  CLI11_PARSE(app, argc, argv);

  const std::string subcommand = app.get_subcommands().front()->get_name();
  const bool seed_given = app.get_subcommands().front()->count("--seed") > 0;
  if (workers < 0) {
    workers = 0;
    if (const char* env = std::getenv("WAVEMETA_WORKERS")) {
      char* end = nullptr;
      const long w = std::strtol(env, &end, 10);
      if (end == env || *end != '\0' || w < 0) {
        return report_error(WM_INVALID_ARGUMENT, "WAVEMETA_WORKERS must be a nonnegative integer", subcommand,
                            out_dir);
      }
      workers = static_cast<int>(w);
    }
  }

  std::ifstream in(config_path, std::ios::binary);
  std::stringstream text;
  text << in.rdbuf();
  if (!in) return report_error(WM_IO, "cannot read " + config_path, subcommand, out_dir);

  wm_config* cfg = nullptr;
  wm_status st = wm_config_parse(text.str().c_str(), &cfg);
  if (st != WM_OK) return report_error(st, wm_last_error(), subcommand, out_dir);
  if (seed_given) wm_config_set_seed(cfg, seed);

  wm_result* result = nullptr;
  st = wm_run(cfg, subcommand.c_str(), out_dir.empty() ? nullptr : out_dir.c_str(), workers, &result);
  wm_config_free(cfg);
  if (st != WM_OK) return report_error(st, wm_last_error(), subcommand, out_dir);

  for (std::size_t i = 0; i < wm_result_check_count(result); ++i) {
    const char* name = nullptr;
    const char* detail = nullptr;
    int passed = 0;
    wm_result_check(result, i, &name, &passed, &detail);
    std::printf("%s %s: %s\n", passed ? "PASS" : "FAIL", name, detail);
  }
  const int status = wm_result_passed(result) ? 0 : kChecksFailed;
  wm_result_free(result);
  return status;
}
