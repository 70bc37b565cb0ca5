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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace wavemeta {

using Json = nlohmann::ordered_json;

struct NoiseConfig {
  std::string kind = "constant";  // constant | table
  double value = 1.0;
  double x0 = 0.0;
  double dx = 1.0;
  std::vector<double> values;
  double lower_bound = -1.0;  // negative: taken from the coefficient
  bool operator==(const NoiseConfig&) const = default;
};

struct ProblemConfig {
  double length = 0.0;
  int modes = 128;
  double alpha = 0.0;
  std::vector<double> drift;
  NoiseConfig sigma;
  double c_sigma = 0.0;
  double cutoff = 10.0;
  double dt = 0.0;
  double horizon = 10.0;
  std::string scheme = "exponential_euler";  // exponential_euler | exponential_midpoint
  bool operator==(const ProblemConfig&) const = default;
};

struct DomainConfig {
  std::string kind = "cylinder";  // cylinder | ball | orbit_union
  double radius = 0.5;             // orbit_union: 0 selects rho0
  double velocity_radius = 0.5;
  double orbit_horizon = 0.0;  // 0 selects 50 / theta
  double orbit_dt = 0.0;       // 0 selects the problem step
  double escape_factor = 8.0;
  double guess_amplitude = 0.0;  // equilibrium Newton guess along e_1
  bool operator==(const DomainConfig&) const = default;
};

struct DecayExperiment {
  double horizon = 40.0;
  int samples = 20;
  double slack = 0.01;
  bool operator==(const DecayExperiment&) const = default;
};

struct AttractExperiment {
  double fraction = 0.9;
  int samples = 50;
  double horizon = 0.0;  // 0 selects 8 / theta
  int prefactor_samples = 20;
  double prefactor_horizon = 40.0;
  double guess_amplitude = 0.0;
  bool operator==(const AttractExperiment&) const = default;
};

struct SimulateExperiment {
  std::string mode = "path";  // path | moment
  std::string initial = "mode";  // mode | equilibrium
  int initial_mode = 1;
  double amplitude = 0.1;
  double velocity = 0.0;
  double epsilon = 0.1;
  int paths = 1;
  int record_every = 10;
  bool snapshot = false;
  double psi_scale = 1.0;
  int moment_samples = 400;
  int refined_modes = 0;  // 0 selects 2 K
  bool operator==(const SimulateExperiment&) const = default;
};

struct QuasipotentialExperiment {
  DomainConfig domain;
  std::string target = "boundary";  // boundary | exterior
  std::vector<std::string> modes = {"free", "stay_in_d"};
  std::vector<double> horizons;
  double theta = 0.5;
  int steps = 64;
  int substeps = 0;
  double oracle_tolerance = 0.05;
  double mode_tolerance = 0.03;
  bool operator==(const QuasipotentialExperiment&) const = default;
};

struct ExitMcExperiment {
  DomainConfig domain;
  std::vector<double> epsilons = {0.35, 0.3, 0.25, 0.2};
  int n_paths = 200;
  int bootstrap = 1000;
  std::vector<double> donut_radii;
  double donut_outer_factor = 2.0;
  double horizon = 5000.0;
  double delta = 0.1;
  bool minimizer = true;
  std::vector<double> minimizer_horizons = {4.0, 8.0};
  int minimizer_steps = 64;
  double value_tolerance = 0.25;
  bool operator==(const ExitMcExperiment&) const = default;
};

struct BoundaryPointConfig {
  int peak_index = -1;  // -1 selects K / 2
  double v_peak = 0.0;
  bool flat = false;
  int plateau_halfwidth = 2;
  std::string expect;  // optional expected verdict
  bool operator==(const BoundaryPointConfig&) const = default;
};

struct ClassifyExperiment {
  DomainConfig domain;
  std::vector<BoundaryPointConfig> points;
  double energy_budget = 0.1;
  double acceleration = 1.0;
  double eta = 1.0;
  int battery_trials = 50;
  int substeps = 4;
  double bound_margin = 0.1;
  bool operator==(const ClassifyExperiment&) const = default;
};

struct ExitRatesExperiment {
  DomainConfig domain;
  int count = 16;
  std::vector<double> horizons = {4.0, 8.0};
  int steps = 64;
  double tolerance = 0.03;
  bool operator==(const ExitRatesExperiment&) const = default;
};

struct ControlExperiment {
  std::vector<double> deltas = {0.1, 0.05, 0.025};
  double horizon = 0.0;  // 0 selects the contraction horizon
  double tolerance = 1e-5;
  bool operator==(const ControlExperiment&) const = default;
};

struct ExperimentBlock {
  DecayExperiment decay;
  AttractExperiment attract;
  SimulateExperiment simulate;
  QuasipotentialExperiment quasipotential;
  ExitMcExperiment exit_mc;
  ClassifyExperiment classify_boundary;
  ExitRatesExperiment exit_rates;
  ControlExperiment control;
  bool operator==(const ExperimentBlock&) const = default;
};

struct OutputConfig {
  std::string dir = "out";
  std::vector<std::string> formats = {"csv", "json"};
  bool operator==(const OutputConfig&) const = default;
};

struct ExperimentConfig {
  ProblemConfig problem;
  ExperimentBlock experiment;
  OutputConfig output;
  std::uint64_t seed = 0;
  bool operator==(const ExperimentConfig&) const = default;
};

// Validates and fills defaults (K = 128, dt = 0.1 / sqrt(a_K), seed = 0).
// Problem keys may also appear at the top level. Unknown keys are rejected.
ExperimentConfig parse_config(const std::string& text);
std::string serialize_config(const ExperimentConfig& cfg);
Json config_to_json(const ExperimentConfig& cfg);

const std::vector<std::string>& subcommands();

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct RunReport {
  std::string subcommand;
  std::vector<CheckResult> checks;
  std::vector<std::string> artifacts;
  Json summary;
  bool passed() const;
};

// Runs one subcommand and writes summary.json plus CSV artifacts into
// out_dir (the config output dir when empty).
RunReport run_experiment(const ExperimentConfig& cfg, const std::string& subcommand,
                         const std::string& out_dir = "", int workers = 0);

// Structured error record for a failed run.
Json error_record(int code, const std::string& name, const std::string& message,
                  const std::string& subcommand);

// RFC 4180 field quoting.
std::string csv_field(const std::string& s);
std::string csv_number(double x);

}  // namespace wavemeta
