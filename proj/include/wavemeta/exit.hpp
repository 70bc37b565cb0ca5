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

#include "wavemeta/domain.hpp"
#include "wavemeta/dynamics.hpp"
#include "wavemeta/quasipotential.hpp"

namespace wavemeta {

struct ExitMcOptions {
  std::vector<double> epsilons;
  int n_paths = 200;
  int bootstrap = 1000;
  std::vector<double> donut_radii;
  double donut_outer_factor = 2.0;
  int workers = 1;
};

struct ExitEstimate {
  double epsilon = 0.0;
  int n_paths = 0;
  int exits = 0;
  int timeouts = 0;
  int explosions = 0;
  double mean_tau = 0.0;  // timeouts contribute the horizon
  double median_tau = 0.0;
  double scaled_log_mean = 0.0;  // epsilon^2 log(mean tau)
  double band_low = 0.0;         // bootstrap 95% band of scaled_log_mean
  double band_high = 0.0;
  bool censored = false;      // some path timed out: the mean is a lower bound
  bool all_censored = false;  // every path timed out
};

struct ExitEnsemble {
  double epsilon = 0.0;
  std::vector<ExitRecord> records;
  ExitEstimate estimate;
};

// Per epsilon, n_paths independent paths from z0 until exit, explosion or
// the horizon of cfg. Path i at epsilon index e draws from the stream
// (cfg.seed, e * 2^32 + i).
std::vector<ExitEnsemble> run_exit_mc(const StateE& z0, const DomainSpec& domain,
                                      const SimConfig& cfg, const ExitMcOptions& options);

ExitEstimate summarize_exit_times(double epsilon, const std::vector<ExitRecord>& records,
                                  double horizon, int bootstrap, std::uint64_t seed);

// Epsilon^2 log(mean tau) increases strictly as epsilon decreases (the
// ensembles are ordered by decreasing epsilon).
bool exit_scaling_monotone(const std::vector<ExitEnsemble>& ensembles);

struct ExitFeature {
  Binding binding = Binding::kPosition;
  double location = 0.0;  // argmax of |u - x*| or of the velocity antiderivative
  int sign = 1;
  double minimizer_distance = 0.0;  // E-distance to the nearest minimizer
};

ExitFeature exit_feature(const StateE& z, const DomainSpec& domain,
                         const std::vector<StateE>& minimizers);

struct ExitPlaceSummary {
  double epsilon = 0.0;
  int exits = 0;
  int position_binding = 0;
  int velocity_binding = 0;
  int positive_sign = 0;
  std::vector<int> location_counts;  // uniform bins over [0, l]
  double fraction_near = 0.0;        // within delta of a minimizer
  double delta = 0.0;
};

ExitPlaceSummary exit_place_histogram(const ExitEnsemble& ensemble, const DomainSpec& domain,
                                      const std::vector<StateE>& minimizers, double delta,
                                      int bins = 16);

// Images of y under the symmetries x -> l - x and u - x* -> -(u - x*) that
// leave D and the energy invariant (checked numerically), y included.
std::vector<StateE> minimizer_orbit(const StateE& y, const DomainSpec& domain,
                                    const PolynomialDrift& drift);

struct DonutSummary {
  double epsilon = 0.0;
  double rho = 0.0;
  double outer = 0.0;
  int chain_total = 0;
  int chain_small = 0;
  double small_first_probability = 0.0;  // P[hit gamma_rho before the boundary]
  bool alternation_ok = true;            // theta_{n+1} > tau_n on every path
};

DonutSummary donut_chain_stats(const ExitEnsemble& ensemble, double rho, const DomainSpec& domain);
// gamma_rho inside D and the sphere of radius outer disjoint from the boundary.
void check_donut_geometry(double rho, double outer, const DomainSpec& domain);

enum class Verdict { kRegularOut, kIrregularIn, kRegularPerp, kRegularFlat, kUnknown };
const char* verdict_name(Verdict v);

struct EscapeControl {
  ControlPath control;
  double horizon = 0.0;
  double energy = 0.0;
  double bound = 0.0;       // kappa t or C' t
  double rate = 0.0;        // kappa or C'
  double min_excess = 0.0;  // min over sampled t in (0, horizon] of the level
  bool exited = false;
};

struct BatteryResult {
  int trials = 0;
  int survived = 0;
  double gamma = 0.0;
  double t0 = 0.0;
  double energy_threshold = 0.0;  // 1/2 (gamma / (4 C))^2
  double max_level = 0.0;         // largest level seen over all trials
};

struct BoundaryClassification {
  Verdict verdict = Verdict::kUnknown;
  bool has_witness = false;
  EscapeControl witness;
  double witness_energy = 0.0;
  double pairing = 0.0;  // extreme pairing <v, mu> over the maximizers
  BatteryResult battery;
  std::string notes;
};

struct ClassifierOptions {
  double energy_budget = 0.1;  // delta_energy for perp and flat witnesses
  double acceleration = 1.0;   // rho in the perp feedback
  double eta = 1.0;            // eta in the flat feedback
  double c_sigma = 1.0;        // lower bound of sigma
  double pairing_tolerance = 1e-8;
  double flat_tolerance = 1e-6;
  int battery_trials = 50;
  std::uint64_t seed = 0;
  int substeps = 4;  // control steps per integrator step of cfg
};

BoundaryClassification classify_boundary_point(const StateE& z, const DomainSpec& domain,
                                               const SimConfig& cfg,
                                               const ClassifierOptions& options);

// Closed-loop escape controls of the orthogonal-velocity (cylinder) and
// flat-top (E-ball) constructions. Throws kConstructionFailed when the
// replay misses the exit or the energy budget.
EscapeControl construct_escape_control(const StateE& z, Verdict kind, double energy_budget,
                                       const DomainSpec& domain, const SimConfig& cfg,
                                       const ClassifierOptions& options);

// Uncontrolled exit horizon T0 = min(t0, v0 / (2 zeta_b), xi0, l - xi0) of
// an outward-velocity cylinder point, and the replay over (0, T0].
EscapeControl outward_exit(const StateE& z, const DomainSpec& domain, const SimConfig& cfg,
                           const ClassifierOptions& options);

BatteryResult falsification_battery(const StateE& z, const DomainSpec& domain, const SimConfig& cfg,
                                    const ClassifierOptions& options);

// Test points on the boundary of a cylinder or ball around z*: a smooth
// bump (or flat-top plateau) of height R peaking at collocation index j,
// with velocity value v_peak at the peak.
StateE bump_boundary_point(const DomainSpec& domain, int peak_index, double v_peak, bool flat = false,
                           int plateau_halfwidth = 2);

struct RateSample {
  StateE point;
  Binding binding = Binding::kPosition;
  double location = 0.0;
  int sign = 1;
  double v_closure = 0.0;  // V_Dbar(z*, y)
  double v_open = 0.0;     // V_D(z*, y)
  double j1 = 0.0;
  double j2 = 0.0;
  bool feasible = false;
};

struct RateTable {
  double v_exterior = 0.0;  // V(z*, Dbar^c)
  double v_boundary = 0.0;  // V(z*, boundary)
  std::vector<RateSample> samples;
  double min_j1 = 0.0;
  double min_j2 = 0.0;
  double min_gap = 0.0;  // min of J2 - J1
};

// 16 boundary points stratified by binding constraint, argmax location and
// sign (cylinders and balls).
std::vector<RateSample> stratified_boundary_sample(const DomainSpec& domain,
                                                   const PolynomialDrift& drift, int count = 16);

RateTable exit_rate_functions(const DomainSpec& domain, const SimConfig& cfg,
                              const QuasipotentialOptions& options, int count = 16);

}  // namespace wavemeta
