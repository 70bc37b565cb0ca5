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

// Acceptance run: one PASS/FAIL line per criterion. Exit status 0 only when
// every criterion passes.
//
//   acceptance [configs_dir] [out_dir] [criterion ...]

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/generators.hpp"
#include "wavemeta/dynamics.hpp"
#include "wavemeta/error.hpp"
#include "wavemeta/harness.hpp"
#include "wavemeta/quasipotential.hpp"
#include "wavemeta/semigroup.hpp"

namespace fs = std::filesystem;
using namespace wavemeta;
using wavemeta::testing::Gen;
using wavemeta::testing::kPi;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_configs;
fs::path g_out;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

ExperimentConfig load(const std::string& name) {
  std::ifstream in(g_configs / name);
  if (!in) throw Error(ErrorCode::kIo, "cannot read config " + (g_configs / name).string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

RunReport run(const ExperimentConfig& cfg, const std::string& sub, const std::string& dir, int workers = 0) {
  return run_experiment(cfg, sub, (g_out / dir).string(), workers);
}

// All named checks present and passing; details joined for the report line.
bool checks_pass(const RunReport& r, const std::vector<std::string>& names, std::string* detail) {
  bool ok = true;
  for (const std::string& n : names) {
    const CheckResult* found = nullptr;
    for (const CheckResult& c : r.checks) {
      if (c.name == n) found = &c;
    }
    if (!found) {
      ok = false;
      *detail += "; " + n + " missing";
      continue;
    }
    ok = ok && found->passed;
    *detail += "; " + n + (found->passed ? " ok (" : " FAILED (") + found->detail + ")";
  }
  return ok;
}

double result_number(const RunReport& r, const std::string& key) {
  const Json& v = r.summary.at("results").at(key);
  return v.is_number() ? v.get<double>() : std::nan("");
}

// ---------------------------------------------------------------- 1

Outcome semigroup_cross_validation() {
  const auto start = Clock::now();
  const GridPtr g = make_grid(kPi / 2, 128);
  Gen gen(2026);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const StateE z = gen.state(g, 32);
    for (double t : {0.3, 1.7}) {
      worst = std::max(worst, e_distance(dalembert_evolve(z, t), apply_semigroup(z, 0.0, t)));
    }
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-8 && secs < 5.0,
          "max E-distance " + fmt(worst) + " (<= 1e-8) over 20 states x 2 times at K=128, " + fmt(secs) + " s (< 5 s)"};
}

// ---------------------------------------------------------------- 2

SimConfig energy_config(const std::vector<double>& drift, double alpha, Scheme scheme, double dt) {
  SimConfig c;
  c.grid = make_grid(kPi / 2, 32);
  c.alpha = alpha;
  c.drift = PolynomialDrift(drift);
  c.scheme = scheme;
  c.dt = dt;
  return c;
}

double undamped_drift(const SimConfig& c, const StateE& z0) {
  const Stepper s(c);
  StateE z = z0;
  const double e0 = energy_functional(z, c.drift);
  double worst = 0.0;
  const long n = std::lround(10.0 / s.dt());
  for (long i = 0; i < n; ++i) {
    z = s.step_deterministic(z);
    worst = std::max(worst, std::abs(energy_functional(z, c.drift) - e0));
  }
  return worst;
}

// |E(T) - E(0) + alpha int |v|_H^2| / E(0), trapezoid in time.
double damped_balance(const SimConfig& c, const StateE& z0) {
  const Stepper s(c);
  StateE z = z0;
  const double e0 = energy_functional(z, c.drift);
  double dissipated = 0.0;
  double prev = z.v().squaredNorm();
  const long n = std::lround(10.0 / s.dt());
  for (long i = 0; i < n; ++i) {
    z = s.step_deterministic(z);
    const double cur = z.v().squaredNorm();
    dissipated += 0.5 * (prev + cur) * s.dt();
    prev = cur;
  }
  return std::abs(energy_functional(z, c.drift) - e0 + c.alpha * dissipated) / e0;
}

Outcome energy_identities() {
  const auto start = Clock::now();
  Gen gen(12);
  const StateE z0 = gen.state(make_grid(kPi / 2, 32), 16, 0.5);
  auto on = [&](const SimConfig& c) { return StateE(c.grid, z0.u(), z0.v()); };
  const SimConfig lin0 = energy_config({0.0}, 0.0, Scheme::kExponentialEuler, 0.01);
  const SimConfig cub0 = energy_config({0, 1, 0, -1}, 0.0, Scheme::kExponentialMidpoint, 0.0);
  const SimConfig lin1 = energy_config({0.0}, 1.0, Scheme::kExponentialEuler, 0.001);
  const SimConfig cub1 = energy_config({0, 1, 0, -1}, 1.0, Scheme::kExponentialMidpoint, 0.001);
  const double d_lin = undamped_drift(lin0, on(lin0));
  const double d_cub = undamped_drift(cub0, on(cub0));
  const double b_lin = damped_balance(lin1, on(lin1));
  const double b_cub = damped_balance(cub1, on(cub1));
  const double secs = seconds_since(start);
  const bool pass = d_lin < 1e-6 && d_cub < 1e-6 && b_lin <= 1e-5 && b_cub <= 1e-5;
  return {pass, "undamped drift over T=10: linear " + fmt(d_lin) + ", cubic " + fmt(d_cub) +
                    " (< 1e-6); damped relative balance: linear " + fmt(b_lin) + ", cubic " + fmt(b_cub) +
                    " (<= 1e-5); " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------- 3

Outcome sup_norm_decay() {
  const auto start = Clock::now();
  ExperimentConfig cfg = load("decay.json");
  const RunReport r1 = run(cfg, "decay", "decay_alpha1");
  cfg.problem.alpha = 4.0;
  const RunReport r4 = run(cfg, "decay", "decay_alpha4");
  const double secs = seconds_since(start);
  const double rate1 = result_number(r1, "fitted_rate");
  const double rate4 = result_number(r4, "fitted_rate");
  const bool pass = rate1 >= 0.115 && rate4 >= 0.24 && secs < 30.0;
  return {pass, "alpha=1 rate " + fmt(rate1) + " (>= 0.115), alpha=4 rate " + fmt(rate4) + " (>= 0.24), " +
                    fmt(secs) + " s (< 30 s)"};
}

// ---------------------------------------------------------------- 4

Outcome attraction_certificate() {
  const auto start = Clock::now();
  ExperimentConfig cfg = load("attract.json");
  cfg.experiment.attract.fraction = 0.9;
  cfg.experiment.attract.samples = 50;
  const RunReport r = run(cfg, "attract", "attract");
  const double secs = seconds_since(start);
  std::string detail = "rho0 " + fmt(result_number(r, "rho0")) + ", closed form " +
                       fmt(result_number(r, "rho_example")) + ", discrepancy " +
                       fmt(result_number(r, "rho_discrepancy")) + ", " + fmt(secs) + " s (< 120 s)";
  const bool ok = checks_pass(r, {"uniform_attraction", "rho_reported"}, &detail);
  return {ok && secs < 120.0, detail};
}

// ---------------------------------------------------------------- 5

Outcome exact_controllability() {
  const auto start = Clock::now();
  ExperimentConfig cfg = load("control.json");
  cfg.experiment.control.deltas = {0.1, 0.05, 0.025};
  cfg.experiment.control.tolerance = 1e-5;
  const RunReport r = run(cfg, "control", "control");
  const double secs = seconds_since(start);
  std::string detail = "K=" + std::to_string(cfg.problem.modes) + ", " + fmt(secs) + " s (< 60 s)";
  const bool ok = checks_pass(r, {"control_gap", "control_energy_monotone", "linear_control_bound"}, &detail);
  return {ok && cfg.problem.modes == 32 && secs < 60.0, detail};
}

// ---------------------------------------------------------------- 6, 7

// Adjoint gradient of a terminal cost against central differences, sigma = 1.
double adjoint_worst_error() {
  SimConfig c;
  c.grid = make_grid(kPi / 2, 16);
  c.alpha = 1.0;
  c.drift = PolynomialDrift({0, 1, 0, -1});
  const SkeletonProblem problem(c, 4.0, 64);
  Gen gen(77);
  const StateE z0 = gen.state(c.grid, 8, 0.2);
  const StateE target = gen.state(c.grid, 8, 0.2);
  ControlPath control = problem.zero_control();
  for (int i = 0; i < 64; ++i) control.coefficients.col(i) = gen.band_limited(16, 16, 0.3);
  auto cost = [&](const ControlPath& p) {
    const StateE d = problem.forward(z0, p).back() - target;
    return 0.5 * (d.u().squaredNorm() + d.v().squaredNorm());
  };
  std::vector<StateE> sub;
  const std::vector<StateE> nodes = problem.forward(z0, control, &sub);
  std::vector<StateE> grads(65);
  grads[64] = nodes[64] - target;
  const Mat grad = problem.adjoint(sub, control, grads);
  const double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Mat dir(16, 64);
    for (int i = 0; i < 64; ++i) dir.col(i) = gen.band_limited(16, 16);
    dir /= dir.norm();
    ControlPath plus = control;
    ControlPath minus = control;
    plus.coefficients += h * dir;
    minus.coefficients -= h * dir;
    const double fd = (cost(plus) - cost(minus)) / (2.0 * h);
    const double ad = (grad.array() * dir.array()).sum();
    worst = std::max(worst, std::abs(fd - ad) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

struct QuasipotentialRun {
  RunReport report;
  double secs = 0.0;
};

QuasipotentialRun quasipotential_run() {
  const auto start = Clock::now();
  ExperimentConfig cfg = load("quasipotential.json");
  cfg.experiment.quasipotential.modes = {"free", "stay_in_d"};
  cfg.experiment.quasipotential.oracle_tolerance = 0.05;
  cfg.experiment.quasipotential.mode_tolerance = 0.03;
  QuasipotentialRun q{run(cfg, "quasipotential", "quasipotential"), 0.0};
  q.secs = seconds_since(start);
  return q;
}

Outcome quasipotential_vs_oracle(const QuasipotentialRun& q) {
  const auto start = Clock::now();
  const double fd = adjoint_worst_error();
  const double secs = q.secs + seconds_since(start);
  std::string detail = "adjoint vs FD worst " + fmt(fd) + " (<= 1e-5), " + fmt(secs) + " s (< 600 s)";
  const bool ok = checks_pass(q.report, {"feasible_free", "oracle_upper", "oracle_relative"}, &detail);
  return {ok && fd <= 1e-5 && secs < 600.0, detail};
}

Outcome free_vs_stay_in_d(const QuasipotentialRun& q) {
  std::string detail = "free and stay-in-D minimizations to the boundary";
  const bool ok = checks_pass(q.report, {"feasible_free", "feasible_stay_in_d", "free_vs_stay_in_d"}, &detail);
  return {ok, detail};
}

// ---------------------------------------------------------------- 8, 9

struct ExitRun {
  RunReport report;
  double secs = 0.0;
};

ExitRun exit_run() {
  const auto start = Clock::now();
  ExperimentConfig cfg = load("exit_mc.json");
  ExitMcExperiment& e = cfg.experiment.exit_mc;
  e.domain.kind = "orbit_union";
  e.epsilons = {0.35, 0.3, 0.25, 0.2};
  e.n_paths = 200;
  e.value_tolerance = 0.25;
  e.delta = 0.1;
  cfg.problem.modes = 32;
  ExitRun x{run(cfg, "exit-mc", "exit_mc"), 0.0};
  x.secs = seconds_since(start);
  return x;
}

Outcome exit_time_scaling(const ExitRun& x) {
  std::string detail = "V_hat " + fmt(result_number(x.report, "v_hat")) + ", " + fmt(x.secs) + " s (< 1800 s)";
  const bool ok = checks_pass(x.report, {"exit_scaling_monotone", "exit_scaling_value"}, &detail);
  return {ok && x.secs < 1800.0, detail};
}

Outcome exit_place_trend(const ExitRun& x) {
  std::string detail = "delta 0.1";
  const bool ok = checks_pass(x.report, {"exit_place_trend"}, &detail);
  return {ok, detail};
}

// ---------------------------------------------------------------- 10

Outcome boundary_classifier() {
  const auto start = Clock::now();
  ExperimentConfig cyl = load("classify.json");
  cyl.experiment.classify_boundary.battery_trials = 50;
  cyl.experiment.classify_boundary.bound_margin = 0.1;
  const RunReport r = run(cyl, "classify-boundary", "classify");
  ExperimentConfig flat = load("classify_flat.json");
  flat.experiment.classify_boundary.bound_margin = 0.1;
  const RunReport f = run(flat, "classify-boundary", "classify_flat");
  const double secs = seconds_since(start);
  std::string detail = fmt(secs) + " s (< 300 s)";
  bool ok = checks_pass(r, {"point_0_verdict", "point_0_uncontrolled_exit", "point_1_verdict", "point_1_battery",
                            "point_2_verdict", "point_2_energy_margin"},
                        &detail);
  ok = checks_pass(f, {"point_0_verdict", "point_0_energy_margin"}, &detail) && ok;
  return {ok && secs < 300.0, detail};
}

// ---------------------------------------------------------------- 11

Outcome moment_probe() {
  const auto start = Clock::now();
  const RunReport r = run(load("moment.json"), "simulate", "moment");
  std::string detail = fmt(seconds_since(start)) + " s";
  const bool ok = checks_pass(r, {"moment_scaling", "moment_refinement"}, &detail);
  return {ok, detail};
}

// ---------------------------------------------------------------- 12

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[fs::relative(entry.path(), dir).string()] = ss.str();
  }
  return files;
}

// Reduced-size configs for every subcommand; each runs twice with one worker
// and once with four, and all artifacts must match byte for byte.
Outcome determinism() {
  const auto start = Clock::now();
  std::vector<std::pair<std::string, ExperimentConfig>> runs;
  {
    ExperimentConfig c = load("decay.json");
    c.problem.modes = 32;
    c.experiment.decay.samples = 4;
    runs.emplace_back("decay", c);
  }
  {
    ExperimentConfig c = load("attract.json");
    c.problem.modes = 16;
    c.experiment.attract.samples = 8;
    c.experiment.attract.prefactor_samples = 4;
    runs.emplace_back("attract", c);
  }
  runs.emplace_back("simulate", load("simulate.json"));
  {
    ExperimentConfig c = load("moment.json");
    c.problem.modes = 16;
    c.experiment.simulate.moment_samples = 40;
    runs.emplace_back("simulate", c);
  }
  {
    ExperimentConfig c = load("quasipotential.json");
    c.problem.modes = 8;
    c.experiment.quasipotential.steps = 16;
    c.experiment.quasipotential.horizons = {4.0};
    runs.emplace_back("quasipotential", c);
  }
  {
    ExperimentConfig c = load("exit_mc.json");
    c.problem.modes = 16;
    c.problem.dt = 0.02;
    c.experiment.exit_mc.domain.kind = "cylinder";
    c.experiment.exit_mc.domain.radius = 0.2;
    c.experiment.exit_mc.domain.velocity_radius = 0.2;
    c.experiment.exit_mc.epsilons = {0.35, 0.3};
    c.experiment.exit_mc.n_paths = 16;
    c.experiment.exit_mc.bootstrap = 50;
    c.experiment.exit_mc.horizon = 200;
    runs.emplace_back("exit-mc", c);
  }
  runs.emplace_back("classify-boundary", load("classify_flat.json"));
  {
    ExperimentConfig c = load("exit_rates.json");
    c.problem.modes = 8;
    c.experiment.exit_rates.count = 4;
    c.experiment.exit_rates.horizons = {4.0};
    c.experiment.exit_rates.steps = 16;
    runs.emplace_back("exit-rates", c);
  }
  {
    ExperimentConfig c = load("control.json");
    c.problem.modes = 16;
    runs.emplace_back("control", c);
  }
  std::string detail;
  bool ok = true;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& [sub, cfg] = runs[i];
    const std::string tag = std::to_string(i) + "_" + sub;
    std::vector<std::map<std::string, std::string>> trees;
    for (const auto& [name, workers] : std::vector<std::pair<std::string, int>>{{"a", 1}, {"b", 1}, {"c", 4}}) {
      const fs::path dir = g_out / "determinism" / (tag + "_" + name);
      fs::remove_all(dir);
      run_experiment(cfg, sub, dir.string(), workers);
      trees.push_back(read_tree(dir));
    }
    const bool same = !trees[0].empty() && trees[0] == trees[1] && trees[0] == trees[2];
    ok = ok && same;
    detail += (detail.empty() ? "" : ", ") + sub + (same ? " identical" : " DIFFERS") + " (" +
              std::to_string(trees[0].size()) + " files)";
  }
  return {ok, detail + "; " + fmt(seconds_since(start)) + " s"};
}

std::set<int> g_only;  // empty: every criterion

void report(int index, const std::string& name, const std::function<Outcome()>& body, int* failures) {
  if (!g_only.empty() && !g_only.count(index)) return;
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  if (!o.pass) ++*failures;
  std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", index, name.c_str(), o.detail.c_str());
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  g_configs = argc > 1 ? fs::path(argv[1]) : fs::path(WAVEMETA_CONFIG_DIR);
  g_out = argc > 2 ? fs::path(argv[2]) : fs::current_path() / "acceptance_out";
  for (int i = 3; i < argc; ++i) g_only.insert(std::atoi(argv[i]));
  fs::create_directories(g_out);
  auto wanted = [](std::initializer_list<int> ids) {
    if (g_only.empty()) return true;
    for (int id : ids) {
      if (g_only.count(id)) return true;
    }
    return false;
  };
  int failures = 0;
  report(1, "semigroup cross-validation", semigroup_cross_validation, &failures);
  report(2, "energy identities", energy_identities, &failures);
  report(3, "sup-norm decay", sup_norm_decay, &failures);
  report(4, "attraction certificate", attraction_certificate, &failures);
  report(5, "exact controllability", exact_controllability, &failures);
  QuasipotentialRun q;
  bool q_ok = true;
  std::string q_error;
  try {
    if (wanted({6, 7})) q = quasipotential_run();
  } catch (const std::exception& e) {
    q_ok = false;
    q_error = e.what();
  }
  auto needs_q = [&](Outcome (*f)(const QuasipotentialRun&)) {
    return [&, f] { return q_ok ? f(q) : Outcome{false, "error: " + q_error}; };
  };
  report(6, "quasipotential vs oracle", needs_q(quasipotential_vs_oracle), &failures);
  report(7, "free vs stay-in-D", needs_q(free_vs_stay_in_d), &failures);
  ExitRun x;
  bool x_ok = true;
  std::string x_error;
  try {
    if (wanted({8, 9})) x = exit_run();
  } catch (const std::exception& e) {
    x_ok = false;
    x_error = e.what();
  }
  auto needs_x = [&](Outcome (*f)(const ExitRun&)) {
    return [&, f] { return x_ok ? f(x) : Outcome{false, "error: " + x_error}; };
  };
  report(8, "exit-time scaling", needs_x(exit_time_scaling), &failures);
  report(9, "exit-place trend", needs_x(exit_place_trend), &failures);
  report(10, "boundary classifier", boundary_classifier, &failures);
  report(11, "stochastic-convolution moment probe", moment_probe, &failures);
  report(12, "determinism", determinism, &failures);
  const int total = g_only.empty() ? 12 : static_cast<int>(g_only.size());
  std::printf("%d of %d criteria passed\n", total - failures, total);
  return failures == 0 ? 0 : 1;
}
