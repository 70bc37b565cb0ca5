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

#include "wavemeta/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "wavemeta/error.hpp"
#include "wavemeta/exit.hpp"
#include "wavemeta/parallel.hpp"
#include "wavemeta/quasipotential.hpp"
#include "wavemeta/semigroup.hpp"
#include "wavemeta/stability.hpp"
#include "wavemeta/version.hpp"

namespace wavemeta {

namespace fs = std::filesystem;

namespace {

enum class Bound { kAny, kPositive, kNonnegative };

// Walks one JSON object, consuming known keys; finish() rejects the rest.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw Error(ErrorCode::kParse, "key '" + (path_.empty() ? std::string("<root>") : path_) +
                                         "': expected object");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  void number(const std::string& key, double& out, Bound bound = Bound::kAny) {
    const Json* v = take(key);
    if (!v) return;
    if (!v->is_number()) fail(key, expected_number(bound));
    const double x = v->get<double>();
    if (!std::isfinite(x) || (bound == Bound::kPositive && !(x > 0.0)) ||
        (bound == Bound::kNonnegative && !(x >= 0.0))) {
      fail(key, expected_number(bound));
    }
    out = x;
  }

  void integer(const std::string& key, int& out, Bound bound = Bound::kAny, int min_value = INT32_MIN) {
    const Json* v = take(key);
    if (!v) return;
    const std::string what = bound == Bound::kPositive      ? "positive integer"
                             : bound == Bound::kNonnegative ? "nonnegative integer"
                                                            : "integer";
    if (!v->is_number_integer()) fail(key, what);
    const long long x = v->get<long long>();
    if ((bound == Bound::kPositive && x <= 0) || (bound == Bound::kNonnegative && x < 0) || x < min_value ||
        x > INT32_MAX) {
      fail(key, what);
    }
    out = static_cast<int>(x);
  }

  void unsigned64(const std::string& key, std::uint64_t& out) {
    const Json* v = take(key);
    if (!v) return;
    if (v->is_number_unsigned()) {
      out = v->get<std::uint64_t>();
    } else if (v->is_number_integer() && v->get<long long>() >= 0) {
      out = static_cast<std::uint64_t>(v->get<long long>());
    } else {
      fail(key, "nonnegative integer");
    }
  }

  void boolean(const std::string& key, bool& out) {
    const Json* v = take(key);
    if (!v) return;
    if (!v->is_boolean()) fail(key, "boolean");
    out = v->get<bool>();
  }

  void string(const std::string& key, std::string& out, const std::vector<std::string>& allowed = {}) {
    const Json* v = take(key);
    if (!v) return;
    std::string what = "string";
    if (!allowed.empty()) {
      what = "one of";
      for (const std::string& a : allowed) what += " \"" + a + "\"";
    }
    if (!v->is_string()) fail(key, what);
    const std::string s = v->get<std::string>();
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) fail(key, what);
    out = s;
  }

  void numbers(const std::string& key, std::vector<double>& out, Bound bound = Bound::kAny,
               bool nonempty = false) {
    const Json* v = take(key);
    if (!v) return;
    const std::string what = std::string(nonempty ? "nonempty " : "") + "array of " + expected_number(bound) + "s";
    if (!v->is_array() || (nonempty && v->empty())) fail(key, what);
    std::vector<double> xs;
    for (const Json& e : *v) {
      if (!e.is_number()) fail(key, what);
      const double x = e.get<double>();
      if (!std::isfinite(x) || (bound == Bound::kPositive && !(x > 0.0)) ||
          (bound == Bound::kNonnegative && !(x >= 0.0))) {
        fail(key, what);
      }
      xs.push_back(x);
    }
    out = xs;
  }

  void strings(const std::string& key, std::vector<std::string>& out, const std::vector<std::string>& allowed) {
    const Json* v = take(key);
    if (!v) return;
    std::string what = "array of strings from";
    for (const std::string& a : allowed) what += " \"" + a + "\"";
    if (!v->is_array()) fail(key, what);
    std::vector<std::string> xs;
    for (const Json& e : *v) {
      if (!e.is_string()) fail(key, what);
      const std::string s = e.get<std::string>();
      if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) fail(key, what);
      xs.push_back(s);
    }
    out = xs;
  }

  // Child reader for a nested object, or nullopt when absent.
  const Json* object(const std::string& key) {
    const Json* v = take(key);
    if (v && !v->is_object()) fail(key, "object");
    return v;
  }

  const Json* array(const std::string& key) {
    const Json* v = take(key);
    if (v && !v->is_array()) fail(key, "array");
    return v;
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void require(const std::string& key, const std::string& what) const {
    if (!j_.contains(key)) throw Error(ErrorCode::kParse, "key '" + child(key) + "': missing, expected " + what);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw Error(ErrorCode::kParse, "unknown key '" + child(it.key()) + "'");
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& expected) const {
    throw Error(ErrorCode::kParse, "key '" + child(key) + "': expected " + expected);
  }

 private:
  static std::string expected_number(Bound bound) {
    switch (bound) {
      case Bound::kPositive: return "positive number";
      case Bound::kNonnegative: return "nonnegative number";
      case Bound::kAny: break;
    }
    return "number";
  }

  const Json* take(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const std::vector<std::string> kProblemKeys = {"length", "modes",  "alpha",   "drift",  "sigma",
                                               "c_sigma", "cutoff", "dt", "horizon", "scheme"};

void read_noise(Reader& r, NoiseConfig& n) {
  r.string("kind", n.kind, {"constant", "table"});
  r.number("value", n.value);
  r.number("x0", n.x0);
  r.number("dx", n.dx, Bound::kPositive);
  r.numbers("values", n.values);
  r.number("lower_bound", n.lower_bound);
  r.finish();
  if (n.kind == "table" && n.values.size() < 4) r.fail("values", "at least 4 table values");
  if (n.kind == "constant" && !(n.value != 0.0)) r.fail("value", "nonzero number");
}

void read_problem(Reader& r, ProblemConfig& p) {
  r.require("length", "positive number");
  r.require("alpha", "positive number");
  r.require("drift", "nonempty array of numbers");
  r.number("length", p.length, Bound::kPositive);
  r.integer("modes", p.modes, Bound::kPositive, 2);
  r.number("alpha", p.alpha, Bound::kPositive);
  r.numbers("drift", p.drift, Bound::kAny, true);
  if (const Json* s = r.object("sigma")) {
    Reader c(*s, r.child("sigma"));
    read_noise(c, p.sigma);
  }
  r.number("c_sigma", p.c_sigma, Bound::kNonnegative);
  r.number("cutoff", p.cutoff, Bound::kPositive);
  r.number("dt", p.dt, Bound::kNonnegative);
  r.number("horizon", p.horizon, Bound::kPositive);
  r.string("scheme", p.scheme, {"exponential_euler", "exponential_midpoint"});
}

void read_domain(Reader& parent, const std::string& key, DomainConfig& d) {
  const Json* j = parent.object(key);
  if (!j) return;
  Reader r(*j, parent.child(key));
  r.string("kind", d.kind, {"cylinder", "ball", "orbit_union"});
  r.number("radius", d.radius, Bound::kNonnegative);
  r.number("velocity_radius", d.velocity_radius, Bound::kPositive);
  r.number("orbit_horizon", d.orbit_horizon, Bound::kNonnegative);
  r.number("orbit_dt", d.orbit_dt, Bound::kNonnegative);
  r.number("escape_factor", d.escape_factor, Bound::kPositive);
  r.number("guess_amplitude", d.guess_amplitude);
  r.finish();
  if (d.kind != "orbit_union" && !(d.radius > 0.0)) r.fail("radius", "positive number");
  if (!(d.escape_factor > 1.0)) r.fail("escape_factor", "number greater than 1");
}

const std::vector<std::string> kModeNames = {"free", "stay_in_d", "stay_in_closure"};

void read_experiment(Reader& r, ExperimentBlock& e) {
  if (const Json* j = r.object("decay")) {
    Reader c(*j, r.child("decay"));
    c.number("horizon", e.decay.horizon, Bound::kPositive);
    c.integer("samples", e.decay.samples, Bound::kPositive);
    c.number("slack", e.decay.slack, Bound::kNonnegative);
    c.finish();
  }
  if (const Json* j = r.object("attract")) {
    Reader c(*j, r.child("attract"));
    AttractExperiment& a = e.attract;
    c.number("fraction", a.fraction, Bound::kPositive);
    c.integer("samples", a.samples, Bound::kPositive);
    c.number("horizon", a.horizon, Bound::kNonnegative);
    c.integer("prefactor_samples", a.prefactor_samples, Bound::kPositive);
    c.number("prefactor_horizon", a.prefactor_horizon, Bound::kPositive);
    c.number("guess_amplitude", a.guess_amplitude);
    c.finish();
  }
  if (const Json* j = r.object("simulate")) {
    Reader c(*j, r.child("simulate"));
    SimulateExperiment& s = e.simulate;
    c.string("mode", s.mode, {"path", "moment"});
    c.string("initial", s.initial, {"mode", "equilibrium"});
    c.integer("initial_mode", s.initial_mode, Bound::kPositive);
    c.number("amplitude", s.amplitude);
    c.number("velocity", s.velocity);
    c.number("epsilon", s.epsilon, Bound::kNonnegative);
    c.integer("paths", s.paths, Bound::kPositive);
    c.integer("record_every", s.record_every, Bound::kPositive);
    c.boolean("snapshot", s.snapshot);
    c.number("psi_scale", s.psi_scale, Bound::kPositive);
    c.integer("moment_samples", s.moment_samples, Bound::kPositive, 2);
    c.integer("refined_modes", s.refined_modes, Bound::kNonnegative);
    c.finish();
  }
  if (const Json* j = r.object("quasipotential")) {
    Reader c(*j, r.child("quasipotential"));
    QuasipotentialExperiment& q = e.quasipotential;
    read_domain(c, "domain", q.domain);
    c.string("target", q.target, {"boundary", "exterior"});
    c.strings("modes", q.modes, kModeNames);
    c.numbers("horizons", q.horizons, Bound::kPositive);
    c.number("theta", q.theta, Bound::kPositive);
    c.integer("steps", q.steps, Bound::kPositive);
    c.integer("substeps", q.substeps, Bound::kNonnegative);
    c.number("oracle_tolerance", q.oracle_tolerance, Bound::kPositive);
    c.number("mode_tolerance", q.mode_tolerance, Bound::kPositive);
    c.finish();
    if (q.modes.empty()) c.fail("modes", "nonempty array");
  }
  if (const Json* j = r.object("exit_mc")) {
    Reader c(*j, r.child("exit_mc"));
    ExitMcExperiment& m = e.exit_mc;
    read_domain(c, "domain", m.domain);
    c.numbers("epsilons", m.epsilons, Bound::kPositive, true);
    c.integer("n_paths", m.n_paths, Bound::kPositive);
    c.integer("bootstrap", m.bootstrap, Bound::kNonnegative);
    c.numbers("donut_radii", m.donut_radii, Bound::kPositive);
    c.number("donut_outer_factor", m.donut_outer_factor, Bound::kPositive);
    c.number("horizon", m.horizon, Bound::kPositive);
    c.number("delta", m.delta, Bound::kPositive);
    c.boolean("minimizer", m.minimizer);
    c.numbers("minimizer_horizons", m.minimizer_horizons, Bound::kPositive, true);
    c.integer("minimizer_steps", m.minimizer_steps, Bound::kPositive);
    c.number("value_tolerance", m.value_tolerance, Bound::kPositive);
    c.finish();
  }
  if (const Json* j = r.object("classify_boundary")) {
    Reader c(*j, r.child("classify_boundary"));
    ClassifyExperiment& k = e.classify_boundary;
    read_domain(c, "domain", k.domain);
    if (const Json* pts = c.array("points")) {
      k.points.clear();
      for (std::size_t i = 0; i < pts->size(); ++i) {
        Reader p((*pts)[i], c.child("points[" + std::to_string(i) + "]"));
        BoundaryPointConfig b;
        p.integer("peak_index", b.peak_index, Bound::kAny, -1);
        p.number("v_peak", b.v_peak);
        p.boolean("flat", b.flat);
        p.integer("plateau_halfwidth", b.plateau_halfwidth, Bound::kNonnegative);
        p.string("expect", b.expect,
                 {"", "Regular_out", "Irregular_in", "Regular_perp", "Regular_flat", "Unknown"});
        p.finish();
        k.points.push_back(b);
      }
    }
    c.number("energy_budget", k.energy_budget, Bound::kPositive);
    c.number("acceleration", k.acceleration, Bound::kPositive);
    c.number("eta", k.eta, Bound::kPositive);
    c.integer("battery_trials", k.battery_trials, Bound::kPositive);
    c.integer("substeps", k.substeps, Bound::kPositive);
    c.number("bound_margin", k.bound_margin, Bound::kNonnegative);
    c.finish();
  }
  if (const Json* j = r.object("exit_rates")) {
    Reader c(*j, r.child("exit_rates"));
    ExitRatesExperiment& x = e.exit_rates;
    read_domain(c, "domain", x.domain);
    c.integer("count", x.count, Bound::kPositive);
    c.numbers("horizons", x.horizons, Bound::kPositive, true);
    c.integer("steps", x.steps, Bound::kPositive);
    c.number("tolerance", x.tolerance, Bound::kNonnegative);
    c.finish();
  }
  if (const Json* j = r.object("control")) {
    Reader c(*j, r.child("control"));
    ControlExperiment& x = e.control;
    c.numbers("deltas", x.deltas, Bound::kPositive, true);
    c.number("horizon", x.horizon, Bound::kNonnegative);
    c.number("tolerance", x.tolerance, Bound::kPositive);
    c.finish();
  }
  r.finish();
}

NoiseCoefficient make_noise(const NoiseConfig& n) {
  if (n.kind == "table") return NoiseCoefficient::bounded_smooth(n.x0, n.dx, n.values, n.lower_bound);
  return NoiseCoefficient::constant(n.value, n.lower_bound);
}

// Fills dt and c_sigma.
void resolve_problem(ProblemConfig& p) {
  if (p.dt == 0.0) p.dt = 0.1 * p.length / (p.modes * M_PI);
  if (p.c_sigma == 0.0) {
    const NoiseCoefficient noise = make_noise(p.sigma);
    p.c_sigma = noise.is_constant() ? std::abs(noise.constant_value()) : noise.sampled_minimum();
  }
  if (!(p.c_sigma > 0.0)) throw Error(ErrorCode::kParse, "key 'problem.c_sigma': expected positive number");
}

Json noise_json(const NoiseConfig& n) {
  Json j;
  j["kind"] = n.kind;
  j["value"] = n.value;
  j["x0"] = n.x0;
  j["dx"] = n.dx;
  j["values"] = n.values;
  j["lower_bound"] = n.lower_bound;
  return j;
}

Json domain_json(const DomainConfig& d) {
  Json j;
  j["kind"] = d.kind;
  j["radius"] = d.radius;
  j["velocity_radius"] = d.velocity_radius;
  j["orbit_horizon"] = d.orbit_horizon;
  j["orbit_dt"] = d.orbit_dt;
  j["escape_factor"] = d.escape_factor;
  j["guess_amplitude"] = d.guess_amplitude;
  return j;
}

// JSON number that keeps non-finite values readable.
Json num(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw Error(ErrorCode::kParse, "key '<root>': expected object");
  ExperimentConfig cfg;
  // Problem keys may sit at the top level or inside "problem".
  Json problem = Json::object();
  Json rest = Json::object();
  for (auto it = root.begin(); it != root.end(); ++it) {
    if (std::find(kProblemKeys.begin(), kProblemKeys.end(), it.key()) != kProblemKeys.end()) {
      problem[it.key()] = it.value();
    } else {
      rest[it.key()] = it.value();
    }
  }
  if (rest.contains("problem")) {
    if (!rest["problem"].is_object()) throw Error(ErrorCode::kParse, "key 'problem': expected object");
    for (auto it = rest["problem"].begin(); it != rest["problem"].end(); ++it) {
      if (problem.contains(it.key())) {
        throw Error(ErrorCode::kParse, "key '" + it.key() + "': given both at the top level and in 'problem'");
      }
      problem[it.key()] = it.value();
    }
  }
  const bool nested = rest.contains("problem");
  Reader pr(problem, nested ? "problem" : "");
  read_problem(pr, cfg.problem);
  pr.finish();

  Reader r(rest, "");
  r.object("problem");
  r.unsigned64("seed", cfg.seed);
  if (const Json* e = r.object("experiment")) {
    Reader er(*e, "experiment");
    read_experiment(er, cfg.experiment);
  }
  if (const Json* o = r.object("output")) {
    Reader orr(*o, "output");
    orr.string("dir", cfg.output.dir);
    orr.strings("formats", cfg.output.formats, {"csv", "json"});
    orr.finish();
  }
  r.finish();
  resolve_problem(cfg.problem);
  return cfg;
}

Json config_to_json(const ExperimentConfig& cfg) {
  const ProblemConfig& p = cfg.problem;
  Json j;
  Json pj;
  pj["length"] = p.length;
  pj["modes"] = p.modes;
  pj["alpha"] = p.alpha;
  pj["drift"] = p.drift;
  pj["sigma"] = noise_json(p.sigma);
  pj["c_sigma"] = p.c_sigma;
  pj["cutoff"] = p.cutoff;
  pj["dt"] = p.dt;
  pj["horizon"] = p.horizon;
  pj["scheme"] = p.scheme;
  j["problem"] = pj;

  const ExperimentBlock& e = cfg.experiment;
  Json ej;
  ej["decay"] = {{"horizon", e.decay.horizon}, {"samples", e.decay.samples}, {"slack", e.decay.slack}};
  ej["attract"] = {{"fraction", e.attract.fraction},
                   {"samples", e.attract.samples},
                   {"horizon", e.attract.horizon},
                   {"prefactor_samples", e.attract.prefactor_samples},
                   {"prefactor_horizon", e.attract.prefactor_horizon},
                   {"guess_amplitude", e.attract.guess_amplitude}};
  const SimulateExperiment& s = e.simulate;
  ej["simulate"] = {{"mode", s.mode},
                    {"initial", s.initial},
                    {"initial_mode", s.initial_mode},
                    {"amplitude", s.amplitude},
                    {"velocity", s.velocity},
                    {"epsilon", s.epsilon},
                    {"paths", s.paths},
                    {"record_every", s.record_every},
                    {"snapshot", s.snapshot},
                    {"psi_scale", s.psi_scale},
                    {"moment_samples", s.moment_samples},
                    {"refined_modes", s.refined_modes}};
  const QuasipotentialExperiment& q = e.quasipotential;
  ej["quasipotential"] = {{"domain", domain_json(q.domain)},
                          {"target", q.target},
                          {"modes", q.modes},
                          {"horizons", q.horizons},
                          {"theta", q.theta},
                          {"steps", q.steps},
                          {"substeps", q.substeps},
                          {"oracle_tolerance", q.oracle_tolerance},
                          {"mode_tolerance", q.mode_tolerance}};
  const ExitMcExperiment& m = e.exit_mc;
  ej["exit_mc"] = {{"domain", domain_json(m.domain)},
                   {"epsilons", m.epsilons},
                   {"n_paths", m.n_paths},
                   {"bootstrap", m.bootstrap},
                   {"donut_radii", m.donut_radii},
                   {"donut_outer_factor", m.donut_outer_factor},
                   {"horizon", m.horizon},
                   {"delta", m.delta},
                   {"minimizer", m.minimizer},
                   {"minimizer_horizons", m.minimizer_horizons},
                   {"minimizer_steps", m.minimizer_steps},
                   {"value_tolerance", m.value_tolerance}};
  const ClassifyExperiment& k = e.classify_boundary;
  Json pts = Json::array();
  for (const BoundaryPointConfig& b : k.points) {
    pts.push_back({{"peak_index", b.peak_index},
                   {"v_peak", b.v_peak},
                   {"flat", b.flat},
                   {"plateau_halfwidth", b.plateau_halfwidth},
                   {"expect", b.expect}});
  }
  ej["classify_boundary"] = {{"domain", domain_json(k.domain)},
                             {"points", pts},
                             {"energy_budget", k.energy_budget},
                             {"acceleration", k.acceleration},
                             {"eta", k.eta},
                             {"battery_trials", k.battery_trials},
                             {"substeps", k.substeps},
                             {"bound_margin", k.bound_margin}};
  const ExitRatesExperiment& x = e.exit_rates;
  ej["exit_rates"] = {{"domain", domain_json(x.domain)},
                      {"count", x.count},
                      {"horizons", x.horizons},
                      {"steps", x.steps},
                      {"tolerance", x.tolerance}};
  ej["control"] = {{"deltas", e.control.deltas}, {"horizon", e.control.horizon}, {"tolerance", e.control.tolerance}};
  j["experiment"] = ej;
  j["output"] = {{"dir", cfg.output.dir}, {"formats", cfg.output.formats}};
  j["seed"] = cfg.seed;
  return j;
}

std::string serialize_config(const ExperimentConfig& cfg) { return config_to_json(cfg).dump(2); }

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"decay",    "attract",           "simulate",   "quasipotential",
                                                 "exit-mc", "classify-boundary", "exit-rates", "control"};
  return names;
}

bool RunReport::passed() const {
  for (const CheckResult& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Json error_record(int code, const std::string& name, const std::string& message, const std::string& subcommand) {
  Json j;
  j["error"] = {{"code", code}, {"name", name}, {"message", message}};
  j["subcommand"] = subcommand;
  j["version"] = kVersion;
  return j;
}

namespace {

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header) : out_(path, std::ios::binary) {
    if (!out_) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    row(header);
  }
  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << csv_field(fields[i]);
    }
    out_ << "\r\n";
  }

 private:
  std::ofstream out_;
};

std::string str(double x) { return csv_number(x); }
std::string str(int x) { return std::to_string(x); }
std::string str(std::uint64_t x) { return std::to_string(x); }
std::string str(bool x) { return x ? "true" : "false"; }

struct Context {
  const ExperimentConfig& cfg;
  GridPtr grid;
  SimConfig sim;
  fs::path out;
  int workers;
  RunReport& report;
  bool csv;

  void check(const std::string& name, bool passed, const std::string& detail) {
    report.checks.push_back({name, passed, detail});
  }
  // Opens a CSV artifact; nullptr when CSV output is disabled.
  std::unique_ptr<CsvWriter> table(const std::string& file, const std::vector<std::string>& header) {
    if (!csv) return nullptr;
    report.artifacts.push_back(file);
    return std::make_unique<CsvWriter>(out / file, header);
  }
};

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

SimConfig make_sim(const ProblemConfig& p, const GridPtr& grid, std::uint64_t seed) {
  SimConfig s;
  s.grid = grid;
  s.alpha = p.alpha;
  s.dt = p.dt;
  s.drift = PolynomialDrift(p.drift);
  s.noise = make_noise(p.sigma);
  s.cutoff = p.cutoff;
  s.horizon = p.horizon;
  s.seed = seed;
  s.scheme = p.scheme == "exponential_midpoint" ? Scheme::kExponentialMidpoint : Scheme::kExponentialEuler;
  s.validate();
  return s;
}

EquilibriumResult equilibrium(const Context& c, double guess_amplitude) {
  // guess_amplitude scales sin(pi x / l), not the normalized e_1.
  Vec guess = Vec::Zero(c.grid->modes());
  guess[0] = guess_amplitude * std::sqrt(c.grid->length() / 2.0);
  EquilibriumResult eq = solve_equilibrium(c.grid, c.sim.drift, guess);
  if (!eq.stable) {
    throw Error(ErrorCode::kStabilityAssumption,
                "equilibrium is not linearly stable (a_1^b = " + fmt(eq.spectrum.lowest) + ")");
  }
  return eq;
}

struct Certificate {
  AttractionCertificate cert;
  double theta = 0.0;
};

Certificate certify(const Context& c, const EquilibriumResult& eq, int samples, double horizon) {
  Certificate out;
  out.theta = attraction_rate(c.sim.alpha, eq.spectrum.lowest);
  const double a1 = linearized_prefactor(c.grid, c.sim.alpha, eq.spectrum, out.theta, horizon, samples, c.cfg.seed);
  out.cert = attraction_radius(*c.grid, c.sim.drift, eq.xstar, a1, out.theta);
  return out;
}

DomainSpec make_domain(const Context& c, const DomainConfig& d, Json* info) {
  const EquilibriumResult eq = equilibrium(c, d.guess_amplitude);
  const StateE zstar(c.grid, eq.xstar, Vec::Zero(c.grid->modes()));
  (*info)["kind"] = d.kind;
  (*info)["equilibrium_residual"] = eq.residual;
  if (d.kind == "cylinder") {
    (*info)["radius"] = d.radius;
    (*info)["velocity_radius"] = d.velocity_radius;
    return DomainSpec::cylinder(zstar, d.radius, d.velocity_radius);
  }
  if (d.kind == "ball") {
    (*info)["radius"] = d.radius;
    return DomainSpec::ball(zstar, d.radius);
  }
  double radius = d.radius;
  const Certificate cert = certify(c, eq, c.cfg.experiment.attract.prefactor_samples,
                                   c.cfg.experiment.attract.prefactor_horizon);
  if (radius == 0.0) {
    if (!cert.cert.finite()) throw Error(ErrorCode::kConfiguration, "orbit union needs a finite rho0 or a radius");
    radius = cert.cert.rho0;
  }
  SimConfig flow = c.sim;
  flow.epsilon = 0.0;
  if (d.orbit_dt > 0.0) flow.dt = d.orbit_dt;
  const double horizon = d.orbit_horizon > 0.0 ? d.orbit_horizon : 50.0 / cert.theta;
  (*info)["radius"] = radius;
  (*info)["rho0"] = num(cert.cert.rho0);
  (*info)["theta"] = cert.theta;
  (*info)["orbit_horizon"] = horizon;
  (*info)["orbit_dt"] = flow.dt;
  (*info)["escape_factor"] = d.escape_factor;
  return DomainSpec::orbit_union(zstar, radius, flow, horizon, d.escape_factor);
}

Json state_json(const StateE& z) {
  Json j;
  j["u"] = std::vector<double>(z.u().data(), z.u().data() + z.u().size());
  j["v"] = std::vector<double>(z.v().data(), z.v().data() + z.v().size());
  return j;
}

// ---------------------------------------------------------------- decay

void run_decay(Context& c, Json& res) {
  const DecayExperiment& e = c.cfg.experiment.decay;
  const DecayEstimate est = measure_decay_rate(c.grid, c.sim.alpha, e.horizon, e.samples, c.cfg.seed);
  const double a1 = c.grid->eigenvalues()[0];
  const double threshold = sup_norm_decay_threshold(c.sim.alpha, a1);
  res["fitted_rate"] = est.rate;
  res["prefactor"] = est.prefactor;
  res["threshold"] = threshold;
  res["required_rate"] = threshold - e.slack;
  if (auto t = c.table("decay.csv", {"t", "e_norm_envelope"})) {
    for (std::size_t i = 0; i < est.times.size(); ++i) t->row({str(est.times[i]), str(est.envelope[i])});
  }
  c.check("decay_rate", est.rate >= threshold - e.slack,
          "fitted_rate " + fmt(est.rate) + " >= " + fmt(threshold - e.slack));
}

// ---------------------------------------------------------------- attract

void run_attract(Context& c, Json& res) {
  const AttractExperiment& e = c.cfg.experiment.attract;
  const EquilibriumResult eq = equilibrium(c, e.guess_amplitude);
  const Certificate cert = certify(c, eq, e.prefactor_samples, e.prefactor_horizon);
  const AttractionCertificate& a = cert.cert;
  res["equilibrium_residual"] = eq.residual;
  res["spectral_gap"] = eq.spectrum.lowest;
  res["theta"] = cert.theta;
  res["a1"] = a.a1;
  res["rho0"] = num(a.rho0);
  res["rho_example"] = num(a.rho_example);
  res["rho_discrepancy"] = num(a.rho_example - a.rho0);
  res["series_radius"] = num(a.series_radius);
  res["r_k"] = a.r;
  res["a_head"] = a.a_head;
  const StateE zstar(c.grid, eq.xstar, Vec::Zero(c.grid->modes()));
  const double radius = a.finite() ? e.fraction * a.rho0 : 1.0;
  const DomainSpec ball = DomainSpec::ball(zstar, radius);
  const double horizon = e.horizon > 0.0 ? e.horizon : 8.0 / cert.theta;
  SimConfig sim = c.sim;
  sim.epsilon = 0.0;
  const AttractionReport rep = verify_uniform_attraction(ball, e.samples, sim, cert.theta, horizon, c.workers);
  res["ball_radius"] = radius;
  res["horizon"] = horizon;
  res["worst_margin"] = rep.worst_margin;
  res["empirical_constant"] = rep.empirical_constant;
  if (auto t = c.table("attract.csv", {"sample", "initial_distance", "final_distance", "margin", "decays"})) {
    for (std::size_t i = 0; i < rep.samples.size(); ++i) {
      const AttractionSample& s = rep.samples[i];
      t->row({str(static_cast<int>(i)), str(s.initial_distance), str(s.final_distance), str(s.margin), str(s.decays)});
    }
  }
  int decaying = 0;
  for (const AttractionSample& s : rep.samples) decaying += s.decays;
  c.check("uniform_attraction", rep.pass,
          std::to_string(decaying) + "/" + std::to_string(rep.samples.size()) + " envelopes decay in B_E(z*, " +
              fmt(radius) + ")");
  if (a.finite()) {
    // Ratio test on the last two nonzero terms; odd drifts leave every other term zero.
    const double rho = 0.9 * a.series_radius;
    const std::vector<double> sums = a.partial_sums(rho);
    std::vector<double> terms;
    for (std::size_t n = 0; n < sums.size(); ++n) {
      const double t = std::abs(sums[n] - (n ? sums[n - 1] : 0.0));
      if (t > 0.0) terms.push_back(t);
    }
    double ratio = std::numeric_limits<double>::quiet_NaN();
    if (terms.size() >= 2) ratio = terms.back() / terms[terms.size() - 2];
    const double tail = terms.empty() ? 0.0 : terms.back() * ratio / (1.0 - ratio);
    res["series_test_rho"] = rho;
    res["series_partial_sum"] = num(sums.back());
    res["series_term_ratio"] = num(ratio);
    res["series_tail_estimate"] = num(tail);
    c.check("series_converges", terms.size() < 2 || (ratio < 1.0 && std::isfinite(sums.back())),
            "term ratio " + fmt(ratio) + ", partial sum " + fmt(sums.back()) + " at 0.9 x series radius " + fmt(rho));
    c.check("rho_reported", a.rho0 > 0.0 && std::isfinite(a.rho_example),
            "rho0 " + fmt(a.rho0) + ", closed form " + fmt(a.rho_example));
  }
}

// ---------------------------------------------------------------- simulate

void run_simulate(Context& c, Json& res) {
  const SimulateExperiment& e = c.cfg.experiment.simulate;
  if (e.mode == "moment") {
    SimConfig sim = c.sim;
    sim.epsilon = 1.0;
    const double s = e.psi_scale;
    auto probe = [&](const SimConfig& cfg, double scale, std::uint64_t seed) {
      return stochastic_convolution_moment_probe([scale](double, double) { return scale; }, cfg, e.moment_samples,
                                                 seed, c.workers);
    };
    const MomentEstimate base = probe(sim, s, c.cfg.seed);
    const MomentEstimate twice = probe(sim, 2.0 * s, c.cfg.seed + 1);
    SimConfig fine = sim;
    const int refined = e.refined_modes > 0 ? e.refined_modes : 2 * c.grid->modes();
    fine.grid = make_grid(c.grid->length(), refined);
    const MomentEstimate ref = probe(fine, s, c.cfg.seed + 2);
    const double ratio = twice.mean / base.mean;
    const double drift = std::abs(ref.mean / base.mean - 1.0);
    res["estimate"] = {{"mean", base.mean}, {"standard_error", base.standard_error}};
    res["estimate_doubled"] = {{"mean", twice.mean}, {"standard_error", twice.standard_error}};
    res["estimate_refined"] = {{"modes", refined}, {"mean", ref.mean}, {"standard_error", ref.standard_error}};
    res["ratio"] = ratio;
    res["refinement_change"] = drift;
    if (auto t = c.table("moment.csv", {"case", "modes", "psi_scale", "mean", "standard_error"})) {
      t->row({"base", str(c.grid->modes()), str(s), str(base.mean), str(base.standard_error)});
      t->row({"doubled", str(c.grid->modes()), str(2.0 * s), str(twice.mean), str(twice.standard_error)});
      t->row({"refined", str(refined), str(s), str(ref.mean), str(ref.standard_error)});
    }
    c.check("moment_scaling", ratio >= 3.6 && ratio <= 4.4, "estimate(2 psi)/estimate(psi) = " + fmt(ratio));
    c.check("moment_refinement", drift <= 0.1, "relative change under refinement " + fmt(drift));
    return;
  }
  SimConfig sim = c.sim;
  sim.epsilon = e.epsilon;
  const Stepper stepper(sim);
  StateE z0(c.grid);
  if (e.initial == "equilibrium") {
    z0.u() = equilibrium(c, 0.0).xstar;
  } else {
    if (e.initial_mode > c.grid->modes()) throw Error(ErrorCode::kInvalidArgument, "initial_mode exceeds K");
    z0.u()[e.initial_mode - 1] = e.amplitude;
    z0.v()[e.initial_mode - 1] = e.velocity;
  }
  Json paths = Json::array();
  for (int p = 0; p < e.paths; ++p) {
    PathOptions po;
    po.noise = e.epsilon > 0.0;
    po.record_every = e.record_every;
    po.path_index = static_cast<std::uint64_t>(p);
    const PathResult r = simulate_path(z0, stepper, po);
    const std::string name = "trajectory_" + std::to_string(p) + ".csv";
    if (auto t = c.table(name, {"t", "sup_norm_u", "cminus_norm_v", "E_norm", "energy"})) {
      for (const TrajectoryRow& row : r.rows) {
        t->row({str(row.t), str(row.sup_norm_u), str(row.cminus_norm_v), str(row.e_norm), str(row.energy)});
      }
    }
    if (e.snapshot) {
      const std::string snap = "final_" + std::to_string(p) + ".bin";
      std::ofstream out(c.out / snap, std::ios::binary);
      if (!out) throw Error(ErrorCode::kIo, "cannot write " + snap);
      write_state_snapshot(out, r.record.state);
      c.report.artifacts.push_back(snap);
    }
    paths.push_back({{"path_index", p},
                     {"seed", r.record.seed},
                     {"termination", termination_name(r.record.termination)},
                     {"t_end", r.record.tau},
                     {"max_sup_norm", r.record.max_sup_norm},
                     {"crossed_cutoff", r.record.crossed_cutoff}});
  }
  res["paths"] = paths;
}

// ---------------------------------------------------------------- quasipotential

ConstraintMode parse_mode(const std::string& s) {
  if (s == "stay_in_d") return ConstraintMode::kStayInD;
  if (s == "stay_in_closure") return ConstraintMode::kStayInClosure;
  return ConstraintMode::kFree;
}

void run_quasipotential(Context& c, Json& res) {
  const QuasipotentialExperiment& e = c.cfg.experiment.quasipotential;
  Json dinfo;
  const DomainSpec domain = make_domain(c, e.domain, &dinfo);
  res["domain"] = dinfo;
  QuasipotentialOptions opt;
  opt.horizons = e.horizons;
  opt.theta = e.theta;
  opt.steps = e.steps;
  opt.substeps = e.substeps;
  opt.workers = c.workers;
  QuasipotentialTarget target;
  target.kind = e.target == "exterior" ? TargetKind::kExterior : TargetKind::kBoundary;
  target.domain = &domain;
  auto t = c.table("restarts.csv", {"mode", "restart", "horizon", "value", "endpoint_gap", "interior_violation",
                                    "feasible", "iterations"});
  Json modes = Json::array();
  std::vector<double> values;
  double oracle = std::numeric_limits<double>::quiet_NaN();
  for (const std::string& m : e.modes) {
    const QuasipotentialResult r = minimize_quasipotential(domain.center(), target, parse_mode(m), c.sim, opt);
    values.push_back(r.value);
    oracle = r.oracle_value;
    Json hv = Json::array();
    for (double v : r.horizon_values) hv.push_back(num(v));
    modes.push_back({{"mode", m},
                     {"value", num(r.value)},
                     {"horizon", r.horizon},
                     {"endpoint_gap", r.endpoint_gap},
                     {"interior_violation", r.interior_violation},
                     {"feasible", r.feasible},
                     {"at_largest_horizon", r.at_largest_horizon},
                     {"horizon_values", hv},
                     {"terminal", state_json(r.terminal)}});
    if (t) {
      for (const RestartResult& x : r.restarts) {
        t->row({m, x.name, str(x.horizon), str(x.value), str(x.endpoint_gap), str(x.interior_violation),
                str(x.feasible), str(x.iterations)});
      }
    }
    c.check("feasible_" + m, r.feasible, "endpoint gap " + fmt(r.endpoint_gap) + ", interior " + fmt(r.interior_violation));
  }
  res["modes"] = modes;
  res["oracle_value"] = num(oracle);
  const bool gradient_form = c.sim.noise.is_constant();
  if (gradient_form && e.target == "boundary" && e.modes.front() == "free" && std::isfinite(oracle)) {
    const double v = values.front();
    c.check("oracle_upper", v <= oracle + 1e-3, "value " + fmt(v) + " <= oracle " + fmt(oracle) + " + 1e-3");
    c.check("oracle_relative", std::abs(v - oracle) <= e.oracle_tolerance * oracle,
            "relative gap " + fmt(std::abs(v - oracle) / oracle));
  }
  for (std::size_t i = 1; i < e.modes.size(); ++i) {
    if (e.modes[0] == "free" && e.modes[i] == "stay_in_d") {
      const double gap = std::abs(values[i] - values[0]) / values[0];
      c.check("free_vs_stay_in_d", gap <= e.mode_tolerance, "relative difference " + fmt(gap));
    }
  }
}

// ---------------------------------------------------------------- exit-mc

void run_exit_mc_cmd(Context& c, Json& res) {
  const ExitMcExperiment& e = c.cfg.experiment.exit_mc;
  Json dinfo;
  const DomainSpec domain = make_domain(c, e.domain, &dinfo);
  res["domain"] = dinfo;
  SimConfig sim = c.sim;
  sim.horizon = e.horizon;

  std::vector<StateE> orbit;
  double vhat = std::numeric_limits<double>::quiet_NaN();
  if (e.minimizer) {
    StateE y;
    if (domain.kind() != DomainKind::kOrbitUnion && sim.noise.is_constant()) {
      const BoundaryMinimizer bm = min_energy_boundary_point(domain, sim.drift);
      y = bm.point;
      const double s = sim.noise.constant_value();
      vhat = 2.0 * sim.alpha * bm.energy_gap / (s * s);
      res["minimizer_method"] = "static_energy";
    } else {
      QuasipotentialOptions opt;
      opt.horizons = e.minimizer_horizons;
      opt.steps = e.minimizer_steps;
      opt.workers = c.workers;
      QuasipotentialTarget target;
      target.kind = TargetKind::kBoundary;
      target.domain = &domain;
      const QuasipotentialResult r = minimize_quasipotential(domain.center(), target, ConstraintMode::kFree, sim, opt);
      y = r.terminal;
      vhat = r.value;
      res["minimizer_method"] = "optimizer";
      res["minimizer_oracle_value"] = num(r.oracle_value);
    }
    orbit = minimizer_orbit(y, domain, sim.drift);
    res["v_hat"] = num(vhat);
    res["minimizer_orbit_size"] = orbit.size();
  }

  ExitMcOptions opt;
  opt.epsilons = e.epsilons;
  opt.n_paths = e.n_paths;
  opt.bootstrap = e.bootstrap;
  opt.donut_radii = e.donut_radii;
  opt.donut_outer_factor = e.donut_outer_factor;
  opt.workers = c.workers;
  const std::vector<ExitEnsemble> ens = run_exit_mc(domain.center(), domain, sim, opt);

  auto paths = c.table("exit_paths.csv", {"epsilon", "path_index", "seed", "tau", "termination", "binding",
                                          "location", "sign", "minimizer_distance", "max_sup_norm", "crossed_cutoff"});
  auto est = c.table("exit_estimates.csv", {"epsilon", "n_paths", "exits", "timeouts", "explosions", "mean_tau",
                                            "median_tau", "scaled_log_mean", "band_low", "band_high", "censored",
                                            "fraction_near"});
  Json per = Json::array();
  std::vector<double> fractions;
  std::vector<double> mean_distance;
  bool alternation = true;
  bool cutoff_ok = true;
  for (const ExitEnsemble& en : ens) {
    const ExitEstimate& s = en.estimate;
    Json j = {{"epsilon", s.epsilon},
              {"n_paths", s.n_paths},
              {"exits", s.exits},
              {"timeouts", s.timeouts},
              {"explosions", s.explosions},
              {"mean_tau", s.mean_tau},
              {"median_tau", s.median_tau},
              {"scaled_log_mean", s.scaled_log_mean},
              {"band", {s.band_low, s.band_high}},
              {"censored", s.censored},
              {"all_censored", s.all_censored}};
    double frac = std::numeric_limits<double>::quiet_NaN();
    double dist = 0.0;
    if (!orbit.empty()) {
      const ExitPlaceSummary h = exit_place_histogram(en, domain, orbit, e.delta);
      frac = h.fraction_near;
      j["exit_place"] = {{"exits", h.exits},
                         {"position_binding", h.position_binding},
                         {"velocity_binding", h.velocity_binding},
                         {"positive_sign", h.positive_sign},
                         {"location_counts", h.location_counts},
                         {"fraction_near", h.fraction_near}};
    }
    for (const ExitRecord& r : en.records) {
      std::string binding = "";
      std::string loc = "";
      std::string sign = "";
      std::string md = "";
      if (r.termination == Termination::kExit) {
        cutoff_ok = cutoff_ok && !r.crossed_cutoff;
        const ExitFeature f = exit_feature(r.state, domain, orbit);
        binding = binding_name(f.binding);
        loc = str(f.location);
        sign = str(f.sign);
        if (!orbit.empty()) {
          md = str(f.minimizer_distance);
          dist += f.minimizer_distance;
        }
      }
      if (paths) {
        paths->row({str(en.epsilon), str(r.path_index), str(r.seed), str(r.tau), termination_name(r.termination),
                    binding, loc, sign, md, str(r.max_sup_norm), str(r.crossed_cutoff)});
      }
    }
    if (!orbit.empty() && s.exits > 0) {
      j["mean_minimizer_distance"] = dist / s.exits;
      mean_distance.push_back(dist / s.exits);
    }
    Json donuts = Json::array();
    for (double rho : e.donut_radii) {
      const DonutSummary d = donut_chain_stats(en, rho, domain);
      alternation = alternation && d.alternation_ok;
      donuts.push_back({{"rho", d.rho},
                        {"outer", d.outer},
                        {"chain_total", d.chain_total},
                        {"chain_small", d.chain_small},
                        {"small_first_probability", d.small_first_probability},
                        {"alternation_ok", d.alternation_ok}});
    }
    if (!e.donut_radii.empty()) j["donut"] = donuts;
    fractions.push_back(frac);
    if (est) {
      est->row({str(s.epsilon), str(s.n_paths), str(s.exits), str(s.timeouts), str(s.explosions), str(s.mean_tau),
                str(s.median_tau), str(s.scaled_log_mean), str(s.band_low), str(s.band_high), str(s.censored),
                orbit.empty() ? "" : str(frac)});
    }
    per.push_back(j);
  }
  res["ensembles"] = per;

  std::string trend;
  for (const ExitEnsemble& en : ens) trend += (trend.empty() ? "" : ", ") + fmt(en.estimate.scaled_log_mean);
  c.check("exit_scaling_monotone", exit_scaling_monotone(ens), "eps^2 log(mean tau): " + trend);
  c.check("exit_before_explosion", cutoff_ok, "no exiting path crossed the cutoff");
  if (std::isfinite(vhat)) {
    const ExitEnsemble* smallest = &ens.front();
    for (const ExitEnsemble& en : ens) {
      if (en.epsilon < smallest->epsilon) smallest = &en;
    }
    const double v = smallest->estimate.scaled_log_mean;
    const double rel = std::abs(v - vhat) / vhat;
    c.check("exit_scaling_value", rel <= e.value_tolerance,
            "eps " + fmt(smallest->epsilon) + ": " + fmt(v) + " vs V_hat " + fmt(vhat) + " (relative " + fmt(rel) + ")");
  }
  if (!orbit.empty()) {
    std::vector<std::size_t> order(ens.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ens[a].epsilon > ens[b].epsilon; });
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (i > 0 && fractions[order[i]] < fractions[order[i - 1]]) ok = false;
      detail += (i ? ", " : "") + fmt(fractions[order[i]]);
    }
    bool all_zero = true;
    for (double f : fractions) all_zero = all_zero && f == 0.0;
    if (all_zero) detail += " (no exit within delta at any epsilon)";
    c.check("exit_place_trend", ok, "fraction within " + fmt(e.delta) + ": " + detail);
  }
  if (!e.donut_radii.empty()) c.check("donut_alternation", alternation, "theta_(n+1) > tau_n for every recorded pair");
}

// ---------------------------------------------------------------- classify-boundary

void run_classify(Context& c, Json& res) {
  const ClassifyExperiment& e = c.cfg.experiment.classify_boundary;
  Json dinfo;
  const DomainSpec domain = make_domain(c, e.domain, &dinfo);
  res["domain"] = dinfo;
  ClassifierOptions opt;
  opt.energy_budget = e.energy_budget;
  opt.acceleration = e.acceleration;
  opt.eta = e.eta;
  opt.c_sigma = c.cfg.problem.c_sigma;
  opt.battery_trials = e.battery_trials;
  opt.seed = c.cfg.seed;
  opt.substeps = e.substeps;
  auto t = c.table("classify.csv", {"point", "peak_index", "v_peak", "flat", "verdict", "pairing", "witness_horizon",
                                    "witness_energy", "witness_bound", "min_excess", "battery_survived",
                                    "battery_trials", "gamma", "t0", "energy_threshold", "notes"});
  Json points = Json::array();
  for (std::size_t i = 0; i < e.points.size(); ++i) {
    const BoundaryPointConfig& p = e.points[i];
    const int peak = p.peak_index >= 0 ? p.peak_index : c.grid->modes() / 2;
    const StateE z = bump_boundary_point(domain, peak, p.v_peak, p.flat, p.plateau_halfwidth);
    const BoundaryClassification r = classify_boundary_point(z, domain, c.sim, opt);
    const std::string verdict = verdict_name(r.verdict);
    Json j = {{"peak_index", peak},
              {"v_peak", p.v_peak},
              {"flat", p.flat},
              {"verdict", verdict},
              {"pairing", num(r.pairing)},
              {"notes", r.notes}};
    if (r.has_witness) {
      j["witness"] = {{"horizon", r.witness.horizon},
                      {"energy", r.witness.energy},
                      {"bound", r.witness.bound},
                      {"rate", r.witness.rate},
                      {"min_excess", r.witness.min_excess},
                      {"exited", r.witness.exited}};
    }
    if (r.battery.trials > 0) {
      j["battery"] = {{"trials", r.battery.trials},
                      {"survived", r.battery.survived},
                      {"gamma", r.battery.gamma},
                      {"t0", r.battery.t0},
                      {"energy_threshold", r.battery.energy_threshold},
                      {"max_level", r.battery.max_level}};
    }
    points.push_back(j);
    if (t) {
      t->row({str(static_cast<int>(i)), str(peak), str(p.v_peak), str(p.flat), verdict, str(r.pairing),
              str(r.witness.horizon), str(r.witness.energy), str(r.witness.bound), str(r.witness.min_excess),
              str(r.battery.survived), str(r.battery.trials), str(r.battery.gamma), str(r.battery.t0),
              str(r.battery.energy_threshold), r.notes});
    }
    const std::string tag = "point_" + std::to_string(i);
    if (!p.expect.empty()) c.check(tag + "_verdict", verdict == p.expect, verdict + " (expected " + p.expect + ")");
    if (r.verdict == Verdict::kRegularOut) {
      c.check(tag + "_uncontrolled_exit", r.witness.exited,
              "exits within T0 = " + fmt(r.witness.horizon) + ", min level " + fmt(r.witness.min_excess));
    }
    if (r.verdict == Verdict::kIrregularIn) {
      c.check(tag + "_battery", r.battery.survived == r.battery.trials,
              std::to_string(r.battery.survived) + "/" + std::to_string(r.battery.trials) + " controls stay in D");
    }
    if (r.verdict == Verdict::kRegularPerp || r.verdict == Verdict::kRegularFlat) {
      c.check(tag + "_energy_margin", r.witness.energy <= (1.0 - e.bound_margin) * r.witness.bound,
              "energy " + fmt(r.witness.energy) + " vs bound " + fmt(r.witness.bound));
    }
  }
  res["points"] = points;
}

// ---------------------------------------------------------------- exit-rates

void run_exit_rates(Context& c, Json& res) {
  const ExitRatesExperiment& e = c.cfg.experiment.exit_rates;
  Json dinfo;
  const DomainSpec domain = make_domain(c, e.domain, &dinfo);
  res["domain"] = dinfo;
  QuasipotentialOptions opt;
  opt.horizons = e.horizons;
  opt.steps = e.steps;
  opt.workers = c.workers;
  const RateTable table = exit_rate_functions(domain, c.sim, opt, e.count);
  res["v_boundary"] = num(table.v_boundary);
  res["v_exterior"] = num(table.v_exterior);
  res["min_j1"] = num(table.min_j1);
  res["min_j2"] = num(table.min_j2);
  res["min_gap"] = num(table.min_gap);
  if (auto t = c.table("exit_rates.csv", {"sample", "binding", "location", "sign", "v_closure", "v_open", "j1", "j2",
                                          "feasible"})) {
    for (std::size_t i = 0; i < table.samples.size(); ++i) {
      const RateSample& s = table.samples[i];
      t->row({str(static_cast<int>(i)), binding_name(s.binding), str(s.location), str(s.sign), str(s.v_closure),
              str(s.v_open), str(s.j1), str(s.j2), str(s.feasible)});
    }
  }
  const double slack = e.tolerance * table.v_boundary;
  c.check("j1_nonnegative", table.min_j1 >= -slack, "min J1 " + fmt(table.min_j1));
  c.check("j2_nonnegative", table.min_j2 >= -slack, "min J2 " + fmt(table.min_j2));
  c.check("j2_above_j1", table.min_gap >= -slack, "min J2 - J1 " + fmt(table.min_gap));
}

// ---------------------------------------------------------------- control

void run_control(Context& c, Json& res) {
  const ControlExperiment& e = c.cfg.experiment.control;
  const EquilibriumResult eq = equilibrium(c, 0.0);
  const StateE zstar(c.grid, eq.xstar, Vec::Zero(c.grid->modes()));
  const Stepper stepper(c.sim);
  const double horizon = e.horizon > 0.0 ? e.horizon : control_horizon(*c.grid, c.sim.alpha, stepper.shift());
  std::mt19937_64 rng(c.cfg.seed);
  StateE w = random_unit_state(c.grid, rng);
  w = w * (1.0 / h1_norm(w));
  res["horizon"] = horizon;
  auto t = c.table("control.csv", {"delta", "energy", "linear_energy", "gap", "linear_norm", "linear_bound"});
  Json rows = Json::array();
  std::vector<double> energies;
  bool gaps_ok = true;
  bool bound_ok = true;
  for (double delta : e.deltas) {
    const StateE target = zstar + w * delta;
    const ExactControlResult r = exact_nonlinear_control(target, zstar, horizon, c.sim);
    const double lin_norm = std::sqrt(2.0 * r.linear_energy);
    const double bound = 2.0 * std::sqrt(c.sim.alpha) * h1_norm(target - zstar);
    energies.push_back(r.energy);
    gaps_ok = gaps_ok && r.gap <= e.tolerance;
    bound_ok = bound_ok && lin_norm <= bound;
    rows.push_back({{"delta", delta},
                    {"energy", r.energy},
                    {"linear_energy", r.linear_energy},
                    {"gap", r.gap},
                    {"linear_norm", lin_norm},
                    {"linear_bound", bound}});
    if (t) t->row({str(delta), str(r.energy), str(r.linear_energy), str(r.gap), str(lin_norm), str(bound)});
  }
  res["targets"] = rows;
  std::vector<std::size_t> order(e.deltas.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return e.deltas[a] > e.deltas[b]; });
  bool monotone = true;
  for (std::size_t i = 1; i < order.size(); ++i) monotone = monotone && energies[order[i]] < energies[order[i - 1]];
  c.check("control_gap", gaps_ok, "all targets hit within " + fmt(e.tolerance) + " in H1 x L2");
  c.check("control_energy_monotone", monotone, "energies decrease with delta");
  c.check("linear_control_bound", bound_ok, "|u|_L2 <= 2 sqrt(alpha) |z|_(H1 x L2)");
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg, const std::string& subcommand, const std::string& out_dir,
                         int workers) {
  const auto& names = subcommands();
  if (std::find(names.begin(), names.end(), subcommand) == names.end()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown subcommand '" + subcommand + "'");
  }
  RunReport report;
  report.subcommand = subcommand;
  const fs::path out = out_dir.empty() ? fs::path(cfg.output.dir) : fs::path(out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create output directory " + out.string());
  const bool csv = std::find(cfg.output.formats.begin(), cfg.output.formats.end(), "csv") != cfg.output.formats.end();
  const bool json = std::find(cfg.output.formats.begin(), cfg.output.formats.end(), "json") != cfg.output.formats.end();

  const GridPtr grid = make_grid(cfg.problem.length, cfg.problem.modes);
  Context c{cfg, grid, make_sim(cfg.problem, grid, cfg.seed), out, resolve_workers(workers), report, csv};
  Json res;
  if (subcommand == "decay") run_decay(c, res);
  else if (subcommand == "attract") run_attract(c, res);
  else if (subcommand == "simulate") run_simulate(c, res);
  else if (subcommand == "quasipotential") run_quasipotential(c, res);
  else if (subcommand == "exit-mc") run_exit_mc_cmd(c, res);
  else if (subcommand == "classify-boundary") run_classify(c, res);
  else if (subcommand == "exit-rates") run_exit_rates(c, res);
  else run_control(c, res);

  Json checks = Json::array();
  for (const CheckResult& k : report.checks) {
    checks.push_back({{"name", k.name}, {"passed", k.passed}, {"detail", k.detail}});
  }
  Json summary;
  summary["version"] = kVersion;
  summary["subcommand"] = subcommand;
  summary["config"] = config_to_json(cfg);
  summary["results"] = res;
  summary["checks"] = checks;
  summary["passed"] = report.passed();
  summary["artifacts"] = report.artifacts;
  if (json) {
    std::ofstream f(out / "summary.json", std::ios::binary);
    if (!f) throw Error(ErrorCode::kIo, "cannot write summary.json");
    f << summary.dump(2) << "\n";
  }
  report.summary = std::move(summary);
  return report;
}

}  // namespace wavemeta
