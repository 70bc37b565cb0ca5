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

#include "wavemeta/exit.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "wavemeta/error.hpp"
#include "wavemeta/parallel.hpp"

namespace wavemeta {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double series_derivative(const SpectralGrid& g, const Vec& u, double x) {
  const double l = g.length();
  const double c = std::sqrt(2.0 / l);
  double s = 0.0;
  for (int k = 1; k <= g.modes(); ++k) {
    const double w = k * M_PI / l;
    s += u[k - 1] * c * w * std::cos(w * x);
  }
  return s;
}

double series_second_derivative(const SpectralGrid& g, const Vec& u, double x) {
  double s = 0.0;
  for (int k = 1; k <= g.modes(); ++k) s += u[k - 1] * g.basis_second_derivative(k, x);
  return s;
}

double sup_abs_drift(const PolynomialDrift& drift, double zeta) {
  double m = 0.0;
  const int n = 2001;
  for (int i = 0; i < n; ++i) {
    const double x = -zeta + 2.0 * zeta * i / (n - 1);
    m = std::max(m, std::abs(drift.value(x)));
  }
  return m;
}

// Projected b_n(u) in the sine basis.
Vec projected_drift(const Stepper& s, const Vec& u) { return s.remainder_forcing(u) + s.shift() * u; }

Vec divide_sigma(const Stepper& stepper, const Vec& u, const Vec& rhs) {
  if (stepper.noise().is_constant()) return rhs / stepper.noise().constant_value();
  const SpectralGrid& g = stepper.grid();
  const Mat& q = g.quad_synthesis();
  const Vec uq = g.quad_values(u);
  Vec s(uq.size());
  for (Eigen::Index i = 0; i < uq.size(); ++i) s[i] = stepper.noise().value(uq[i]);
  const Mat m = g.quad_weight() * q.transpose() * s.asDiagonal() * q;
  return m.ldlt().solve(rhs);
}

struct PositionPeak {
  Maximizer maximizer;
  double pairing = 0.0;
};

std::vector<PositionPeak> position_peaks(const StateE& z, const DomainSpec& domain, double tol) {
  const SpectralGrid& g = *z.grid();
  const SubdifferentialSet sub = subdifferential_sup_norm(g, z.u() - domain.center().u(), tol);
  std::vector<PositionPeak> out;
  for (const Maximizer& m : sub.maximizers) {
    PositionPeak p;
    p.maximizer = m;
    p.pairing = g.evaluate(z.v() - domain.center().v(), m.location) * m.sign;
    out.push_back(p);
  }
  return out;
}

// Replays a control from z on a uniform grid and returns the minimum level
// over the nodes in (0, T].
double replay_min_level(const StateE& z, const ControlPath& control, const DomainSpec& domain,
                        const SimConfig& cfg) {
  const SkeletonProblem problem(cfg, control.horizon(), control.steps(), 1);
  const std::vector<StateE> nodes = problem.forward(z, control);
  double m = kInf;
  for (std::size_t i = 1; i < nodes.size(); ++i) m = std::min(m, domain.level(nodes[i]));
  return m;
}

int fine_steps(double horizon, const SimConfig& cfg, int substeps) {
  const double dt = cfg.step() / std::max(substeps, 1);
  return std::max(8, static_cast<int>(std::ceil(horizon / dt - 1e-9)));
}

}  // namespace

std::vector<ExitEnsemble> run_exit_mc(const StateE& z0, const DomainSpec& domain,
                                      const SimConfig& cfg, const ExitMcOptions& options) {
  if (options.n_paths < 1) throw Error(ErrorCode::kInvalidArgument, "n_paths must be at least 1");
  if (options.epsilons.empty()) throw Error(ErrorCode::kInvalidArgument, "epsilon list is empty");
  if (!domain.contains(z0)) throw Error(ErrorCode::kPrecondition, "initial state is not in D");
  for (double r : options.donut_radii) check_donut_geometry(r, options.donut_outer_factor * r, domain);
  std::vector<ExitEnsemble> out;
  for (std::size_t e = 0; e < options.epsilons.size(); ++e) {
    const double eps = options.epsilons[e];
    if (!(eps >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "epsilon must be nonnegative");
    SimConfig c = cfg;
    c.epsilon = eps;
    const Stepper stepper(c);
    const int n = eps > 0.0 ? options.n_paths : 1;
    ExitEnsemble ens;
    ens.epsilon = eps;
    ens.records.resize(n);
    parallel_for(n, options.workers, [&](std::size_t i) {
      PathOptions po;
      po.domain = &domain;
      po.noise = eps > 0.0;
      po.donut_radii = options.donut_radii;
      po.donut_outer_factor = options.donut_outer_factor;
      po.reference = &domain.center();
      po.path_index = (static_cast<std::uint64_t>(e) << 32) + i;
      ens.records[i] = simulate_path(z0, stepper, po).record;
    });
    ens.estimate = summarize_exit_times(eps, ens.records, c.horizon, options.bootstrap,
                                        cfg.seed ^ (0x9e3779b97f4a7c15ULL * (e + 1)));
    out.push_back(std::move(ens));
  }
  return out;
}

ExitEstimate summarize_exit_times(double epsilon, const std::vector<ExitRecord>& records,
                                  double horizon, int bootstrap, std::uint64_t seed) {
  ExitEstimate est;
  est.epsilon = epsilon;
  est.n_paths = static_cast<int>(records.size());
  if (records.empty()) return est;
  std::vector<double> taus;
  for (const ExitRecord& r : records) {
    switch (r.termination) {
      case Termination::kExit: ++est.exits; break;
      case Termination::kTimeout: ++est.timeouts; break;
      case Termination::kExplosion: ++est.explosions; break;
    }
    taus.push_back(r.termination == Termination::kTimeout ? horizon : r.tau);
  }
  est.censored = est.timeouts > 0;
  est.all_censored = est.timeouts == est.n_paths;
  double sum = 0.0;
  for (double t : taus) sum += t;
  est.mean_tau = sum / taus.size();
  std::vector<double> sorted = taus;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  est.median_tau = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  const double e2 = epsilon * epsilon;
  est.scaled_log_mean = e2 * std::log(est.mean_tau);
  if (bootstrap > 0) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);
    std::vector<double> stats(bootstrap);
    for (int b = 0; b < bootstrap; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += taus[pick(rng)];
      stats[b] = e2 * std::log(s / m);
    }
    std::sort(stats.begin(), stats.end());
    const int lo = static_cast<int>(std::floor(0.025 * bootstrap));
    const int hi = std::min(bootstrap - 1, static_cast<int>(std::ceil(0.975 * bootstrap)) - 1);
    est.band_low = stats[lo];
    est.band_high = stats[hi];
  } else {
    est.band_low = est.band_high = est.scaled_log_mean;
  }
  return est;
}

bool exit_scaling_monotone(const std::vector<ExitEnsemble>& ensembles) {
  std::vector<const ExitEnsemble*> e;
  for (const ExitEnsemble& x : ensembles) e.push_back(&x);
  std::sort(e.begin(), e.end(), [](auto a, auto b) { return a->epsilon > b->epsilon; });
  for (std::size_t i = 1; i < e.size(); ++i) {
    if (!(e[i]->estimate.scaled_log_mean > e[i - 1]->estimate.scaled_log_mean)) return false;
  }
  return true;
}

ExitFeature exit_feature(const StateE& z, const DomainSpec& domain,
                         const std::vector<StateE>& minimizers) {
  const SpectralGrid& g = *z.grid();
  ExitFeature f;
  f.binding = domain.binding(z);
  if (f.binding == Binding::kPosition) {
    const Vec w = g.to_grid(z.u() - domain.center().u());
    Eigen::Index j = 0;
    w.cwiseAbs().maxCoeff(&j);
    f.location = g.points()[j];
    f.sign = w[j] >= 0.0 ? 1 : -1;
  } else {
    const Vec w = g.antiderivative_values(z.v() - domain.center().v());
    Eigen::Index r = 0;
    w.cwiseAbs().maxCoeff(&r);
    f.location = g.refined_points()[r];
    f.sign = w[r] >= 0.0 ? 1 : -1;
  }
  f.minimizer_distance = kInf;
  for (const StateE& y : minimizers) f.minimizer_distance = std::min(f.minimizer_distance, e_distance(z, y));
  return f;
}

ExitPlaceSummary exit_place_histogram(const ExitEnsemble& ensemble, const DomainSpec& domain,
                                      const std::vector<StateE>& minimizers, double delta, int bins) {
  if (bins < 1) throw Error(ErrorCode::kInvalidArgument, "histogram needs at least one bin");
  ExitPlaceSummary s;
  s.epsilon = ensemble.epsilon;
  s.delta = delta;
  s.location_counts.assign(bins, 0);
  int near = 0;
  for (const ExitRecord& r : ensemble.records) {
    if (r.termination != Termination::kExit) continue;
    ++s.exits;
    const ExitFeature f = exit_feature(r.state, domain, minimizers);
    (f.binding == Binding::kPosition ? s.position_binding : s.velocity_binding)++;
    if (f.sign > 0) ++s.positive_sign;
    const double l = r.state.grid()->length();
    const int b = std::clamp(static_cast<int>(f.location / l * bins), 0, bins - 1);
    ++s.location_counts[b];
    if (f.minimizer_distance <= delta) ++near;
  }
  s.fraction_near = s.exits > 0 ? static_cast<double>(near) / s.exits : 0.0;
  return s;
}

std::vector<StateE> minimizer_orbit(const StateE& y, const DomainSpec& domain,
                                    const PolynomialDrift& drift) {
  const StateE& c = domain.center();
  const GridPtr& g = y.grid();
  const int n = g->modes();
  Vec parity(n);
  for (int k = 1; k <= n; ++k) parity[k - 1] = k % 2 ? 1.0 : -1.0;
  auto reflect = [&](const StateE& z) {
    return StateE(g, c.u() + parity.cwiseProduct(z.u() - c.u()), c.v() + parity.cwiseProduct(z.v() - c.v()));
  };
  auto negate = [&](const StateE& z) { return c - (z - c); };
  const double level = domain.level(y);
  const double energy = energy_functional(y, drift);
  std::vector<StateE> out{y};
  for (const StateE& cand : {reflect(y), negate(y), negate(reflect(y))}) {
    if (std::abs(domain.level(cand) - level) > 1e-9) continue;
    if (std::abs(energy_functional(cand, drift) - energy) > 1e-9 * std::max(1.0, std::abs(energy))) continue;
    bool duplicate = false;
    for (const StateE& o : out) duplicate = duplicate || e_distance(o, cand) < 1e-12;
    if (!duplicate) out.push_back(cand);
  }
  return out;
}

void check_donut_geometry(double rho, double outer, const DomainSpec& domain) {
  const double inner = domain.inner_radius();
  if (!(rho > 0.0) || !(outer > rho)) {
    throw Error(ErrorCode::kConfiguration, "donut radii must satisfy 0 < rho < outer");
  }
  if (!(outer < inner)) {
    throw Error(ErrorCode::kConfiguration,
                "donut sphere of radius " + std::to_string(outer) + " meets the boundary (inner radius " +
                    std::to_string(inner) + ")");
  }
}

DonutSummary donut_chain_stats(const ExitEnsemble& ensemble, double rho, const DomainSpec& domain) {
  DonutSummary s;
  s.epsilon = ensemble.epsilon;
  s.rho = rho;
  bool found = false;
  for (const ExitRecord& r : ensemble.records) {
    for (const DonutStats& d : r.donut) {
      if (std::abs(d.rho - rho) > 1e-12) continue;
      if (!found) {
        check_donut_geometry(d.rho, d.outer, domain);
        s.outer = d.outer;
        found = true;
      }
      s.chain_total += d.chain_total;
      s.chain_small += d.chain_small;
      for (std::size_t i = 0; i < d.theta.size(); ++i) {
        if (i < d.tau.size() && !(d.theta[i] > d.tau[i])) s.alternation_ok = false;
        if (i + 1 < d.tau.size() && d.tau[i + 1] < d.theta[i]) s.alternation_ok = false;
      }
    }
  }
  if (!found) throw Error(ErrorCode::kInvalidArgument, "no donut statistics recorded for this radius");
  s.small_first_probability = s.chain_total > 0 ? static_cast<double>(s.chain_small) / s.chain_total : 0.0;
  return s;
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kRegularOut: return "Regular_out";
    case Verdict::kIrregularIn: return "Irregular_in";
    case Verdict::kRegularPerp: return "Regular_perp";
    case Verdict::kRegularFlat: return "Regular_flat";
    case Verdict::kUnknown: return "Unknown";
  }
  return "Unknown";
}

EscapeControl outward_exit(const StateE& z, const DomainSpec& domain, const SimConfig& cfg,
                           const ClassifierOptions& options) {
  const SpectralGrid& g = *z.grid();
  const double l = g.length();
  const std::vector<PositionPeak> peaks = position_peaks(z, domain, options.flat_tolerance);
  const PositionPeak* best = nullptr;
  for (const PositionPeak& p : peaks) {
    if (!best || p.pairing > best->pairing) best = &p;
  }
  if (!best || !(best->pairing > options.pairing_tolerance)) {
    throw Error(ErrorCode::kPrecondition, "no maximizer with outward velocity");
  }
  const double xi0 = best->maximizer.location;
  const int sgn = best->maximizer.sign;
  const Vec dv = z.v() - domain.center().v();
  const double vxi = g.evaluate(dv, xi0);
  const double v0 = 0.5 * std::abs(vxi);

  // t0: continuity window of v around xi0 and of x' (first-order Taylor term).
  const double reach = std::min(xi0, l - xi0);
  const double dx = l / 4000.0;
  double t0 = 0.0;
  for (double t = dx; t <= reach; t += dx) {
    bool ok = std::abs(g.evaluate(dv, xi0 + t) - vxi) < 0.5 * std::abs(vxi) &&
              std::abs(g.evaluate(dv, xi0 - t) - vxi) < 0.5 * std::abs(vxi);
    const double slope_gap = sgn * (series_derivative(g, z.u(), xi0 + t) - series_derivative(g, z.u(), xi0 - t));
    ok = ok && slope_gap >= -0.5 * v0;
    if (!ok) break;
    t0 = t;
  }

  // zeta from the noiseless orbit.
  SimConfig c = cfg;
  c.epsilon = 0.0;
  const Stepper stepper(c);
  double sup_u = 0.0;
  double sup_v = 0.0;
  StateE w = z;
  const double span = std::max(cfg.horizon, 10.0 / std::max(cfg.alpha, 1e-3));
  const int steps = static_cast<int>(std::ceil(span / stepper.dt()));
  for (int i = 0; i <= steps; ++i) {
    sup_u = std::max(sup_u, sup_norm(g, w.u()));
    sup_v = std::max(sup_v, g.to_grid(w.v()).cwiseAbs().maxCoeff());
    if (i < steps) w = stepper.step_deterministic(w);
  }
  const double zeta = sup_u + sup_v;
  const double zeta_b = sup_abs_drift(stepper.drift(), zeta) + cfg.alpha * zeta;

  EscapeControl out;
  out.horizon = std::min({t0, v0 / (2.0 * zeta_b), xi0, l - xi0});
  if (!(out.horizon > 0.0)) throw Error(ErrorCode::kConstructionFailed, "outward exit horizon is zero");
  out.control = ControlPath(z.grid(), fine_steps(out.horizon, cfg, options.substeps),
                            out.horizon / fine_steps(out.horizon, cfg, options.substeps));
  out.control.refresh();
  out.min_excess = replay_min_level(z, out.control, domain, cfg);
  out.exited = out.min_excess > 0.0;
  return out;
}

BatteryResult falsification_battery(const StateE& z, const DomainSpec& domain, const SimConfig& cfg,
                                    const ClassifierOptions& options) {
  const SpectralGrid& g = *z.grid();
  const std::vector<PositionPeak> peaks = position_peaks(z, domain, options.flat_tolerance);
  BatteryResult out;
  double worst = -kInf;
  for (const PositionPeak& p : peaks) worst = std::max(worst, p.pairing);
  if (peaks.empty() || !(worst < -options.pairing_tolerance)) {
    throw Error(ErrorCode::kPrecondition, "battery needs inward velocity at every maximizer");
  }
  out.gamma = -worst;

  // t0: largest sampled t with |q(t) - x*| <= R - gamma t / 2 along the free flow.
  SimConfig c = cfg;
  c.epsilon = 0.0;
  const Stepper fine(SimConfig{[&] {
    SimConfig f = c;
    f.dt = cfg.step() / std::max(options.substeps, 1);
    return f;
  }()});
  const double radius = domain.radius();
  StateE w = z;
  double t = 0.0;
  const int max_steps = static_cast<int>(std::ceil(radius / out.gamma * 4.0 / fine.dt())) + 1;
  for (int i = 0; i < max_steps; ++i) {
    w = fine.step_deterministic(w);
    const double tt = t + fine.dt();
    if (domain.position_part(w) > radius - 0.5 * out.gamma * tt) break;
    t = tt;
  }
  out.t0 = t;
  if (!(out.t0 > 0.0)) {
    throw Error(ErrorCode::kConstructionFailed, "no admissible window for the falsification battery");
  }
  const double alpha = cfg.alpha;
  const double sigma_sup = cfg.noise.is_constant() ? std::abs(cfg.noise.constant_value()) : cfg.noise.sup_bound();
  const double cbound = sigma_sup * std::exp(alpha * out.t0 / 2.0 + alpha * alpha * out.t0 * out.t0 / 8.0);
  out.energy_threshold = 0.5 * std::pow(out.gamma / (4.0 * cbound), 2);

  const int steps = fine_steps(out.t0, cfg, options.substeps);
  const double dt = out.t0 / steps;
  const SkeletonProblem problem(cfg, out.t0, steps, 1);
  out.trials = options.battery_trials;
  out.max_level = -kInf;
  std::mt19937_64 rng(options.seed ^ 0xba77e5ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < options.battery_trials; ++trial) {
    ControlPath u(z.grid(), steps, dt);
    for (Eigen::Index i = 0; i < u.coefficients.size(); ++i) u.coefficients.data()[i] = normal(rng);
    u.coefficients *= std::sqrt(0.99 * out.energy_threshold / u.energy());
    u.refresh();
    const std::vector<StateE> nodes = problem.forward(z, u);
    double lv = -kInf;
    for (std::size_t i = 1; i < nodes.size(); ++i) lv = std::max(lv, domain.level(nodes[i]));
    out.max_level = std::max(out.max_level, lv);
    if (lv <= 0.0) ++out.survived;
  }
  (void)g;
  return out;
}

EscapeControl construct_escape_control(const StateE& z, Verdict kind, double energy_budget,
                                       const DomainSpec& domain, const SimConfig& cfg,
                                       const ClassifierOptions& options) {
  if (!(energy_budget > 0.0)) throw Error(ErrorCode::kInvalidArgument, "energy budget must be positive");
  if (std::abs(domain.level(z)) > 1e-9) throw Error(ErrorCode::kPrecondition, "state is not on the boundary");
  if (kind != Verdict::kRegularPerp && kind != Verdict::kRegularFlat) {
    throw Error(ErrorCode::kInvalidArgument, "escape controls exist for perp and flat points");
  }
  const SpectralGrid& g = *z.grid();
  const double l = g.length();
  const double alpha = cfg.alpha;
  SimConfig c = cfg;
  c.epsilon = 0.0;
  const Stepper base(c);
  const PolynomialDrift& drift = base.drift();
  const Vec ones = g.to_coefficients(Vec::Ones(g.modes()));
  const Vec& a = g.eigenvalues();
  const double cs = options.c_sigma;
  const std::vector<PositionPeak> peaks = position_peaks(z, domain, options.flat_tolerance);
  if (peaks.empty()) throw Error(ErrorCode::kPrecondition, "no position maximizer");

  EscapeControl out;
  Vec forcing;  // constant part of the closed-loop forcing
  double t_cap = kInf;
  int sgn = 1;
  if (kind == Verdict::kRegularPerp) {
    const PositionPeak* p0 = nullptr;
    for (const PositionPeak& p : peaks) {
      if (std::abs(p.pairing) <= options.pairing_tolerance) p0 = &p;
    }
    if (!p0) throw Error(ErrorCode::kPrecondition, "no maximizer with vanishing velocity");
    sgn = p0->maximizer.sign;
    const double acc = options.acceleration * sgn;
    forcing = acc * ones;
    // C' = C_sigma^-2 (rho^2 l + sup |alpha psi_t - psi_xx - b(psi)|^2 l) along
    // psi = x + v t + rho t^2 / 2 on [0, T]; any T >= t is admissible, so take
    // the fixed point t(T) = T, bracketed in log scale.
    auto rate_on = [&](double span) {
      double sup_f = 0.0;
      for (int i = 0; i <= 200; ++i) {
        const double t = span * i / 200.0;
        const Vec psi = z.u() + z.v() * t + ones * (0.5 * acc * t * t);
        const Vec psi_t = z.v() + ones * (acc * t);
        const Vec f = alpha * psi_t + a.cwiseProduct(psi) - projected_drift(base, psi);
        sup_f = std::max(sup_f, g.quad_values(f).cwiseAbs().maxCoeff());
      }
      return (acc * acc * l + sup_f * sup_f * l) / (cs * cs);
    };
    double lo = 0.0;
    double hi = 1.0;
    while (0.5 * energy_budget / rate_on(hi) > hi) hi *= 2.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = lo > 0.0 ? std::sqrt(lo * hi) : 0.5 * hi;
      if (0.5 * energy_budget / rate_on(mid) <= mid) {
        hi = mid;
      } else {
        lo = mid;
      }
      if (lo > 0.0 && hi / lo < 1.0 + 1e-6) break;
    }
    out.rate = rate_on(hi);
    out.horizon = 0.5 * energy_budget / out.rate;
  } else {
    if (domain.velocity_part(z) > options.flat_tolerance * std::max(1.0, domain.radius())) {
      throw Error(ErrorCode::kPrecondition, "flat construction needs zero velocity");
    }
    const PositionPeak* p0 = nullptr;
    for (const PositionPeak& p : peaks) {
      if (p.maximizer.upper > p.maximizer.lower) p0 = &p;
    }
    if (!p0) throw Error(ErrorCode::kPrecondition, "no flat maximizer run");
    sgn = p0->maximizer.sign;
    const double xi0 = p0->maximizer.location;
    const double t0 = std::min({xi0 - p0->maximizer.lower, p0->maximizer.upper - xi0, xi0, l - xi0});
    double min_curv = kInf;
    for (int i = 0; i <= 200; ++i) {
      const double y = xi0 - t0 + 2.0 * t0 * i / 200.0;
      min_curv = std::min(min_curv, sgn * series_second_derivative(g, z.u(), y));
    }
    const double vmag = options.eta - 2.0 * min_curv;
    forcing = (sgn * vmag) * ones;
    // |b|_inf over the positions reached on [0, t0].
    const double zeta = sup_norm(g, z.u()) + std::abs(vmag) * t0 * t0 + 1e-12;
    const double bsup = sup_abs_drift(drift, zeta);
    out.rate = 0.5 * std::pow((std::abs(vmag) + bsup) / cs, 2) * l;
    out.horizon = 0.5 * std::min(t0, energy_budget / out.rate);
    t_cap = t0;
  }
  if (!(out.horizon > 0.0)) throw Error(ErrorCode::kConstructionFailed, "escape horizon is zero");
  (void)t_cap;

  const int steps = fine_steps(out.horizon, cfg, options.substeps);
  const SkeletonProblem problem(cfg, out.horizon, steps, 1);
  const Stepper& stepper = problem.stepper();
  out.control = problem.zero_control();
  StateE w = z;
  double min_level = kInf;
  for (int i = 0; i < steps; ++i) {
    Vec rhs = forcing - projected_drift(stepper, w.u());
    if (kind == Verdict::kRegularPerp) rhs += alpha * w.v() + a.cwiseProduct(w.u());
    const Vec h = divide_sigma(stepper, w.u(), rhs);
    out.control.coefficients.col(i) = h;
    w = stepper.step_skeleton(w, h);
    min_level = std::min(min_level, domain.level(w));
  }
  out.control.refresh();
  out.energy = out.control.cached_energy;
  out.bound = out.rate * out.horizon;
  out.min_excess = min_level;
  out.exited = min_level > 0.0;
  if (!out.exited || !(out.energy < energy_budget)) {
    throw Error(ErrorCode::kConstructionFailed,
                std::string(verdict_name(kind)) + " witness failed: min level " + std::to_string(min_level) +
                    ", energy " + std::to_string(out.energy) + " vs budget " + std::to_string(energy_budget));
  }
  return out;
}

BoundaryClassification classify_boundary_point(const StateE& z, const DomainSpec& domain,
                                               const SimConfig& cfg,
                                               const ClassifierOptions& options) {
  if (std::abs(domain.level(z)) > 1e-9) {
    throw Error(ErrorCode::kPrecondition, "state is not on the boundary of D");
  }
  BoundaryClassification out;
  const SpectralGrid& g = *z.grid();
  auto attempt = [&](Verdict v, auto&& build) {
    try {
      out.witness = build();
      out.has_witness = true;
      out.witness_energy = out.witness.energy;
      if (!out.witness.exited) {
        out.verdict = Verdict::kUnknown;
        out.notes = std::string("witness replay for ") + verdict_name(v) + " did not exit";
        return;
      }
      out.verdict = v;
    } catch (const Error& e) {
      out.verdict = Verdict::kUnknown;
      out.notes = std::string("witness for ") + verdict_name(v) + " failed: " + e.what();
    }
  };
  switch (domain.kind()) {
    case DomainKind::kCylinder: {
      if (domain.binding(z) != Binding::kPosition) {
        out.notes = "velocity constraint binds";
        return out;
      }
      const std::vector<PositionPeak> peaks = position_peaks(z, domain, options.flat_tolerance);
      double hi = -kInf;
      double lo = kInf;
      for (const PositionPeak& p : peaks) {
        hi = std::max(hi, p.pairing);
        lo = std::min(lo, std::abs(p.pairing));
      }
      out.pairing = hi;
      if (hi > options.pairing_tolerance) {
        attempt(Verdict::kRegularOut, [&] { return outward_exit(z, domain, cfg, options); });
      } else if (hi < -options.pairing_tolerance) {
        out.battery = falsification_battery(z, domain, cfg, options);
        out.verdict = out.battery.survived == out.battery.trials ? Verdict::kIrregularIn : Verdict::kUnknown;
        if (out.verdict == Verdict::kUnknown) out.notes = "a small control exited before t0";
      } else if (lo <= options.pairing_tolerance) {
        attempt(Verdict::kRegularPerp, [&] {
          return construct_escape_control(z, Verdict::kRegularPerp, options.energy_budget, domain, cfg, options);
        });
      }
      return out;
    }
    case DomainKind::kBallE: {
      const bool still = domain.velocity_part(z) <= options.flat_tolerance * std::max(1.0, domain.radius());
      bool flat = false;
      for (const PositionPeak& p : position_peaks(z, domain, options.flat_tolerance)) {
        flat = flat || p.maximizer.upper > p.maximizer.lower;
      }
      if (still && flat) {
        attempt(Verdict::kRegularFlat, [&] {
          return construct_escape_control(z, Verdict::kRegularFlat, options.energy_budget, domain, cfg, options);
        });
      } else {
        out.notes = still ? "maximizer is not flat" : "nonzero velocity";
      }
      (void)g;
      return out;
    }
    case DomainKind::kOrbitUnion:
      out.notes = "no construction for orbit unions";
      return out;
  }
  return out;
}

StateE bump_boundary_point(const DomainSpec& domain, int peak_index, double v_peak, bool flat,
                           int plateau_halfwidth) {
  const StateE& c = domain.center();
  const GridPtr& gp = c.grid();
  const SpectralGrid& g = *gp;
  const int n = g.modes();
  if (peak_index < 0 || peak_index >= n) throw Error(ErrorCode::kInvalidArgument, "peak index out of range");
  if (domain.kind() == DomainKind::kOrbitUnion) {
    throw Error(ErrorCode::kInvalidArgument, "bump points are built for cylinders and balls");
  }
  const double l = g.length();
  const double xi0 = g.points()[peak_index];
  const double width = l / 6.0;
  Vec pos(n);
  Vec vel(n);
  for (int j = 0; j < n; ++j) {
    const double x = g.points()[j];
    double d = std::abs(j - peak_index) <= (flat ? plateau_halfwidth : 0) ? 0.0 : std::abs(x - xi0);
    if (flat && d > 0.0) d -= plateau_halfwidth * g.spacing();
    pos[j] = std::exp(-std::pow(d / width, flat ? 4 : 2));
    if (flat) {
      vel[j] = 0.0;
    } else if (v_peak != 0.0) {
      vel[j] = v_peak * std::sin(M_PI * x / l) / std::sin(M_PI * xi0 / l);
    } else {
      vel[j] = 0.3 * std::sin(M_PI * x / l) * std::sin(2.0 * M_PI * (x - xi0) / l);
    }
  }
  StateE z(gp, c.u() + domain.radius() * g.to_coefficients(pos), c.v() + g.to_coefficients(vel));
  if (domain.kind() == DomainKind::kCylinder && !(domain.velocity_part(z) < domain.velocity_radius())) {
    throw Error(ErrorCode::kInvalidArgument, "bump velocity leaves the cylinder");
  }
  if (domain.kind() == DomainKind::kBallE && !flat) {
    throw Error(ErrorCode::kInvalidArgument, "ball boundary points are built with zero velocity");
  }
  return z;
}

std::vector<RateSample> stratified_boundary_sample(const DomainSpec& domain,
                                                   const PolynomialDrift& drift, int count) {
  if (domain.kind() == DomainKind::kOrbitUnion) {
    throw Error(ErrorCode::kInvalidArgument, "stratified boundary samples need a cylinder or ball");
  }
  if (count < 4 || count % 4 != 0) throw Error(ErrorCode::kInvalidArgument, "sample count must be a multiple of 4");
  const StateE& c = domain.center();
  const SpectralGrid& g = *c.grid();
  const int per = count / 4;  // locations per (binding, sign)
  const double vr = domain.kind() == DomainKind::kCylinder ? domain.velocity_radius() : domain.radius();
  const int refined = static_cast<int>(g.refined_points().size());
  std::vector<RateSample> out;
  for (int sign : {1, -1}) {
    for (int i = 0; i < per; ++i) {
      const int j = static_cast<int>(std::lround((i + 1.0) * (g.modes() - 1) / (per + 1.0)));
      RateSample s;
      s.point = pinned_position_minimizer(c, drift, j, sign, domain.radius());
      s.binding = Binding::kPosition;
      s.location = g.points()[j];
      s.sign = sign;
      out.push_back(s);
    }
    for (int i = 0; i < per; ++i) {
      const int r = static_cast<int>(std::lround((i + 1.0) * (refined - 1) / per));
      RateSample s;
      s.point = pinned_velocity_minimizer(c, r, sign, vr);
      s.binding = Binding::kVelocity;
      s.location = g.refined_points()[r];
      s.sign = sign;
      out.push_back(s);
    }
  }
  return out;
}

RateTable exit_rate_functions(const DomainSpec& domain, const SimConfig& cfg,
                              const QuasipotentialOptions& options, int count) {
  const StateE& zstar = domain.center();
  const PolynomialDrift drift = cfg.drift.with_cutoff(cfg.cutoff);
  RateTable table;
  QuasipotentialTarget boundary;
  boundary.kind = TargetKind::kBoundary;
  boundary.domain = &domain;
  table.v_boundary = minimize_quasipotential(zstar, boundary, ConstraintMode::kFree, cfg, options).value;
  QuasipotentialTarget exterior = boundary;
  exterior.kind = TargetKind::kExterior;
  table.v_exterior = minimize_quasipotential(zstar, exterior, ConstraintMode::kFree, cfg, options).value;
  table.samples = stratified_boundary_sample(domain, drift, count);
  QuasipotentialOptions inner = options;
  inner.workers = 1;
  parallel_for(table.samples.size(), options.workers, [&](std::size_t i) {
    RateSample& s = table.samples[i];
    QuasipotentialTarget t;
    t.kind = TargetKind::kPoint;
    t.point = s.point;
    t.domain = &domain;
    const QuasipotentialResult closure = minimize_quasipotential(zstar, t, ConstraintMode::kStayInClosure, cfg, inner);
    const QuasipotentialResult open = minimize_quasipotential(zstar, t, ConstraintMode::kStayInD, cfg, inner);
    s.v_closure = closure.value;
    s.v_open = open.value;
    s.feasible = closure.feasible && open.feasible;
    s.j1 = s.v_closure - table.v_exterior;
    s.j2 = s.v_open - table.v_boundary;
  });
  table.min_j1 = kInf;
  table.min_j2 = kInf;
  table.min_gap = kInf;
  for (const RateSample& s : table.samples) {
    table.min_j1 = std::min(table.min_j1, s.j1);
    table.min_j2 = std::min(table.min_j2, s.j2);
    table.min_gap = std::min(table.min_gap, s.j2 - s.j1);
  }
  return table;
}

}  // namespace wavemeta
