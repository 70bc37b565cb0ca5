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

#include "wavemeta/dynamics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include <boost/math/quadrature/gauss.hpp>

#include "wavemeta/error.hpp"
#include "wavemeta/parallel.hpp"
#include "wavemeta/semigroup.hpp"

namespace wavemeta {

namespace {

constexpr int kMaxRecordedChain = 64;

// h * int_0^1 f(h s) ds on composite Gauss-Legendre panels.
template <class F>
double integrate_signed(F f, double h, int panels) {
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double a = static_cast<double>(p) / panels;
    const double b = static_cast<double>(p + 1) / panels;
    total += boost::math::quadrature::gauss<double, 20>::integrate(
        [&](double s) { return f(h * s); }, a, b);
  }
  return h * total;
}

}  // namespace

double SimConfig::default_dt(const SpectralGrid& grid) {
  return 0.1 / std::sqrt(grid.eigenvalue(grid.modes()));
}

double SimConfig::step() const { return dt > 0.0 ? dt : default_dt(*grid); }

void SimConfig::validate() const {
  if (!grid) throw Error(ErrorCode::kInvalidArgument, "simulation config has no grid");
  if (!(alpha >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must be nonnegative");
  if (dt < 0.0 || !std::isfinite(dt)) throw Error(ErrorCode::kInvalidArgument, "dt must be positive");
  if (!(epsilon >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "epsilon must be nonnegative");
  if (!(cutoff >= 1.0)) throw Error(ErrorCode::kInvalidArgument, "cutoff n_D must be at least 1");
  if (!(horizon >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "horizon must be nonnegative");
}

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t path_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(path_index),
                    static_cast<std::uint32_t>(path_index >> 32), 0x5741u};
  engine_.seed(seq);
}

Vec RngStream::normals(int n, double scale) {
  Vec out(n);
  for (int i = 0; i < n; ++i) out[i] = scale * normal();
  return out;
}

Stepper::Stepper(SimConfig cfg, bool backward) : cfg_(std::move(cfg)), backward_(backward) {
  cfg_.validate();
  dt_ = cfg_.step();
  drift_ = cfg_.drift.with_cutoff(cfg_.cutoff);
  noise_ = cfg_.noise.with_cutoff(cfg_.cutoff);
  shift_ = drift_.linear_coefficient();
  plans_.reserve(kLevels);
  for (int level = 0; level < kLevels; ++level) {
    const double h = dt_ / (1 << level);
    plans_.push_back(build_plan(backward_ ? -h : h));
  }
}

std::vector<Stepper::ModeStep> Stepper::build_plan(double h) const {
  const SpectralGrid& g = grid();
  const double alpha = cfg_.alpha;
  std::vector<ModeStep> plan(g.modes());
  for (int k = 1; k <= g.modes(); ++k) {
    const double a = g.eigenvalue(k) - shift_;
    const double rate = std::sqrt(std::abs(a)) + alpha;
    const int panels = std::max(1, static_cast<int>(std::ceil(std::abs(h) * rate / 2.0)));
    auto prop = [&](double tau) { return stiffness_propagator(a, alpha, tau); };
    ModeStep m{};
    const ModePropagator p = prop(h);
    m.p11 = p.m11;
    m.p12 = p.m12;
    m.p21 = p.m21;
    m.p22 = p.m22;
    m.w1u = integrate_signed([&](double tau) { return prop(tau).m12; }, h, panels);
    m.w1v = integrate_signed([&](double tau) { return prop(tau).m22; }, h, panels);
    m.w2u = integrate_signed([&](double tau) { return prop(tau).m12 * (h - tau) / h; }, h, panels);
    m.w2v = integrate_signed([&](double tau) { return prop(tau).m22 * (h - tau) / h; }, h, panels);
    const ModePropagator q = prop(0.5 * h);
    m.q11 = q.m11;
    m.q12 = q.m12;
    m.q21 = q.m21;
    m.q22 = q.m22;
    m.h1u = integrate_signed([&](double tau) { return prop(tau).m12; }, 0.5 * h, panels);
    m.h1v = integrate_signed([&](double tau) { return prop(tau).m22; }, 0.5 * h, panels);
    if (h > 0.0) {
      const double c11 = integrate_signed([&](double tau) { const double x = prop(tau).m12; return x * x; }, h, panels);
      const double c12 = integrate_signed([&](double tau) { const ModePropagator r = prop(tau); return r.m12 * r.m22; }, h, panels);
      const double c22 = integrate_signed([&](double tau) { const double x = prop(tau).m22; return x * x; }, h, panels);
      m.l11 = std::sqrt(std::max(c11, 0.0));
      m.l21 = m.l11 > 0.0 ? c12 / m.l11 : 0.0;
      m.l22 = std::sqrt(std::max(c22 - m.l21 * m.l21, 0.0));
    }
    plan[k - 1] = m;
  }
  return plan;
}

Vec Stepper::remainder_forcing(const Vec& u) const {
  const SpectralGrid& g = grid();
  const Vec values = g.quad_values(u);
  Vec r(values.size());
  for (Eigen::Index q = 0; q < values.size(); ++q) {
    r[q] = drift_.value(values[q]) - shift_ * values[q];
  }
  return g.quad_project(r);
}

Vec Stepper::sigma_product(const Vec& u, const Vec& field) const {
  if (noise_.is_constant()) return noise_.constant_value() * field;
  const SpectralGrid& g = grid();
  const Vec uq = g.quad_values(u);
  Vec fq = g.quad_values(field);
  for (Eigen::Index q = 0; q < fq.size(); ++q) fq[q] *= noise_.value(uq[q]);
  return g.quad_project(fq);
}

StateE Stepper::advance(const StateE& z, int level, const Vec* control, const Vec* increment) const {
  const std::vector<ModeStep>& plan = plans_.at(level);
  const int n = grid().modes();
  const std::vector<double>& c = drift_.coefficients();
  const bool has_remainder = drift_.degree() >= 2 || (!c.empty() && c[0] != 0.0);
  Vec f0 = has_remainder ? remainder_forcing(z.u()) : Vec::Zero(n);
  Vec ctrl = control ? sigma_product(z.u(), *control) : Vec::Zero(n);
  Vec noise_term;
  if (increment && cfg_.epsilon > 0.0) noise_term = cfg_.epsilon * sigma_product(z.u(), *increment);

  StateE out(z.grid());
  Vec& u1 = out.u();
  Vec& v1 = out.v();
  if (cfg_.scheme == Scheme::kExponentialMidpoint && has_remainder) {
    Vec mid_u(n);
    for (int k = 0; k < n; ++k) {
      const ModeStep& m = plan[k];
      mid_u[k] = m.q11 * z.u()[k] + m.q12 * z.v()[k] + m.h1u * f0[k];
    }
    const Vec f1 = remainder_forcing(mid_u);
    for (int k = 0; k < n; ++k) {
      const ModeStep& m = plan[k];
      const double a = f0[k];
      const double b = f1[k];
      u1[k] = m.p11 * z.u()[k] + m.p12 * z.v()[k] + (m.w1u - 2.0 * m.w2u) * a + 2.0 * m.w2u * b +
              m.w1u * ctrl[k];
      v1[k] = m.p21 * z.u()[k] + m.p22 * z.v()[k] + (m.w1v - 2.0 * m.w2v) * a + 2.0 * m.w2v * b +
              m.w1v * ctrl[k];
    }
  } else {
    for (int k = 0; k < n; ++k) {
      const ModeStep& m = plan[k];
      const double f = f0[k] + ctrl[k];
      u1[k] = m.p11 * z.u()[k] + m.p12 * z.v()[k] + m.w1u * f;
      v1[k] = m.p21 * z.u()[k] + m.p22 * z.v()[k] + m.w1v * f;
    }
  }
  if (noise_term.size() == n) {
    for (int k = 0; k < n; ++k) {
      u1[k] += plan[k].p12 * noise_term[k];
      v1[k] += plan[k].p22 * noise_term[k];
    }
  }
  if (!out.finite()) throw Error(ErrorCode::kNumericalBlowup, "non-finite state after step");
  return out;
}

StateE Stepper::step_deterministic(const StateE& z) const { return advance(z, 0, nullptr, nullptr); }

StateE Stepper::step_skeleton(const StateE& z, const Vec& control) const {
  grid().check_size(control, "step_skeleton control");
  return advance(z, 0, &control, nullptr);
}

StateE Stepper::step_stochastic(const StateE& z, const Vec& increment) const {
  grid().check_size(increment, "step_stochastic increment");
  return advance(z, 0, nullptr, &increment);
}

StateE Stepper::step_exact_linear(const StateE& z, const Vec& standard_normals) const {
  if (!noise_.is_constant() || !drift_.is_zero()) {
    throw Error(ErrorCode::kPrecondition, "exact linear step needs constant sigma and b = 0");
  }
  const int n = grid().modes();
  if (standard_normals.size() != 2 * n) throw Error(ErrorCode::kDimension, "exact step needs 2K normals");
  const std::vector<ModeStep>& plan = plans_[0];
  const double scale = cfg_.epsilon * noise_.constant_value();
  StateE out(z.grid());
  for (int k = 0; k < n; ++k) {
    const ModeStep& m = plan[k];
    const double x1 = standard_normals[2 * k];
    const double x2 = standard_normals[2 * k + 1];
    out.u()[k] = m.p11 * z.u()[k] + m.p12 * z.v()[k] + scale * m.l11 * x1;
    out.v()[k] = m.p21 * z.u()[k] + m.p22 * z.v()[k] + scale * (m.l21 * x1 + m.l22 * x2);
  }
  return out;
}

Vec sample_noise_increment(const Stepper& stepper, RngStream& rng) {
  return rng.normals(stepper.grid().modes(), std::sqrt(stepper.dt()));
}

double energy_functional(const StateE& z, const PolynomialDrift& drift) {
  const SpectralGrid& g = *z.grid();
  double kinetic = 0.5 * z.v().squaredNorm();
  double elastic = 0.5 * (g.eigenvalues().array() * z.u().array().square()).sum();
  const Vec values = g.quad_values(z.u());
  double potential = 0.0;
  for (Eigen::Index q = 0; q < values.size(); ++q) potential += drift.antiderivative(values[q]);
  return kinetic + elastic - g.quad_weight() * potential;
}

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::kExit: return "exit";
    case Termination::kExplosion: return "explosion";
    case Termination::kTimeout: return "timeout";
  }
  return "unknown";
}

namespace {

struct DonutTracker {
  DonutStats stats;
  bool seeking_small = true;
  int tau_count = 0;

  void observe(double t, double distance) {
    if (seeking_small && distance <= stats.rho) {
      ++stats.small_hits;
      if (tau_count >= 1) {
        ++stats.chain_small;
        ++stats.chain_total;
      }
      if (static_cast<int>(stats.tau.size()) < kMaxRecordedChain) stats.tau.push_back(t);
      ++tau_count;
      seeking_small = false;
    } else if (!seeking_small && distance >= stats.outer) {
      ++stats.outer_hits;
      if (static_cast<int>(stats.theta.size()) < kMaxRecordedChain) stats.theta.push_back(t);
      seeking_small = true;
    }
  }

  void exit(double t) {
    if (!seeking_small) {
      ++stats.outer_hits;
      if (static_cast<int>(stats.theta.size()) < kMaxRecordedChain) stats.theta.push_back(t);
      seeking_small = true;
    }
    ++stats.boundary_hits;
    if (tau_count >= 1) ++stats.chain_total;
    if (static_cast<int>(stats.tau.size()) < kMaxRecordedChain) stats.tau.push_back(t);
    ++tau_count;
  }
};

}  // namespace

PathResult simulate_path(const StateE& z0, const Stepper& stepper, const PathOptions& options) {
  const SimConfig& cfg = stepper.config();
  const SpectralGrid& g = stepper.grid();
  const double dt = stepper.dt();
  const bool noisy = options.noise && cfg.epsilon > 0.0;
  RngStream rng(cfg.seed, options.path_index);

  PathResult result;
  ExitRecord& rec = result.record;
  rec.seed = cfg.seed;
  rec.path_index = options.path_index;

  std::vector<DonutTracker> donuts;
  for (double rho : options.donut_radii) {
    DonutTracker d;
    d.stats.rho = rho;
    d.stats.outer = options.donut_outer_factor * rho;
    donuts.push_back(d);
  }
  auto distance_to_reference = [&](const StateE& z) {
    return options.reference ? e_distance(z, *options.reference) : e_norm(z);
  };
  auto record_row = [&](double t, const StateE& z) {
    const double su = sup_norm(g, z.u());
    const double cv = cminus_norm(g, z.v());
    result.rows.push_back({t, su, cv, su + cv, energy_functional(z, stepper.drift())});
    if (options.store_states) {
      result.states.push_back(z);
      result.state_times.push_back(t);
    }
  };

  StateE z = z0;
  double t = 0.0;
  double sup0 = sup_norm(g, z.u());
  rec.max_sup_norm = sup0;
  if (options.record_every > 0) record_row(0.0, z);
  if (sup0 > cfg.cutoff) {
    rec.termination = Termination::kExplosion;
    rec.crossed_cutoff = true;
    rec.tau = 0.0;
    rec.state = z;
    return result;
  }
  if (options.domain && !options.domain->contains(z)) {
    rec.termination = Termination::kExit;
    rec.tau = 0.0;
    rec.state = z;
    for (DonutTracker& d : donuts) d.exit(0.0);
    for (DonutTracker& d : donuts) rec.donut.push_back(d.stats);
    return result;
  }
  if (!donuts.empty()) {
    const double d0 = distance_to_reference(z);
    for (DonutTracker& d : donuts) d.observe(0.0, d0);
  }

  const long long steps = static_cast<long long>(std::ceil(cfg.horizon / dt - 1e-9));
  rec.termination = Termination::kTimeout;
  for (long long n = 0; n < steps; ++n) {
    Vec increment;
    if (noisy) increment = sample_noise_increment(stepper, rng);
    StateE z1(z.grid());
    try {
      z1 = stepper.advance(z, 0, nullptr, noisy ? &increment : nullptr);
    } catch (const Error&) {
      rec.termination = Termination::kExplosion;
      rec.crossed_cutoff = true;
      rec.tau = t + dt;
      rec.state = z;
      break;
    }
    const double t1 = static_cast<double>(n + 1) * dt;
    if (options.domain && !options.domain->contains(z1)) {
      StateE left = z;
      double t_left = t;
      StateE right = z1;
      double t_right = t1;
      Vec incr = increment;
      for (int level = 1; level <= options.bisection_levels && level < Stepper::kLevels; ++level) {
        const double h_parent = dt / (1 << (level - 1));
        Vec first;
        Vec second;
        if (noisy) {
          first = 0.5 * incr + rng.normals(g.modes(), std::sqrt(0.25 * h_parent));
          second = incr - first;
        }
        StateE mid = stepper.advance(left, level, nullptr, noisy ? &first : nullptr);
        const double t_mid = t_left + dt / (1 << level);
        if (!options.domain->contains(mid)) {
          right = mid;
          t_right = t_mid;
          incr = first;
        } else {
          left = mid;
          t_left = t_mid;
          incr = second;
        }
      }
      rec.termination = Termination::kExit;
      rec.tau = t_right;
      rec.state = right;
      const double su = sup_norm(g, right.u());
      rec.max_sup_norm = std::max(rec.max_sup_norm, su);
      if (su > cfg.cutoff) rec.crossed_cutoff = true;
      for (DonutTracker& d : donuts) d.exit(t_right);
      if (options.record_every > 0) record_row(t_right, right);
      break;
    }
    const double su = sup_norm(g, z1.u());
    rec.max_sup_norm = std::max(rec.max_sup_norm, su);
    if (su > cfg.cutoff) {
      rec.termination = Termination::kExplosion;
      rec.crossed_cutoff = true;
      rec.tau = t1;
      rec.state = z1;
      if (options.record_every > 0) record_row(t1, z1);
      break;
    }
    if (!donuts.empty()) {
      const double d1 = distance_to_reference(z1);
      for (DonutTracker& d : donuts) d.observe(t1, d1);
    }
    z = std::move(z1);
    t = t1;
    if (options.record_every > 0 && ((n + 1) % options.record_every == 0 || n + 1 == steps)) {
      record_row(t, z);
    }
  }
  if (rec.termination == Termination::kTimeout) {
    rec.tau = t;
    rec.state = z;
  }
  for (DonutTracker& d : donuts) rec.donut.push_back(d.stats);
  return result;
}

MomentEstimate stochastic_convolution_moment_probe(
    const std::function<double(double, double)>& psi, const SimConfig& cfg, int n_mc,
    std::uint64_t seed, int workers) {
  if (n_mc < 1) throw Error(ErrorCode::kInvalidArgument, "moment probe needs n_mc >= 1");
  SimConfig lin = cfg;
  lin.drift = PolynomialDrift({0.0});
  lin.noise = NoiseCoefficient::constant(1.0);
  lin.epsilon = 1.0;
  lin.scheme = Scheme::kExponentialEuler;
  const Stepper stepper(lin);
  const SpectralGrid& g = stepper.grid();
  const double dt = stepper.dt();
  const long long steps = static_cast<long long>(std::ceil(cfg.horizon / dt - 1e-9));
  const Mat& eq = g.quad_synthesis();
  const int nq = static_cast<int>(eq.rows());

  std::vector<double> sups(n_mc, 0.0);
  parallel_for(static_cast<std::size_t>(n_mc), workers, [&](std::size_t i) {
    RngStream rng(seed, i);
    StateE gamma(lin.grid);
    Vec field(nq);
    double best = 0.0;
    for (long long n = 0; n < steps; ++n) {
      const double t = static_cast<double>(n) * dt;
      const Vec dw = rng.normals(g.modes(), std::sqrt(dt));
      Vec wq = eq * dw;
      for (int q = 0; q < nq; ++q) wq[q] *= psi(t, (q + 1) * g.quad_weight());
      const Vec forcing = g.quad_project(wq);
      gamma = stepper.advance(gamma, 0, nullptr, &forcing);
      const double e = e_norm(gamma);
      best = std::max(best, e * e);
    }
    sups[i] = best;
  });
  MomentEstimate out;
  out.samples = n_mc;
  double s = 0.0;
  for (double x : sups) s += x;
  out.mean = s / n_mc;
  double ss = 0.0;
  for (double x : sups) ss += (x - out.mean) * (x - out.mean);
  out.standard_error = n_mc > 1 ? std::sqrt(ss / (n_mc - 1) / n_mc) : 0.0;
  return out;
}

namespace {

template <class T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw Error(ErrorCode::kIo, "truncated state snapshot");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void write_state_snapshot(std::ostream& out, const StateE& z, std::uint16_t flags) {
  out.put('W');
  out.put('M');
  put_le<std::uint16_t>(out, flags);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(z.modes()));
  put_le<double>(out, z.grid()->length());
  for (int k = 0; k < z.modes(); ++k) put_le<double>(out, z.u()[k]);
  for (int k = 0; k < z.modes(); ++k) put_le<double>(out, z.v()[k]);
  if (!out) throw Error(ErrorCode::kIo, "failed to write state snapshot");
}

StateE read_state_snapshot(std::istream& in, std::uint16_t* flags) {
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'W' || magic[1] != 'M') throw Error(ErrorCode::kIo, "bad snapshot magic");
  const auto f = get_le<std::uint16_t>(in);
  const auto k = get_le<std::uint32_t>(in);
  const auto l = get_le<double>(in);
  if (flags) *flags = f;
  GridPtr grid = make_grid(l, static_cast<int>(k));
  StateE z(grid);
  for (std::uint32_t i = 0; i < k; ++i) z.u()[i] = get_le<double>(in);
  for (std::uint32_t i = 0; i < k; ++i) z.v()[i] = get_le<double>(in);
  return z;
}

}  // namespace wavemeta
