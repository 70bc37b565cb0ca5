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

#include "wavemeta/stability.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "wavemeta/domain.hpp"
#include "wavemeta/error.hpp"
#include "wavemeta/parallel.hpp"

namespace wavemeta {

Vec equilibrium_residual(const SpectralGrid& grid, const PolynomialDrift& drift, const Vec& u) {
  grid.check_size(u, "equilibrium_residual");
  Vec values = grid.quad_values(u);
  for (Eigen::Index q = 0; q < values.size(); ++q) values[q] = drift.value(values[q]);
  return grid.eigenvalues().cwiseProduct(u) - grid.quad_project(values);
}

EquilibriumResult solve_equilibrium(const GridPtr& grid, const PolynomialDrift& drift,
                                    const Vec& initial_guess, int max_iterations,
                                    double tolerance) {
  const SpectralGrid& g = *grid;
  g.check_size(initial_guess, "solve_equilibrium guess");
  const Mat& q = g.quad_synthesis();
  Vec u = initial_guess;
  Vec f = equilibrium_residual(g, drift, u);
  double res = f.norm();
  int it = 0;
  while (res >= tolerance && it < max_iterations) {
    ++it;
    const Vec values = q * u;
    Vec slope(values.size());
    for (Eigen::Index i = 0; i < values.size(); ++i) slope[i] = drift.derivative(values[i]);
    Mat jac = -g.quad_weight() * (q.transpose() * slope.asDiagonal() * q);
    jac.diagonal() += g.eigenvalues();
    const Vec step = jac.fullPivLu().solve(f);
    double lambda = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      const Vec trial = u - lambda * step;
      const Vec ft = equilibrium_residual(g, drift, trial);
      if (ft.allFinite() && ft.norm() < res) {
        u = trial;
        f = ft;
        res = ft.norm();
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) break;
  }
  if (!(res < tolerance)) {
    throw Error(ErrorCode::kConvergence,
                "equilibrium Newton did not converge, last residual " + std::to_string(res));
  }
  EquilibriumResult out;
  out.xstar = u;
  out.residual = res;
  out.iterations = it;
  out.spectrum = assemble_linearized_operator(g, u, drift);
  out.stable = out.spectrum.lowest > 0.0;
  return out;
}

double attraction_rate(double alpha, double gap) {
  return std::min(alpha / 8.0, gap / (4.0 * alpha));
}

std::vector<double> AttractionCertificate::partial_sums(double rho) const {
  std::vector<double> out;
  double s = 0.0;
  double p = 1.0;
  for (double a : a_head) {
    p *= rho;
    s += a * p;
    out.push_back(s);
  }
  return out;
}

AttractionCertificate attraction_radius(const SpectralGrid& grid, const PolynomialDrift& drift,
                                        const Vec& xstar, double a1, double theta, int n_terms) {
  if (!(a1 > 0.0) || n_terms < 1) throw Error(ErrorCode::kInvalidArgument, "attraction radius needs A_1 > 0");
  grid.check_size(xstar, "attraction_radius");
  AttractionCertificate cert;
  cert.a1 = a1;
  cert.theta = theta;
  const int gamma = drift.degree();
  Vec samples = grid.quad_values(xstar);
  auto sup_derivative = [&](int k) {
    double m = std::abs(drift.polynomial_derivative(0.0, k));
    for (Eigen::Index i = 0; i < samples.size(); ++i) {
      m = std::max(m, std::abs(drift.polynomial_derivative(samples[i], k)));
    }
    return m;
  };
  double factorial = 1.0;
  for (int k = 2; k <= gamma; ++k) {
    factorial = 1.0;
    for (int i = 2; i <= k; ++i) factorial *= i;
    cert.r.push_back(sup_derivative(k) / (factorial * (k - 1)));
  }
  const double l = grid.length();

  // powers[k][n] = coefficient of zeta^n in F^k, k = 1..gamma.
  std::vector<std::vector<double>> powers(std::max(gamma, 1) + 1, std::vector<double>(n_terms + 1, 0.0));
  std::vector<double> a(n_terms + 1, 0.0);
  a[1] = a1;
  powers[1][1] = a1;
  for (int n = 2; n <= n_terms; ++n) {
    double total = 0.0;
    for (int k = 2; k <= gamma; ++k) {
      double c = 0.0;
      for (int i = 1; i <= n - 1; ++i) c += a[i] * powers[k - 1][n - i];
      powers[k][n] = c;
      total += cert.r[k - 2] * c;
    }
    a[n] = l * a1 * total;
    powers[1][n] = a[n];
  }
  cert.a_head.assign(a.begin() + 1, a.end());

  bool nonlinear = false;
  for (double rk : cert.r) nonlinear = nonlinear || rk > 0.0;
  if (nonlinear) {
    auto dinv = [&](double zeta) {
      double s = 1.0 / a1;
      for (int k = 2; k <= gamma; ++k) s -= l * k * cert.r[k - 2] * std::pow(zeta, k - 1);
      return s;
    };
    double hi = 1.0;
    while (dinv(hi) > 0.0) hi *= 2.0;
    double lo = 0.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
      const double mid = 0.5 * (lo + hi);
      (dinv(mid) > 0.0 ? lo : hi) = mid;
    }
    cert.rho0 = 0.5 * (lo + hi);
    double finv = cert.rho0 / a1;
    for (int k = 2; k <= gamma; ++k) finv -= l * cert.r[k - 2] * std::pow(cert.rho0, k);
    cert.series_radius = finv;
  }
  if (gamma == 3) {
    const double b2 = sup_derivative(2);
    const double b3 = sup_derivative(3);
    cert.rho_example = 2.0 * (b2 + std::sqrt(b2 * b2 + b3 / (a1 * l))) / b3;
  }
  return cert;
}

double linearized_prefactor(const GridPtr& grid, double alpha, const LinearizedSpectrum& spectrum,
                            double theta, double horizon, int n_samples, std::uint64_t seed) {
  const DecayEstimate est = measure_decay_rate(grid, alpha, horizon, n_samples, seed, &spectrum);
  double m = 1.0;
  for (std::size_t i = 0; i < est.times.size(); ++i) {
    m = std::max(m, est.envelope[i] * std::exp(theta * est.times[i]));
  }
  return m;
}

AttractionReport verify_uniform_attraction(const DomainSpec& domain, int n_samples,
                                           const SimConfig& cfg, double theta, double horizon,
                                           int workers) {
  if (n_samples < 1 || !(horizon > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "attraction check needs samples and a horizon");
  }
  SimConfig flow = cfg;
  flow.epsilon = 0.0;
  flow.horizon = horizon;
  const Stepper stepper(flow);
  std::mt19937_64 rng(cfg.seed);
  std::vector<StateE> starts;
  for (int i = 0; i < n_samples; ++i) starts.push_back(domain.sample(rng, 1.0));
  const StateE& center = domain.center();

  AttractionReport report;
  report.theta = theta;
  report.horizon = horizon;
  report.samples.resize(n_samples);
  std::vector<double> constants(n_samples, 0.0);
  const long long steps = static_cast<long long>(std::ceil(horizon / stepper.dt() - 1e-9));
  parallel_for(static_cast<std::size_t>(n_samples), workers, [&](std::size_t i) {
    AttractionSample s;
    StateE z = starts[i];
    s.initial_distance = e_distance(z, center);
    double early = s.initial_distance;
    double late = 0.0;
    double constant = s.initial_distance > 0.0 ? 1.0 : 0.0;
    double d = s.initial_distance;
    for (long long n = 1; n <= steps; ++n) {
      z = stepper.step_deterministic(z);
      const double t = n * stepper.dt();
      d = e_distance(z, center);
      const double env = d * std::exp(theta * t);
      if (t <= 0.5 * horizon) {
        early = std::max(early, env);
      } else {
        late = std::max(late, env);
      }
      if (s.initial_distance > 0.0) constant = std::max(constant, env / s.initial_distance);
    }
    s.final_distance = d;
    if (s.initial_distance <= 0.0) {
      s.margin = 0.0;
      s.decays = d <= 0.0;
    } else {
      s.margin = late > 0.0 ? std::log(early / late) : std::numeric_limits<double>::infinity();
      s.decays = s.margin >= 0.0 && d < s.initial_distance;
    }
    report.samples[i] = s;
    constants[i] = constant;
  });
  report.pass = true;
  report.worst_margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_samples; ++i) {
    report.pass = report.pass && report.samples[i].decays;
    if (report.samples[i].initial_distance > 0.0) {
      report.worst_margin = std::min(report.worst_margin, report.samples[i].margin);
    }
    report.empirical_constant = std::max(report.empirical_constant, constants[i]);
  }
  if (!std::isfinite(report.worst_margin)) report.worst_margin = 0.0;
  return report;
}

OrbitMembership orbit_domain_membership(const StateE& z, const StateE& center, double radius,
                                        const Stepper& backward, double horizon,
                                        double escape_factor) {
  if (!backward.backward()) throw Error(ErrorCode::kPrecondition, "orbit membership needs a backward stepper");
  if (!(radius > 0.0)) throw Error(ErrorCode::kInvalidArgument, "orbit radius must be positive");
  OrbitMembership out;
  const SpectralGrid& g = backward.grid();
  const double cutoff = backward.config().cutoff;
  double ratio = e_distance(z, center) / radius;
  out.min_ratio = ratio;
  if (ratio < 1.0) {
    out.member = true;
    return out;
  }
  if (sup_norm(g, z.u()) > cutoff) {
    out.blowup = true;
    return out;
  }
  StateE y = z;
  const long long steps = static_cast<long long>(std::ceil(horizon / backward.dt() - 1e-9));
  for (long long n = 1; n <= steps; ++n) {
    try {
      y = backward.step_deterministic(y);
    } catch (const Error&) {
      out.blowup = true;
      return out;
    }
    const double t = n * backward.dt();
    if (sup_norm(g, y.u()) > cutoff) {
      out.blowup = true;
      return out;
    }
    ratio = e_distance(y, center) / radius;
    if (ratio < out.min_ratio) {
      out.min_ratio = ratio;
      out.argmin_time = t;
    }
    if (ratio < 1.0) {
      out.member = true;
      out.entry_time = t;
      return out;
    }
    if (ratio > escape_factor) return out;
  }
  out.caveat = true;
  return out;
}

}  // namespace wavemeta
