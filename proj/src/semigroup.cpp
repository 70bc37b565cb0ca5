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

#include "wavemeta/semigroup.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "wavemeta/error.hpp"

namespace wavemeta {

Eigen::Matrix2d ModePropagator::matrix() const {
  Eigen::Matrix2d m;
  m << m11, m12, m21, m22;
  return m;
}

DampingRegime damping_regime(double stiffness, double alpha) {
  const double disc = alpha * alpha - 4.0 * stiffness;
  const double scale = std::max({1.0, alpha * alpha, 4.0 * std::abs(stiffness)});
  if (std::abs(disc) <= 1e-12 * scale) return DampingRegime::kCritical;
  return disc < 0.0 ? DampingRegime::kUnderdamped : DampingRegime::kOverdamped;
}

ModePropagator stiffness_propagator_branch(double a, double alpha, double t,
                                           DampingRegime regime) {
  const double beta = 0.5 * alpha;
  double ec = 0.0;  // exp(-beta t) * C(t)
  double es = 0.0;  // exp(-beta t) * S(t)
  switch (regime) {
    case DampingRegime::kUnderdamped: {
      const double omega = std::sqrt(std::max(a - beta * beta, 0.0));
      const double e = std::exp(-beta * t);
      ec = e * std::cos(omega * t);
      es = omega > 0.0 ? e * std::sin(omega * t) / omega : e * t;
      break;
    }
    case DampingRegime::kCritical: {
      const double e = std::exp(-beta * t);
      ec = e;
      es = e * t;
      break;
    }
    case DampingRegime::kOverdamped: {
      const double gamma = std::sqrt(std::max(beta * beta - a, 0.0));
      if (gamma * std::abs(t) < 1e-3) {
        const double e = std::exp(-beta * t);
        ec = e * std::cosh(gamma * t);
        es = gamma > 0.0 ? e * std::sinh(gamma * t) / gamma : e * t;
      } else {
        const double ep = std::exp((gamma - beta) * t);
        const double em = std::exp(-(gamma + beta) * t);
        ec = 0.5 * (ep + em);
        es = (ep - em) / (2.0 * gamma);
      }
      break;
    }
  }
  ModePropagator p;
  p.regime = regime;
  p.m11 = ec + beta * es;
  p.m12 = es;
  p.m21 = -a * es;
  p.m22 = ec - beta * es;
  return p;
}

ModePropagator stiffness_propagator(double a, double alpha, double t) {
  return stiffness_propagator_branch(a, alpha, t, damping_regime(a, alpha));
}

ModePropagator mode_propagator(int k, double alpha, double t, const SpectralGrid& grid) {
  if (k < 1 || k > grid.modes()) {
    throw Error(ErrorCode::kDimension, "mode index out of range");
  }
  return stiffness_propagator(grid.eigenvalue(k), alpha, t);
}

StateE apply_semigroup(const StateE& z, double alpha, double t) {
  const SpectralGrid& grid = *z.grid();
  StateE out(z.grid());
  for (int k = 1; k <= grid.modes(); ++k) {
    const ModePropagator p = stiffness_propagator(grid.eigenvalue(k), alpha, t);
    const double u = z.u()[k - 1];
    const double v = z.v()[k - 1];
    out.u()[k - 1] = p.m11 * u + p.m12 * v;
    out.v()[k - 1] = p.m21 * u + p.m22 * v;
  }
  return out;
}

StateE apply_semigroup_q_transform(const StateE& z, double alpha, double t) {
  const SpectralGrid& grid = *z.grid();
  const double beta = 0.5 * alpha;
  StateE out(z.grid());
  for (int k = 1; k <= grid.modes(); ++k) {
    const double kappa = grid.eigenvalue(k) - beta * beta;
    const double q0 = z.u()[k - 1];
    const double q1 = z.v()[k - 1] + beta * q0;
    double c = 0.0;
    double s = 0.0;
    double ds = 0.0;  // derivative of c
    if (kappa > 0.0) {
      const double w = std::sqrt(kappa);
      c = std::cos(w * t);
      s = std::sin(w * t) / w;
      ds = -w * std::sin(w * t);
    } else if (kappa < 0.0) {
      const double g = std::sqrt(-kappa);
      c = std::cosh(g * t);
      s = std::sinh(g * t) / g;
      ds = g * std::sinh(g * t);
    } else {
      c = 1.0;
      s = t;
      ds = 0.0;
    }
    const double q = c * q0 + s * q1;
    const double qdot = ds * q0 + c * q1;
    const double e = std::exp(-beta * t);
    out.u()[k - 1] = e * q;
    out.v()[k - 1] = e * (qdot - beta * q);
  }
  return out;
}

StateE dalembert_evolve(const StateE& z, double t) {
  const SpectralGrid& grid = *z.grid();
  const int n = grid.modes();
  const double l = grid.length();
  const Vec& u = z.u();
  const Vec& v = z.v();

  Vec position(n);
  for (int j = 0; j < n; ++j) {
    const double x = grid.points()[j];
    position[j] = 0.5 * (grid.evaluate(u, x - t) + grid.evaluate(u, x + t)) +
                  0.5 * (grid.evaluate_antiderivative(v, x + t) -
                         grid.evaluate_antiderivative(v, x - t));
  }

  // Antiderivative (vanishing at 0) of the evolved velocity on the closed
  // collocation lattice, then a DCT-I recovers its cosine content.
  const int m = n + 1;
  const double shift_u = grid.evaluate(u, t);
  const double shift_v = grid.evaluate_antiderivative(v, t);
  Vec w(m + 1);
  for (int i = 0; i <= m; ++i) {
    const double x = l * i / m;
    w[i] = 0.5 * (grid.evaluate(u, x + t) - grid.evaluate(u, x - t)) +
           0.5 * (grid.evaluate_antiderivative(v, x + t) +
                  grid.evaluate_antiderivative(v, x - t)) -
           shift_u - shift_v;
  }
  Vec velocity(n);
  for (int k = 1; k <= n; ++k) {
    double s = 0.5 * w[0] + 0.5 * ((k % 2 == 0) ? w[m] : -w[m]);
    for (int i = 1; i < m; ++i) s += w[i] * std::cos(std::numbers::pi * k * i / m);
    const double cosine_coeff = 2.0 * s / m;
    const double c_k = std::sqrt(2.0 / l) * l / (k * std::numbers::pi);
    velocity[k - 1] = -cosine_coeff / c_k;
  }
  return StateE(z.grid(), grid.to_coefficients(position), velocity);
}

double velocity_window_integral(const SpectralGrid& grid, const Vec& v, double t, double x) {
  return 0.5 * (grid.evaluate_antiderivative(v, x + t) - grid.evaluate_antiderivative(v, x - t));
}

LinearizedSpectrum assemble_linearized_operator(const SpectralGrid& grid, const Vec& xstar,
                                                const PolynomialDrift& drift) {
  grid.check_size(xstar, "assemble_linearized_operator");
  const Mat& e = grid.quad_synthesis();
  const Vec values = grid.quad_values(xstar);
  Vec slope(values.size());
  for (Eigen::Index q = 0; q < values.size(); ++q) slope[q] = drift.derivative(values[q]);
  LinearizedSpectrum out;
  out.matrix = -grid.quad_weight() * (e.transpose() * slope.asDiagonal() * e);
  out.matrix.diagonal() += grid.eigenvalues();
  out.matrix = 0.5 * (out.matrix + out.matrix.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> solver(out.matrix);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::kConvergence, "eigensolver failed on the linearized operator");
  }
  out.eigenvalues = solver.eigenvalues();
  out.eigenvectors = solver.eigenvectors();
  out.lowest = out.eigenvalues[0];
  out.gap = grid.modes() >= 2 ? out.eigenvalues[1] - out.eigenvalues[0] : 0.0;
  if (grid.modes() >= 2 && !(out.gap > 0.0)) {
    throw Error(ErrorCode::kStabilityAssumption,
                "spectral gap a_2^b - a_1^b is not positive");
  }
  return out;
}

StateE apply_linearized_semigroup(const StateE& z, double alpha, double t,
                                  const LinearizedSpectrum& spectrum) {
  const Vec c = spectrum.eigenvectors.transpose() * z.u();
  const Vec d = spectrum.eigenvectors.transpose() * z.v();
  Vec c2(c.size());
  Vec d2(d.size());
  for (Eigen::Index k = 0; k < c.size(); ++k) {
    const ModePropagator p = stiffness_propagator(spectrum.eigenvalues[k], alpha, t);
    c2[k] = p.m11 * c[k] + p.m12 * d[k];
    d2[k] = p.m21 * c[k] + p.m22 * d[k];
  }
  return StateE(z.grid(), spectrum.eigenvectors * c2, spectrum.eigenvectors * d2);
}

StateE random_unit_state(const GridPtr& grid, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  StateE z(grid);
  for (int k = 1; k <= grid->modes(); ++k) {
    z.u()[k - 1] = normal(rng) / k;
    z.v()[k - 1] = normal(rng);
  }
  const double norm = e_norm(z);
  return z * (1.0 / norm);
}

DecayEstimate measure_decay_rate(const GridPtr& grid, double alpha, double horizon, int n_samples,
                                 std::uint64_t seed, const LinearizedSpectrum* spectrum,
                                 int n_times) {
  if (!(horizon > 0.0) || n_samples < 1 || n_times < 4) {
    throw Error(ErrorCode::kInvalidArgument, "decay measurement needs T > 0 and samples");
  }
  std::mt19937_64 rng(seed);
  std::vector<StateE> states;
  states.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i) states.push_back(random_unit_state(grid, rng));

  DecayEstimate out;
  out.horizon = horizon;
  out.samples = n_samples;
  out.times.resize(n_times);
  out.envelope.assign(n_times, 0.0);
  for (int m = 0; m < n_times; ++m) {
    const double t = horizon * m / (n_times - 1);
    out.times[m] = t;
    double env = 0.0;
    for (const StateE& z : states) {
      const StateE y = spectrum ? apply_linearized_semigroup(z, alpha, t, *spectrum)
                                : apply_semigroup(z, alpha, t);
      env = std::max(env, e_norm(y));
    }
    out.envelope[m] = env;
  }
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  int count = 0;
  for (int m = 0; m < n_times; ++m) {
    if (out.times[m] < 0.5 * horizon) continue;
    const double y = std::log(out.envelope[m]);
    st += out.times[m];
    sy += y;
    stt += out.times[m] * out.times[m];
    sty += out.times[m] * y;
    ++count;
  }
  const double slope = (count * sty - st * sy) / (count * stt - st * st);
  out.rate = -slope;
  if (alpha > 0.0) out.rate = std::max(out.rate, 0.0);
  double prefactor = 1.0;
  for (int m = 0; m < n_times; ++m) {
    prefactor = std::max(prefactor, out.envelope[m] * std::exp(out.rate * out.times[m]));
  }
  out.prefactor = prefactor;
  return out;
}

double sup_norm_decay_threshold(double alpha, double a1) {
  return std::min(alpha / 8.0, a1 / (4.0 * alpha));
}

double l2_decay_threshold(double alpha, double a1) { return std::min(alpha / 8.0, a1 / alpha); }

}  // namespace wavemeta
