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
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "wavemeta/coefficients.hpp"
#include "wavemeta/function_space.hpp"

namespace wavemeta {

enum class DampingRegime { kUnderdamped, kCritical, kOverdamped };

// 2x2 solution matrix of u'' + alpha u' + a u = 0 mapping (u, u') at time 0
// to (u, u') at time t.
struct ModePropagator {
  double m11 = 1.0;
  double m12 = 0.0;
  double m21 = 0.0;
  double m22 = 1.0;
  DampingRegime regime = DampingRegime::kUnderdamped;

  Eigen::Matrix2d matrix() const;
  double determinant() const { return m11 * m22 - m12 * m21; }
};

DampingRegime damping_regime(double stiffness, double alpha);

// Propagator for an arbitrary stiffness a (negative values give a growing
// mode) and any real t.
ModePropagator stiffness_propagator(double stiffness, double alpha, double t);
// Evaluates the formula of one branch regardless of the discriminant sign.
ModePropagator stiffness_propagator_branch(double stiffness, double alpha, double t,
                                           DampingRegime regime);
ModePropagator mode_propagator(int k, double alpha, double t, const SpectralGrid& grid);

StateE apply_semigroup(const StateE& z, double alpha, double t);
// Independent evaluation through q = exp(alpha t / 2) u, which solves an
// undamped Klein-Gordon type mode equation.
StateE apply_semigroup_q_transform(const StateE& z, double alpha, double t);

// Undamped evolution by characteristics: shifted odd-periodic extensions of
// the position and of the velocity antiderivative.
StateE dalembert_evolve(const StateE& z, double t);

// I_v(t, x) = 1/2 int_{x-t}^{x+t} v, v extended odd and 2l-periodic.
double velocity_window_integral(const SpectralGrid& grid, const Vec& v, double t, double x);

struct LinearizedSpectrum {
  Vec eigenvalues;   // a_k^b ascending
  Mat eigenvectors;  // columns in the sine basis
  Mat matrix;        // Galerkin matrix of -d_xx - b'(x*)
  double gap = 0.0;  // a_2^b - a_1^b
  double lowest = 0.0;
};

LinearizedSpectrum assemble_linearized_operator(const SpectralGrid& grid, const Vec& xstar,
                                                const PolynomialDrift& drift);

// Propagates a perturbation of z* under the linearized damped flow.
StateE apply_linearized_semigroup(const StateE& z, double alpha, double t,
                                  const LinearizedSpectrum& spectrum);

struct DecayEstimate {
  double rate = 0.0;
  double prefactor = 1.0;
  double horizon = 0.0;
  int samples = 0;
  std::vector<double> times;
  std::vector<double> envelope;
};

// Random band-limited state with unit E-norm.
StateE random_unit_state(const GridPtr& grid, std::mt19937_64& rng);

// Fits the decay rate of t -> max_i |S(t) z_i|_E over [T/2, T]. With a
// spectrum the linearized semigroup is used instead of S_alpha.
DecayEstimate measure_decay_rate(const GridPtr& grid, double alpha, double horizon, int n_samples,
                                 std::uint64_t seed, const LinearizedSpectrum* spectrum = nullptr,
                                 int n_times = 201);

// Sup-norm decay threshold min(alpha/8, a1/(4 alpha)).
double sup_norm_decay_threshold(double alpha, double a1);
// L2 decay threshold min(alpha/8, a1/alpha).
double l2_decay_threshold(double alpha, double a1);

}  // namespace wavemeta
