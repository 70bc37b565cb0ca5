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
#include <limits>
#include <string>
#include <vector>

#include "wavemeta/coefficients.hpp"
#include "wavemeta/dynamics.hpp"
#include "wavemeta/function_space.hpp"
#include "wavemeta/semigroup.hpp"

namespace wavemeta {

class DomainSpec;

struct EquilibriumResult {
  Vec xstar;
  double residual = 0.0;  // H norm of the spectral residual
  int iterations = 0;
  LinearizedSpectrum spectrum;
  bool stable = false;  // a_1^b > 0
};

// Damped Newton on a_k u_k - <b(u), e_k> = 0 with a dense Jacobian.
EquilibriumResult solve_equilibrium(const GridPtr& grid, const PolynomialDrift& drift,
                                    const Vec& initial_guess, int max_iterations = 50,
                                    double tolerance = 1e-10);

// Equilibrium residual a_k u_k - <b(u), e_k> in the sine basis.
Vec equilibrium_residual(const SpectralGrid& grid, const PolynomialDrift& drift, const Vec& u);

struct AttractionCertificate {
  double rho0 = std::numeric_limits<double>::infinity();  // first critical point of F^-1
  double rho_example = std::numeric_limits<double>::quiet_NaN();  // closed form for degree 3
  double series_radius = std::numeric_limits<double>::infinity();  // F^-1(rho0)
  double a1 = 1.0;
  double theta = 0.0;
  std::vector<double> r;       // R_k for k = 2..gamma (index k - 2)
  std::vector<double> a_head;  // A_1..A_N
  double empirical_constant = 0.0;  // sup_t,z |Z(t) - z*|_E e^{theta t} / |z - z*|_E

  bool finite() const { return rho0 < std::numeric_limits<double>::infinity(); }
  // Partial sums of sum_n A_n rho^n.
  std::vector<double> partial_sums(double rho) const;
};

// R_k = |b^(k)(x*)|_inf / (k! (k - 1)); A_n from the convolution recursion;
// rho0 the smallest positive root of 1/A_1 - l sum_k k R_k zeta^(k-1).
AttractionCertificate attraction_radius(const SpectralGrid& grid, const PolynomialDrift& drift,
                                        const Vec& xstar, double a1, double theta,
                                        int n_terms = 40);

// Theta used for uniform attraction: min(alpha / 8, lambda_b / (4 alpha)).
double attraction_rate(double alpha, double gap);

// Prefactor of the linearized E-norm decay envelope at a prescribed rate.
double linearized_prefactor(const GridPtr& grid, double alpha, const LinearizedSpectrum& spectrum,
                            double theta, double horizon, int n_samples, std::uint64_t seed);

struct AttractionSample {
  double initial_distance = 0.0;
  double final_distance = 0.0;
  double margin = 0.0;  // log of early over late envelope maximum
  bool decays = false;
};

struct AttractionReport {
  std::vector<AttractionSample> samples;
  double theta = 0.0;
  double horizon = 0.0;
  double worst_margin = 0.0;
  double empirical_constant = 0.0;
  bool pass = false;
};

// Integrates n_samples noiseless paths from states sampled in D and checks
// that |Z(t) - z*|_E e^{theta t} does not grow from the first to the second
// half of the horizon.
AttractionReport verify_uniform_attraction(const DomainSpec& domain, int n_samples,
                                           const SimConfig& cfg, double theta, double horizon,
                                           int workers = 1);

struct OrbitMembership {
  bool member = false;
  bool blowup = false;
  bool caveat = false;   // horizon reached without a decision
  double entry_time = 0.0;
  double min_ratio = 0.0;  // min over the backward orbit of |Z(-t) - z*|_E / radius
  double argmin_time = 0.0;
};

// Semi-decision of z in the union of forward orbits of B_E(z*, radius):
// integrates backward until the orbit enters the ball, leaves escape_factor
// times the radius, crosses the cutoff, or reaches the horizon.
OrbitMembership orbit_domain_membership(const StateE& z, const StateE& center, double radius,
                                        const Stepper& backward, double horizon,
                                        double escape_factor = 8.0);

}  // namespace wavemeta
