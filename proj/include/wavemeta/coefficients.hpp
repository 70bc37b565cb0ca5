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

#include <limits>
#include <memory>
#include <vector>

namespace boost::math::interpolators {
template <class Real>
class cardinal_cubic_b_spline;
}

namespace wavemeta {

// Polynomial drift b(x) = sum_i c_i x^i with the cutoff localization b_n:
// b_n = b on [-n, n] and the tangent line of b at +-n outside.
class PolynomialDrift {
 public:
  PolynomialDrift() = default;
  explicit PolynomialDrift(std::vector<double> coefficients,
                           double cutoff = std::numeric_limits<double>::infinity());

  const std::vector<double>& coefficients() const { return coefficients_; }
  int degree() const;
  double cutoff() const { return cutoff_; }
  PolynomialDrift with_cutoff(double cutoff) const;
  bool is_zero() const;
  bool is_linear() const { return degree() <= 1; }
  double linear_coefficient() const;

  // Unlocalized polynomial and its derivatives.
  double polynomial(double x) const;
  double polynomial_derivative(double x, int order) const;
  double polynomial_antiderivative(double x) const;

  // Localized b_n, b_n' and beta_n(x) = int_0^x b_n.
  double value(double x) const;
  double derivative(double x) const;
  double antiderivative(double x) const;

  // max |b'(x)| over |x| <= n on a dense grid.
  double lipschitz_constant(int samples = 20001) const;

 private:
  std::vector<double> coefficients_;
  double cutoff_ = std::numeric_limits<double>::infinity();
};

// Noise coefficient sigma: a constant or a bounded smooth function given by a
// uniform table and cubic B-spline interpolation (clamped outside the table).
class NoiseCoefficient {
 public:
  NoiseCoefficient();
  static NoiseCoefficient constant(double c, double lower_bound = -1.0);
  static NoiseCoefficient bounded_smooth(double x0, double dx, std::vector<double> values,
                                         double lower_bound = -1.0);

  bool is_constant() const { return table_.empty(); }
  double constant_value() const { return constant_; }
  double lower_bound() const { return lower_bound_; }
  double cutoff() const { return cutoff_; }
  NoiseCoefficient with_cutoff(double cutoff) const;
  double table_start() const { return x0_; }
  double table_step() const { return dx_; }
  const std::vector<double>& table() const { return table_; }

  // sigma_n: the argument is clamped to [-n, n].
  double value(double x) const;
  double derivative(double x) const;
  double sup_bound() const;
  double sampled_minimum() const;

 private:
  void build();
  double clamp_arg(double x) const;

  double constant_ = 1.0;
  double x0_ = 0.0;
  double dx_ = 1.0;
  std::vector<double> table_;
  double lower_bound_ = 0.99;
  double cutoff_ = std::numeric_limits<double>::infinity();
  std::shared_ptr<const boost::math::interpolators::cardinal_cubic_b_spline<double>> spline_;
};

}  // namespace wavemeta
