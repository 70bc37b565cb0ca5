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

#include "wavemeta/coefficients.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include "wavemeta/error.hpp"

namespace wavemeta {

PolynomialDrift::PolynomialDrift(std::vector<double> coefficients, double cutoff)
    : coefficients_(std::move(coefficients)), cutoff_(cutoff) {
  for (double c : coefficients_) {
    if (!std::isfinite(c)) throw Error(ErrorCode::kInvalidArgument, "drift coefficient not finite");
  }
  if (!(cutoff_ > 0.0)) throw Error(ErrorCode::kInvalidArgument, "drift cutoff must be positive");
}

int PolynomialDrift::degree() const {
  for (int i = static_cast<int>(coefficients_.size()) - 1; i >= 0; --i) {
    if (coefficients_[i] != 0.0) return i;
  }
  return 0;
}

PolynomialDrift PolynomialDrift::with_cutoff(double cutoff) const {
  return PolynomialDrift(coefficients_, cutoff);
}

bool PolynomialDrift::is_zero() const {
  return std::all_of(coefficients_.begin(), coefficients_.end(), [](double c) { return c == 0.0; });
}

double PolynomialDrift::linear_coefficient() const {
  return coefficients_.size() > 1 ? coefficients_[1] : 0.0;
}

double PolynomialDrift::polynomial(double x) const { return polynomial_derivative(x, 0); }

double PolynomialDrift::polynomial_derivative(double x, int order) const {
  const int n = static_cast<int>(coefficients_.size());
  double s = 0.0;
  for (int i = n - 1; i >= order; --i) {
    double falling = 1.0;
    for (int j = 0; j < order; ++j) falling *= (i - j);
    s = s * x + falling * coefficients_[i];
  }
  return s;
}

double PolynomialDrift::polynomial_antiderivative(double x) const {
  double s = 0.0;
  for (int i = static_cast<int>(coefficients_.size()) - 1; i >= 0; --i) {
    s = s * x + coefficients_[i] / (i + 1);
  }
  return s * x;
}

double PolynomialDrift::value(double x) const {
  if (x > cutoff_) return polynomial(cutoff_) + (x - cutoff_) * polynomial_derivative(cutoff_, 1);
  if (x < -cutoff_) {
    return polynomial(-cutoff_) + (x + cutoff_) * polynomial_derivative(-cutoff_, 1);
  }
  return polynomial(x);
}

double PolynomialDrift::derivative(double x) const {
  if (x > cutoff_) return polynomial_derivative(cutoff_, 1);
  if (x < -cutoff_) return polynomial_derivative(-cutoff_, 1);
  return polynomial_derivative(x, 1);
}

double PolynomialDrift::antiderivative(double x) const {
  if (x > cutoff_) {
    const double d = x - cutoff_;
    return polynomial_antiderivative(cutoff_) + polynomial(cutoff_) * d +
           0.5 * polynomial_derivative(cutoff_, 1) * d * d;
  }
  if (x < -cutoff_) {
    const double d = x + cutoff_;
    return polynomial_antiderivative(-cutoff_) + polynomial(-cutoff_) * d +
           0.5 * polynomial_derivative(-cutoff_, 1) * d * d;
  }
  return polynomial_antiderivative(x);
}

double PolynomialDrift::lipschitz_constant(int samples) const {
  const double n = std::isfinite(cutoff_) ? cutoff_ : 1.0;
  double best = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double x = -n + 2.0 * n * i / (samples - 1);
    best = std::max(best, std::abs(polynomial_derivative(x, 1)));
  }
  return best;
}

NoiseCoefficient::NoiseCoefficient() = default;

NoiseCoefficient NoiseCoefficient::constant(double c, double lower_bound) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw Error(ErrorCode::kInvalidArgument, "constant noise coefficient must be positive");
  }
  NoiseCoefficient out;
  out.constant_ = c;
  out.lower_bound_ = lower_bound > 0.0 ? lower_bound : 0.99 * c;
  if (!(out.lower_bound_ < c)) {
    throw Error(ErrorCode::kInvalidArgument, "noise lower bound must be below sigma");
  }
  return out;
}

NoiseCoefficient NoiseCoefficient::bounded_smooth(double x0, double dx, std::vector<double> values,
                                                  double lower_bound) {
  if (values.size() < 4 || !(dx > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "noise table needs at least 4 uniform samples");
  }
  NoiseCoefficient out;
  out.x0_ = x0;
  out.dx_ = dx;
  out.table_ = std::move(values);
  out.build();
  const double lo = out.sampled_minimum();
  if (!(lo > 0.0)) throw Error(ErrorCode::kInvalidArgument, "noise coefficient must stay positive");
  out.lower_bound_ = lower_bound > 0.0 ? lower_bound : 0.99 * lo;
  if (!(out.lower_bound_ < lo)) {
    throw Error(ErrorCode::kInvalidArgument, "noise lower bound must be below sigma");
  }
  return out;
}

void NoiseCoefficient::build() {
  spline_ = std::make_shared<boost::math::interpolators::cardinal_cubic_b_spline<double>>(
      table_.begin(), table_.end(), x0_, dx_);
}

NoiseCoefficient NoiseCoefficient::with_cutoff(double cutoff) const {
  NoiseCoefficient out = *this;
  out.cutoff_ = cutoff;
  return out;
}

double NoiseCoefficient::clamp_arg(double x) const {
  double y = std::clamp(x, -cutoff_, cutoff_);
  if (!is_constant()) {
    const double x1 = x0_ + dx_ * static_cast<double>(table_.size() - 1);
    y = std::clamp(y, x0_, x1);
  }
  return y;
}

double NoiseCoefficient::value(double x) const {
  if (is_constant()) return constant_;
  return (*spline_)(clamp_arg(x));
}

double NoiseCoefficient::derivative(double x) const {
  if (is_constant()) return 0.0;
  const double y = clamp_arg(x);
  if (y != x) return 0.0;
  return spline_->prime(y);
}

double NoiseCoefficient::sup_bound() const {
  if (is_constant()) return constant_;
  double best = 0.0;
  const double x1 = x0_ + dx_ * static_cast<double>(table_.size() - 1);
  for (int i = 0; i <= 4000; ++i) best = std::max(best, std::abs((*spline_)(x0_ + (x1 - x0_) * i / 4000.0)));
  return best;
}

double NoiseCoefficient::sampled_minimum() const {
  if (is_constant()) return constant_;
  double best = std::numeric_limits<double>::infinity();
  const double x1 = x0_ + dx_ * static_cast<double>(table_.size() - 1);
  for (int i = 0; i <= 4000; ++i) best = std::min(best, (*spline_)(x0_ + (x1 - x0_) * i / 4000.0));
  return best;
}

}  // namespace wavemeta
