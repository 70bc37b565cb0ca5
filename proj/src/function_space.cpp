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

#include "wavemeta/function_space.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "wavemeta/error.hpp"

namespace wavemeta {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kRefineFactor = 4;
constexpr int kQuadFactor = 2;

}  // namespace

SpectralGrid::SpectralGrid(double length, int modes) : length_(length), modes_(modes) {
  if (!(length > 0.0) || !std::isfinite(length)) {
    throw Error(ErrorCode::kInvalidArgument, "grid length must be positive");
  }
  if (modes < 1) {
    throw Error(ErrorCode::kInvalidArgument, "mode count must be at least 1");
  }
  const int k_max = modes_;
  eigenvalues_.resize(k_max);
  for (int k = 1; k <= k_max; ++k) {
    const double w = k * kPi / length_;
    eigenvalues_[k - 1] = w * w;
  }
  points_.resize(k_max);
  for (int j = 1; j <= k_max; ++j) points_[j - 1] = j * spacing();

  synthesis_.resize(k_max, k_max);
  for (int j = 0; j < k_max; ++j) {
    for (int k = 1; k <= k_max; ++k) synthesis_(j, k - 1) = basis(k, points_[j]);
  }

  const int n_quad = kQuadFactor * (k_max + 1) - 1;
  quad_weight_ = length_ / (kQuadFactor * (k_max + 1));
  quad_synthesis_.resize(n_quad, k_max);
  for (int q = 1; q <= n_quad; ++q) {
    for (int k = 1; k <= k_max; ++k) {
      quad_synthesis_(q - 1, k - 1) = basis(k, q * quad_weight_);
    }
  }

  const int n_ref = kRefineFactor * (k_max + 1) + 1;
  refined_points_.resize(n_ref);
  antiderivative_synthesis_.resize(n_ref, k_max);
  for (int i = 0; i < n_ref; ++i) {
    refined_points_[i] = length_ * i / (n_ref - 1);
    for (int k = 1; k <= k_max; ++k) {
      antiderivative_synthesis_(i, k - 1) = basis_antiderivative(k, refined_points_[i]);
    }
  }
}

double SpectralGrid::basis(int k, double x) const {
  return std::sqrt(2.0 / length_) * std::sin(k * kPi * x / length_);
}

double SpectralGrid::basis_antiderivative(int k, double x) const {
  return std::sqrt(2.0 / length_) * (length_ / (k * kPi)) *
         (1.0 - std::cos(k * kPi * x / length_));
}

double SpectralGrid::basis_second_derivative(int k, double x) const {
  return -eigenvalue(k) * basis(k, x);
}

void SpectralGrid::check_size(const Vec& coefficients, const char* what) const {
  if (coefficients.size() != modes_) {
    throw Error(ErrorCode::kDimension,
                std::string(what) + ": expected " + std::to_string(modes_) +
                    " coefficients, got " + std::to_string(coefficients.size()));
  }
}

Vec SpectralGrid::to_grid(const Vec& coefficients) const {
  check_size(coefficients, "to_grid");
  return synthesis_ * coefficients;
}

Vec SpectralGrid::to_coefficients(const Vec& samples) const {
  check_size(samples, "to_coefficients");
  return spacing() * (synthesis_.transpose() * samples);
}

double SpectralGrid::evaluate(const Vec& coefficients, double x) const {
  check_size(coefficients, "evaluate");
  double s = 0.0;
  for (int k = 1; k <= modes_; ++k) s += coefficients[k - 1] * basis(k, x);
  return s;
}

double SpectralGrid::evaluate_antiderivative(const Vec& coefficients, double x) const {
  check_size(coefficients, "evaluate_antiderivative");
  double s = 0.0;
  for (int k = 1; k <= modes_; ++k) s += coefficients[k - 1] * basis_antiderivative(k, x);
  return s;
}

Vec SpectralGrid::quad_values(const Vec& coefficients) const {
  check_size(coefficients, "quad_values");
  return quad_synthesis_ * coefficients;
}

Vec SpectralGrid::quad_project(const Vec& values) const {
  if (values.size() != quad_synthesis_.rows()) {
    throw Error(ErrorCode::kDimension, "quad_project: size mismatch");
  }
  return quad_weight_ * (quad_synthesis_.transpose() * values);
}

Vec SpectralGrid::antiderivative_values(const Vec& velocity) const {
  check_size(velocity, "antiderivative_values");
  return antiderivative_synthesis_ * velocity;
}

GridPtr make_grid(double length, int modes) {
  return std::make_shared<const SpectralGrid>(length, modes);
}

StateE::StateE(GridPtr grid) : grid_(std::move(grid)) {
  u_ = Vec::Zero(grid_->modes());
  v_ = Vec::Zero(grid_->modes());
}

StateE::StateE(GridPtr grid, Vec u, Vec v)
    : grid_(std::move(grid)), u_(std::move(u)), v_(std::move(v)) {
  grid_->check_size(u_, "StateE position");
  grid_->check_size(v_, "StateE velocity");
}

StateE StateE::operator+(const StateE& other) const {
  return StateE(grid_, u_ + other.u_, v_ + other.v_);
}

StateE StateE::operator-(const StateE& other) const {
  return StateE(grid_, u_ - other.u_, v_ - other.v_);
}

StateE StateE::operator*(double s) const { return StateE(grid_, u_ * s, v_ * s); }

double sup_norm(const SpectralGrid& grid, const Vec& u) {
  grid.check_size(u, "sup_norm");
  return grid.to_grid(u).cwiseAbs().maxCoeff();
}

double cminus_norm(const SpectralGrid& grid, const Vec& v) {
  grid.check_size(v, "cminus_norm");
  return grid.antiderivative_values(v).cwiseAbs().maxCoeff();
}

Vec sup_norm_subgradient(const SpectralGrid& grid, const Vec& u) {
  const Vec samples = grid.to_grid(u);
  Eigen::Index j = 0;
  samples.cwiseAbs().maxCoeff(&j);
  const double s = samples[j] >= 0.0 ? 1.0 : -1.0;
  Vec out(grid.modes());
  for (int k = 1; k <= grid.modes(); ++k) out[k - 1] = s * grid.basis(k, grid.points()[j]);
  return out;
}

Vec cminus_norm_subgradient(const SpectralGrid& grid, const Vec& v) {
  const Vec values = grid.antiderivative_values(v);
  Eigen::Index r = 0;
  values.cwiseAbs().maxCoeff(&r);
  const double s = values[r] >= 0.0 ? 1.0 : -1.0;
  return s * grid.antiderivative_synthesis().row(r).transpose();
}

double hdelta_norm(const SpectralGrid& grid, const Vec& f, double delta) {
  grid.check_size(f, "hdelta_norm");
  double s = 0.0;
  for (int k = 1; k <= grid.modes(); ++k) {
    s += std::pow(grid.eigenvalue(k), delta) * f[k - 1] * f[k - 1];
  }
  return std::sqrt(s);
}

double quadrature_l2_norm(const SpectralGrid& grid, const Vec& u) {
  const Vec samples = grid.to_grid(u);
  return std::sqrt(grid.spacing() * samples.squaredNorm());
}

double e_norm(const StateE& z) {
  return sup_norm(*z.grid(), z.u()) + cminus_norm(*z.grid(), z.v());
}

double h_norm(const StateE& z) {
  return hdelta_norm(*z.grid(), z.u(), 0.0) + hdelta_norm(*z.grid(), z.v(), -1.0);
}

double h1_norm(const StateE& z) {
  const double a = hdelta_norm(*z.grid(), z.u(), 1.0);
  const double b = hdelta_norm(*z.grid(), z.v(), 0.0);
  return std::sqrt(a * a + b * b);
}

double e_distance(const StateE& a, const StateE& b) { return e_norm(a - b); }

double odd_periodic_extend(const SpectralGrid& grid, const Vec& u, double x) {
  const double l = grid.length();
  const double period = 2.0 * l;
  double y = std::fmod(x, period);
  if (y < 0.0) y += period;
  double sign = 1.0;
  if (y > l) {
    y = period - y;
    sign = -1.0;
  }
  const Vec samples = grid.to_grid(u);
  const int n = grid.modes();
  const double h = grid.spacing();
  const double pos = y / h;
  int i = static_cast<int>(std::floor(pos));
  if (i >= n + 1) i = n;
  const double frac = pos - i;
  auto sample = [&](int j) { return (j <= 0 || j >= n + 1) ? 0.0 : samples[j - 1]; };
  const double left = sample(i);
  if (frac == 0.0) return sign * left;
  return sign * ((1.0 - frac) * left + frac * sample(i + 1));
}

SubdifferentialSet subdifferential_sup_norm(const SpectralGrid& grid, const Vec& u, double tol) {
  SubdifferentialSet out;
  const Vec samples = grid.to_grid(u);
  const double peak = samples.cwiseAbs().maxCoeff();
  if (!(peak > 1e-13)) {
    out.degenerate = true;
    return out;
  }
  const int n = grid.modes();
  const double floor = peak * (1.0 - tol);
  int j = 0;
  while (j < n) {
    if (std::abs(samples[j]) < floor) {
      ++j;
      continue;
    }
    const int sign = samples[j] > 0.0 ? 1 : -1;
    int first = j;
    int best = j;
    while (j + 1 < n && std::abs(samples[j + 1]) >= floor &&
           (samples[j + 1] > 0.0 ? 1 : -1) == sign) {
      ++j;
      if (std::abs(samples[j]) > std::abs(samples[best])) best = j;
    }
    Maximizer m;
    m.sign = sign;
    m.index = best;
    m.lower = grid.points()[first];
    m.upper = grid.points()[j];
    m.location = 0.5 * (m.lower + m.upper);
    out.maximizers.push_back(m);
    ++j;
  }
  return out;
}

}  // namespace wavemeta
