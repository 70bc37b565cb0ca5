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

#include <memory>
#include <vector>

#include <Eigen/Dense>

namespace wavemeta {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Dirichlet sine basis e_k(x) = sqrt(2/l) sin(k pi x / l) on (0, l) with K
// modes, collocation points x_j = j l / (K + 1), and precomputed transform
// matrices. Immutable after construction.
class SpectralGrid {
 public:
  SpectralGrid(double length, int modes);

  double length() const { return length_; }
  int modes() const { return modes_; }
  double spacing() const { return length_ / (modes_ + 1); }

  // a_k = (k pi / l)^2 for k = 1..K.
  double eigenvalue(int k) const { return eigenvalues_[k - 1]; }
  const Vec& eigenvalues() const { return eigenvalues_; }
  const Vec& points() const { return points_; }

  double basis(int k, double x) const;
  // Antiderivative of e_k from 0 to x.
  double basis_antiderivative(int k, double x) const;
  // Second derivative of e_k at x.
  double basis_second_derivative(int k, double x) const;

  // Coefficients to collocation samples and back (DST-I pair).
  Vec to_grid(const Vec& coefficients) const;
  Vec to_coefficients(const Vec& samples) const;

  // Evaluation of a sine series at arbitrary points (exact odd 2l-periodic
  // extension of a band-limited field).
  double evaluate(const Vec& coefficients, double x) const;
  double evaluate_antiderivative(const Vec& coefficients, double x) const;

  // Dealiasing quadrature grid with 2(K+1) intervals; exact for products of
  // up to four band-limited factors.
  const Mat& quad_synthesis() const { return quad_synthesis_; }
  double quad_weight() const { return quad_weight_; }
  Vec quad_values(const Vec& coefficients) const;
  Vec quad_project(const Vec& values) const;
  // Indices into the quadrature grid that coincide with collocation points.
  int quad_index_of_point(int j) const { return 2 * (j + 1) - 1; }

  // Refinement grid (factor 4, endpoints included) carrying the velocity
  // antiderivative.
  const Vec& refined_points() const { return refined_points_; }
  const Mat& antiderivative_synthesis() const { return antiderivative_synthesis_; }
  Vec antiderivative_values(const Vec& velocity) const;

  void check_size(const Vec& coefficients, const char* what) const;

 private:
  double length_;
  int modes_;
  Vec eigenvalues_;
  Vec points_;
  Mat synthesis_;
  Mat quad_synthesis_;
  double quad_weight_;
  Vec refined_points_;
  Mat antiderivative_synthesis_;
};

using GridPtr = std::shared_ptr<const SpectralGrid>;

GridPtr make_grid(double length, int modes);

// Phase-space point z = (u, v): position and velocity sine coefficients.
class StateE {
 public:
  StateE() = default;
  explicit StateE(GridPtr grid);
  StateE(GridPtr grid, Vec u, Vec v);

  const GridPtr& grid() const { return grid_; }
  int modes() const { return grid_->modes(); }

  Vec& u() { return u_; }
  Vec& v() { return v_; }
  const Vec& u() const { return u_; }
  const Vec& v() const { return v_; }

  Vec position_samples() const { return grid_->to_grid(u_); }
  Vec velocity_antiderivative() const { return grid_->antiderivative_values(v_); }

  bool finite() const { return u_.allFinite() && v_.allFinite(); }

  StateE operator+(const StateE& other) const;
  StateE operator-(const StateE& other) const;
  StateE operator*(double s) const;

 private:
  GridPtr grid_;
  Vec u_;
  Vec v_;
};

double sup_norm(const SpectralGrid& grid, const Vec& u);
double cminus_norm(const SpectralGrid& grid, const Vec& v);
// Subgradients at the grid argmax of |u| and of the velocity antiderivative.
Vec sup_norm_subgradient(const SpectralGrid& grid, const Vec& u);
Vec cminus_norm_subgradient(const SpectralGrid& grid, const Vec& v);
double hdelta_norm(const SpectralGrid& grid, const Vec& f, double delta);
// Collocation L2 quadrature norm of the samples of a position field.
double quadrature_l2_norm(const SpectralGrid& grid, const Vec& u);

// |z|_E = |u|_inf + |v|_{C^-1}.
double e_norm(const StateE& z);
// |z|_H = |u|_H + |v|_{H^-1}.
double h_norm(const StateE& z);
// |z|_{H1 x L2} = sqrt(|u|_{H^1}^2 + |v|_H^2).
double h1_norm(const StateE& z);
double e_distance(const StateE& a, const StateE& b);

// Linear-interpolation evaluation of the odd 2l-periodic extension from the
// collocation samples (boundary zeros included).
double odd_periodic_extend(const SpectralGrid& grid, const Vec& u, double x);

struct Maximizer {
  double location;
  int sign;
  int index;          // collocation index of the peak sample
  double lower;       // extent of the run of near-maximal samples
  double upper;
};

struct SubdifferentialSet {
  std::vector<Maximizer> maximizers;
  bool degenerate = false;
};

// Grid locations where |u| is within tol |u|_inf of its maximum. Contiguous
// runs of equal sign are merged into one maximizer located at the run centre.
SubdifferentialSet subdifferential_sup_norm(const SpectralGrid& grid, const Vec& u,
                                            double tol = 1e-6);

}  // namespace wavemeta
