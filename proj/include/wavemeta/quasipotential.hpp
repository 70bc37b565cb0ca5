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
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wavemeta/domain.hpp"
#include "wavemeta/dynamics.hpp"
#include "wavemeta/function_space.hpp"

namespace wavemeta {

// Time-gridded control: column i holds u_k(t_i), applied on [t_i, t_{i+1}).
struct ControlPath {
  GridPtr grid;
  double dt = 0.0;
  Mat coefficients;  // K x M
  double cached_energy = 0.0;

  ControlPath() = default;
  ControlPath(GridPtr grid, int steps, double dt);

  int steps() const { return static_cast<int>(coefficients.cols()); }
  double horizon() const { return dt * steps(); }
  // 1/2 sum_i dt sum_k u_k(t_i)^2.
  double energy() const;
  void refresh() { cached_energy = energy(); }
};

// Discrete skeleton map: exponential Euler on substeps of dt / substeps
// with the control held on each control interval.
class SkeletonProblem {
 public:
  SkeletonProblem(const SimConfig& cfg, double horizon, int steps, int substeps = 0);

  const Stepper& stepper() const { return stepper_; }
  const SpectralGrid& grid() const { return stepper_.grid(); }
  int steps() const { return steps_; }
  int substeps() const { return substeps_; }
  double control_dt() const { return control_dt_; }
  double horizon() const { return control_dt_ * steps_; }
  ControlPath zero_control() const;

  // States at the control nodes t_0..t_M. Substep states (M * substeps + 1)
  // are stored when requested. Throws kInfeasibleControl on blowup.
  std::vector<StateE> forward(const StateE& z0, const ControlPath& control,
                              std::vector<StateE>* substates = nullptr) const;

  // Gradient of a terminal-and-node cost with respect to the control
  // coefficients, given the cost gradients at the control nodes.
  Mat adjoint(const std::vector<StateE>& substates, const ControlPath& control,
              const std::vector<StateE>& node_gradients) const;

  // Per-mode maps of one control interval for the linear part:
  // z -> A z + B h.
  void interval_maps(std::vector<Eigen::Matrix2d>* a, std::vector<Eigen::Vector2d>* b) const;

 private:
  Stepper stepper_;
  int steps_ = 0;
  int substeps_ = 1;
  double control_dt_ = 0.0;
};

// I_{z0,T}: returns the control energy and the skeleton terminal state.
struct RateValue {
  double value = 0.0;
  StateE terminal;
};
RateValue rate_functional(const ControlPath& control, const StateE& z0, const SimConfig& cfg,
                          int substeps = 0);

// Per-mode controllability Gramians G_k = int_0^T P_k(s) e2 e2^T P_k(s)^T ds.
struct ControlOperator {
  double horizon = 0.0;
  double alpha = 0.0;
  std::vector<Eigen::Matrix2d> gramians;
  double max_condition = 0.0;
};
ControlOperator assemble_control_operator(double horizon, double alpha, const SpectralGrid& grid,
                                          double shift = 0.0);

// Smallest T with max_k |P_k(T)|^2 <= 1/2 in the H^1 x L^2 norm.
double control_horizon(const SpectralGrid& grid, double alpha, double shift = 0.0);
// T_0 from M^2 exp(-2 theta T_0) = 1/2.
double control_horizon_rule(double prefactor, double theta);

// Minimal-energy piecewise-constant control steering 0 to target in time
// horizon under the linear damped flow (stiffness a_k - shift), exact for
// the discrete skeleton with the given number of steps.
ControlPath min_norm_linear_control(const StateE& target, double horizon, int steps, double alpha,
                                    double shift = 0.0);

struct ExactControlResult {
  ControlPath control;
  ControlPath linear;
  double energy = 0.0;
  double linear_energy = 0.0;
  double gap = 0.0;  // |Z^u_{z*}(T) - z|_{H1 x L2}
  StateE terminal;
};

// Steers z* to z: u = [u1 + b(x*) - b(Z) + b'(0)(Z - x*)] / sigma(Z) along
// the linearly controlled path Z = z* + L u1.
ExactControlResult exact_nonlinear_control(const StateE& z, const StateE& zstar, double horizon,
                                           const SimConfig& cfg);

// Lowest-energy point of the boundary of D (E(y) - E(z*) minimized over the
// level set), by pinned Newton solves with an active set.
struct BoundaryMinimizer {
  StateE point;
  double energy_gap = 0.0;
  Binding binding = Binding::kPosition;
  double location = 0.0;
  int sign = 1;
  bool on_boundary = true;
};
BoundaryMinimizer min_energy_boundary_point(const DomainSpec& domain, const PolynomialDrift& drift);

// Lowest-energy state with |u - x*|(x_j) = s pinned at collocation index j
// with the given sign and |u - x*|_inf <= s elsewhere; v = 0.
StateE pinned_position_minimizer(const StateE& zstar, const PolynomialDrift& drift, int index,
                                 int sign, double s);
// Lowest-energy velocity with antiderivative pinned to sign * m at refined
// index r and |V|_inf <= m elsewhere; u = x*.
StateE pinned_velocity_minimizer(const StateE& zstar, int refined_index, int sign, double m);

struct OracleResult {
  ControlPath control;
  double value = 0.0;        // rate functional of the extracted control
  double energy_value = 0.0;  // 2 alpha [E(y) - E(Z(T))] / sigma^2
  double relative_gap = 0.0;  // |value - energy_value| / energy_value; > 5% throws
  StateE start;              // reversed path at t = 0
  StateE replay_terminal;    // skeleton replay of the control from start
};

// Reversed noiseless orbit ending at y: integrates from (y_u, -y_v) for
// horizon, reverses, and extracts u = 2 alpha d_t psi / sigma by finite
// differences on the control grid. Needs a constant sigma.
OracleResult reversed_path_oracle(const StateE& y, const SimConfig& cfg, double horizon, int steps,
                                  int substeps = 0);

enum class TargetKind { kPoint, kNearPoint, kBoundary, kExterior };
enum class ConstraintMode { kFree, kStayInD, kStayInClosure };
const char* target_kind_name(TargetKind kind);
const char* constraint_mode_name(ConstraintMode mode);

struct QuasipotentialTarget {
  TargetKind kind = TargetKind::kBoundary;
  StateE point;              // kPoint / kNearPoint
  double radius = 0.0;       // kNearPoint: E-distance tolerance
  const DomainSpec* domain = nullptr;
};

struct QuasipotentialOptions {
  std::vector<double> horizons;  // empty: {2, 4, 8, 16} / theta
  double theta = 0.5;
  int steps = 64;
  int substeps = 0;
  int max_outer = 12;
  int max_inner = 300;
  double endpoint_tolerance = 1e-5;
  double interior_tolerance = 1e-5;
  double margin = 1e-4;
  bool restart_zero = true;
  bool restart_oracle = true;
  bool restart_exact = true;
  int workers = 1;
};

struct RestartResult {
  std::string name;
  double horizon = 0.0;
  double value = std::numeric_limits<double>::infinity();
  double endpoint_gap = 0.0;
  double interior_violation = 0.0;
  bool feasible = false;
  int iterations = 0;
};

struct QuasipotentialResult {
  double value = std::numeric_limits<double>::infinity();
  ControlPath control;
  StateE terminal;
  TargetKind target = TargetKind::kBoundary;
  ConstraintMode mode = ConstraintMode::kFree;
  double horizon = 0.0;
  double endpoint_gap = 0.0;
  double interior_violation = 0.0;
  bool feasible = false;
  bool at_largest_horizon = false;
  std::vector<RestartResult> restarts;
  double oracle_value = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> horizon_values;  // best value per horizon
};

QuasipotentialResult minimize_quasipotential(const StateE& start, const QuasipotentialTarget& target,
                                             ConstraintMode mode, const SimConfig& cfg,
                                             const QuasipotentialOptions& options);

// Optimizes one horizon from one initial control.
RestartResult optimize_control(const StateE& start, const QuasipotentialTarget& target,
                               ConstraintMode mode, const SkeletonProblem& problem,
                               const QuasipotentialOptions& options, ControlPath* control,
                               StateE* terminal);

struct RegularityCell {
  double rho = 0.0;
  double delta = 0.0;
  double value = std::numeric_limits<double>::infinity();     // raw optimizer value
  double envelope = std::numeric_limits<double>::infinity();  // min over smaller sets
  double stay_in_d_value = std::numeric_limits<double>::infinity();
};

struct RegularityTable {
  double base_value = 0.0;
  std::vector<RegularityCell> cells;
};

// V(B_E(z*, rho), B_E(N, delta)) for N a finite set of boundary points,
// starting from n_starts points on the sphere of radius rho.
RegularityTable inner_regularity_probe(const std::vector<StateE>& targets, const StateE& zstar,
                                       double base_value, const std::vector<double>& rhos,
                                       const std::vector<double>& deltas, const DomainSpec& domain,
                                       const SimConfig& cfg, const QuasipotentialOptions& options,
                                       int n_starts = 2);

}  // namespace wavemeta
