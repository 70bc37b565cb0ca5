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
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "wavemeta/coefficients.hpp"
#include "wavemeta/function_space.hpp"

namespace wavemeta {

enum class Scheme { kExponentialEuler, kExponentialMidpoint };

struct SimConfig {
  GridPtr grid;
  double alpha = 1.0;
  double dt = 0.0;  // 0 selects the default 0.1 / sqrt(a_K)
  PolynomialDrift drift;
  NoiseCoefficient noise;
  double epsilon = 0.0;
  double cutoff = 10.0;  // n_D
  double horizon = 10.0;
  std::uint64_t seed = 0;
  Scheme scheme = Scheme::kExponentialEuler;

  static double default_dt(const SpectralGrid& grid);
  double step() const;
  void validate() const;
};

// Seeded stream owned by one path: derived from (master seed, path index);
// draws are consumed in step order.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t path_index);

  double normal() {
    ++draws_;
    return normal_(engine_);
  }
  Vec normals(int n, double scale);
  std::uint64_t draws() const { return draws_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
  std::uint64_t draws_ = 0;
};

// Membership predicate of an exit set; implemented by DomainSpec.
class Region {
 public:
  virtual ~Region() = default;
  virtual bool contains(const StateE& z) const = 0;
};

// Exponential integrator for the localized equation. The linear drift
// coefficient b'(0) is absorbed into the exactly integrated linear part;
// the remainder r_n(x) = b_n(x) - b'(0) x is treated explicitly.
class Stepper {
 public:
  // Per-mode coefficients of one step of size h (negative for backward flow).
  struct ModeStep {
    double p11, p12, p21, p22;  // P(h)
    double w1u, w1v;            // int_0^h P(h - s) e2 ds
    double w2u, w2v;            // int_0^h P(h - s) e2 (s / h) ds
    double q11, q12, q21, q22;  // P(h / 2)
    double h1u, h1v;            // int_0^{h/2} P(h/2 - s) e2 ds
    double l11, l21, l22;       // Cholesky factor of the step covariance
  };

  // With backward = true every step integrates the flow over -dt.
  explicit Stepper(SimConfig cfg, bool backward = false);

  bool backward() const { return backward_; }
  const std::vector<ModeStep>& plan(int level) const { return plans_.at(level); }

  const SimConfig& config() const { return cfg_; }
  const SpectralGrid& grid() const { return *cfg_.grid; }
  const PolynomialDrift& drift() const { return drift_; }
  const NoiseCoefficient& noise() const { return noise_; }
  double dt() const { return dt_; }
  double shift() const { return shift_; }

  StateE step_deterministic(const StateE& z) const;
  StateE step_skeleton(const StateE& z, const Vec& control) const;
  StateE step_stochastic(const StateE& z, const Vec& increment) const;
  // Exact additive-noise linear step (sigma constant, b = 0); needs 2K
  // standard normals.
  StateE step_exact_linear(const StateE& z, const Vec& standard_normals) const;

  // One step of size dt / 2^level with optional control and noise increment.
  StateE advance(const StateE& z, int level, const Vec* control, const Vec* increment) const;

  // Projected remainder r_n(u) and projected sigma_n(u) f.
  Vec remainder_forcing(const Vec& u) const;
  Vec sigma_product(const Vec& u, const Vec& field) const;

  static constexpr int kLevels = 5;

 private:
  std::vector<ModeStep> build_plan(double h) const;

  SimConfig cfg_;
  PolynomialDrift drift_;
  NoiseCoefficient noise_;
  double dt_ = 0.0;
  double shift_ = 0.0;
  bool backward_ = false;
  std::vector<std::vector<ModeStep>> plans_;
};

Vec sample_noise_increment(const Stepper& stepper, RngStream& rng);

// E(z) = 1/2 |v|_H^2 + 1/2 |u_x|_H^2 - int beta_n(u).
double energy_functional(const StateE& z, const PolynomialDrift& drift);

enum class Termination { kExit, kExplosion, kTimeout };
const char* termination_name(Termination t);

// Donut chain bookkeeping for one small radius rho: tau_n are hits of the
// closed ball gamma_rho (or of the boundary), theta_n hits of the sphere
// Gamma_rho of radius outer.
struct DonutStats {
  double rho = 0.0;
  double outer = 0.0;
  int small_hits = 0;       // tau_n ending in gamma_rho
  int boundary_hits = 0;    // tau_n ending on the boundary
  int outer_hits = 0;       // theta_n, n >= 1
  int chain_small = 0;      // tau_n, n >= 1, ending in gamma_rho
  int chain_total = 0;      // tau_n, n >= 1
  std::vector<double> theta;  // first recorded theta_n (n >= 1)
  std::vector<double> tau;    // first recorded tau_n (n >= 0)
};

struct ExitRecord {
  double tau = 0.0;
  StateE state;  // exit state, or final state on explosion/timeout
  Termination termination = Termination::kTimeout;
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;
  double max_sup_norm = 0.0;
  bool crossed_cutoff = false;
  std::vector<DonutStats> donut;
};

struct TrajectoryRow {
  double t;
  double sup_norm_u;
  double cminus_norm_v;
  double e_norm;
  double energy;
};

struct PathOptions {
  const Region* domain = nullptr;
  bool noise = true;
  int record_every = 0;
  bool store_states = false;
  std::vector<double> donut_radii;
  double donut_outer_factor = 2.0;
  const StateE* reference = nullptr;
  std::uint64_t path_index = 0;
  int bisection_levels = 4;
};

struct PathResult {
  ExitRecord record;
  std::vector<TrajectoryRow> rows;
  std::vector<StateE> states;
  std::vector<double> state_times;
};

PathResult simulate_path(const StateE& z0, const Stepper& stepper, const PathOptions& options);

// Monte Carlo estimate of E sup_t |Gamma_Psi(t)|_E^2 for the linear
// stochastic convolution driven by Psi(t, x) dW.
struct MomentEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  int samples = 0;
};
MomentEstimate stochastic_convolution_moment_probe(
    const std::function<double(double, double)>& psi, const SimConfig& cfg, int n_mc,
    std::uint64_t seed, int workers = 1);

// Binary snapshot: 16-byte header (2-byte magic "WM", 2-byte flags,
// 4-byte K, 8-byte l; little endian) then K position and K velocity
// coefficients as IEEE-754 doubles.
void write_state_snapshot(std::ostream& out, const StateE& z, std::uint16_t flags = 0);
StateE read_state_snapshot(std::istream& in, std::uint16_t* flags = nullptr);

}  // namespace wavemeta
