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
#include <random>

#include "wavemeta/dynamics.hpp"
#include "wavemeta/function_space.hpp"

namespace wavemeta {

enum class DomainKind { kCylinder, kBallE, kOrbitUnion };
const char* domain_kind_name(DomainKind kind);

enum class Binding { kPosition, kVelocity };
const char* binding_name(Binding binding);

// Exit set D around z* = (x*, 0). The level function is negative inside and
// vanishes on the boundary:
//   cylinder     max(|u - x*|_inf / R, |v|_{C^-1} / rho) - 1
//   ball         sqrt(|u - x*|_inf^2 + |v|_{C^-1}^2) / R - 1
//   orbit union  min over the backward orbit of |Z(-t) - z*|_E / r - 1
class DomainSpec : public Region {
 public:
  static DomainSpec cylinder(StateE center, double radius, double velocity_radius);
  static DomainSpec ball(StateE center, double radius);
  // Union of forward orbits of B_E(center, radius) under the noiseless
  // flow of cfg; membership by backward integration up to horizon.
  static DomainSpec orbit_union(StateE center, double radius, const SimConfig& flow,
                                double horizon, double escape_factor = 8.0);

  DomainKind kind() const { return kind_; }
  const StateE& center() const { return center_; }
  double radius() const { return radius_; }
  double velocity_radius() const { return velocity_radius_; }
  double horizon() const { return horizon_; }
  double escape_factor() const { return escape_factor_; }
  const Stepper* backward_stepper() const { return backward_.get(); }

  bool contains(const StateE& z) const override { return level(z) < 0.0; }
  double level(const StateE& z) const;
  // Gradient of the level function in the coefficients (a subgradient at
  // kinks of the sup norms; finite differences for orbit unions whose
  // backward orbit attains its minimum after t = 0).
  StateE level_gradient(const StateE& z) const;

  // Position and velocity parts |u - x*|_inf and |v|_{C^-1}.
  double position_part(const StateE& z) const;
  double velocity_part(const StateE& z) const;
  Binding binding(const StateE& z) const;

  // Radius of the largest E-ball around z* contained in D.
  double inner_radius() const;
  // Gauge of the generating set: D = {gauge < 1} for cylinders and balls,
  // and the generating ball for orbit unions.
  double gauge(const StateE& z) const;
  // Random state with gauge uniform in [0, fraction).
  StateE sample(std::mt19937_64& rng, double fraction) const;

 private:
  DomainKind kind_ = DomainKind::kCylinder;
  StateE center_;
  double radius_ = 0.0;
  double velocity_radius_ = 0.0;
  double horizon_ = 0.0;
  double escape_factor_ = 8.0;
  std::shared_ptr<const Stepper> backward_;
};

}  // namespace wavemeta
