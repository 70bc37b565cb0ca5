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

#include "wavemeta/domain.hpp"

#include <cmath>

#include "wavemeta/error.hpp"
#include "wavemeta/semigroup.hpp"
#include "wavemeta/stability.hpp"

namespace wavemeta {

const char* domain_kind_name(DomainKind kind) {
  switch (kind) {
    case DomainKind::kCylinder: return "cylinder";
    case DomainKind::kBallE: return "ball";
    case DomainKind::kOrbitUnion: return "orbit_union";
  }
  return "unknown";
}

const char* binding_name(Binding binding) {
  return binding == Binding::kPosition ? "position" : "velocity";
}

DomainSpec DomainSpec::cylinder(StateE center, double radius, double velocity_radius) {
  if (!(radius > 0.0) || !(velocity_radius > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "cylinder radii must be positive");
  }
  DomainSpec d;
  d.kind_ = DomainKind::kCylinder;
  d.center_ = std::move(center);
  d.radius_ = radius;
  d.velocity_radius_ = velocity_radius;
  return d;
}

DomainSpec DomainSpec::ball(StateE center, double radius) {
  if (!(radius > 0.0)) throw Error(ErrorCode::kInvalidArgument, "ball radius must be positive");
  DomainSpec d;
  d.kind_ = DomainKind::kBallE;
  d.center_ = std::move(center);
  d.radius_ = radius;
  return d;
}

DomainSpec DomainSpec::orbit_union(StateE center, double radius, const SimConfig& flow,
                                   double horizon, double escape_factor) {
  if (!(radius > 0.0) || !(horizon > 0.0) || !(escape_factor > 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "orbit union needs radius, horizon and escape factor > 1");
  }
  SimConfig back = flow;
  back.epsilon = 0.0;
  DomainSpec d;
  d.kind_ = DomainKind::kOrbitUnion;
  d.center_ = std::move(center);
  d.radius_ = radius;
  d.horizon_ = horizon;
  d.escape_factor_ = escape_factor;
  d.backward_ = std::make_shared<const Stepper>(back, true);
  return d;
}

double DomainSpec::position_part(const StateE& z) const {
  return sup_norm(*z.grid(), z.u() - center_.u());
}

double DomainSpec::velocity_part(const StateE& z) const {
  return cminus_norm(*z.grid(), z.v() - center_.v());
}

Binding DomainSpec::binding(const StateE& z) const {
  const double p = position_part(z);
  const double q = velocity_part(z);
  switch (kind_) {
    case DomainKind::kCylinder:
      return p / radius_ >= q / velocity_radius_ ? Binding::kPosition : Binding::kVelocity;
    default:
      return p >= q ? Binding::kPosition : Binding::kVelocity;
  }
}

double DomainSpec::level(const StateE& z) const {
  switch (kind_) {
    case DomainKind::kCylinder:
      return std::max(position_part(z) / radius_, velocity_part(z) / velocity_radius_) - 1.0;
    case DomainKind::kBallE: {
      const double p = position_part(z);
      const double q = velocity_part(z);
      return std::sqrt(p * p + q * q) / radius_ - 1.0;
    }
    case DomainKind::kOrbitUnion: {
      const OrbitMembership m =
          orbit_domain_membership(z, center_, radius_, *backward_, horizon_, escape_factor_);
      if (m.blowup) return std::max(m.min_ratio - 1.0, 0.0);
      return m.min_ratio - 1.0;
    }
  }
  return 0.0;
}

StateE DomainSpec::level_gradient(const StateE& z) const {
  const SpectralGrid& g = *z.grid();
  const Vec du = z.u() - center_.u();
  const Vec dv = z.v() - center_.v();
  StateE out(z.grid());
  switch (kind_) {
    case DomainKind::kCylinder: {
      const double p = position_part(z) / radius_;
      const double q = velocity_part(z) / velocity_radius_;
      if (p >= q) {
        out.u() = sup_norm_subgradient(g, du) / radius_;
      } else {
        out.v() = cminus_norm_subgradient(g, dv) / velocity_radius_;
      }
      return out;
    }
    case DomainKind::kBallE: {
      const double p = position_part(z);
      const double q = velocity_part(z);
      const double n = std::sqrt(p * p + q * q);
      if (n <= 0.0) return out;
      out.u() = sup_norm_subgradient(g, du) * (p / (n * radius_));
      out.v() = cminus_norm_subgradient(g, dv) * (q / (n * radius_));
      return out;
    }
    case DomainKind::kOrbitUnion: {
      const OrbitMembership m =
          orbit_domain_membership(z, center_, radius_, *backward_, horizon_, escape_factor_);
      if (!m.blowup && m.argmin_time == 0.0) {
        out.u() = sup_norm_subgradient(g, du) / radius_;
        out.v() = cminus_norm_subgradient(g, dv) / radius_;
        return out;
      }
      const double h = 1e-6 * std::max(1.0, e_norm(z));
      for (int i = 0; i < 2 * g.modes(); ++i) {
        StateE plus = z;
        StateE minus = z;
        Vec& cp = i < g.modes() ? plus.u() : plus.v();
        Vec& cm = i < g.modes() ? minus.u() : minus.v();
        const int k = i % g.modes();
        cp[k] += h;
        cm[k] -= h;
        const double d = (level(plus) - level(minus)) / (2.0 * h);
        (i < g.modes() ? out.u() : out.v())[k] = d;
      }
      return out;
    }
  }
  return out;
}

double DomainSpec::inner_radius() const {
  switch (kind_) {
    case DomainKind::kCylinder: return std::min(radius_, velocity_radius_);
    default: return radius_;
  }
}

double DomainSpec::gauge(const StateE& z) const {
  switch (kind_) {
    case DomainKind::kCylinder:
    case DomainKind::kBallE:
      return level(z) + 1.0;
    case DomainKind::kOrbitUnion:
      return e_distance(z, center_) / radius_;
  }
  return 0.0;
}

StateE DomainSpec::sample(std::mt19937_64& rng, double fraction) const {
  const StateE direction = random_unit_state(center_.grid(), rng);
  std::uniform_real_distribution<double> uniform(0.0, fraction);
  const double s = uniform(rng);
  const double g = gauge(center_ + direction);
  return center_ + direction * (s / g);
}

}  // namespace wavemeta
