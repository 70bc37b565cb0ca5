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

#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "wavemeta/domain.hpp"
#include "wavemeta/dynamics.hpp"
#include "wavemeta/error.hpp"
#include "wavemeta/stability.hpp"

namespace wavemeta {
namespace {

using testing::Gen;
using testing::kPi;
using testing::unit;

const PolynomialDrift kCubic({0, 1, 0, -1});

TEST(Equilibrium, OddDriftFixesZero) {
  const GridPtr g = make_grid(kPi / 2, 32);
  const EquilibriumResult eq = solve_equilibrium(g, kCubic, Vec::Zero(32));
  EXPECT_EQ(eq.xstar.norm(), 0.0);
  EXPECT_EQ(eq.residual, 0.0);
  EXPECT_TRUE(eq.stable);
  EXPECT_NEAR(eq.spectrum.lowest, 3.0, 1e-12);
}

TEST(Equilibrium, CoerciveLinearDrift) {
  Gen gen(1);
  for (double length : {0.5, 2.0, 7.0}) {
    const GridPtr g = make_grid(length, 16);
    const EquilibriumResult eq = solve_equilibrium(g, PolynomialDrift({0, -1}), gen.band_limited(16, 4));
    EXPECT_LT(eq.xstar.norm(), 1e-10);
    EXPECT_TRUE(eq.stable);
  }
}

// Guess 0.5 sin(x / 2), i.e. coefficient 0.5 sqrt(l / 2) on e_1.
TEST(Equilibrium, NontrivialIsStable) {
  const GridPtr g = make_grid(2.0 * kPi, 32);
  const EquilibriumResult eq = solve_equilibrium(g, kCubic, unit(32, 1, 0.5 * std::sqrt(kPi)));
  EXPECT_GT(eq.xstar.norm(), 0.1);
  EXPECT_LT(eq.residual, 1e-10);
  EXPECT_TRUE(eq.stable);
  EXPECT_GT(eq.spectrum.lowest, 0.0);
  EXPECT_LT(equilibrium_residual(*g, kCubic, eq.xstar).norm(), 1e-10);
}

TEST(AttractionRate, Formula) {
  EXPECT_DOUBLE_EQ(attraction_rate(1.0, 3.0), 0.125);
  EXPECT_DOUBLE_EQ(attraction_rate(4.0, 3.0), 3.0 / 16.0);
}

TEST(AttractionRadius, LinearDriftIsUnbounded) {
  const GridPtr g = make_grid(1.0, 8);
  const AttractionCertificate c = attraction_radius(*g, PolynomialDrift({0, -1}), Vec::Zero(8), 1.5, 0.1);
  EXPECT_FALSE(c.finite());
}

// x* = 0, b = u - u^3: R_2 = 0, R_3 = 1/2, rho0 = sqrt(2 / (3 l A_1)).
TEST(AttractionRadius, CubicClosedForm) {
  const double l = kPi / 2;
  const double a1 = 1.5;
  const GridPtr g = make_grid(l, 32);
  const AttractionCertificate c = attraction_radius(*g, kCubic, Vec::Zero(32), a1, 0.125);
  ASSERT_EQ(c.r.size(), 2u);
  EXPECT_NEAR(c.r[0], 0.0, 1e-15);
  EXPECT_NEAR(c.r[1], 0.5, 1e-15);
  const double rho0 = std::sqrt(2.0 / (3.0 * l * a1));
  EXPECT_NEAR(c.rho0, rho0, 1e-12);
  EXPECT_NEAR(c.series_radius, 2.0 * rho0 / (3.0 * a1), 1e-12);
  EXPECT_NEAR(c.rho_example, rho0, 1e-12);
  EXPECT_NEAR(c.a_head[2], l * 0.5 * std::pow(a1, 4), 1e-12);
}

// The A-series inverts zeta / A_1 - l sum R_k zeta^k inside its radius.
TEST(AttractionRadius, SeriesInvertsTheMap) {
  const double l = kPi / 2;
  const double a1 = 1.5;
  const GridPtr g = make_grid(l, 16);
  const AttractionCertificate c = attraction_radius(*g, kCubic, Vec::Zero(16), a1, 0.125);
  for (double frac : {0.2, 0.5, 0.7}) {
    const double rho = frac * c.series_radius;
    const double zeta = c.partial_sums(rho).back();
    EXPECT_NEAR(zeta / a1 - l * 0.5 * zeta * zeta * zeta, rho, 1e-9) << "rho = " << rho;
  }
}

TEST(AttractionRadius, RejectsNonpositivePrefactor) {
  const GridPtr g = make_grid(1.0, 8);
  EXPECT_THROW(attraction_radius(*g, kCubic, Vec::Zero(8), 0.0, 0.1), Error);
}

class UniformAttraction : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg.grid = make_grid(kPi / 2, 16);
    cfg.alpha = 1.0;
    cfg.drift = kCubic;
    cfg.dt = 0.01;
    center = StateE(cfg.grid);
  }
  SimConfig cfg;
  StateE center;
};

TEST_F(UniformAttraction, HalfRadiusBallDecays) {
  const EquilibriumResult eq = solve_equilibrium(cfg.grid, kCubic, Vec::Zero(16));
  const double a1 = linearized_prefactor(cfg.grid, 1.0, eq.spectrum, 0.125, 40.0, 20, 1);
  const AttractionCertificate c = attraction_radius(*cfg.grid, kCubic, eq.xstar, a1, 0.125);
  const DomainSpec ball = DomainSpec::ball(center, 0.5 * c.rho0);
  const AttractionReport r = verify_uniform_attraction(ball, 50, cfg, 0.125, 64.0);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.samples.size(), 50u);
  for (const AttractionSample& s : r.samples) EXPECT_TRUE(s.decays);
}

TEST_F(UniformAttraction, LargeBallCompletes) {
  const DomainSpec ball = DomainSpec::ball(center, 10.0);
  EXPECT_NO_THROW(verify_uniform_attraction(ball, 5, cfg, 0.125, 20.0));
}

TEST_F(UniformAttraction, CenterHasZeroDistance) {
  cfg.horizon = 5.0;
  const Stepper s(cfg);
  PathOptions po;
  po.noise = false;
  const PathResult r = simulate_path(center, s, po);
  EXPECT_EQ(e_distance(r.record.state, center), 0.0);
}

class OrbitMembershipTest : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg.grid = make_grid(kPi / 2, 16);
    cfg.alpha = 1.0;
    cfg.drift = kCubic;
    cfg.dt = 0.005;
    center = StateE(cfg.grid);
  }
  SimConfig cfg;
  StateE center;
};

TEST_F(OrbitMembershipTest, BallPointIsMember) {
  const Stepper back(cfg, true);
  const StateE z(cfg.grid, unit(16, 1, 0.1), Vec::Zero(16));
  const OrbitMembership m = orbit_domain_membership(z, center, 0.4, back, 50.0);
  EXPECT_TRUE(m.member);
  EXPECT_EQ(m.entry_time, 0.0);
}

TEST_F(OrbitMembershipTest, ForwardImageReturns) {
  const Stepper fwd(cfg);
  const Stepper back(cfg, true);
  const StateE z0(cfg.grid, unit(16, 1, 0.15), unit(16, 1, 0.1));
  const double radius = 1.01 * e_norm(z0);
  StateE z = z0;
  for (int i = 0; i < 1000; ++i) z = fwd.step_deterministic(z);
  StateE w = z;
  for (int i = 0; i < 1000; ++i) w = back.step_deterministic(w);
  EXPECT_LT(e_distance(w, z0), 1e-4);
  const OrbitMembership m = orbit_domain_membership(z, center, radius, back, 50.0);
  EXPECT_TRUE(m.member);
}

TEST_F(OrbitMembershipTest, BlowupIsNotMember) {
  const Stepper back(cfg, true);
  StateE z(cfg.grid);
  z.u() = unit(16, 1, 2.0 * cfg.cutoff);
  const OrbitMembership m = orbit_domain_membership(z, center, 0.4, back, 50.0);
  EXPECT_FALSE(m.member);
}

}  // namespace
}  // namespace wavemeta
