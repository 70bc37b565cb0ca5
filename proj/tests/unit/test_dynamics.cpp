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
#include <sstream>

#include "generators.hpp"
#include "wavemeta/domain.hpp"
#include "wavemeta/dynamics.hpp"
#include "wavemeta/error.hpp"
#include "wavemeta/semigroup.hpp"
#include "wavemeta/stability.hpp"

namespace wavemeta {
namespace {

using testing::Gen;
using testing::kPi;
using testing::unit;

SimConfig config(double length, int modes, std::vector<double> drift, double alpha = 1.0, double dt = 0.0) {
  SimConfig c;
  c.grid = make_grid(length, modes);
  c.alpha = alpha;
  c.drift = PolynomialDrift(std::move(drift));
  c.dt = dt;
  return c;
}

TEST(SimConfig, DefaultStep) {
  const SimConfig c = config(kPi / 2, 128, {0, 1, 0, -1});
  EXPECT_NEAR(c.step(), 0.1 / std::sqrt(c.grid->eigenvalue(128)), 1e-15);
}

TEST(SimConfig, RejectsNegativeEpsilon) {
  SimConfig c = config(1.0, 8, {0.0});
  c.epsilon = -1.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Stepper, FreeDriftIsExactSemigroup) {
  const SimConfig c = config(1.3, 16, {0.0}, 0.7, 0.01);
  const Stepper s(c);
  Gen gen(1);
  const StateE z = gen.state(c.grid, 16);
  EXPECT_LT(e_distance(s.step_deterministic(z), apply_semigroup(z, 0.7, 0.01)), 1e-13);
}

TEST(Stepper, EquilibriumIsFixed) {
  SimConfig c = config(2.0 * kPi, 32, {0, 1, 0, -1});
  const EquilibriumResult eq = solve_equilibrium(c.grid, c.drift, unit(32, 1, 0.5 * std::sqrt(kPi)));
  ASSERT_LT(eq.residual, 1e-10);
  ASSERT_GT(eq.xstar.norm(), 0.1);
  for (Scheme scheme : {Scheme::kExponentialEuler, Scheme::kExponentialMidpoint}) {
    c.scheme = scheme;
    const Stepper s(c);
    const StateE z(c.grid, eq.xstar, Vec::Zero(32));
    EXPECT_LT(e_distance(s.step_deterministic(z), z), 1e-10);
  }
}

// Self-convergence of the midpoint variant against a dt/16 reference.
TEST(Stepper, MidpointSecondOrder) {
  SimConfig c = config(kPi / 2, 32, {0, 1, 0, -1}, 1.0, 0.05);
  c.scheme = Scheme::kExponentialMidpoint;
  const Stepper s(c);
  const StateE z0(c.grid, unit(32, 1, 0.8) + unit(32, 2, 0.3), unit(32, 1, 0.5));
  const double horizon = 1.0;
  auto run = [&](int level) {
    StateE z = z0;
    const int n = static_cast<int>(std::lround(horizon / (c.dt / (1 << level))));
    for (int i = 0; i < n; ++i) z = s.advance(z, level, nullptr, nullptr);
    return z;
  };
  const StateE ref = run(4);
  const double e0 = e_distance(run(0), ref);
  const double e1 = e_distance(run(1), ref);
  EXPECT_GE(std::log2(e0 / e1), 1.9) << "errors " << e0 << " " << e1;
}

TEST(Stepper, ZeroControlIsDeterministic) {
  const SimConfig c = config(kPi / 2, 16, {0, 1, 0, -1});
  const Stepper s(c);
  Gen gen(2);
  const StateE z = gen.state(c.grid, 16, 0.3);
  EXPECT_EQ(e_distance(s.step_skeleton(z, Vec::Zero(16)), s.step_deterministic(z)), 0.0);
}

// Constant control h = e_1 against per-mode quadrature of the propagator.
TEST(Stepper, ConstantControlMatchesDuhamel) {
  const SimConfig c = config(kPi, 8, {0.0}, 1.0, 0.01);
  const Stepper s(c);
  StateE z(c.grid);
  const double horizon = 2.0;
  for (int i = 0; i < 200; ++i) z = s.step_skeleton(z, unit(8, 1));
  const int n = 20000;
  double iu = 0.0;
  double iv = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const ModePropagator m = stiffness_propagator(1.0, 1.0, horizon - horizon * i / n);
    iu += w * m.m12;
    iv += w * m.m22;
  }
  iu *= horizon / n / 3.0;
  iv *= horizon / n / 3.0;
  EXPECT_NEAR(z.u()[0], iu, 1e-6);
  EXPECT_NEAR(z.v()[0], iv, 1e-6);
  EXPECT_LT(z.u().tail(7).norm() + z.v().tail(7).norm(), 1e-14);
}

// The controlled deviation grows monotonically and sublinearly through the origin.
TEST(Stepper, ControlToStateBound) {
  const SimConfig c = config(kPi / 2, 16, {0, 1, 0, -1}, 1.0, 0.01);
  const Stepper s(c);
  Gen gen(3);
  const Vec h = gen.band_limited(16, 4);
  double prev = 0.0;
  std::vector<double> dev;
  for (double scale : {0.01, 0.02, 0.04, 0.08}) {
    StateE a(c.grid);
    StateE b(c.grid);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      a = s.step_skeleton(a, h * scale);
      b = s.step_deterministic(b);
      worst = std::max(worst, e_distance(a, b));
    }
    EXPECT_GT(worst, prev);
    prev = worst;
    dev.push_back(worst / scale);
  }
  EXPECT_NEAR(dev.front(), dev.back(), 0.05 * dev.front());
}

TEST(Noise, IncrementStatistics) {
  const SimConfig c = config(1.0, 4, {0.0}, 1.0, 0.01);
  const Stepper s(c);
  RngStream rng(99, 0);
  const int n = 100000;
  Vec mean = Vec::Zero(4);
  Mat second = Mat::Zero(4, 4);
  for (int i = 0; i < n; ++i) {
    const Vec dw = sample_noise_increment(s, rng);
    mean += dw;
    second += dw * dw.transpose();
  }
  mean /= n;
  second /= n;
  for (int k = 0; k < 4; ++k) {
    EXPECT_LT(std::abs(mean[k]), 4.0 * std::sqrt(0.01 / n));
    EXPECT_NEAR(second(k, k), 0.01, 0.05 * 0.01);
    for (int j = 0; j < k; ++j) EXPECT_LT(std::abs(second(k, j)) / 0.01, 0.02);
  }
}

TEST(Noise, StreamsAreReproducibleAndDistinct) {
  RngStream a(7, 3);
  RngStream b(7, 3);
  RngStream c(7, 4);
  const Vec x = a.normals(16, 1.0);
  EXPECT_EQ(x, b.normals(16, 1.0));
  EXPECT_NE(x, c.normals(16, 1.0));
}

TEST(Path, NoiselessMatchesStepping) {
  SimConfig c = config(kPi / 2, 16, {0, 1, 0, -1}, 1.0, 0.01);
  c.epsilon = 0.0;
  c.horizon = 1.0;
  const Stepper s(c);
  const StateE z0(c.grid, unit(16, 1, 0.3), Vec::Zero(16));
  PathOptions po;
  po.noise = false;
  const PathResult r = simulate_path(z0, s, po);
  StateE z = z0;
  for (int i = 0; i < 100; ++i) z = s.step_deterministic(z);
  EXPECT_EQ(r.record.termination, Termination::kTimeout);
  EXPECT_LT(e_distance(r.record.state, z), 1e-14);
}

TEST(Path, ImmediateExplosion) {
  SimConfig c = config(kPi / 2, 16, {0, 1, 0, -1});
  c.cutoff = 2.0;
  const Stepper s(c);
  StateE z0(c.grid);
  z0.u()[0] = 5.0;
  const PathResult r = simulate_path(z0, s, PathOptions{});
  EXPECT_EQ(r.record.termination, Termination::kExplosion);
  EXPECT_EQ(r.record.tau, 0.0);
}

TEST(Path, NoiselessAttraction) {
  SimConfig c = config(kPi / 2, 16, {0, 1, 0, -1}, 1.0, 0.01);
  c.horizon = 20.0 / 0.125;
  const Stepper s(c);
  const StateE center(c.grid);
  const DomainSpec ball = DomainSpec::ball(center, 1.0);
  const StateE z0(c.grid, unit(16, 1, 0.2), unit(16, 2, 0.1));
  PathOptions po;
  po.noise = false;
  po.domain = &ball;
  const PathResult r = simulate_path(z0, s, po);
  EXPECT_EQ(r.record.termination, Termination::kTimeout);
  EXPECT_LT(e_distance(r.record.state, center), 1e-3);
}

TEST(Path, LargeNoiseExitsSmallCylinder) {
  SimConfig c = config(kPi / 2, 16, {0, 1, 0, -1}, 1.0, 0.01);
  c.epsilon = 0.5;
  c.horizon = 50.0;
  const Stepper s(c);
  const StateE center(c.grid);
  const DomainSpec cyl = DomainSpec::cylinder(center, 0.05, 0.05);
  int exits = 0;
  for (int p = 0; p < 100; ++p) {
    PathOptions po;
    po.domain = &cyl;
    po.path_index = p;
    exits += simulate_path(center, s, po).record.termination == Termination::kExit;
  }
  EXPECT_GE(exits, 99);
}

// Stationary position variance of an Ornstein-Uhlenbeck mode: 1 / (2 alpha a_k).
TEST(Path, StationaryModeVariance) {
  SimConfig c = config(kPi, 4, {0.0}, 1.0, 0.01);
  c.epsilon = 1.0;
  const Stepper s(c);
  RngStream rng(5, 0);
  StateE z(c.grid);
  for (int i = 0; i < 2000; ++i) z = s.step_stochastic(z, sample_noise_increment(s, rng));
  double acc = 0.0;
  const int n = 400000;
  for (int i = 0; i < n; ++i) {
    z = s.step_stochastic(z, sample_noise_increment(s, rng));
    acc += z.u()[1] * z.u()[1];
  }
  EXPECT_NEAR(acc / n, 1.0 / (2.0 * 4.0), 0.05 / 8.0);
}

TEST(Energy, Values) {
  const GridPtr g = make_grid(kPi, 8);
  EXPECT_EQ(energy_functional(StateE(g), PolynomialDrift({0, 1, 0, -1})), 0.0);
  EXPECT_NEAR(energy_functional(StateE(g, unit(8, 1), Vec::Zero(8)), PolynomialDrift({0.0})), 0.5, 1e-14);
}

// Undamped linear flow conserves energy; with damping the dissipation balances.
TEST(Energy, Identities) {
  SimConfig c = config(kPi / 2, 32, {0.0}, 0.0, 0.01);
  Gen gen(12);
  const StateE z0 = gen.state(c.grid, 16, 0.5);
  {
    const Stepper s(c);
    StateE z = z0;
    const double e0 = energy_functional(z, c.drift);
    double drift = 0.0;
    for (int i = 0; i < 1000; ++i) {
      z = s.step_deterministic(z);
      drift = std::max(drift, std::abs(energy_functional(z, c.drift) - e0));
    }
    EXPECT_LT(drift, 1e-6);
  }
  c.alpha = 1.0;
  c.dt = 0.001;
  const Stepper s(c);
  StateE z = z0;
  const double e0 = energy_functional(z, c.drift);
  double dissipated = 0.0;
  double prev = z.v().squaredNorm();
  for (int i = 0; i < 10000; ++i) {
    z = s.step_deterministic(z);
    const double cur = z.v().squaredNorm();
    dissipated += 0.5 * (prev + cur) * c.dt;
    prev = cur;
  }
  const double balance = energy_functional(z, c.drift) - e0 + c.alpha * dissipated;
  EXPECT_LT(std::abs(balance) / e0, 1e-5);
}

TEST(Moment, ZeroIntegrand) {
  SimConfig c = config(kPi / 2, 16, {0.0});
  c.horizon = 0.5;
  const MomentEstimate m = stochastic_convolution_moment_probe([](double, double) { return 0.0; }, c, 20, 1);
  EXPECT_EQ(m.mean, 0.0);
}

TEST(Moment, QuadraticScalingAndRefinement) {
  SimConfig c = config(kPi / 2, 32, {0.0});
  c.horizon = 1.0;
  auto psi = [](double s) { return [s](double, double) { return s; }; };
  const MomentEstimate base = stochastic_convolution_moment_probe(psi(1.0), c, 2000, 1, 0);
  const MomentEstimate twice = stochastic_convolution_moment_probe(psi(2.0), c, 2000, 2, 0);
  const double ratio = twice.mean / base.mean;
  EXPECT_GE(ratio, 3.6);
  EXPECT_LE(ratio, 4.4);
  SimConfig fine = c;
  fine.grid = make_grid(kPi / 2, 64);
  const MomentEstimate ref = stochastic_convolution_moment_probe(psi(1.0), fine, 2000, 3, 0);
  EXPECT_LT(std::abs(ref.mean / base.mean - 1.0), 0.1);
}

TEST(Snapshot, RoundTrip) {
  const GridPtr g = make_grid(1.25, 12);
  Gen gen(13);
  const StateE z = gen.state(g, 12);
  std::stringstream buf;
  write_state_snapshot(buf, z, 5);
  std::uint16_t flags = 0;
  const StateE back = read_state_snapshot(buf, &flags);
  EXPECT_EQ(flags, 5);
  EXPECT_EQ(back.u(), z.u());
  EXPECT_EQ(back.v(), z.v());
  EXPECT_EQ(back.grid()->length(), 1.25);
}

TEST(Snapshot, RejectsGarbage) {
  std::stringstream buf("not a snapshot");
  EXPECT_THROW(read_state_snapshot(buf), Error);
}

}  // namespace
}  // namespace wavemeta
