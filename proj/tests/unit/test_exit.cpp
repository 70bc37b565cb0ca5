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
#include <functional>
#include <memory>

#include "generators.hpp"
#include "wavemeta/domain.hpp"
#include "wavemeta/dynamics.hpp"
#include "wavemeta/error.hpp"
#include "wavemeta/exit.hpp"
#include "wavemeta/quasipotential.hpp"

namespace wavemeta {
namespace {

using testing::kPi;
using testing::unit;

SimConfig cubic(int modes, double dt) {
  SimConfig c;
  c.grid = make_grid(kPi / 2, modes);
  c.alpha = 1.0;
  c.drift = PolynomialDrift({0, 1, 0, -1});
  c.dt = dt;
  return c;
}

ExitRecord record(double tau, Termination t) {
  ExitRecord r;
  r.tau = tau;
  r.termination = t;
  return r;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

TEST(ExitSummary, TimeoutsCountAtHorizon) {
  std::vector<ExitRecord> rs = {record(1, Termination::kExit), record(2, Termination::kExit),
                                record(3, Termination::kExit), record(4, Termination::kExit),
                                record(10, Termination::kTimeout)};
  const ExitEstimate e = summarize_exit_times(0.5, rs, 10.0, 200, 1);
  EXPECT_EQ(e.exits, 4);
  EXPECT_EQ(e.timeouts, 1);
  EXPECT_DOUBLE_EQ(e.mean_tau, 4.0);
  EXPECT_DOUBLE_EQ(e.median_tau, 3.0);
  EXPECT_DOUBLE_EQ(e.scaled_log_mean, 0.25 * std::log(4.0));
  EXPECT_TRUE(e.censored);
  EXPECT_FALSE(e.all_censored);
  EXPECT_LE(e.band_low, e.scaled_log_mean);
  EXPECT_GE(e.band_high, e.scaled_log_mean);
}

TEST(ExitSummary, MonotoneNeedsStrictIncrease) {
  auto ens = [](double eps, double scaled) {
    ExitEnsemble e;
    e.epsilon = eps;
    e.estimate.scaled_log_mean = scaled;
    return e;
  };
  EXPECT_TRUE(exit_scaling_monotone({ens(0.2, 0.09), ens(0.35, 0.03), ens(0.3, 0.06)}));
  EXPECT_FALSE(exit_scaling_monotone({ens(0.35, 0.03), ens(0.3, 0.03)}));
  EXPECT_FALSE(exit_scaling_monotone({ens(0.35, 0.05), ens(0.3, 0.04)}));
}

TEST(ExitMc, Validation) {
  const SimConfig c = cubic(8, 0.01);
  const DomainSpec d = DomainSpec::cylinder(StateE(c.grid), 0.1, 0.1);
  ExitMcOptions o;
  o.epsilons = {0.3};
  o.n_paths = 0;
  EXPECT_EQ(code_of([&] { run_exit_mc(d.center(), d, c, o); }), ErrorCode::kInvalidArgument);
  o.n_paths = 2;
  o.epsilons.clear();
  EXPECT_EQ(code_of([&] { run_exit_mc(d.center(), d, c, o); }), ErrorCode::kInvalidArgument);
  o.epsilons = {0.3};
  const StateE outside(c.grid, unit(8, 1, 1.0), Vec::Zero(8));
  EXPECT_EQ(code_of([&] { run_exit_mc(outside, d, c, o); }), ErrorCode::kPrecondition);
}

TEST(ExitMc, NoiselessNeverExits) {
  SimConfig c = cubic(8, 0.01);
  c.horizon = 20.0;
  const DomainSpec d = DomainSpec::cylinder(StateE(c.grid), 0.1, 0.1);
  ExitMcOptions o;
  o.epsilons = {0.0};
  o.n_paths = 10;
  const std::vector<ExitEnsemble> r = run_exit_mc(d.center(), d, c, o);
  ASSERT_EQ(r.size(), 1u);
  ASSERT_EQ(r[0].records.size(), 1u);
  EXPECT_EQ(r[0].records[0].termination, Termination::kTimeout);
}

TEST(ExitMc, LargeNoiseExits) {
  SimConfig c = cubic(16, 0.01);
  c.horizon = 50.0;
  const DomainSpec d = DomainSpec::cylinder(StateE(c.grid), 0.05, 0.05);
  ExitMcOptions o;
  o.epsilons = {0.5};
  o.n_paths = 100;
  o.bootstrap = 100;
  const std::vector<ExitEnsemble> r = run_exit_mc(d.center(), d, c, o);
  EXPECT_GE(r[0].estimate.exits, 99);
}

TEST(ExitMc, WorkerCountDoesNotChangeResults) {
  SimConfig c = cubic(16, 0.01);
  c.horizon = 50.0;
  const DomainSpec d = DomainSpec::cylinder(StateE(c.grid), 0.1, 0.3);
  ExitMcOptions o;
  o.epsilons = {0.4, 0.3};
  o.n_paths = 12;
  o.bootstrap = 50;
  o.workers = 1;
  const std::vector<ExitEnsemble> a = run_exit_mc(d.center(), d, c, o);
  o.workers = 4;
  const std::vector<ExitEnsemble> b = run_exit_mc(d.center(), d, c, o);
  for (std::size_t e = 0; e < a.size(); ++e) {
    EXPECT_EQ(a[e].estimate.mean_tau, b[e].estimate.mean_tau);
    EXPECT_EQ(a[e].estimate.band_low, b[e].estimate.band_low);
    for (std::size_t i = 0; i < a[e].records.size(); ++i) {
      EXPECT_EQ(a[e].records[i].tau, b[e].records[i].tau);
      EXPECT_EQ(a[e].records[i].state.u(), b[e].records[i].state.u());
    }
  }
}

// Thin position constraint: exits bind position and split evenly by sign.
TEST(ExitPlace, PositionBindingAndSignSymmetry) {
  SimConfig c = cubic(16, 0.01);
  c.horizon = 200.0;
  const DomainSpec d = DomainSpec::cylinder(StateE(c.grid), 0.1, 5.0);
  ExitMcOptions o;
  o.epsilons = {0.4};
  o.n_paths = 200;
  o.bootstrap = 10;
  const std::vector<ExitEnsemble> r = run_exit_mc(d.center(), d, c, o);
  const ExitPlaceSummary h = exit_place_histogram(r[0], d, {}, 0.1);
  ASSERT_GT(h.exits, 150);
  EXPECT_EQ(h.position_binding, h.exits);
  const double half = 0.5 * h.exits;
  EXPECT_LT(std::abs(h.positive_sign - half), 3.0 * std::sqrt(h.exits * 0.25));
  int total = 0;
  for (int n : h.location_counts) total += n;
  EXPECT_EQ(total, h.exits);
}

TEST(ExitPlace, FeatureOfPinnedPoint) {
  const SimConfig c = cubic(16, 0.01);
  const DomainSpec d = DomainSpec::cylinder(StateE(c.grid), 0.2, 0.5);
  const BoundaryMinimizer bm = min_energy_boundary_point(d, c.drift);
  const std::vector<StateE> orbit = minimizer_orbit(bm.point, d, c.drift);
  ASSERT_GE(orbit.size(), 2u);
  for (const StateE& y : orbit) {
    EXPECT_NEAR(d.level(y), d.level(bm.point), 1e-9);
    EXPECT_NEAR(energy_functional(y, c.drift), energy_functional(bm.point, c.drift), 1e-9);
  }
  const ExitFeature f = exit_feature(bm.point, d, orbit);
  EXPECT_EQ(f.binding, Binding::kPosition);
  EXPECT_NEAR(f.location, kPi / 4, 0.1);
  EXPECT_EQ(f.minimizer_distance, 0.0);
  const ExitFeature g = exit_feature(orbit.back(), d, orbit);
  EXPECT_EQ(g.sign, -f.sign);
}

TEST(Donut, GeometryIsChecked) {
  const SimConfig c = cubic(8, 0.01);
  const DomainSpec d = DomainSpec::cylinder(StateE(c.grid), 0.2, 0.2);
  EXPECT_EQ(code_of([&] { check_donut_geometry(0.0, 0.1, d); }), ErrorCode::kConfiguration);
  EXPECT_EQ(code_of([&] { check_donut_geometry(0.1, 0.05, d); }), ErrorCode::kConfiguration);
  EXPECT_EQ(code_of([&] { check_donut_geometry(0.05, 0.5, d); }), ErrorCode::kConfiguration);
  EXPECT_NO_THROW(check_donut_geometry(0.02, 0.04, d));
}

TEST(Donut, NoiselessPathHitsSmallBallFirst) {
  SimConfig c = cubic(16, 0.01);
  c.horizon = 40.0;
  const DomainSpec d = DomainSpec::cylinder(StateE(c.grid), 0.3, 0.6);
  const StateE z0(c.grid, unit(16, 1, 0.1), Vec::Zero(16));
  ExitMcOptions o;
  o.epsilons = {0.0};
  o.n_paths = 1;
  o.donut_radii = {0.02};
  const std::vector<ExitEnsemble> r = run_exit_mc(z0, d, c, o);
  EXPECT_NE(r[0].records[0].termination, Termination::kExit);
  const DonutStats& s = r[0].records[0].donut.at(0);
  EXPECT_GE(s.small_hits, 1);
  EXPECT_EQ(s.boundary_hits, 0);
}

TEST(Donut, AlternationAndSmallFirstTrend) {
  SimConfig c = cubic(16, 0.01);
  c.horizon = 500.0;
  const DomainSpec d = DomainSpec::cylinder(StateE(c.grid), 0.15, 0.3);
  ExitMcOptions o;
  o.epsilons = {0.45, 0.3};
  o.n_paths = 60;
  o.bootstrap = 10;
  o.donut_radii = {0.03};
  const std::vector<ExitEnsemble> r = run_exit_mc(d.center(), d, c, o);
  const DonutSummary hi = donut_chain_stats(r[0], 0.03, d);
  const DonutSummary lo = donut_chain_stats(r[1], 0.03, d);
  EXPECT_TRUE(hi.alternation_ok);
  EXPECT_TRUE(lo.alternation_ok);
  EXPECT_GE(lo.small_first_probability, hi.small_first_probability);
  EXPECT_EQ(code_of([&] { donut_chain_stats(r[0], 0.07, d); }), ErrorCode::kInvalidArgument);
}

class Classifier : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg = cubic(32, 0.01);
    cylinder = std::make_unique<DomainSpec>(DomainSpec::cylinder(StateE(cfg.grid), 0.5, 1.0));
    ball = std::make_unique<DomainSpec>(DomainSpec::ball(StateE(cfg.grid), 0.5));
  }
  SimConfig cfg;
  ClassifierOptions opt;
  std::unique_ptr<DomainSpec> cylinder;
  std::unique_ptr<DomainSpec> ball;
};

TEST_F(Classifier, OutwardPointExitsUncontrolled) {
  const StateE z = bump_boundary_point(*cylinder, 16, 0.3);
  EXPECT_NEAR(cylinder->level(z), 0.0, 1e-12);
  const BoundaryClassification r = classify_boundary_point(z, *cylinder, cfg, opt);
  EXPECT_EQ(r.verdict, Verdict::kRegularOut);
  EXPECT_TRUE(r.witness.exited);
  EXPECT_EQ(r.witness.energy, 0.0);
  EXPECT_GT(r.pairing, 0.0);
}

TEST_F(Classifier, InwardPointSurvivesBattery) {
  const StateE z = bump_boundary_point(*cylinder, 16, -0.3);
  const BoundaryClassification r = classify_boundary_point(z, *cylinder, cfg, opt);
  EXPECT_EQ(r.verdict, Verdict::kIrregularIn);
  EXPECT_EQ(r.battery.trials, 50);
  EXPECT_EQ(r.battery.survived, 50);
  EXPECT_LE(r.battery.max_level, 0.0);
}

TEST_F(Classifier, PerpendicularWitnessWithinBound) {
  const StateE z = bump_boundary_point(*cylinder, 16, 0.0);
  const BoundaryClassification r = classify_boundary_point(z, *cylinder, cfg, opt);
  EXPECT_EQ(r.verdict, Verdict::kRegularPerp);
  EXPECT_TRUE(r.witness.exited);
  EXPECT_LE(r.witness.energy, 0.9 * r.witness.bound);
  EXPECT_LT(r.witness.energy, opt.energy_budget);
}

TEST_F(Classifier, FlatWitnessWithinBound) {
  const StateE z = bump_boundary_point(*ball, 16, 0.0, true);
  const BoundaryClassification r = classify_boundary_point(z, *ball, cfg, opt);
  EXPECT_EQ(r.verdict, Verdict::kRegularFlat);
  EXPECT_TRUE(r.witness.exited);
  EXPECT_LE(r.witness.energy, 0.9 * r.witness.bound);
  EXPECT_LT(r.witness.energy, opt.energy_budget);
}

// Halving the energy budget at most halves the horizon and still exits.
TEST_F(Classifier, BudgetHalvingProperty) {
  struct Case {
    const DomainSpec* domain;
    StateE z;
    Verdict kind;
  };
  std::vector<Case> cases;
  for (int peak : {12, 16, 20}) {
    cases.push_back({cylinder.get(), bump_boundary_point(*cylinder, peak, 0.0), Verdict::kRegularPerp});
    cases.push_back({ball.get(), bump_boundary_point(*ball, peak, 0.0, true), Verdict::kRegularFlat});
  }
  for (const Case& c : cases) {
    double prev_horizon = 0.0;
    for (double budget : {0.1, 0.05, 0.025}) {
      const EscapeControl w = construct_escape_control(c.z, c.kind, budget, *c.domain, cfg, opt);
      EXPECT_TRUE(w.exited);
      EXPECT_LT(w.energy, budget);
      if (prev_horizon > 0.0) {
        EXPECT_GE(w.horizon, 0.5 * prev_horizon * (1.0 - 1e-12));
      }
      prev_horizon = w.horizon;
    }
  }
}

TEST_F(Classifier, InteriorPointIsRejected) {
  EXPECT_EQ(code_of([&] { classify_boundary_point(cylinder->center(), *cylinder, cfg, opt); }),
            ErrorCode::kPrecondition);
  EXPECT_EQ(code_of([&] {
              construct_escape_control(cylinder->center(), Verdict::kRegularPerp, 0.1, *cylinder, cfg, opt);
            }),
            ErrorCode::kPrecondition);
}

TEST(BoundarySample, StratifiedOnBoundary) {
  const SimConfig c = cubic(16, 0.01);
  const DomainSpec d = DomainSpec::cylinder(StateE(c.grid), 0.2, 0.2);
  const std::vector<RateSample> s = stratified_boundary_sample(d, c.drift, 8);
  ASSERT_EQ(s.size(), 8u);
  int position = 0;
  int positive = 0;
  for (const RateSample& r : s) {
    EXPECT_NEAR(d.level(r.point), 0.0, 1e-9);
    position += r.binding == Binding::kPosition;
    positive += r.sign > 0;
  }
  EXPECT_EQ(position, 4);
  EXPECT_EQ(positive, 4);
  EXPECT_EQ(code_of([&] { stratified_boundary_sample(d, c.drift, 6); }), ErrorCode::kInvalidArgument);
}

TEST(ExitRates, NonnegativeAndMirrorSymmetric) {
  const SimConfig c = cubic(8, 0.0);
  const DomainSpec d = DomainSpec::cylinder(StateE(c.grid), 0.2, 0.2);
  QuasipotentialOptions o;
  o.horizons = {4.0, 8.0};
  o.steps = 32;
  const RateTable t = exit_rate_functions(d, c, o, 8);
  const double slack = 0.03 * t.v_boundary;
  EXPECT_GE(t.min_j1, -slack);
  EXPECT_GE(t.min_j2, -slack);
  // Samples come in sign pairs that mirror each other under u -> -u.
  for (const RateSample& a : t.samples) {
    for (const RateSample& b : t.samples) {
      if (a.binding == b.binding && a.sign == -b.sign && std::abs(a.location - b.location) < 1e-12) {
        EXPECT_NEAR(a.v_closure, b.v_closure, 0.05 * std::max(a.v_closure, b.v_closure));
      }
    }
  }
}

}  // namespace
}  // namespace wavemeta
