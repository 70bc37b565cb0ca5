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

#include "wavemeta/quasipotential.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "wavemeta/error.hpp"
#include "wavemeta/parallel.hpp"
#include "wavemeta/semigroup.hpp"

namespace wavemeta {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SimConfig skeleton_config(const SimConfig& cfg, double dt) {
  SimConfig out = cfg;
  out.dt = dt;
  out.epsilon = 0.0;
  out.scheme = Scheme::kExponentialEuler;
  return out;
}

int auto_substeps(const SimConfig& cfg, double control_dt) {
  return std::max(1, static_cast<int>(std::ceil(control_dt / cfg.step() - 1e-9)));
}

Vec flatten(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

Mat unflatten(const Vec& x, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Mat>(x.data(), rows, cols);
}

// Per-mode min-norm steering of the discrete interval maps from 0 to y.
Mat gramian_control(const std::vector<Eigen::Matrix2d>& a, const std::vector<Eigen::Vector2d>& b,
                    int steps, const StateE& y) {
  const int n = static_cast<int>(a.size());
  Mat out = Mat::Zero(n, steps);
  for (int k = 0; k < n; ++k) {
    std::vector<Eigen::Vector2d> cols(steps);
    Eigen::Vector2d acc = b[k];
    for (int i = steps - 1; i >= 0; --i) {
      cols[i] = acc;
      acc = a[k] * acc;
    }
    Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
    for (const auto& c : cols) g += c * c.transpose();
    const Eigen::Vector2d target(y.u()[k], y.v()[k]);
    if (target.squaredNorm() == 0.0) continue;
    Eigen::JacobiSVD<Eigen::Matrix2d> svd(g);
    const double smax = svd.singularValues()[0];
    const double smin = svd.singularValues()[1];
    if (!(smin > 1e-14 * smax)) {
      throw Error(ErrorCode::kDegenerateMode,
                  "discrete controllability Gramian of mode " + std::to_string(k + 1) + " is singular");
    }
    const Eigen::Vector2d lambda = g.ldlt().solve(target);
    for (int i = 0; i < steps; ++i) out(k, i) = cols[i].dot(lambda);
  }
  return out;
}

// Solves sigma_n(u) h = rhs in the projected sense.
Vec divide_by_sigma(const Stepper& stepper, const Vec& u, const Vec& rhs) {
  if (stepper.noise().is_constant()) return rhs / stepper.noise().constant_value();
  const SpectralGrid& g = stepper.grid();
  const Mat& q = g.quad_synthesis();
  const Vec uq = g.quad_values(u);
  Vec s(uq.size());
  for (Eigen::Index i = 0; i < uq.size(); ++i) s[i] = stepper.noise().value(uq[i]);
  const Mat m = g.quad_weight() * q.transpose() * s.asDiagonal() * q;
  return m.ldlt().solve(rhs);
}

double position_energy(const SpectralGrid& g, const PolynomialDrift& drift, const Vec& u) {
  const Vec values = g.quad_values(u);
  double potential = 0.0;
  for (Eigen::Index q = 0; q < values.size(); ++q) potential += drift.antiderivative(values[q]);
  return 0.5 * (g.eigenvalues().array() * u.array().square()).sum() - g.quad_weight() * potential;
}

Vec collocation_row(const SpectralGrid& g, int j) {
  Vec row(g.modes());
  for (int k = 1; k <= g.modes(); ++k) row[k - 1] = g.basis(k, g.points()[j]);
  return row;
}

struct Candidate {
  StateE state;
  double gap = kInf;
};

Candidate best_position(const StateE& zstar, const PolynomialDrift& drift, double s) {
  const SpectralGrid& g = *zstar.grid();
  const double e0 = position_energy(g, drift, zstar.u());
  Candidate best;
  if (s <= 0.0) {
    best.state = zstar;
    best.gap = 0.0;
    return best;
  }
  for (int j = 0; j < g.modes(); ++j) {
    for (int sign : {1, -1}) {
      StateE y = pinned_position_minimizer(zstar, drift, j, sign, s);
      const double gap = position_energy(g, drift, y.u()) - e0;
      if (gap < best.gap - 1e-15) {
        best.gap = gap;
        best.state = std::move(y);
      }
    }
  }
  return best;
}

Candidate best_velocity(const StateE& zstar, double m) {
  const SpectralGrid& g = *zstar.grid();
  Candidate best;
  if (m <= 0.0) {
    best.state = zstar;
    best.gap = 0.0;
    return best;
  }
  const Mat& c = g.antiderivative_synthesis();
  for (Eigen::Index r = 0; r < c.rows(); ++r) {
    if (c.row(r).squaredNorm() == 0.0) continue;
    StateE y = pinned_velocity_minimizer(zstar, static_cast<int>(r), 1, m);
    const double gap = 0.5 * (y.v() - zstar.v()).squaredNorm();
    if (gap < best.gap - 1e-15) {
      best.gap = gap;
      best.state = std::move(y);
    }
  }
  return best;
}

// Golden-section minimization of f on [a, b], endpoints included.
template <class F>
double golden_minimize(F f, double a, double b, int iterations = 60) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - r * (b - a);
  double x2 = a + r * (b - a);
  double f1 = f(x1);
  double f2 = f(x2);
  for (int i = 0; i < iterations; ++i) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - r * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + r * (b - a);
      f2 = f(x2);
    }
  }
  const double mid = 0.5 * (a + b);
  double best = mid;
  double fbest = f(mid);
  for (double x : {a, b}) {
    const double fx = f(x);
    if (fx < fbest) {
      fbest = fx;
      best = x;
    }
  }
  return best;
}

struct LbfgsOutcome {
  int iterations = 0;
  double value = kInf;
};

// Limited-memory BFGS with Armijo backtracking (c = 1e-4, shrink 0.5).
// The first steepest-descent step tries length 1e-2, quasi-Newton steps 1.
template <class F>
LbfgsOutcome lbfgs_minimize(F&& f, Vec& x, int max_iter, double gtol) {
  constexpr int kMemory = 10;
  std::deque<Vec> s_hist;
  std::deque<Vec> y_hist;
  std::deque<double> rho_hist;
  Vec g;
  double fx = f(x, &g);
  LbfgsOutcome out;
  int stalls = 0;
  for (int it = 0; it < max_iter; ++it) {
    out.iterations = it;
    if (!std::isfinite(fx) || g.lpNorm<Eigen::Infinity>() < gtol) break;
    Vec d;
    double t = 1.0;
    if (s_hist.empty()) {
      d = -g;
      t = 1e-2;
    } else {
      Vec q = g;
      std::vector<double> alpha(s_hist.size());
      for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
        alpha[i] = rho_hist[i] * s_hist[i].dot(q);
        q -= alpha[i] * y_hist[i];
      }
      q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      for (std::size_t i = 0; i < s_hist.size(); ++i) {
        const double beta = rho_hist[i] * y_hist[i].dot(q);
        q += s_hist[i] * (alpha[i] - beta);
      }
      d = -q;
      if (g.dot(d) >= 0.0) {
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        d = -g;
        t = 1e-2;
      }
    }
    const double slope = g.dot(d);
    bool accepted = false;
    Vec x_new;
    Vec g_new;
    double f_new = kInf;
    for (int tries = 0; tries < 50; ++tries) {
      x_new = x + t * d;
      f_new = f(x_new, &g_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (s_hist.empty()) break;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      continue;
    }
    const Vec s = x_new - x;
    const Vec y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double decrease = fx - f_new;
    x = x_new;
    g = g_new;
    fx = f_new;
    stalls = decrease <= 1e-15 * std::max(1.0, std::abs(fx)) ? stalls + 1 : 0;
    if (stalls >= 3) break;
  }
  out.value = fx;
  return out;
}

// Resamples a control onto another uniform grid by interval averages,
// aligning the ends of both horizons.
Mat resample_control(const ControlPath& src, int steps, double dt) {
  const int n = static_cast<int>(src.coefficients.rows());
  Mat out = Mat::Zero(n, steps);
  const double offset = steps * dt - src.horizon();
  for (int i = 0; i < steps; ++i) {
    const double a = i * dt;
    const double b = a + dt;
    for (int j = 0; j < src.steps(); ++j) {
      const double sa = offset + j * src.dt;
      const double sb = sa + src.dt;
      const double overlap = std::min(b, sb) - std::max(a, sa);
      if (overlap > 0.0) out.col(i) += src.coefficients.col(j) * (overlap / dt);
    }
  }
  return out;
}

}  // namespace

ControlPath::ControlPath(GridPtr g, int steps, double step)
    : grid(std::move(g)), dt(step), coefficients(Mat::Zero(grid->modes(), steps)) {
  if (steps < 1 || !(step > 0.0)) throw Error(ErrorCode::kInvalidArgument, "control path needs steps and dt > 0");
}

double ControlPath::energy() const { return 0.5 * dt * coefficients.squaredNorm(); }

SkeletonProblem::SkeletonProblem(const SimConfig& cfg, double horizon, int steps, int substeps)
    : stepper_(skeleton_config(cfg, horizon / std::max(steps, 1) /
                                        (substeps > 0 ? substeps
                                                      : auto_substeps(cfg, horizon / std::max(steps, 1))))),
      steps_(steps),
      substeps_(substeps > 0 ? substeps : auto_substeps(cfg, horizon / std::max(steps, 1))),
      control_dt_(horizon / std::max(steps, 1)) {
  if (steps < 1 || !(horizon > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "skeleton problem needs a positive horizon and steps");
  }
}

ControlPath SkeletonProblem::zero_control() const {
  return ControlPath(stepper_.config().grid, steps_, control_dt_);
}

std::vector<StateE> SkeletonProblem::forward(const StateE& z0, const ControlPath& control,
                                             std::vector<StateE>* substates) const {
  if (control.steps() != steps_ || control.coefficients.rows() != grid().modes()) {
    throw Error(ErrorCode::kDimension, "control path does not match the skeleton grid");
  }
  std::vector<StateE> nodes;
  nodes.reserve(steps_ + 1);
  nodes.push_back(z0);
  if (substates) {
    substates->clear();
    substates->reserve(static_cast<std::size_t>(steps_) * substeps_ + 1);
    substates->push_back(z0);
  }
  StateE z = z0;
  for (int i = 0; i < steps_; ++i) {
    const Vec h = control.coefficients.col(i);
    for (int s = 0; s < substeps_; ++s) {
      try {
        z = stepper_.step_skeleton(z, h);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNumericalBlowup) throw;
        const double t = (i * substeps_ + s + 1) * stepper_.dt();
        throw Error(ErrorCode::kInfeasibleControl,
                    "controlled skeleton blew up at t = " + std::to_string(t));
      }
      if (substates) substates->push_back(z);
    }
    nodes.push_back(z);
  }
  return nodes;
}

Mat SkeletonProblem::adjoint(const std::vector<StateE>& substates, const ControlPath& control,
                             const std::vector<StateE>& node_gradients) const {
  const SpectralGrid& g = grid();
  const int n = g.modes();
  const std::vector<Stepper::ModeStep>& plan = stepper_.plan(0);
  const PolynomialDrift& drift = stepper_.drift();
  const NoiseCoefficient& noise = stepper_.noise();
  const double shift = stepper_.shift();
  const bool nonlinear = !drift.is_linear() || !noise.is_constant();
  Mat grad = Mat::Zero(n, steps_);
  Vec lu = node_gradients[steps_].u();
  Vec lv = node_gradients[steps_].v();
  Vec gk(n);
  for (int j = steps_ * substeps_ - 1; j >= 0; --j) {
    const int i = j / substeps_;
    const Vec& u = substates[j].u();
    for (int k = 0; k < n; ++k) gk[k] = plan[k].w1u * lu[k] + plan[k].w1v * lv[k];
    grad.col(i) += stepper_.sigma_product(u, gk);
    Vec ag = Vec::Zero(n);
    if (nonlinear) {
      const Vec uq = g.quad_values(u);
      const Vec gq = g.quad_values(gk);
      Vec hq;
      if (!noise.is_constant()) hq = g.quad_values(control.coefficients.col(i));
      Vec d(uq.size());
      for (Eigen::Index q = 0; q < uq.size(); ++q) {
        double dq = drift.derivative(uq[q]) - shift;
        if (!noise.is_constant()) dq += noise.derivative(uq[q]) * hq[q];
        d[q] = dq * gq[q];
      }
      ag = g.quad_project(d);
    }
    for (int k = 0; k < n; ++k) {
      const Stepper::ModeStep& m = plan[k];
      const double nu = m.p11 * lu[k] + m.p21 * lv[k] + ag[k];
      const double nv = m.p12 * lu[k] + m.p22 * lv[k];
      lu[k] = nu;
      lv[k] = nv;
    }
    if (j % substeps_ == 0 && node_gradients[i].grid()) {
      lu += node_gradients[i].u();
      lv += node_gradients[i].v();
    }
  }
  return grad;
}

void SkeletonProblem::interval_maps(std::vector<Eigen::Matrix2d>* a,
                                    std::vector<Eigen::Vector2d>* b) const {
  const std::vector<Stepper::ModeStep>& plan = stepper_.plan(0);
  a->assign(plan.size(), Eigen::Matrix2d::Identity());
  b->assign(plan.size(), Eigen::Vector2d::Zero());
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const Stepper::ModeStep& m = plan[k];
    Eigen::Matrix2d p;
    p << m.p11, m.p12, m.p21, m.p22;
    const Eigen::Vector2d w(m.w1u, m.w1v);
    for (int s = 0; s < substeps_; ++s) {
      (*b)[k] = p * (*b)[k] + w;
      (*a)[k] = p * (*a)[k];
    }
  }
}

RateValue rate_functional(const ControlPath& control, const StateE& z0, const SimConfig& cfg,
                          int substeps) {
  const SkeletonProblem problem(cfg, control.horizon(), control.steps(), substeps);
  RateValue out;
  out.value = control.energy();
  out.terminal = problem.forward(z0, control).back();
  return out;
}

ControlOperator assemble_control_operator(double horizon, double alpha, const SpectralGrid& grid,
                                          double shift) {
  if (!(horizon > 0.0)) throw Error(ErrorCode::kInvalidArgument, "control horizon must be positive");
  ControlOperator op;
  op.horizon = horizon;
  op.alpha = alpha;
  using boost::math::quadrature::gauss_kronrod;
  for (int k = 1; k <= grid.modes(); ++k) {
    const double a = grid.eigenvalue(k) - shift;
    auto entry = [&](int r, int c) {
      auto f = [&](double s) {
        const ModePropagator p = stiffness_propagator(a, alpha, s);
        const double x = r == 0 ? p.m12 : p.m22;
        const double y = c == 0 ? p.m12 : p.m22;
        return x * y;
      };
      return gauss_kronrod<double, 31>::integrate(f, 0.0, horizon, 20, 1e-10);
    };
    Eigen::Matrix2d g;
    g(0, 0) = entry(0, 0);
    g(0, 1) = g(1, 0) = entry(0, 1);
    g(1, 1) = entry(1, 1);
    const double sa = std::sqrt(std::max(std::abs(a), 1e-300));
    Eigen::Matrix2d d = Eigen::Matrix2d::Zero();
    d(0, 0) = sa;
    d(1, 1) = 1.0;
    const Eigen::Matrix2d scaled = d * g * d;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(scaled);
    const double lo = eig.eigenvalues()[0];
    const double hi = eig.eigenvalues()[1];
    const double cond = lo > 0.0 ? hi / lo : kInf;
    if (!(cond <= 1e14)) {
      throw Error(ErrorCode::kDegenerateMode,
                  "controllability Gramian of mode " + std::to_string(k) + " is degenerate");
    }
    op.max_condition = std::max(op.max_condition, cond);
    op.gramians.push_back(g);
  }
  return op;
}

double control_horizon(const SpectralGrid& grid, double alpha, double shift) {
  if (!(alpha > 0.0)) throw Error(ErrorCode::kPrecondition, "control horizon needs alpha > 0");
  auto worst = [&](double t) {
    double w = 0.0;
    for (int k = 1; k <= grid.modes(); ++k) {
      const double a = grid.eigenvalue(k) - shift;
      const double sa = std::sqrt(std::abs(a));
      Eigen::Matrix2d p = stiffness_propagator(a, alpha, t).matrix();
      p(0, 1) *= sa;
      p(1, 0) /= sa;
      const double n = Eigen::JacobiSVD<Eigen::Matrix2d>(p).singularValues()[0];
      w = std::max(w, n * n);
    }
    return w;
  };
  const double step = 0.01 / alpha;
  const double limit = 400.0 / alpha;
  double prev = 0.0;
  for (double t = step; t <= limit; t += step) {
    if (worst(t) <= 0.5) {
      double lo = prev;
      double hi = t;
      for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (worst(mid) <= 0.5 ? hi : lo) = mid;
      }
      return hi;
    }
    prev = t;
  }
  throw Error(ErrorCode::kConvergence, "semigroup does not contract to 1/2 within the search range");
}

double control_horizon_rule(double prefactor, double theta) {
  if (!(theta > 0.0) || !(prefactor > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "control horizon rule needs M > 0 and theta > 0");
  }
  return std::max(0.0, std::log(2.0 * prefactor * prefactor) / (2.0 * theta));
}

ControlPath min_norm_linear_control(const StateE& target, double horizon, int steps, double alpha,
                                    double shift) {
  SimConfig cfg;
  cfg.grid = target.grid();
  cfg.alpha = alpha;
  cfg.drift = PolynomialDrift({0.0, shift});
  cfg.noise = NoiseCoefficient::constant(1.0);
  const SkeletonProblem problem(cfg, horizon, steps, 1);
  std::vector<Eigen::Matrix2d> a;
  std::vector<Eigen::Vector2d> b;
  problem.interval_maps(&a, &b);
  ControlPath out = problem.zero_control();
  out.coefficients = gramian_control(a, b, steps, target);
  out.refresh();
  return out;
}

ExactControlResult exact_nonlinear_control(const StateE& z, const StateE& zstar, double horizon,
                                           const SimConfig& cfg) {
  const int steps = std::max(1, static_cast<int>(std::ceil(horizon / cfg.step() - 1e-9)));
  const SkeletonProblem problem(cfg, horizon, steps, 1);
  const Stepper& stepper = problem.stepper();
  std::vector<Eigen::Matrix2d> a;
  std::vector<Eigen::Vector2d> b;
  problem.interval_maps(&a, &b);

  ExactControlResult out;
  out.linear = problem.zero_control();
  out.linear.coefficients = gramian_control(a, b, steps, z - zstar);
  out.linear.refresh();
  out.linear_energy = out.linear.cached_energy;

  out.control = problem.zero_control();
  const Vec r_star = stepper.remainder_forcing(zstar.u());
  const int n = z.modes();
  StateE y(z.grid());
  for (int i = 0; i < steps; ++i) {
    const Vec u1 = out.linear.coefficients.col(i);
    const Vec path_u = zstar.u() + y.u();
    const Vec rhs = u1 + r_star - stepper.remainder_forcing(path_u);
    out.control.coefficients.col(i) = divide_by_sigma(stepper, path_u, rhs);
    StateE next(z.grid());
    for (int k = 0; k < n; ++k) {
      const Eigen::Vector2d yk = a[k] * Eigen::Vector2d(y.u()[k], y.v()[k]) + b[k] * u1[k];
      next.u()[k] = yk[0];
      next.v()[k] = yk[1];
    }
    y = next;
  }
  out.control.refresh();
  out.energy = out.control.cached_energy;
  out.terminal = problem.forward(zstar, out.control).back();
  out.gap = h1_norm(out.terminal - z);
  if (!(out.gap <= 1e-5)) {
    throw Error(ErrorCode::kConstructionFailed,
                "exact control misses the target by " + std::to_string(out.gap) + " in H1 x L2");
  }
  return out;
}

StateE pinned_position_minimizer(const StateE& zstar, const PolynomialDrift& drift, int index,
                                 int sign, double s) {
  const SpectralGrid& g = *zstar.grid();
  const int n = g.modes();
  if (index < 0 || index >= n) throw Error(ErrorCode::kInvalidArgument, "pinned index out of range");
  const Vec center_samples = g.to_grid(zstar.u());
  std::vector<int> pins{index};
  std::vector<int> signs{sign >= 0 ? 1 : -1};
  const Vec row0 = collocation_row(g, index);
  Vec u = zstar.u() + row0 * (signs[0] * s / row0.squaredNorm());
  const Mat& q = g.quad_synthesis();
  const double w = g.quad_weight();
  for (int outer = 0; outer < n; ++outer) {
    const int m = static_cast<int>(pins.size());
    Mat c(m, n);
    Vec d(m);
    for (int i = 0; i < m; ++i) {
      c.row(i) = collocation_row(g, pins[i]).transpose();
      d[i] = center_samples[pins[i]] + signs[i] * s;
    }
    for (int it = 0; it < 60; ++it) {
      const Vec uq = g.quad_values(u);
      Vec bq(uq.size());
      Vec dq(uq.size());
      for (Eigen::Index i = 0; i < uq.size(); ++i) {
        bq[i] = drift.value(uq[i]);
        dq[i] = drift.derivative(uq[i]);
      }
      const Vec grad = g.eigenvalues().cwiseProduct(u) - g.quad_project(bq);
      Mat kkt = Mat::Zero(n + m, n + m);
      kkt.topLeftCorner(n, n) = Mat(g.eigenvalues().asDiagonal()) - w * q.transpose() * dq.asDiagonal() * q;
      kkt.topRightCorner(n, m) = c.transpose();
      kkt.bottomLeftCorner(m, n) = c;
      Vec rhs(n + m);
      rhs.head(n) = -grad;
      rhs.tail(m) = d - c * u;
      const Vec sol = kkt.fullPivLu().solve(rhs);
      const Vec step = sol.head(n);
      u += step;
      if (step.norm() <= 1e-14 * (1.0 + u.norm())) break;
    }
    const Vec samples = g.to_grid(u) - center_samples;
    int worst = -1;
    double worst_value = s * (1.0 + 1e-10);
    for (int j = 0; j < n; ++j) {
      if (std::abs(samples[j]) > worst_value) {
        worst_value = std::abs(samples[j]);
        worst = j;
      }
    }
    if (worst < 0) break;
    pins.push_back(worst);
    signs.push_back(samples[worst] >= 0.0 ? 1 : -1);
  }
  return StateE(zstar.grid(), u, zstar.v());
}

StateE pinned_velocity_minimizer(const StateE& zstar, int refined_index, int sign, double m) {
  const SpectralGrid& g = *zstar.grid();
  const Mat& c_all = g.antiderivative_synthesis();
  if (refined_index < 0 || refined_index >= c_all.rows()) {
    throw Error(ErrorCode::kInvalidArgument, "pinned refined index out of range");
  }
  std::vector<int> pins{refined_index};
  std::vector<int> signs{sign >= 0 ? 1 : -1};
  Vec w;
  for (int outer = 0; outer < static_cast<int>(c_all.rows()); ++outer) {
    const int k = static_cast<int>(pins.size());
    Mat c(k, g.modes());
    Vec d(k);
    for (int i = 0; i < k; ++i) {
      c.row(i) = c_all.row(pins[i]);
      d[i] = signs[i] * m;
    }
    w = c.transpose() * (c * c.transpose()).fullPivLu().solve(d);
    const Vec values = c_all * w;
    Eigen::Index worst = 0;
    const double top = values.cwiseAbs().maxCoeff(&worst);
    if (top <= m * (1.0 + 1e-10)) break;
    pins.push_back(static_cast<int>(worst));
    signs.push_back(values[worst] >= 0.0 ? 1 : -1);
  }
  // Near-dependent pins can leave a tiny overshoot; land exactly on the level.
  w *= m / (c_all * w).cwiseAbs().maxCoeff();
  return StateE(zstar.grid(), zstar.u(), zstar.v() + w);
}

BoundaryMinimizer min_energy_boundary_point(const DomainSpec& domain, const PolynomialDrift& drift) {
  const StateE& zstar = domain.center();
  const double e0 = energy_functional(zstar, drift);
  auto combine = [&](const Candidate& p, const Candidate& v) {
    return StateE(zstar.grid(), p.state.u(), v.state.v());
  };
  StateE best;
  switch (domain.kind()) {
    case DomainKind::kCylinder: {
      const Candidate p = best_position(zstar, drift, domain.radius());
      const Candidate v = best_velocity(zstar, domain.velocity_radius());
      best = p.gap <= v.gap ? p.state : v.state;
      break;
    }
    case DomainKind::kBallE: {
      const double r = domain.radius();
      auto f = [&](double phi) {
        return best_position(zstar, drift, r * std::cos(phi)).gap +
               best_velocity(zstar, r * std::sin(phi)).gap;
      };
      const double phi = golden_minimize(f, 0.0, 0.5 * M_PI, 40);
      best = combine(best_position(zstar, drift, r * std::cos(phi)),
                     best_velocity(zstar, r * std::sin(phi)));
      break;
    }
    case DomainKind::kOrbitUnion: {
      const double r = domain.radius();
      auto f = [&](double s) {
        return best_position(zstar, drift, s).gap + best_velocity(zstar, r - s).gap;
      };
      const double s = golden_minimize(f, 0.0, r, 40);
      best = combine(best_position(zstar, drift, s), best_velocity(zstar, r - s));
      break;
    }
  }
  BoundaryMinimizer out;
  out.point = best;
  out.energy_gap = energy_functional(best, drift) - e0;
  out.binding = domain.binding(best);
  const SpectralGrid& g = *zstar.grid();
  if (out.binding == Binding::kPosition) {
    const SubdifferentialSet sub = subdifferential_sup_norm(g, best.u() - zstar.u());
    if (!sub.maximizers.empty()) {
      out.location = sub.maximizers.front().location;
      out.sign = sub.maximizers.front().sign;
    }
  } else {
    const Vec values = g.antiderivative_values(best.v() - zstar.v());
    Eigen::Index r = 0;
    values.cwiseAbs().maxCoeff(&r);
    out.location = g.refined_points()[r];
    out.sign = values[r] >= 0.0 ? 1 : -1;
  }
  out.on_boundary = std::abs(domain.level(best)) <= 1e-6;
  return out;
}

OracleResult reversed_path_oracle(const StateE& y, const SimConfig& cfg, double horizon, int steps,
                                  int substeps) {
  if (!cfg.noise.is_constant()) {
    throw Error(ErrorCode::kPrecondition, "reversed-path oracle needs a constant sigma");
  }
  const SkeletonProblem problem(cfg, horizon, steps, substeps);
  const Stepper& stepper = problem.stepper();
  const double sigma = stepper.noise().constant_value();
  const double alpha = cfg.alpha;

  std::vector<StateE> nodes{StateE(y.grid(), y.u(), -y.v())};
  StateE z = nodes.front();
  for (int i = 0; i < steps; ++i) {
    for (int s = 0; s < problem.substeps(); ++s) z = stepper.step_deterministic(z);
    nodes.push_back(z);
  }
  OracleResult out;
  out.control = problem.zero_control();
  const double dt = problem.control_dt();
  for (int i = 0; i < steps; ++i) {
    out.control.coefficients.col(i) =
        (2.0 * alpha / (sigma * dt)) * (nodes[steps - i - 1].u() - nodes[steps - i].u());
  }
  out.control.refresh();
  out.value = out.control.cached_energy;
  out.start = StateE(y.grid(), nodes.back().u(), -nodes.back().v());
  const PolynomialDrift& drift = stepper.drift();
  out.energy_value =
      2.0 * alpha * (energy_functional(y, drift) - energy_functional(out.start, drift)) / (sigma * sigma);
  out.replay_terminal = problem.forward(out.start, out.control).back();
  out.relative_gap = std::abs(out.value - out.energy_value) / std::max(std::abs(out.energy_value), 1e-300);
  if (out.relative_gap > 0.05) {
    throw Error(ErrorCode::kOracleInconsistency,
                "reversed-path control energy differs from 2 alpha dE by " +
                    std::to_string(100.0 * out.relative_gap) + "%");
  }
  return out;
}

const char* target_kind_name(TargetKind kind) {
  switch (kind) {
    case TargetKind::kPoint: return "point";
    case TargetKind::kNearPoint: return "near_point";
    case TargetKind::kBoundary: return "boundary";
    case TargetKind::kExterior: return "exterior";
  }
  return "unknown";
}

const char* constraint_mode_name(ConstraintMode mode) {
  switch (mode) {
    case ConstraintMode::kFree: return "free";
    case ConstraintMode::kStayInD: return "stay_in_D";
    case ConstraintMode::kStayInClosure: return "stay_in_closure";
  }
  return "unknown";
}

namespace {

struct ConstraintState {
  double endpoint_gap = 0.0;
  double interior_violation = 0.0;
  std::vector<double> node_values;  // g_n <= 0 for n = 1..M-1
  Vec endpoint;                     // equality residuals, or the single inequality
};

class AugmentedLagrangian {
 public:
  AugmentedLagrangian(const StateE& start, const QuasipotentialTarget& target, ConstraintMode mode,
                      const SkeletonProblem& problem, const QuasipotentialOptions& options)
      : start_(start), target_(target), mode_(mode), problem_(problem), options_(options) {
    const int n = problem.grid().modes();
    if (target.kind != TargetKind::kPoint && target.kind != TargetKind::kNearPoint && !target.domain) {
      throw Error(ErrorCode::kInvalidArgument, "boundary and exterior targets need a domain");
    }
    if (mode != ConstraintMode::kFree && !target.domain) {
      throw Error(ErrorCode::kInvalidArgument, "state constraints need a domain");
    }
    sqrt_a_ = problem.grid().eigenvalues().cwiseSqrt();
    lambda_ = Vec::Zero(target.kind == TargetKind::kPoint ? 2 * n : 1);
    nu_.assign(std::max(problem.steps() - 1, 0), 0.0);
    interior_margin_ = mode == ConstraintMode::kStayInD ? options.margin : 0.0;
  }

  double mu = 10.0;

  // Augmented objective and its gradient in the control coefficients.
  double evaluate(const Vec& x, Vec* grad) const {
    const int n = problem_.grid().modes();
    const int steps = problem_.steps();
    ControlPath control = problem_.zero_control();
    control.coefficients = unflatten(x, n, steps);
    std::vector<StateE> sub;
    std::vector<StateE> nodes;
    try {
      nodes = problem_.forward(start_, control, &sub);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInfeasibleControl) throw;
      return kInf;
    }
    double value = control.energy();
    std::vector<StateE> node_grads(steps + 1);
    node_grads[steps] = StateE(start_.grid());
    const StateE& end = nodes.back();
    switch (target_.kind) {
      case TargetKind::kPoint: {
        const Vec c = residual(end);
        value += lambda_.dot(c) + 0.5 * mu * c.squaredNorm();
        const Vec w = lambda_ + mu * c;
        node_grads[steps].u() = sqrt_a_.cwiseProduct(w.head(n));
        node_grads[steps].v() = w.tail(n);
        break;
      }
      case TargetKind::kBoundary: {
        const double c = target_.domain->level(end);
        value += lambda_[0] * c + 0.5 * mu * c * c;
        node_grads[steps] = target_.domain->level_gradient(end) * (lambda_[0] + mu * c);
        break;
      }
      case TargetKind::kExterior: {
        const double gx = options_.margin - target_.domain->level(end);
        const double p = std::max(0.0, lambda_[0] + mu * gx);
        value += (p * p - lambda_[0] * lambda_[0]) / (2.0 * mu);
        if (p > 0.0) node_grads[steps] = target_.domain->level_gradient(end) * (-p);
        break;
      }
      case TargetKind::kNearPoint: {
        const double gx = e_distance(end, target_.point) - target_.radius;
        const double p = std::max(0.0, lambda_[0] + mu * gx);
        value += (p * p - lambda_[0] * lambda_[0]) / (2.0 * mu);
        if (p > 0.0) {
          const SpectralGrid& g = problem_.grid();
          node_grads[steps].u() = p * sup_norm_subgradient(g, end.u() - target_.point.u());
          node_grads[steps].v() = p * cminus_norm_subgradient(g, end.v() - target_.point.v());
        }
        break;
      }
    }
    if (mode_ != ConstraintMode::kFree) {
      for (int i = 1; i < steps; ++i) {
        const double gx = target_.domain->level(nodes[i]) + interior_margin_;
        const double nu = nu_[i - 1];
        const double p = std::max(0.0, nu + mu * gx);
        value += (p * p - nu * nu) / (2.0 * mu);
        if (p > 0.0) node_grads[i] = target_.domain->level_gradient(nodes[i]) * p;
      }
    }
    if (grad) {
      const Mat gm = problem_.adjoint(sub, control, node_grads) + problem_.control_dt() * control.coefficients;
      *grad = flatten(gm);
    }
    return value;
  }

  ConstraintState constraints(const Vec& x, StateE* terminal) const {
    const int n = problem_.grid().modes();
    ControlPath control = problem_.zero_control();
    control.coefficients = unflatten(x, n, problem_.steps());
    ConstraintState cs;
    std::vector<StateE> nodes;
    try {
      nodes = problem_.forward(start_, control);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInfeasibleControl) throw;
      cs.endpoint_gap = kInf;
      cs.interior_violation = kInf;
      return cs;
    }
    const StateE& end = nodes.back();
    if (terminal) *terminal = end;
    switch (target_.kind) {
      case TargetKind::kPoint:
        cs.endpoint = residual(end);
        cs.endpoint_gap = cs.endpoint.norm();
        break;
      case TargetKind::kBoundary:
        cs.endpoint = Vec::Constant(1, target_.domain->level(end));
        cs.endpoint_gap = std::abs(cs.endpoint[0]);
        break;
      case TargetKind::kExterior:
        cs.endpoint = Vec::Constant(1, options_.margin - target_.domain->level(end));
        cs.endpoint_gap = std::max(0.0, cs.endpoint[0]);
        break;
      case TargetKind::kNearPoint:
        cs.endpoint = Vec::Constant(1, e_distance(end, target_.point) - target_.radius);
        cs.endpoint_gap = std::max(0.0, cs.endpoint[0]);
        break;
    }
    if (mode_ != ConstraintMode::kFree) {
      for (int i = 1; i < problem_.steps(); ++i) {
        const double gx = target_.domain->level(nodes[i]) + interior_margin_;
        cs.node_values.push_back(gx);
        cs.interior_violation = std::max(cs.interior_violation, gx);
      }
    }
    return cs;
  }

  void update_multipliers(const ConstraintState& cs) {
    if (target_.kind == TargetKind::kPoint || target_.kind == TargetKind::kBoundary) {
      lambda_ += mu * cs.endpoint;
    } else {
      lambda_[0] = std::max(0.0, lambda_[0] + mu * cs.endpoint[0]);
    }
    for (std::size_t i = 0; i < cs.node_values.size(); ++i) {
      nu_[i] = std::max(0.0, nu_[i] + mu * cs.node_values[i]);
    }
  }

 private:
  Vec residual(const StateE& end) const {
    const int n = problem_.grid().modes();
    Vec c(2 * n);
    c.head(n) = sqrt_a_.cwiseProduct(end.u() - target_.point.u());
    c.tail(n) = end.v() - target_.point.v();
    return c;
  }

  const StateE& start_;
  const QuasipotentialTarget& target_;
  ConstraintMode mode_;
  const SkeletonProblem& problem_;
  const QuasipotentialOptions& options_;
  Vec sqrt_a_;
  Vec lambda_;
  std::vector<double> nu_;
  double interior_margin_ = 0.0;
};

}  // namespace

RestartResult optimize_control(const StateE& start, const QuasipotentialTarget& target,
                               ConstraintMode mode, const SkeletonProblem& problem,
                               const QuasipotentialOptions& options, ControlPath* control,
                               StateE* terminal) {
  AugmentedLagrangian al(start, target, mode, problem, options);
  Vec x = flatten(control->coefficients);
  RestartResult out;
  out.horizon = problem.horizon();
  double previous = kInf;
  ConstraintState cs;
  for (int outer = 0; outer < options.max_outer; ++outer) {
    auto f = [&](const Vec& xv, Vec* g) { return al.evaluate(xv, g); };
    const LbfgsOutcome inner = lbfgs_minimize(f, x, options.max_inner, 1e-10);
    out.iterations += inner.iterations;
    cs = al.constraints(x, terminal);
    const double violation = std::max(cs.endpoint_gap, std::max(cs.interior_violation, 0.0));
    if (cs.endpoint_gap <= options.endpoint_tolerance &&
        std::max(cs.interior_violation, 0.0) <= options.interior_tolerance) {
      break;
    }
    al.update_multipliers(cs);
    if (violation > 0.25 * previous) al.mu *= 5.0;
    previous = violation;
  }
  control->coefficients = unflatten(x, control->coefficients.rows(), control->coefficients.cols());
  control->refresh();
  out.value = control->cached_energy;
  out.endpoint_gap = cs.endpoint_gap;
  out.interior_violation = std::max(cs.interior_violation, 0.0);
  out.feasible = out.endpoint_gap <= options.endpoint_tolerance &&
                 out.interior_violation <= options.interior_tolerance;
  return out;
}

QuasipotentialResult minimize_quasipotential(const StateE& start, const QuasipotentialTarget& target,
                                             ConstraintMode mode, const SimConfig& cfg,
                                             const QuasipotentialOptions& options) {
  std::vector<double> horizons = options.horizons;
  if (horizons.empty()) {
    if (!(options.theta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "theta must be positive");
    for (double f : {2.0, 4.0, 8.0, 16.0}) horizons.push_back(f / options.theta);
  }
  const PolynomialDrift drift = cfg.drift.with_cutoff(cfg.cutoff);

  // Endpoint used by the oracle and exact-control restarts.
  bool have_goal = true;
  StateE goal;
  double oracle_value = std::numeric_limits<double>::quiet_NaN();
  if (target.kind == TargetKind::kPoint || target.kind == TargetKind::kNearPoint) {
    goal = target.point;
  } else {
    try {
      const BoundaryMinimizer bm = min_energy_boundary_point(*target.domain, drift);
      goal = bm.point;
      if (target.kind == TargetKind::kExterior) {
        const StateE& c = target.domain->center();
        goal = c + (goal - c) * (1.0 + 2.0 * options.margin);
      }
    } catch (const Error&) {
      have_goal = false;
    }
  }
  const StateE zstar = target.domain ? target.domain->center() : start;
  if (have_goal && cfg.noise.is_constant()) {
    const double sigma = cfg.noise.constant_value();
    oracle_value = 2.0 * cfg.alpha *
                   (energy_functional(goal, drift) - energy_functional(zstar, drift)) / (sigma * sigma);
  }

  struct Job {
    int horizon;
    std::string name;
  };
  std::vector<Job> jobs;
  for (int h = 0; h < static_cast<int>(horizons.size()); ++h) {
    if (options.restart_zero) jobs.push_back({h, "zero"});
    if (options.restart_oracle && have_goal && cfg.noise.is_constant()) jobs.push_back({h, "oracle"});
    if (options.restart_exact && have_goal) jobs.push_back({h, "exact"});
  }
  std::vector<RestartResult> results(jobs.size());
  std::vector<ControlPath> controls(jobs.size());
  std::vector<StateE> terminals(jobs.size());
  parallel_for(jobs.size(), options.workers, [&](std::size_t j) {
    const double horizon = horizons[jobs[j].horizon];
    const SkeletonProblem problem(cfg, horizon, options.steps, options.substeps);
    ControlPath control = problem.zero_control();
    bool ok = true;
    try {
      if (jobs[j].name == "oracle") {
        const OracleResult o = reversed_path_oracle(goal, cfg, horizon, options.steps, problem.substeps());
        control.coefficients = o.control.coefficients;
      } else if (jobs[j].name == "exact") {
        const double t0 = std::min(horizon, control_horizon(problem.grid(), cfg.alpha));
        const ExactControlResult e = exact_nonlinear_control(goal, zstar, t0, cfg);
        control.coefficients = resample_control(e.control, options.steps, problem.control_dt());
      }
    } catch (const Error&) {
      ok = false;
    }
    RestartResult r;
    r.name = jobs[j].name;
    r.horizon = horizon;
    if (ok) {
      r = optimize_control(start, target, mode, problem, options, &control, &terminals[j]);
      r.name = jobs[j].name;
    }
    results[j] = r;
    controls[j] = control;
  });

  QuasipotentialResult out;
  out.target = target.kind;
  out.mode = mode;
  out.restarts = results;
  out.oracle_value = oracle_value;
  out.horizon_values.assign(horizons.size(), kInf);
  int best = -1;
  auto better = [&](int a, int b) {
    const RestartResult& ra = results[a];
    const RestartResult& rb = results[b];
    if (ra.feasible != rb.feasible) return ra.feasible;
    if (ra.feasible) return ra.value < rb.value;
    const double va = ra.endpoint_gap + ra.interior_violation;
    const double vb = rb.endpoint_gap + rb.interior_violation;
    return va < vb;
  };
  for (int j = 0; j < static_cast<int>(jobs.size()); ++j) {
    if (!std::isfinite(results[j].value)) continue;
    if (results[j].feasible) {
      double& hv = out.horizon_values[jobs[j].horizon];
      hv = std::min(hv, results[j].value);
    }
    if (best < 0 || better(j, best)) best = j;
  }
  if (best < 0) throw Error(ErrorCode::kInfeasibleControl, "no restart produced a finite control");
  const RestartResult& rb = results[best];
  out.value = rb.value;
  out.control = controls[best];
  out.terminal = terminals[best];
  out.horizon = rb.horizon;
  out.endpoint_gap = rb.endpoint_gap;
  out.interior_violation = rb.interior_violation;
  out.feasible = rb.feasible;
  out.at_largest_horizon = jobs[best].horizon == static_cast<int>(horizons.size()) - 1 && horizons.size() > 1;
  return out;
}

RegularityTable inner_regularity_probe(const std::vector<StateE>& targets, const StateE& zstar,
                                       double base_value, const std::vector<double>& rhos,
                                       const std::vector<double>& deltas, const DomainSpec& domain,
                                       const SimConfig& cfg, const QuasipotentialOptions& options,
                                       int n_starts) {
  if (targets.empty()) throw Error(ErrorCode::kInvalidArgument, "regularity probe needs target points");
  RegularityTable table;
  table.base_value = base_value;
  QuasipotentialOptions inner = options;
  inner.restart_exact = false;
  for (double rho : rhos) {
    for (double delta : deltas) {
      RegularityCell cell;
      cell.rho = rho;
      cell.delta = delta;
      if (rho == 0.0 && delta == 0.0) {
        cell.value = base_value;
      } else {
        std::mt19937_64 rng(0x5eedULL);
        const int starts = rho > 0.0 ? n_starts : 1;
        for (int s = 0; s < starts; ++s) {
          const StateE start = rho > 0.0 ? zstar + random_unit_state(zstar.grid(), rng) * rho : zstar;
          for (const StateE& y : targets) {
            QuasipotentialTarget t;
            t.kind = delta > 0.0 ? TargetKind::kNearPoint : TargetKind::kPoint;
            t.point = y;
            t.radius = delta;
            t.domain = &domain;
            const QuasipotentialResult closure =
                minimize_quasipotential(start, t, ConstraintMode::kStayInClosure, cfg, inner);
            if (closure.feasible) cell.value = std::min(cell.value, closure.value);
            const QuasipotentialResult open =
                minimize_quasipotential(start, t, ConstraintMode::kStayInD, cfg, inner);
            if (open.feasible) cell.stay_in_d_value = std::min(cell.stay_in_d_value, open.value);
          }
        }
      }
      table.cells.push_back(cell);
    }
  }
  for (RegularityCell& cell : table.cells) {
    for (const RegularityCell& other : table.cells) {
      if (other.rho <= cell.rho && other.delta <= cell.delta) {
        cell.envelope = std::min(cell.envelope, other.value);
      }
    }
  }
  return table;
}

}  // namespace wavemeta
