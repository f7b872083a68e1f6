// Copyright 2026 The qsense Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at

//     https://www.apache.org/licenses/LICENSE-2.0

// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "qsense/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "qsense/oct.hpp"
#include "qsense/parallel.hpp"

namespace qsense {
namespace {

constexpr double kPi = std::numbers::pi;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

/// Overlap of [a, b] with [lo, hi].
double overlap(double a, double b, double lo, double hi) {
  return std::max(0.0, std::min(b, hi) - std::max(a, lo));
}

// Series of F and F' for small x, coefficients (-1)^m (m-1)/(2m)!.
double shape_series(double x, bool derivative) {
  double sum = 0.0;
  double fact = 24.0;  // (2m)! at m = 2
  for (int m = 2; m <= 9; ++m) {
    if (m > 2) fact *= (2.0 * m - 1.0) * (2.0 * m);
    const double c = ((m % 2) ? -1.0 : 1.0) * (m - 1) / fact;
    const int p = 2 * m - 4;
    if (derivative) {
      if (p > 0) sum += c * p * std::pow(x, p - 1);
    } else {
      sum += c * std::pow(x, p);
    }
  }
  return sum;
}

double shape_derivative(double x) {
  if (std::abs(x) < 0.5) return shape_series(x, true);
  const double n = 1.0 - 0.5 * x * std::sin(x) - std::cos(x);
  const double dn = 0.5 * std::sin(x) - 0.5 * x * std::cos(x);
  return dn / std::pow(x, 4) - 4.0 * n / std::pow(x, 5);
}

/// d/dx [sqrt(x^2 - b^2) F(x)]
double detune_objective_slope(double x, double b) {
  const double r = std::sqrt(x * x - b * b);
  return x * detune_shape(x) / r + r * shape_derivative(x);
}

double wrap_unit(double a) {
  double w = std::fmod(a, 1.0);
  if (w < 0) w += 1.0;
  if (w >= 1.0) w -= 1.0;
  return w;
}

}  // namespace

void YXParams::validate() const {
  require(std::isfinite(u_max) && u_max > 0, "YX u_max must be > 0");
  require(std::isfinite(tau) && tau > 0, "YX tau must be > 0");
  require(std::isfinite(omega0) && omega0 > 0, "YX omega0 must be > 0");
}

double DetuneParams::omega_bar() const {
  return std::hypot(u_max, detune());
}

void DetuneParams::validate() const {
  require(std::isfinite(u_max) && u_max > 0, "detune u_max must be > 0");
  require(std::isfinite(tau) && tau > 0, "detune tau must be > 0");
  require(std::isfinite(omega) && std::isfinite(a) && std::isfinite(omega0),
          "detune parameters must be finite");
}

int carrier_resolved_n_t(double tau, double omega, int minimum) {
  const double periods = tau * std::abs(omega) / (2.0 * kPi);
  return std::max(minimum, static_cast<int>(std::floor(20.0 * periods)) + 1);
}

ControlWaveform yx_waveform(const YXParams& p, int n_t) {
  p.validate();
  require(n_t >= 1, "n_t must be >= 1");
  const double tq = p.t_qsl();
  const double t1 = std::min(0.5 * p.tau, 0.5 * tq);
  const double t2 = std::max(0.5 * p.tau, p.tau - 0.5 * tq);

  ControlWaveform wf = ControlWaveform::zeros(p.tau, p.u_max, n_t);
  RotatingEnvelope env{p.omega0, Eigen::VectorXcd::Zero(n_t)};
  const double dt = wf.dt();
  const std::complex<double> y_phase(0.0, p.u_max);
  for (int i = 0; i < n_t; ++i) {
    const double t = wf.t_mid(i);
    if (t < t1)
      wf.values(i) = p.u_max * std::cos(p.omega0 * t + 0.5 * kPi);
    else if (t >= t2)
      wf.values(i) = p.u_max * std::cos(p.omega0 * t);
    // Envelope weighted by the fraction of the interval in each segment.
    const double a = i * dt;
    const double b = a + dt;
    env.values(i) = (overlap(a, b, 0.0, t1) * y_phase +
                     overlap(a, b, t2, p.tau) * p.u_max) /
                    dt;
  }
  wf.values = wf.values.cwiseMax(-p.u_max).cwiseMin(p.u_max);
  wf.envelope = std::move(env);
  return wf;
}

DetuneParams detune_from_start_phase(double u_max, double tau, double omega,
                                     double theta, double omega0) {
  DetuneParams p{u_max, tau, omega, 0.0, omega0};
  p.a = (theta + 0.5 * kPi + 0.5 * omega * tau) / kPi;
  p.validate();
  return p;
}

ControlWaveform detune_waveform(const DetuneParams& p, int n_t) {
  p.validate();
  require(n_t >= 1, "n_t must be >= 1");
  ControlWaveform wf = ControlWaveform::zeros(p.tau, p.u_max, n_t);
  for (int i = 0; i < n_t; ++i)
    wf.values(i) =
        p.u_max * std::sin(p.omega * (wf.t_mid(i) - 0.5 * p.tau) + p.a * kPi);
  // sin(w (t - tau/2) + a pi) = cos(w t + theta)
  const double theta = p.a * kPi - 0.5 * kPi - 0.5 * p.omega * p.tau;
  wf.envelope = RotatingEnvelope{
      p.omega, Eigen::VectorXcd::Constant(n_t, std::polar(p.u_max, theta))};
  return wf;
}

Eigen::MatrixX2d detune_jacobian(const DetuneParams& p, int n_t) {
  Eigen::MatrixX2d jac(n_t, 2);
  const double dt = p.tau / n_t;
  for (int i = 0; i < n_t; ++i) {
    const double s = (i + 0.5) * dt - 0.5 * p.tau;
    const double c = p.u_max * std::cos(p.omega * s + p.a * kPi);
    jac(i, 0) = c * s;
    jac(i, 1) = c * kPi;
  }
  return jac;
}

double eta_yx_rwa(double u_max, double tau) {
  require(u_max > 0 && tau > 0, "eta_yx_rwa needs u_max, tau > 0");
  const double tq = t_qsl(u_max);
  const double r = tau / tq;
  if (r <= 1.0) {
    const double h = 0.5 * kPi * r;
    return tq / kPi * std::sin(h) * (1.0 - std::cos(h));
  }
  return 0.5 * tq * (r - (1.0 - 2.0 / kPi));
}

double detune_shape(double x) {
  if (std::abs(x) < 0.5) return shape_series(x, false);
  return (1.0 - 0.5 * x * std::sin(x) - std::cos(x)) / std::pow(x, 4);
}

double eta_detune_rwa(double u_max, double tau, double detune) {
  require(u_max > 0 && tau > 0, "eta_detune_rwa needs u_max, tau > 0");
  // detune u^2 / W^4 [ (W tau/2) sin(W tau) + cos(W tau) - 1 ] written via
  // F to stay accurate when W tau is small.
  const double w = std::hypot(u_max, detune);
  const double x = w * tau;
  return -detune * u_max * u_max * std::pow(tau, 4) * detune_shape(x);
}

ApproxDetune approx_detune(double u_max, double tau) {
  require(u_max > 0 && tau > 0, "approx_detune needs u_max, tau > 0");
  ApproxDetune out;
  out.detune = kDetuneD0 / tau - 0.02 * u_max * u_max * tau;
  out.out_of_range = tau > t_qsl(u_max) * (1.0 + 1e-12);
  return out;
}

DetuneOptimum optimize_detune_rwa(double u_max, double tau) {
  require(u_max > 0 && tau > 0, "optimize_detune_rwa needs u_max, tau > 0");
  const double b = u_max * tau;
  const double hi = 2.0 * kPi;
  if (!(b < hi))
    throw std::domain_error("no interior maximum of the detune sensitivity");

  // The slope is +inf at x = b and negative at 2 pi; bracket the first
  // downward crossing on a grid, then bisect.
  const int grid = 2000;
  double lo_x = b, hi_x = hi;
  double prev = b + (hi - b) * 1e-9;
  bool found = false;
  for (int k = 1; k <= grid; ++k) {
    const double x = b + (hi - b) * k / grid * (1.0 - 1e-12);
    if (detune_objective_slope(x, b) <= 0) {
      lo_x = prev;
      hi_x = x;
      found = true;
      break;
    }
    prev = x;
  }
  if (!found)
    throw std::domain_error("no interior maximum of the detune sensitivity");
  for (int it = 0; it < 200 && hi_x - lo_x > 1e-14; ++it) {
    const double mid = 0.5 * (lo_x + hi_x);
    (detune_objective_slope(mid, b) > 0 ? lo_x : hi_x) = mid;
  }
  DetuneOptimum out;
  out.x = 0.5 * (lo_x + hi_x);
  out.detune = std::sqrt(out.x * out.x - b * b) / tau;
  out.eta = eta_detune_rwa(u_max, tau, out.detune);
  return out;
}

DetuneFullResult refine_detune_full(const DetuneParams& init,
                                    const DetuneFullOptions& opts) {
  init.validate();
  int n_t = opts.n_t;
  if (n_t <= 0) {
    const double w_ref = std::max(init.omega0, std::abs(init.omega)) * 2.0;
    n_t = std::min(4000, std::max(400, carrier_resolved_n_t(init.tau, 2.0 * w_ref)));
  }
  const DetuneParams base = init;
  auto params_of = [base](const Eigen::VectorXd& v) {
    DetuneParams p = base;
    p.omega = v(0);
    p.a = v(1);
    return p;
  };
  WaveformFamily family{
      [=](const Eigen::VectorXd& v) {
        ControlWaveform wf = detune_waveform(params_of(v), n_t);
        wf.envelope.reset();
        return wf;
      },
      [=](const Eigen::VectorXd& v) {
        return Eigen::MatrixXd(detune_jacobian(params_of(v), n_t));
      }};

  OptimizationConfig cfg;
  cfg.omega0 = init.omega0;
  cfg.u_max = init.u_max;
  cfg.tau = init.tau;
  cfg.n_t = n_t;
  cfg.max_iters = opts.max_iters;
  cfg.initial_rate = 0.05;
  cfg.gradient_tolerance = opts.gradient_tolerance;

  const ParametricResult pr =
      optimize_parametric(family, Eigen::Vector2d(init.omega, init.a), cfg);

  DetuneFullResult out;
  out.params = params_of(pr.params);
  if (out.params.omega < 0) {
    // sin(-w s + a pi) = sin(w s + (1 - a) pi)
    out.params.omega = -out.params.omega;
    out.params.a = 1.0 - out.params.a;
  }
  // a and a + 1 flip the sign of u, which leaves eta^2 unchanged.
  out.params.a = wrap_unit(out.params.a);
  out.cost = pr.cost;
  out.eta = std::sqrt(std::max(0.0, -2.0 * pr.cost));
  out.gradient_norm = pr.gradient_norm;
  out.initial_gradient_norm = pr.initial_gradient_norm;
  out.iterations = pr.iterations;
  out.converged = pr.converged;
  return out;
}

DetuneFullResult optimize_detune_full(double u_max, double tau, double omega0,
                                      const DetuneFullOptions& opts) {
  require(u_max > 0 && tau > 0 && omega0 > 0,
          "optimize_detune_full needs u_max, tau, omega0 > 0");
  const double estimate =
      approx_detune(u_max, std::min(tau, t_qsl(u_max))).detune;
  std::vector<DetuneParams> starts;
  for (double a : {0.0, 0.25, 0.5, 0.75})
    for (double sign : {1.0, -1.0}) {
      DetuneParams p;
      p.u_max = u_max;
      p.tau = tau;
      p.omega0 = omega0;
      p.omega = omega0 + sign * estimate;
      p.a = a;
      starts.push_back(p);
    }
  DetuneFullOptions shared = opts;
  if (shared.n_t <= 0) {
    const double w_ref = std::max(omega0, omega0 + estimate) * 2.0;
    shared.n_t = std::min(4000, std::max(400, carrier_resolved_n_t(tau, 2.0 * w_ref)));
  }
  std::vector<DetuneFullResult> results(starts.size());
  parallel_for(starts.size(), [&](std::size_t i) {
    results[i] = refine_detune_full(starts[i], shared);
  });
  return *std::min_element(results.begin(), results.end(),
                           [](const auto& x, const auto& y) {
                             return x.cost < y.cost;
                           });
}

}  // namespace qsense
