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

// Reference sensing protocols: the resonant Y-then-X sequence and the smooth
// detuned drive, with their rotating-wave closed forms.

#pragma once

#include "qsense/dynamics.hpp"

namespace qsense {

struct YXParams {
  double u_max = 0.0;
  double tau = 0.0;
  double omega0 = 1.0;

  double t_qsl() const { return qsense::t_qsl(u_max); }
  void validate() const;
};

/// u(t) = u_max sin(omega (t - tau/2) + a pi).
struct DetuneParams {
  double u_max = 0.0;
  double tau = 0.0;
  double omega = 1.0;
  double a = 0.0;
  double omega0 = 1.0;

  /// omega - omega0
  double detune() const { return omega - omega0; }
  /// sqrt(u_max^2 + detune^2)
  double omega_bar() const;
  /// omega_bar * tau
  double x() const { return omega_bar() * tau; }

  void validate() const;
};

/// The smallest n_t that resolves the carrier with 20 samples per period.
int carrier_resolved_n_t(double tau, double omega, int minimum = 1);

/// Y-phase drive, optional free gap, X-phase drive; sampled at interval
/// midpoints. The returned waveform carries its rotating-frame envelope.
ControlWaveform yx_waveform(const YXParams& p, int n_t);

/// Parameters of u_max cos(omega t + theta), the same drive written with its
/// phase at t = 0.
DetuneParams detune_from_start_phase(double u_max, double tau, double omega,
                                     double theta, double omega0 = 1.0);

/// Detuned drive sampled at interval midpoints, with envelope.
ControlWaveform detune_waveform(const DetuneParams& p, int n_t);
/// d u_i / d omega and d u_i / d a as an n_t x 2 matrix.
Eigen::MatrixX2d detune_jacobian(const DetuneParams& p, int n_t);

/// Closed-form rotating-wave sensitivity of the YX protocol. Continuous at
/// tau = t_QSL.
double eta_yx_rwa(double u_max, double tau);

/// F(x) = (1 - x sin(x)/2 - cos(x)) / x^4, smooth at x = 0.
double detune_shape(double x);

/// Closed-form rotating-wave sensitivity of the detuned drive; odd in the
/// detune.
double eta_detune_rwa(double u_max, double tau, double detune);

/// x maximizing x F(x); the small-drive limit of the optimal Omega_bar tau.
inline constexpr double kDetuneD0 = 2.606;

struct ApproxDetune {
  double detune = 0.0;
  /// Set when tau lies outside (0, t_QSL], where the fit was not made.
  bool out_of_range = false;
};

ApproxDetune approx_detune(double u_max, double tau);

struct DetuneOptimum {
  double detune = 0.0;
  double x = 0.0;
  double eta = 0.0;
};

/// Maximizes |eta_detune_rwa| over detune >= 0, solving the stationarity
/// condition in x = Omega_bar tau on (u_max tau, 2 pi). Throws
/// std::domain_error when no interior maximum exists.
DetuneOptimum optimize_detune_rwa(double u_max, double tau);

struct DetuneFullResult {
  DetuneParams params;
  double eta = 0.0;
  double cost = 0.0;
  double gradient_norm = 0.0;
  double initial_gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct DetuneFullOptions {
  int n_t = 0;  // 0 picks a carrier-resolving grid
  int max_iters = 400;
  double gradient_tolerance = 1e-6;  // relative to the initial gradient
};

/// Local maximization of eta^2 over (omega, a) in the lab frame from one
/// starting point, using adjoint parametric gradients.
DetuneFullResult refine_detune_full(const DetuneParams& init,
                                    const DetuneFullOptions& opts = {});

/// Multi-start over a in {0, 1/4, 1/2, 3/4} and omega = omega0 +- detune
/// estimate; returns the best local optimum with a wrapped into [0, 1).
DetuneFullResult optimize_detune_full(double u_max, double tau,
                                      double omega0 = 1.0,
                                      const DetuneFullOptions& opts = {});

}  // namespace qsense
