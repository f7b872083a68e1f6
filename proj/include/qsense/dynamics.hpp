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

// Single driven qubit H = (omega0 + delta_omega)/2 sigma_z + u(t) sigma_x,
// units hbar = omega0 = 1. The qubit always starts in |0> and is read out in
// the same basis; the sensitivity eta is d p / d delta_omega at zero field.

#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "qsense/spin.hpp"

namespace qsense {

using AugmentedState = AugmentedPair<double>;
using State2 = Spinor<double>;

struct SensorModel {
  double omega0 = 1.0;
  double delta_omega = 0.0;

  void validate() const;
};

/// Lab frame integrates the full Hamiltonian; the rotating frame uses the
/// time-independent rotating-wave generator of a waveform's envelope.
enum class Frame { Lab, Rotating };

/// Complex rotating-frame envelope of a carrier-modulated control.
/// A lab control A cos(w t + theta) has envelope A exp(i theta) in the frame
/// rotating at w, where H = (delta_omega - (w - omega0))/2 sigma_z +
/// (Re E sigma_x + Im E sigma_y)/2.
struct RotatingEnvelope {
  double drive_omega = 1.0;
  Eigen::VectorXcd values;
};

/// Piecewise-constant control on a uniform grid of n_t intervals.
struct ControlWaveform {
  double tau = 0.0;
  double u_max = 0.0;
  Eigen::VectorXd values;
  std::optional<RotatingEnvelope> envelope;

  ControlWaveform() = default;
  ControlWaveform(double tau_, double u_max_, Eigen::VectorXd values_);

  static ControlWaveform zeros(double tau, double u_max, int n_t);

  int n_t() const { return static_cast<int>(values.size()); }
  double dt() const { return tau / static_cast<double>(values.size()); }
  double t_qsl() const;
  /// Midpoint of interval i.
  double t_mid(int i) const { return (i + 0.5) * dt(); }
  /// Same control sampled on a grid `factor` times finer.
  ControlWaveform refined(int factor) const;

  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;
};

/// Quantum speed limit time pi / u_max.
double t_qsl(double u_max);

struct Trajectory {
  std::vector<AugmentedState> states;  // n_t + 1 grid states
  ControlWaveform waveform;
  SensorModel model;
  Frame frame = Frame::Lab;

  const AugmentedState& final_state() const { return states.back(); }
};

/// Hamiltonian coefficients h (H = h . sigma) of interval i.
Field3<double> interval_field(const SensorModel& model,
                              const ControlWaveform& waveform, int i,
                              double delta_omega, Frame frame);

AugmentedState initial_state();

AugmentedState propagate_interval(const AugmentedState& state, double u,
                                  const SensorModel& model, double dt);

Trajectory evolve(const SensorModel& model, const ControlWaveform& waveform,
                  Frame frame = Frame::Lab);
/// Time-dependent field: one delta_omega per control interval.
Trajectory evolve(const SensorModel& model, const ControlWaveform& waveform,
                  std::span<const double> delta_omega, Frame frame);

/// Final-state-only evolution (no trajectory storage).
AugmentedState evolve_final(const SensorModel& model,
                            const ControlWaveform& waveform, Frame frame);
AugmentedState evolve_final(const SensorModel& model,
                            const ControlWaveform& waveform,
                            std::span<const double> delta_omega, Frame frame);

// Observables of a state pair.
double probability_zero(const AugmentedState& s);
double sensitivity(const AugmentedState& s);
double qfi(const AugmentedState& s);

double outcome_probability(const SensorModel& model,
                           const ControlWaveform& waveform,
                           Frame frame = Frame::Lab);
/// eta at delta_omega = 0, signed.
double sensitivity(const SensorModel& model, const ControlWaveform& waveform,
                   Frame frame = Frame::Lab);
double qfi(const SensorModel& model, const ControlWaveform& waveform,
           Frame frame = Frame::Lab);

/// QFI at every grid time of a trajectory.
Eigen::VectorXd qfi_series(const Trajectory& traj);
/// <sigma_z> at every grid time.
Eigen::VectorXd sigma_z_series(const Trajectory& traj);

/// Throws std::invalid_argument for an unnormalized input.
Eigen::Vector3d bloch_vector(const State2& psi0);

}  // namespace qsense
