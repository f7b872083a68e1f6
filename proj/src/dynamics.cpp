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

#include "qsense/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace qsense {
namespace {

constexpr double kBoundSlack = 1e-12;

bool finite(const AugmentedState& s) {
  return s.psi0.allFinite() && s.psi1.allFinite();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

template <typename FieldAt>
AugmentedState run(const ControlWaveform& wf, FieldAt&& field_at,
                   std::vector<AugmentedState>* store) {
  const double dt = wf.dt();
  AugmentedState s = initial_state();
  if (store) {
    store->clear();
    store->reserve(wf.n_t() + 1);
    store->push_back(s);
  }
  for (int i = 0; i < wf.n_t(); ++i) {
    s = IntervalPropagator<double>(field_at(i), dt).forward(s);
    if (store) store->push_back(s);
  }
  return s;
}

SensorModel at_zero_field(SensorModel m) {
  m.delta_omega = 0.0;
  return m;
}

}  // namespace

void SensorModel::validate() const {
  require(std::isfinite(omega0) && omega0 > 0, "omega0 must be finite and > 0");
  require(std::isfinite(delta_omega), "delta_omega must be finite");
}

double t_qsl(double u_max) { return std::numbers::pi / u_max; }

ControlWaveform::ControlWaveform(double tau_, double u_max_,
                                 Eigen::VectorXd values_)
    : tau(tau_), u_max(u_max_), values(std::move(values_)) {}

ControlWaveform ControlWaveform::zeros(double tau, double u_max, int n_t) {
  return ControlWaveform(tau, u_max, Eigen::VectorXd::Zero(n_t));
}

double ControlWaveform::t_qsl() const { return qsense::t_qsl(u_max); }

ControlWaveform ControlWaveform::refined(int factor) const {
  require(factor >= 1, "refinement factor must be >= 1");
  ControlWaveform out(tau, u_max, Eigen::VectorXd(n_t() * factor));
  for (int i = 0; i < n_t(); ++i)
    out.values.segment(i * factor, factor).setConstant(values(i));
  if (envelope) {
    RotatingEnvelope env{envelope->drive_omega,
                         Eigen::VectorXcd(n_t() * factor)};
    for (int i = 0; i < n_t(); ++i)
      env.values.segment(i * factor, factor).setConstant(envelope->values(i));
    out.envelope = std::move(env);
  }
  return out;
}

void ControlWaveform::validate() const {
  require(values.size() >= 1, "waveform needs n_t >= 1");
  require(std::isfinite(tau) && tau > 0, "waveform tau must be finite and > 0");
  require(std::isfinite(u_max) && u_max > 0, "u_max must be finite and > 0");
  require(values.allFinite(), "waveform contains non-finite values");
  require(values.cwiseAbs().maxCoeff() <= u_max + kBoundSlack,
          "waveform exceeds amplitude bound u_max");
  if (envelope) {
    require(envelope->values.size() == values.size(),
            "envelope length differs from waveform length");
    require(envelope->values.allFinite() &&
                std::isfinite(envelope->drive_omega),
            "envelope contains non-finite values");
  }
}

Field3<double> interval_field(const SensorModel& model,
                              const ControlWaveform& waveform, int i,
                              double delta_omega, Frame frame) {
  if (frame == Frame::Lab)
    return {waveform.values(i), 0.0, 0.5 * (model.omega0 + delta_omega)};
  const RotatingEnvelope& env = *waveform.envelope;
  const std::complex<double> e = env.values(i);
  const double detune = env.drive_omega - model.omega0;
  return {0.5 * e.real(), 0.5 * e.imag(), 0.5 * (delta_omega - detune)};
}

AugmentedState initial_state() {
  AugmentedState s;
  s.psi0(0) = 1.0;
  return s;
}

AugmentedState propagate_interval(const AugmentedState& state, double u,
                                  const SensorModel& model, double dt) {
  model.validate();
  require(std::isfinite(u), "control amplitude must be finite");
  require(std::isfinite(dt) && dt >= 0, "dt must be finite and >= 0");
  require(finite(state), "state contains non-finite entries");
  const Field3<double> h(u, 0.0, 0.5 * (model.omega0 + model.delta_omega));
  return IntervalPropagator<double>(h, dt).forward(state);
}

namespace {

void check_inputs(const SensorModel& model, const ControlWaveform& waveform,
                  Frame frame) {
  model.validate();
  waveform.validate();
  if (frame == Frame::Rotating && !waveform.envelope)
    throw std::invalid_argument(
        "rotating-frame evolution requires a waveform envelope");
}

}  // namespace

Trajectory evolve(const SensorModel& model, const ControlWaveform& waveform,
                  Frame frame) {
  check_inputs(model, waveform, frame);
  Trajectory traj{{}, waveform, model, frame};
  run(
      waveform,
      [&](int i) {
        return interval_field(model, waveform, i, model.delta_omega, frame);
      },
      &traj.states);
  return traj;
}

Trajectory evolve(const SensorModel& model, const ControlWaveform& waveform,
                  std::span<const double> delta_omega, Frame frame) {
  check_inputs(model, waveform, frame);
  require(static_cast<int>(delta_omega.size()) == waveform.n_t(),
          "field samples must match the control grid");
  Trajectory traj{{}, waveform, model, frame};
  run(
      waveform,
      [&](int i) {
        return interval_field(model, waveform, i, delta_omega[i], frame);
      },
      &traj.states);
  return traj;
}

AugmentedState evolve_final(const SensorModel& model,
                            const ControlWaveform& waveform, Frame frame) {
  check_inputs(model, waveform, frame);
  return run(
      waveform,
      [&](int i) {
        return interval_field(model, waveform, i, model.delta_omega, frame);
      },
      nullptr);
}

AugmentedState evolve_final(const SensorModel& model,
                            const ControlWaveform& waveform,
                            std::span<const double> delta_omega, Frame frame) {
  check_inputs(model, waveform, frame);
  require(static_cast<int>(delta_omega.size()) == waveform.n_t(),
          "field samples must match the control grid");
  return run(
      waveform,
      [&](int i) {
        return interval_field(model, waveform, i, delta_omega[i], frame);
      },
      nullptr);
}

double probability_zero(const AugmentedState& s) { return std::norm(s.psi0(0)); }

double sensitivity(const AugmentedState& s) {
  // <0|psi1><psi0|0> + c.c.
  return 2.0 * (s.psi1(0) * std::conj(s.psi0(0))).real();
}

double qfi(const AugmentedState& s) {
  const double v = 4.0 * (s.psi1.squaredNorm() - std::norm(s.psi0.dot(s.psi1)));
  return std::max(v, 0.0);
}

double outcome_probability(const SensorModel& model,
                           const ControlWaveform& waveform, Frame frame) {
  return std::clamp(probability_zero(evolve_final(model, waveform, frame)), 0.0,
                    1.0);
}

double sensitivity(const SensorModel& model, const ControlWaveform& waveform,
                   Frame frame) {
  return sensitivity(evolve_final(at_zero_field(model), waveform, frame));
}

double qfi(const SensorModel& model, const ControlWaveform& waveform,
           Frame frame) {
  return qfi(evolve_final(at_zero_field(model), waveform, frame));
}

Eigen::VectorXd qfi_series(const Trajectory& traj) {
  Eigen::VectorXd out(traj.states.size());
  for (std::size_t k = 0; k < traj.states.size(); ++k)
    out(k) = qfi(traj.states[k]);
  return out;
}

Eigen::VectorXd sigma_z_series(const Trajectory& traj) {
  Eigen::VectorXd out(traj.states.size());
  for (std::size_t k = 0; k < traj.states.size(); ++k)
    out(k) = std::norm(traj.states[k].psi0(0)) -
             std::norm(traj.states[k].psi0(1));
  return out;
}

Eigen::Vector3d bloch_vector(const State2& psi0) {
  require(psi0.allFinite(), "state contains non-finite entries");
  require(std::abs(psi0.norm() - 1.0) < 1e-8, "state is not normalized");
  return bloch_components(psi0);
}

}  // namespace qsense
