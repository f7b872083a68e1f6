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

#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

#include "qsense/dynamics.hpp"

namespace qsense::testing {

inline ControlWaveform RandomWaveform(std::mt19937_64& rng, double tau,
                                      double u_max, int n_t) {
  std::uniform_real_distribution<double> dist(-u_max, u_max);
  Eigen::VectorXd v(n_t);
  for (int i = 0; i < n_t; ++i) v(i) = dist(rng);
  return ControlWaveform(tau, u_max, v);
}

// Plain 2x2 propagation of psi0 alone, used as an oracle for psi1.
inline State2 EvolvePsi0(const ControlWaveform& wf, double omega0,
                         double delta_omega) {
  State2 psi(1.0, 0.0);
  const SensorModel m{omega0, delta_omega};
  for (int i = 0; i < wf.n_t(); ++i) {
    AugmentedState s;
    s.psi0 = psi;
    psi = propagate_interval(s, wf.values(i), m, wf.dt()).psi0;
  }
  return psi;
}

inline double RelErr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / b.norm();
}

}  // namespace qsense::testing
