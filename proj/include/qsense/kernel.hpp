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

// Linear response of a fixed protocol to a time-varying field:
// delta_p = int K(t') delta_omega(t') dt' over the interrogation window.

#pragma once

#include <Eigen/Core>

#include "qsense/dynamics.hpp"

namespace qsense {

struct KernelSamples {
  /// Offsets t' in [-tau/2, tau/2] from the window center.
  Eigen::VectorXd centers;
  Eigen::VectorXd values;
  ControlWaveform protocol;
  /// Midpoint quadrature of the samples with weight tau / n_centers.
  double integral = 0.0;

  int size() const { return static_cast<int>(values.size()); }
  double spacing() const { return protocol.tau / size(); }
};

/// Default impulse area; small enough that delta_p stays linear.
inline constexpr double kDefaultImpulseArea = 1e-4;

/// Samples K by applying a one-interval rectangular impulse of the given area
/// at each center (snapped to a control-interval midpoint) and taking the
/// symmetric difference (p(+A) - p(-A)) / 2A. Needs n_centers >= 50. Throws
/// std::invalid_argument when the impulse phase A exceeds 0.1 rad.
KernelSamples numerical_kernel(const SensorModel& model,
                               const ControlWaveform& waveform, int n_centers,
                               Frame frame = Frame::Lab,
                               double impulse_area = kDefaultImpulseArea);

/// K(t') = sin(u tau / 2) sin(u (tau/2 - |t'|)) / 2 on bin midpoints.
KernelSamples analytic_kernel_yx_rwa(double u_max, double tau, int n_centers);

/// int K delta_omega dt' with delta_omega given at the kernel centers.
double convolve_predict(const KernelSamples& kernel,
                        const Eigen::VectorXd& field);

}  // namespace qsense
