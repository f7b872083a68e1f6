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

#include "qsense/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "qsense/parallel.hpp"
#include "qsense/protocols.hpp"

namespace qsense {

namespace {

constexpr double kMaxImpulsePhase = 0.1;

double bin_midpoint(double tau, int n, int j) { return (j + 0.5) * tau / n; }

}  // namespace

KernelSamples numerical_kernel(const SensorModel& model,
                               const ControlWaveform& waveform, int n_centers,
                               Frame frame, double impulse_area) {
  model.validate();
  waveform.validate();
  if (n_centers < 50) throw std::invalid_argument("n_centers must be >= 50");
  if (!(impulse_area > 0)) throw std::invalid_argument("impulse area must be > 0");
  if (impulse_area > kMaxImpulsePhase)
    throw std::invalid_argument(
        "impulse phase exceeds 0.1 rad; refine the grid or lower the area");

  const int n_t = waveform.n_t();
  const double dt = waveform.dt();
  const double tau = waveform.tau;
  const double height = impulse_area / dt;
  const double base = model.delta_omega;

  KernelSamples out;
  out.protocol = waveform;
  out.centers.resize(n_centers);
  out.values.resize(n_centers);

  parallel_for(static_cast<std::size_t>(n_centers), [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    const int i = std::clamp(
        static_cast<int>(std::floor(bin_midpoint(tau, n_centers, j) / dt)), 0,
        n_t - 1);
    std::vector<double> field(n_t, base);
    field[i] = base + height;
    const double p_plus =
        probability_zero(evolve_final(model, waveform, field, frame));
    field[i] = base - height;
    const double p_minus =
        probability_zero(evolve_final(model, waveform, field, frame));
    out.centers(j) = waveform.t_mid(i) - 0.5 * tau;
    out.values(j) = (p_plus - p_minus) / (2.0 * impulse_area);
  });
  out.integral = out.values.sum() * out.spacing();
  return out;
}

KernelSamples analytic_kernel_yx_rwa(double u_max, double tau, int n_centers) {
  if (!(u_max > 0) || !(tau > 0))
    throw std::invalid_argument("u_max and tau must be > 0");
  if (n_centers < 1) throw std::invalid_argument("n_centers must be >= 1");
  KernelSamples out;
  out.protocol = yx_waveform(YXParams{u_max, tau, 1.0}, n_centers);
  out.centers.resize(n_centers);
  out.values.resize(n_centers);
  const double front = 0.5 * std::sin(0.5 * u_max * tau);
  for (int j = 0; j < n_centers; ++j) {
    const double t = bin_midpoint(tau, n_centers, j) - 0.5 * tau;
    out.centers(j) = t;
    out.values(j) = front * std::sin(u_max * (0.5 * tau - std::abs(t)));
  }
  out.integral = out.values.sum() * out.spacing();
  return out;
}

double convolve_predict(const KernelSamples& kernel,
                        const Eigen::VectorXd& field) {
  if (field.size() != kernel.values.size())
    throw std::invalid_argument("field is not sampled on the kernel grid");
  return kernel.values.dot(field) * kernel.spacing();
}

}  // namespace qsense
