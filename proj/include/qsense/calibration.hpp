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

// Reconstruction of a distorted flux pulse from a sweep of short
// time-resolved measurements with binomial shot noise.

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "qsense/dynamics.hpp"
#include "qsense/kernel.hpp"

namespace qsense {

struct DistortionPole {
  double weight = 0.0;
  double time_constant = 1.0;
};

/// s(t) = A (1 + sum_k w_k exp(-(t - t0) / tau_k)) for t >= t0, else 0.
struct DistortionModel {
  double step_amplitude = 0.01;
  double step_onset = 0.0;
  std::vector<DistortionPole> poles;
  double duration = 1.0;

  void validate() const;
};

double distorted_pulse(const DistortionModel& model, double t);
Eigen::VectorXd distorted_pulse(const DistortionModel& model,
                                const Eigen::VectorXd& times);

/// Field on the uniform grid start + k * step, linearly interpolated.
struct SampledField {
  double start = 0.0;
  double step = 1.0;
  Eigen::VectorXd values;

  double end() const { return start + step * (values.size() - 1); }
  /// Throws std::out_of_range outside [start, end()].
  double at(double t) const;
};

/// Samples `model` on n points spanning [0, duration].
SampledField sample_distorted_pulse(const DistortionModel& model, int n);

struct MeasurementRecord {
  double center = 0.0;
  std::int64_t shots = 0;  // 0 means exact probabilities
  double p_exact = 0.0;
  double p_hat = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
  /// Set when |p - p_linear| exceeds three binomial standard deviations.
  bool nonlinear = false;
};

/// One record per center. The protocol window [c - tau/2, c + tau/2] must lie
/// inside the field record. Each record draws from its own stream seeded by
/// (seed, index), so results do not depend on the worker count.
std::vector<MeasurementRecord> simulate_measurement_sweep(
    const SensorModel& model, const ControlWaveform& protocol,
    const SampledField& truth, const std::vector<double>& centers,
    std::int64_t shots, std::uint64_t seed, Frame frame = Frame::Lab);

struct ReconstructionResult {
  Eigen::VectorXd centers;
  Eigen::VectorXd estimates;
  Eigen::VectorXd stderrs;
  Eigen::VectorXd ground_truth;
  double rms_error = 0.0;
};

/// Takes each estimate as the field at its center and reports the rms
/// deviation from `truth` sampled there.
ReconstructionResult reconstruct_waveform(
    const std::vector<MeasurementRecord>& records, const SampledField& truth);

/// Kernel-weighted window average int K(t') s(c + t') dt' / int K.
double kernel_window_average(const KernelSamples& kernel,
                             const SampledField& truth, double center);

/// t_QSL in ns for a drive bound given in GHz (angular).
double tqsl_ns(double u_max_ghz);

}  // namespace qsense
