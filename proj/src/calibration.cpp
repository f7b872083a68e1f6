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

#include "qsense/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "qsense/parallel.hpp"

namespace qsense {

namespace {

constexpr double kLinearStep = 1e-3;

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

void DistortionModel::validate() const {
  require(std::isfinite(step_amplitude), "step amplitude must be finite");
  require(std::isfinite(step_onset) && step_onset >= 0,
          "step onset must be >= 0");
  require(duration > step_onset, "duration must exceed the step onset");
  for (const auto& p : poles) {
    require(std::isfinite(p.weight), "pole weight must be finite");
    require(p.time_constant > 0, "pole time constants must be > 0");
  }
}

double distorted_pulse(const DistortionModel& model, double t) {
  if (t < model.step_onset) return 0.0;
  double s = 1.0;
  for (const auto& p : model.poles)
    s += p.weight * std::exp(-(t - model.step_onset) / p.time_constant);
  return model.step_amplitude * s;
}

Eigen::VectorXd distorted_pulse(const DistortionModel& model,
                                const Eigen::VectorXd& times) {
  model.validate();
  Eigen::VectorXd out(times.size());
  for (Eigen::Index k = 0; k < times.size(); ++k)
    out(k) = distorted_pulse(model, times(k));
  return out;
}

double SampledField::at(double t) const {
  const Eigen::Index n = values.size();
  if (n == 0) throw std::out_of_range("empty field");
  const double eps = 1e-12 * std::max(1.0, std::abs(end()));
  if (t < start - eps || t > end() + eps)
    throw std::out_of_range("time outside the field record");
  if (n == 1) return values(0);
  const double s = std::clamp((t - start) / step, 0.0, double(n - 1));
  const Eigen::Index k = std::min<Eigen::Index>(Eigen::Index(s), n - 2);
  const double f = s - double(k);
  return (1.0 - f) * values(k) + f * values(k + 1);
}

SampledField sample_distorted_pulse(const DistortionModel& model, int n) {
  model.validate();
  require(n >= 2, "need at least two samples");
  SampledField f;
  f.start = 0.0;
  f.step = model.duration / (n - 1);
  f.values = distorted_pulse(
      model, Eigen::VectorXd::LinSpaced(n, 0.0, model.duration));
  return f;
}

std::vector<MeasurementRecord> simulate_measurement_sweep(
    const SensorModel& model, const ControlWaveform& protocol,
    const SampledField& truth, const std::vector<double>& centers,
    std::int64_t shots, std::uint64_t seed, Frame frame) {
  model.validate();
  protocol.validate();
  require(shots >= 0, "shots must be >= 0");
  require(truth.step > 0, "field step must be > 0");
  const double half = 0.5 * protocol.tau;
  for (double c : centers)
    require(c - half >= truth.start - 1e-12 && c + half <= truth.end() + 1e-12,
            "protocol window leaves the field record");

  const SensorModel zero{model.omega0, 0.0};
  const double p0 = outcome_probability(zero, protocol, frame);
  const double eta = sensitivity(zero, protocol, frame);
  require(std::abs(eta) > 1e-12, "protocol has zero sensitivity");

  const int n_t = protocol.n_t();
  std::vector<MeasurementRecord> out(centers.size());
  parallel_for(centers.size(), [&](std::size_t j) {
    const double c = centers[j];
    std::vector<double> field(n_t), scaled(n_t);
    for (int i = 0; i < n_t; ++i)
      field[i] = truth.at(c - half + protocol.t_mid(i));
    auto prob = [&](double s) {
      for (int i = 0; i < n_t; ++i) scaled[i] = s * field[i];
      return std::clamp(
          probability_zero(evolve_final(zero, protocol, scaled, frame)), 0.0,
          1.0);
    };
    MeasurementRecord r;
    r.center = c;
    r.shots = shots;
    r.p_exact = prob(1.0);
    if (shots == 0) {
      r.p_hat = r.p_exact;
    } else {
      std::seed_seq seq{static_cast<std::uint32_t>(seed),
                        static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(j)};
      std::mt19937_64 rng(seq);
      std::binomial_distribution<std::int64_t> draw(shots, r.p_exact);
      r.p_hat = static_cast<double>(draw(rng)) / static_cast<double>(shots);
      r.std_error = std::sqrt(r.p_hat * (1.0 - r.p_hat) / double(shots)) /
                  std::abs(eta);
      const double slope =
          (prob(kLinearStep) - prob(-kLinearStep)) / (2.0 * kLinearStep);
      const double noise =
          std::sqrt(r.p_exact * (1.0 - r.p_exact) / double(shots));
      r.nonlinear = std::abs(r.p_exact - (p0 + slope)) > 3.0 * noise;
    }
    r.estimate = (r.p_hat - p0) / eta;
    out[j] = r;
  });
  return out;
}

ReconstructionResult reconstruct_waveform(
    const std::vector<MeasurementRecord>& records, const SampledField& truth) {
  const Eigen::Index n = static_cast<Eigen::Index>(records.size());
  ReconstructionResult out;
  out.centers.resize(n);
  out.estimates.resize(n);
  out.stderrs.resize(n);
  out.ground_truth.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.centers(k) = records[k].center;
    out.estimates(k) = records[k].estimate;
    out.stderrs(k) = records[k].std_error;
    out.ground_truth(k) = truth.at(records[k].center);
  }
  out.rms_error =
      n == 0 ? 0.0
             : std::sqrt((out.estimates - out.ground_truth).squaredNorm() / n);
  return out;
}

double kernel_window_average(const KernelSamples& kernel,
                             const SampledField& truth, double center) {
  require(std::abs(kernel.integral) > 1e-12, "kernel has zero area");
  Eigen::VectorXd field(kernel.size());
  for (int j = 0; j < kernel.size(); ++j)
    field(j) = truth.at(center + kernel.centers(j));
  return convolve_predict(kernel, field) / kernel.integral;
}

double tqsl_ns(double u_max_ghz) {
  require(u_max_ghz > 0, "u_max must be > 0");
  return std::numbers::pi / u_max_ghz;
}

}  // namespace qsense
