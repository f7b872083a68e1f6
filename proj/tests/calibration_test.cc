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

#include <cmath>
#include <numeric>

#include "gtest/gtest.h"
#include "qsense/protocols.hpp"

namespace qsense {
namespace {

struct SweepSetup {
  ControlWaveform protocol;
  std::vector<double> centers;
};

SweepSetup MakeSetup(double duration) {
  const double u = 0.4, tau = 0.5 * t_qsl(u);
  SweepSetup s{yx_waveform({u, tau, 1.0}, 200), {}};
  for (double c = tau / 2; c <= duration - tau / 2; c += 1.0) s.centers.push_back(c);
  return s;
}

SampledField Constant(double c, double duration) {
  return SampledField{0.0, duration, Eigen::Vector2d(c, c)};
}

double Mean(const Eigen::VectorXd& v) { return v.mean(); }

TEST(DistortedPulseTest, IdealStepWithoutPoles) {
  DistortionModel m{0.02, 5.0, {}, 30.0};
  EXPECT_EQ(distorted_pulse(m, 4.999), 0.0);
  EXPECT_EQ(distorted_pulse(m, 5.0), 0.02);
  EXPECT_EQ(distorted_pulse(m, 29.0), 0.02);
}

TEST(DistortedPulseTest, SinglePoleSettles) {
  DistortionModel m{0.02, 5.0, {{0.3, 4.0}}, 300.0};
  EXPECT_NEAR(distorted_pulse(m, 5.0), 0.026, 1e-15);
  EXPECT_NEAR(distorted_pulse(m, 9.0), 0.02 * (1 + 0.3 * std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(distorted_pulse(m, 299.0), 0.02, 1e-12);
}

TEST(DistortedPulseTest, Validation) {
  EXPECT_THROW((DistortionModel{0.01, 5.0, {}, 4.0}.validate()), std::invalid_argument);
  EXPECT_THROW((DistortionModel{0.01, 0.0, {{0.1, 0.0}}, 4.0}.validate()),
               std::invalid_argument);
  EXPECT_THROW((DistortionModel{0.01, -1.0, {}, 4.0}.validate()),
               std::invalid_argument);
}

TEST(SampledFieldTest, InterpolatesAndBoundsChecks) {
  const SampledField f{1.0, 0.5, Eigen::Vector3d(0.0, 1.0, 3.0)};
  EXPECT_DOUBLE_EQ(f.end(), 2.0);
  EXPECT_DOUBLE_EQ(f.at(1.25), 0.5);
  EXPECT_DOUBLE_EQ(f.at(1.75), 2.0);
  EXPECT_DOUBLE_EQ(f.at(2.0), 3.0);
  EXPECT_THROW(f.at(0.9), std::out_of_range);
  EXPECT_THROW(f.at(2.1), std::out_of_range);
}

TEST(SampledFieldTest, SampledPulseMatchesModel) {
  DistortionModel m{0.01, 3.0, {{0.3, 8.0}}, 40.0};
  const SampledField f = sample_distorted_pulse(m, 401);
  EXPECT_DOUBLE_EQ(f.step, 0.1);
  EXPECT_NEAR(f.at(13.0), distorted_pulse(m, 13.0), 1e-15);
}

TEST(MeasurementSweepTest, NullSignalIsUnbiased) {
  const SweepSetup s = MakeSetup(60.0);
  const auto rec = simulate_measurement_sweep(SensorModel{}, s.protocol,
                                              Constant(0.0, 60.0), s.centers,
                                              10000, 7);
  const ReconstructionResult r = reconstruct_waveform(rec, Constant(0.0, 60.0));
  const double n = static_cast<double>(rec.size());
  EXPECT_LT(std::abs(Mean(r.estimates)), 3.0 * Mean(r.stderrs) / std::sqrt(n));
  for (const auto& x : rec) EXPECT_FALSE(x.nonlinear);
}

TEST(MeasurementSweepTest, ConstantSignalIsRecovered) {
  const SweepSetup s = MakeSetup(60.0);
  const double c = 0.005;
  const auto rec = simulate_measurement_sweep(SensorModel{}, s.protocol,
                                              Constant(c, 60.0), s.centers,
                                              100000, 3);
  const ReconstructionResult r = reconstruct_waveform(rec, Constant(c, 60.0));
  const double n = static_cast<double>(rec.size());
  EXPECT_LT(std::abs(Mean(r.estimates) - c), 3.0 * Mean(r.stderrs) / std::sqrt(n));
}

TEST(MeasurementSweepTest, ExactProbabilitiesRecoverWindowAverage) {
  DistortionModel m{0.01, 20.0, {{0.3, 8.0}}, 80.0};
  const SampledField truth = sample_distorted_pulse(m, 1601);
  const SweepSetup s = MakeSetup(80.0);
  const auto rec =
      simulate_measurement_sweep(SensorModel{}, s.protocol, truth, s.centers, 0, 1);
  const KernelSamples k = numerical_kernel(SensorModel{}, s.protocol, 200);
  double sq = 0.0;
  for (const auto& x : rec) {
    EXPECT_EQ(x.p_hat, x.p_exact);
    EXPECT_EQ(x.std_error, 0.0);
    sq += std::pow(x.estimate - kernel_window_average(k, truth, x.center), 2);
  }
  EXPECT_LT(std::sqrt(sq / rec.size()), 1e-2 * m.step_amplitude);
}

TEST(MeasurementSweepTest, SeedsAreReproducible) {
  const SweepSetup s = MakeSetup(30.0);
  DistortionModel m{0.01, 10.0, {{0.3, 8.0}}, 30.0};
  const SampledField truth = sample_distorted_pulse(m, 301);
  auto run = [&](std::uint64_t seed) {
    return simulate_measurement_sweep(SensorModel{}, s.protocol, truth, s.centers,
                                      1000, seed);
  };
  const auto a = run(42), b = run(42), c = run(43);
  bool differs = false;
  for (std::size_t j = 0; j < a.size(); ++j) {
    EXPECT_EQ(a[j].p_hat, b[j].p_hat);
    EXPECT_EQ(a[j].estimate, b[j].estimate);
    differs |= a[j].p_hat != c[j].p_hat;
  }
  EXPECT_TRUE(differs);
}

TEST(MeasurementSweepTest, ErrorShrinksWithShots) {
  const SweepSetup s = MakeSetup(40.0);
  const SampledField truth = Constant(0.0, 40.0);
  std::vector<double> rms;
  for (std::int64_t shots : {1000, 100000}) {
    double acc = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto rec = simulate_measurement_sweep(SensorModel{}, s.protocol, truth,
                                                  s.centers, shots, seed);
      acc += reconstruct_waveform(rec, truth).rms_error;
    }
    rms.push_back(acc / 20);
  }
  EXPECT_NEAR(rms[0] / rms[1], 10.0, 1.5);
}

TEST(MeasurementSweepTest, FlagsStrongFields) {
  const SweepSetup s = MakeSetup(20.0);
  const auto rec = simulate_measurement_sweep(SensorModel{}, s.protocol,
                                              Constant(0.5, 20.0), s.centers,
                                              100000, 1);
  for (const auto& x : rec) EXPECT_TRUE(x.nonlinear);
}

TEST(MeasurementSweepTest, RejectsWindowOutsideRecord) {
  const SweepSetup s = MakeSetup(20.0);
  EXPECT_THROW(simulate_measurement_sweep(SensorModel{}, s.protocol,
                                          Constant(0.0, 20.0), {0.5}, 100, 1),
               std::invalid_argument);
  EXPECT_THROW(simulate_measurement_sweep(SensorModel{}, s.protocol,
                                          Constant(0.0, 20.0), s.centers, -1, 1),
               std::invalid_argument);
}

TEST(UnitsTest, SpeedLimitInNanoseconds) {
  EXPECT_NEAR(tqsl_ns(0.1), 31.41592653589793, 1e-12);
  EXPECT_THROW(tqsl_ns(0.0), std::invalid_argument);
}

}  // namespace
}  // namespace qsense
