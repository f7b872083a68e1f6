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

// Command-line front end. Times given on the command line or in config files
// (tau, tau_grid) are in units of t_QSL; everything else is dimensionless
// with omega0 = 1.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "qsense/calibration.hpp"

namespace qsense::cli {

enum ExitCode : int {
  kOk = 0,
  kInvalidConfig = 2,
  kNumericalFailure = 3,
  kUnwritableOutput = 4,
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OutputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string command;

  double omega0 = 1.0;

  double u_max = 0.2;
  std::optional<double> tau;       // units of t_QSL
  std::optional<std::string> tau_grid;  // "start:stop:step", units of t_QSL
  int n_t = 0;                     // 0 picks a default per command
  bool rwa = false;

  std::string protocol;            // optimal | yx | detune | file
  std::optional<double> drive_omega;
  double phase_a = 0.0;

  std::string cost = "eta2";
  double smooth_weight = 0.0;
  int max_iters = 4000;
  std::vector<std::uint64_t> seeds = {1};

  int n_centers = 200;
  double impulse_area = 1e-4;

  std::int64_t shots = 10000;
  double step_amplitude = 0.01;
  double step_onset = 20.0;
  double duration = 80.0;
  double center_step = 0.5;
  std::vector<DistortionPole> poles = {{0.3, 8.0}};

  std::uint64_t seed = 1;
  std::string input;
  std::string output;
  std::string format = "both";  // csv | json | both

  /// Throws ConfigError.
  void validate() const;
  /// Parsed "start:stop:step", inclusive of stop.
  std::vector<double> tau_values() const;
};

/// Reads a nested config object; unknown keys throw ConfigError.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const RunConfig& c);

/// Number formatting shared by CSV and JSON output: 12 significant digits,
/// dot decimal, independent of the locale.
std::string format_number(double x);

/// Runs one subcommand. Writes artifacts to c.output (.csv / .json) or to
/// `out` when no output path is set.
void run(const RunConfig& c, std::ostream& out, std::ostream& log);

/// Full entry point: argument parsing, config loading, exit codes, and
/// machine-readable errors on `err`.
int main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace qsense::cli
