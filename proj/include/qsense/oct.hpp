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

// Optimal-control machinery for the augmented sensing dynamics: terminal
// costs, adjoint back-propagation, the switching function Phi, the control
// Hamiltonian H_oc, singular-arc control values, and projected-gradient
// optimizers (free-form and parametric).

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "qsense/dynamics.hpp"

namespace qsense {

enum class CostKind { EtaSquared, NegQfi };

std::string to_string(CostKind kind);
/// Accepts "eta2" and "qfi" (case-sensitive). Throws std::invalid_argument.
CostKind cost_kind_from_string(const std::string& s);

struct CostSpec {
  CostKind kind = CostKind::EtaSquared;
  double smooth_weight = 0.0;

  void validate() const;
};

/// Terminal cost of a final state pair (no running cost).
/// EtaSquared: -eta^2/2. NegQfi: -4 (<psi1|psi1> - |<psi0|psi1>|^2).
double terminal_cost_value(const AugmentedState& final_state, CostKind kind);

/// Adjoint boundary condition 2 dC / d<psi(tau)|.
AugmentedState terminal_adjoint(const AugmentedState& final_state,
                                CostKind kind);

/// Terminal cost plus smooth_weight * C_smooth of the generating waveform.
double terminal_cost(const Trajectory& traj, const CostSpec& cost);

/// C_smooth = 1/2 int udot^2 dt on forward differences, and its exact
/// per-sample gradient -dt * uddot with Neumann ends. Needs n_t >= 3.
std::pair<double, Eigen::VectorXd> smoothness_cost_and_gradient(
    const ControlWaveform& waveform);

struct AdjointTrajectory {
  std::vector<AugmentedState> states;  // n_t + 1, aligned with the forward grid
  CostSpec cost;
};

/// Sampled OCT functions, one value per control interval.
struct OctDiagnostics {
  /// Exact discrete gradient of the terminal cost divided by dt.
  Eigen::VectorXd phi;
  /// Im <pi|G|psi>; exactly constant inside each interval.
  Eigen::VectorXd h_oc;
  /// Singular control candidate at the interval midpoint; NaN where the
  /// denominator falls below its floor.
  Eigen::VectorXd u_sing;
  /// Terminal cost including the smoothness term.
  double cost_value = 0.0;
};

/// Back-propagates the adjoint pair with the exact interval exponentials and
/// samples Phi, H_oc and u_sing. The trajectory must be at zero field.
std::pair<AdjointTrajectory, OctDiagnostics> adjoint_diagnostics(
    const Trajectory& traj, const CostSpec& cost);

/// Floor on the singular-control denominator, relative to |pi| |psi|.
inline constexpr double kSingularFloor = 1e-10;

/// (omega0/2) Im<pi|Lx|psi> / Im<pi|Gd|psi> with Lx = [[0,0],[sx,0]] and
/// Gd the drift generator. NaN when the denominator is below the floor.
double singular_control_value(const AugmentedState& pi,
                              const AugmentedState& psi, double omega0);

/// Total cost and its gradient with respect to every u_i (lab frame, zero
/// field). `phi` is the terminal-only part divided by dt.
struct CostGradient {
  double cost = 0.0;
  double terminal = 0.0;
  Eigen::VectorXd gradient;
  Eigen::VectorXd phi;
  AugmentedState final_state;
};

CostGradient cost_and_gradient(const SensorModel& model,
                               const ControlWaveform& waveform,
                               const CostSpec& cost);

enum class ArcLabel : std::uint8_t { BangPlus, BangMinus, Singular };

char arc_symbol(ArcLabel label);
/// Run-length encoding like "12+5S12-" ('+', '-', 'S').
std::string encode_arcs(const std::vector<ArcLabel>& labels);

struct ArcThresholds {
  /// Bang when |u| > u_max (1 - bang_slack).
  double bang_slack = 1e-6;
  /// Interior runs this short or shorter between bangs are discretized
  /// switching instants and take the sign of u.
  int max_switch_run = 2;
  /// Singular additionally needs |Phi| < singular_phi_ratio * max|Phi|.
  double singular_phi_ratio = 1e-3;
};

/// Structural labels from u alone: longer interior runs are Singular.
std::vector<ArcLabel> classify_arcs(const ControlWaveform& waveform,
                                    const ArcThresholds& th = {});
/// Structural labels, with interior samples whose |Phi| is not small
/// relabelled by the sign of u.
std::vector<ArcLabel> classify_arcs(const ControlWaveform& waveform,
                                    const Eigen::VectorXd& phi,
                                    const ArcThresholds& th = {});

/// Number of intervals labelled Singular.
int count_singular(const std::vector<ArcLabel>& labels);
/// True when the Singular labels form one contiguous non-empty run.
bool singular_arc_contiguous(const std::vector<ArcLabel>& labels);

struct OptimizationConfig {
  double omega0 = 1.0;
  double u_max = 0.2;
  double tau = 0.0;
  int n_t = 400;
  CostSpec cost;
  int max_iters = 4000;
  /// First trial step, in units of u_max / max|grad|.
  double initial_rate = 0.5;
  double backtrack_factor = 0.5;
  /// Replace interior controls by u_sing every iteration.
  bool singular_substitution = false;
  /// Seeds for the random starts of the multi-start driver.
  std::vector<std::uint64_t> seeds = {1};
  /// Stop when the projected gradient norm falls below this fraction of the
  /// initial one.
  double gradient_tolerance = 1e-9;
  /// Stop when the relative cost change over 50 iterations is below this.
  double cost_tolerance = 1e-13;

  void validate() const;
};

struct OptimizationResult {
  ControlWaveform waveform;
  OctDiagnostics diagnostics;
  std::vector<double> history;
  std::vector<ArcLabel> arc_labels;
  bool converged = false;
  int iterations = 0;
  std::string start;  // name of the initial guess
};

/// Projected gradient descent u <- clip(u - rate * grad, +-u_max) with
/// Barzilai-Borwein trial steps and backtracking until the cost decreases.
OptimizationResult optimize_free_form(const OptimizationConfig& config,
                                      const ControlWaveform& init);

/// Named initial guesses: YX-shaped, detune-shaped, +bang, -bang and one
/// random waveform per configured seed.
std::vector<std::pair<std::string, ControlWaveform>> multistart_guesses(
    const OptimizationConfig& config);

/// Runs optimize_free_form from every guess and keeps the lowest cost.
/// Starts run concurrently on the shared worker pool.
OptimizationResult optimize_multistart(const OptimizationConfig& config);

/// Waveform family u(t; alpha) with analytic d u_i / d alpha_j.
struct WaveformFamily {
  std::function<ControlWaveform(const Eigen::VectorXd&)> waveform;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
};

/// dC/dalpha = sum_i Phi_i dt du_i/dalpha (+ smoothness term).
Eigen::VectorXd parametric_gradient(const CostGradient& cg,
                                    const Eigen::MatrixXd& jacobian);

struct ParametricResult {
  Eigen::VectorXd params;
  double cost = 0.0;
  double gradient_norm = 0.0;
  double initial_gradient_norm = 0.0;
  std::vector<double> history;
  int iterations = 0;
  bool converged = false;
};

ParametricResult optimize_parametric(const WaveformFamily& family,
                                     const Eigen::VectorXd& init,
                                     const OptimizationConfig& config);

/// int Phi_ref (u_app - u_ref) dt. Throws on grid mismatch.
double estimate_cost_deviation(const Eigen::VectorXd& phi_ref,
                               const ControlWaveform& u_ref,
                               const ControlWaveform& u_app);
/// Delta eta = -Delta C / |eta| for the eta^2 cost.
double eta_change_from_cost(double delta_cost, double eta);

struct OptimalityTolerances {
  double h_oc_constancy = 1e-2;
  double singular_phi_ratio = 1e-3;
  double bang_consistency = 1.0;  // required fraction
};

struct OptimalityReport {
  int bang_samples = 0;
  int singular_samples = 0;
  double bang_consistency_rate = 1.0;
  /// max |Phi| over singular samples divided by max |Phi| overall.
  double singular_phi_ratio = 0.0;
  /// std(H_oc) / |mean(H_oc)|
  double h_oc_constancy = 0.0;
  double h_oc_mean = 0.0;

  bool bang_ok = false;
  bool singular_ok = false;
  bool h_oc_constant_ok = false;
  bool h_oc_negative_ok = false;
  bool passed() const {
    return bang_ok && singular_ok && h_oc_constant_ok && h_oc_negative_ok;
  }
};

OptimalityReport verify_optimality(const OptimizationResult& result,
                                   const OptimalityTolerances& tol = {});
/// Convenience: diagnose an arbitrary waveform as if it were a result.
OptimizationResult diagnose(const SensorModel& model,
                            const ControlWaveform& waveform,
                            const CostSpec& cost);

}  // namespace qsense
