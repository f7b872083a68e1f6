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

#include "qsense/oct.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "qsense/parallel.hpp"
#include "qsense/protocols.hpp"

namespace qsense {
namespace {

using Propagator = IntervalPropagator<double>;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Field3<double> lab_field(double omega0, double u) {
  return {u, 0.0, 0.5 * omega0};
}

const Field3<double>& control_direction() {
  static const Field3<double> d(1.0, 0.0, 0.0);
  return d;
}

/// Drift part of the augmented generator at zero field and zero control.
BlockOp<double> drift_generator(double omega0) {
  return augmented_generator<double>(lab_field(omega0, 0.0));
}

BlockOp<double> lower_sigma_x() {
  return {Op2<double>::Zero(), pauli_x<double>()};
}

SensorModel zero_field_model(double omega0) { return {omega0, 0.0}; }

/// Forward pass storing propagators and states, then adjoint sweep.
struct Sweep {
  std::vector<Propagator> props;
  std::vector<AugmentedState> psi;  // n_t + 1
  std::vector<AugmentedState> pi;   // n_t + 1, filled by backward()
  Eigen::VectorXd grad;             // terminal part, per interval

  Sweep(double omega0, const ControlWaveform& wf) {
    const int n = wf.n_t();
    const double dt = wf.dt();
    props.reserve(n);
    psi.reserve(n + 1);
    psi.push_back(initial_state());
    for (int i = 0; i < n; ++i) {
      props.emplace_back(lab_field(omega0, wf.values(i)), dt);
      psi.push_back(props.back().forward(psi.back()));
    }
  }

  void backward(CostKind kind) {
    const int n = static_cast<int>(props.size());
    pi.assign(n + 1, AugmentedState{});
    grad.resize(n);
    pi[n] = terminal_adjoint(psi[n], kind);
    for (int i = n - 1; i >= 0; --i) {
      const BlockOp<double> dm = props[i].derivative(control_direction());
      grad(i) = sandwich(pi[i + 1], dm, psi[i]).real();
      pi[i] = props[i].backward(pi[i + 1]);
    }
  }
};

double smooth_value(const Eigen::VectorXd& u, double dt) {
  const Eigen::Index n = u.size();
  if (n < 2) return 0.0;
  const Eigen::VectorXd du = u.tail(n - 1) - u.head(n - 1);
  return 0.5 * du.squaredNorm() / dt;
}

Eigen::VectorXd smooth_gradient(const Eigen::VectorXd& u, double dt) {
  const Eigen::Index n = u.size();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  if (n < 2) return g;
  // -dt * uddot with mirrored ghost samples at both ends.
  for (Eigen::Index i = 0; i < n; ++i) {
    const double left = i > 0 ? u(i - 1) : u(i);
    const double right = i + 1 < n ? u(i + 1) : u(i);
    g(i) = -(right - 2.0 * u(i) + left) / dt;
  }
  return g;
}

Eigen::VectorXd clip(const Eigen::VectorXd& u, double bound) {
  return u.cwiseMax(-bound).cwiseMin(bound);
}

/// Gradient with components pushing against an active bound removed.
Eigen::VectorXd projected(const Eigen::VectorXd& u, const Eigen::VectorXd& g,
                          double bound) {
  Eigen::VectorXd pg = g;
  const double edge = bound * (1.0 - 1e-12);
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if ((u(i) >= edge && g(i) < 0) || (u(i) <= -edge && g(i) > 0)) pg(i) = 0;
  }
  return pg;
}

}  // namespace

std::string to_string(CostKind kind) {
  return kind == CostKind::EtaSquared ? "eta2" : "qfi";
}

CostKind cost_kind_from_string(const std::string& s) {
  if (s == "eta2") return CostKind::EtaSquared;
  if (s == "qfi") return CostKind::NegQfi;
  throw std::invalid_argument("unknown cost kind '" + s +
                              "' (expected eta2 or qfi)");
}

void CostSpec::validate() const {
  if (!std::isfinite(smooth_weight) || smooth_weight < 0)
    throw std::invalid_argument("smooth_weight must be finite and >= 0");
}

double terminal_cost_value(const AugmentedState& s, CostKind kind) {
  if (kind == CostKind::EtaSquared) {
    const double eta = sensitivity(s);
    return -0.5 * eta * eta;
  }
  return -4.0 * (s.psi1.squaredNorm() - std::norm(s.psi0.dot(s.psi1)));
}

AugmentedState terminal_adjoint(const AugmentedState& s, CostKind kind) {
  AugmentedState pi;
  if (kind == CostKind::EtaSquared) {
    // -4 Re[<0|psi0><psi1|0>] (|0><0|psi1>, |0><0|psi0>)
    const double eta = sensitivity(s);
    pi.psi0(0) = -2.0 * eta * s.psi1(0);
    pi.psi1(0) = -2.0 * eta * s.psi0(0);
    return pi;
  }
  const std::complex<double> p10 = s.psi1.dot(s.psi0);  // <psi1|psi0>
  pi.psi0 = 8.0 * s.psi1 * p10;
  pi.psi1 = 8.0 * (-s.psi1 + s.psi0 * std::conj(p10));
  return pi;
}

double terminal_cost(const Trajectory& traj, const CostSpec& cost) {
  cost.validate();
  double c = terminal_cost_value(traj.final_state(), cost.kind);
  if (cost.smooth_weight > 0)
    c += cost.smooth_weight *
         smooth_value(traj.waveform.values, traj.waveform.dt());
  return c;
}

std::pair<double, Eigen::VectorXd> smoothness_cost_and_gradient(
    const ControlWaveform& waveform) {
  if (waveform.n_t() < 3)
    throw std::invalid_argument("smoothness cost needs n_t >= 3");
  return {smooth_value(waveform.values, waveform.dt()),
          smooth_gradient(waveform.values, waveform.dt())};
}

double singular_control_value(const AugmentedState& pi,
                              const AugmentedState& psi, double omega0) {
  const double num = sandwich(pi, lower_sigma_x(), psi).imag();
  const double den = sandwich(pi, drift_generator(omega0), psi).imag();
  const double scale =
      std::sqrt(inner(pi, pi).real() * inner(psi, psi).real());
  if (!(std::abs(den) > kSingularFloor * scale)) return kNaN;
  return 0.5 * omega0 * num / den;
}

std::pair<AdjointTrajectory, OctDiagnostics> adjoint_diagnostics(
    const Trajectory& traj, const CostSpec& cost) {
  cost.validate();
  if (traj.frame != Frame::Lab || traj.model.delta_omega != 0.0)
    throw std::invalid_argument(
        "adjoint diagnostics need a lab-frame trajectory at zero field");
  const ControlWaveform& wf = traj.waveform;
  const double omega0 = traj.model.omega0;
  const int n = wf.n_t();
  const double dt = wf.dt();

  Sweep sweep(omega0, wf);
  sweep.backward(cost.kind);

  OctDiagnostics diag;
  diag.phi = sweep.grad / dt;
  diag.h_oc.resize(n);
  diag.u_sing.resize(n);
  for (int i = 0; i < n; ++i) {
    const Field3<double> h = lab_field(omega0, wf.values(i));
    diag.h_oc(i) =
        sandwich(sweep.pi[i], augmented_generator(h), sweep.psi[i]).imag();
    const Propagator half(h, 0.5 * dt);
    diag.u_sing(i) = singular_control_value(half.backward(sweep.pi[i + 1]),
                                            half.forward(sweep.psi[i]), omega0);
  }
  diag.cost_value = terminal_cost_value(sweep.psi[n], cost.kind);
  if (cost.smooth_weight > 0)
    diag.cost_value += cost.smooth_weight * smooth_value(wf.values, dt);

  AdjointTrajectory adj{std::move(sweep.pi), cost};
  return {std::move(adj), std::move(diag)};
}

CostGradient cost_and_gradient(const SensorModel& model,
                               const ControlWaveform& waveform,
                               const CostSpec& cost) {
  Sweep sweep(model.omega0, waveform);
  sweep.backward(cost.kind);
  CostGradient out;
  out.final_state = sweep.psi.back();
  out.terminal = terminal_cost_value(out.final_state, cost.kind);
  out.cost = out.terminal;
  out.phi = sweep.grad / waveform.dt();
  out.gradient = std::move(sweep.grad);
  if (cost.smooth_weight > 0) {
    out.cost += cost.smooth_weight * smooth_value(waveform.values, waveform.dt());
    out.gradient +=
        cost.smooth_weight * smooth_gradient(waveform.values, waveform.dt());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Arc structure

char arc_symbol(ArcLabel label) {
  switch (label) {
    case ArcLabel::BangPlus:
      return '+';
    case ArcLabel::BangMinus:
      return '-';
    case ArcLabel::Singular:
      return 'S';
  }
  return '?';
}

std::string encode_arcs(const std::vector<ArcLabel>& labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size();) {
    std::size_t j = i;
    while (j < labels.size() && labels[j] == labels[i]) ++j;
    out += std::to_string(j - i);
    out += arc_symbol(labels[i]);
    i = j;
  }
  return out;
}

std::vector<ArcLabel> classify_arcs(const ControlWaveform& waveform,
                                    const ArcThresholds& th) {
  const int n = waveform.n_t();
  const double edge = waveform.u_max * (1.0 - th.bang_slack);
  std::vector<bool> bang(n);
  for (int i = 0; i < n; ++i) bang[i] = std::abs(waveform.values(i)) > edge;

  std::vector<ArcLabel> labels(n);
  auto by_sign = [&](int i) {
    return waveform.values(i) >= 0 ? ArcLabel::BangPlus : ArcLabel::BangMinus;
  };
  for (int i = 0; i < n;) {
    if (bang[i]) {
      labels[i] = by_sign(i);
      ++i;
      continue;
    }
    int j = i;
    while (j < n && !bang[j]) ++j;
    const bool bounded = i > 0 || j < n;
    const bool is_switch = bounded && (j - i) <= th.max_switch_run;
    for (int k = i; k < j; ++k)
      labels[k] = is_switch ? by_sign(k) : ArcLabel::Singular;
    i = j;
  }
  return labels;
}

std::vector<ArcLabel> classify_arcs(const ControlWaveform& waveform,
                                    const Eigen::VectorXd& phi,
                                    const ArcThresholds& th) {
  if (phi.size() != waveform.values.size())
    throw std::invalid_argument("phi does not match the waveform grid");
  std::vector<ArcLabel> labels = classify_arcs(waveform, th);
  const double floor = th.singular_phi_ratio * phi.cwiseAbs().maxCoeff();
  for (int i = 0; i < waveform.n_t(); ++i)
    if (labels[i] == ArcLabel::Singular && std::abs(phi(i)) >= floor)
      labels[i] = waveform.values(i) >= 0 ? ArcLabel::BangPlus
                                          : ArcLabel::BangMinus;
  return labels;
}

int count_singular(const std::vector<ArcLabel>& labels) {
  return static_cast<int>(
      std::count(labels.begin(), labels.end(), ArcLabel::Singular));
}

bool singular_arc_contiguous(const std::vector<ArcLabel>& labels) {
  const auto first = std::find(labels.begin(), labels.end(), ArcLabel::Singular);
  if (first == labels.end()) return false;
  const auto last =
      std::find(labels.rbegin(), labels.rend(), ArcLabel::Singular).base();
  return std::all_of(first, last,
                     [](ArcLabel l) { return l == ArcLabel::Singular; });
}

// ---------------------------------------------------------------------------
// Optimizers

void OptimizationConfig::validate() const {
  cost.validate();
  if (!(u_max > 0) || !std::isfinite(u_max))
    throw std::invalid_argument("u_max must be finite and > 0");
  if (!(tau > 0) || !std::isfinite(tau))
    throw std::invalid_argument("tau must be finite and > 0");
  if (n_t < 100 || n_t > 4000)
    throw std::invalid_argument("n_t must lie in [100, 4000]");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (!(initial_rate > 0) || !(backtrack_factor > 0 && backtrack_factor < 1))
    throw std::invalid_argument("step rule parameters out of range");
  if (!(gradient_tolerance > 0) || !(cost_tolerance > 0))
    throw std::invalid_argument("tolerances must be > 0");
}

OptimizationResult optimize_free_form(const OptimizationConfig& config,
                                      const ControlWaveform& init) {
  config.validate();
  init.validate();
  if (init.n_t() != config.n_t || std::abs(init.tau - config.tau) > 1e-12 * config.tau)
    throw std::invalid_argument("initial waveform does not match the config grid");

  const SensorModel model = zero_field_model(config.omega0);
  const double bound = config.u_max;
  ControlWaveform wf(config.tau, bound, clip(init.values, bound));

  auto evaluate = [&](const Eigen::VectorXd& u) {
    wf.values = u;
    return cost_and_gradient(model, wf, config.cost);
  };

  OptimizationResult result;
  CostGradient cur = evaluate(wf.values);
  Eigen::VectorXd u = wf.values;
  result.history.push_back(cur.cost);

  const double g0 = projected(u, cur.gradient, bound).norm();
  const double gmax = cur.gradient.cwiseAbs().maxCoeff();
  double step = config.initial_rate * bound / std::max(gmax, 1e-300);
  Eigen::VectorXd prev_u, prev_g;

  auto substitute_singular = [&](Eigen::VectorXd& v) {
    // Interior samples take u_sing from the current iterate.
    wf.values = v;
    const Trajectory traj = evolve(model, wf);
    const auto diag = adjoint_diagnostics(traj, config.cost).second;
    const double edge = bound * (1.0 - 1e-6);
    bool changed = false;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (std::abs(v(i)) < edge && std::isfinite(diag.u_sing(i))) {
        v(i) = std::clamp(diag.u_sing(i), -bound, bound);
        changed = true;
      }
    }
    return changed;
  };

  bool converged = false;
  int it = 0;
  for (; it < config.max_iters; ++it) {
    const Eigen::VectorXd pg = projected(u, cur.gradient, bound);
    if (g0 == 0.0 || pg.norm() <= config.gradient_tolerance * g0) {
      converged = true;
      break;
    }
    if (prev_u.size() == u.size()) {
      const Eigen::VectorXd su = u - prev_u;
      const Eigen::VectorXd sg = cur.gradient - prev_g;
      const double sy = su.dot(sg);
      if (sy > 0) step = su.squaredNorm() / sy;
    }
    bool accepted = false;
    CostGradient trial;
    Eigen::VectorXd u_trial;
    for (int k = 0; k < 60; ++k) {
      u_trial = clip(u - step * cur.gradient, bound);
      trial = evaluate(u_trial);
      if (trial.cost < cur.cost) {
        accepted = true;
        break;
      }
      step *= config.backtrack_factor;
    }
    if (!accepted) {
      converged = true;  // no descent direction left at machine precision
      break;
    }
    if (config.singular_substitution) {
      Eigen::VectorXd u_sub = u_trial;
      if (substitute_singular(u_sub)) {
        CostGradient sub = evaluate(u_sub);
        if (sub.cost <= trial.cost) {
          u_trial = std::move(u_sub);
          trial = std::move(sub);
        }
      }
    }
    prev_u = u;
    prev_g = cur.gradient;
    u = std::move(u_trial);
    cur = std::move(trial);
    result.history.push_back(cur.cost);

    const std::size_t h = result.history.size();
    if (h > 50) {
      const double old = result.history[h - 51];
      if (std::abs(old - cur.cost) <=
          config.cost_tolerance * std::max(1.0, std::abs(cur.cost))) {
        converged = true;
        ++it;
        break;
      }
    }
  }

  wf.values = u;
  result.waveform = wf;
  const Trajectory traj = evolve(model, wf);
  result.diagnostics = adjoint_diagnostics(traj, config.cost).second;
  result.arc_labels = classify_arcs(wf, result.diagnostics.phi);
  result.converged = converged;
  result.iterations = it;
  return result;
}

std::vector<std::pair<std::string, ControlWaveform>> multistart_guesses(
    const OptimizationConfig& config) {
  std::vector<std::pair<std::string, ControlWaveform>> out;
  const int n = config.n_t;
  out.emplace_back("yx", yx_waveform({config.u_max, config.tau, config.omega0}, n));
  {
    DetuneParams d;
    d.u_max = config.u_max;
    d.tau = config.tau;
    d.omega0 = config.omega0;
    const double tq = t_qsl(config.u_max);
    d.omega = config.omega0 +
              approx_detune(config.u_max, std::min(config.tau, tq)).detune;
    d.a = 0.5;
    out.emplace_back("detune", detune_waveform(d, n));
  }
  out.emplace_back("bang+", ControlWaveform(config.tau, config.u_max,
                                            Eigen::VectorXd::Constant(n, config.u_max)));
  out.emplace_back("bang-", ControlWaveform(config.tau, config.u_max,
                                            Eigen::VectorXd::Constant(n, -config.u_max)));
  for (std::uint64_t seed : config.seeds) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-config.u_max, config.u_max);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = dist(rng);
    out.emplace_back("random:" + std::to_string(seed),
                     ControlWaveform(config.tau, config.u_max, std::move(v)));
  }
  for (auto& g : out) g.second.envelope.reset();
  return out;
}

OptimizationResult optimize_multistart(const OptimizationConfig& config) {
  config.validate();
  const auto guesses = multistart_guesses(config);
  std::vector<OptimizationResult> results(guesses.size());
  parallel_for(guesses.size(), [&](std::size_t i) {
    results[i] = optimize_free_form(config, guesses[i].second);
    results[i].start = guesses[i].first;
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i)
    if (results[i].diagnostics.cost_value < results[best].diagnostics.cost_value)
      best = i;
  return std::move(results[best]);
}

Eigen::VectorXd parametric_gradient(const CostGradient& cg,
                                    const Eigen::MatrixXd& jacobian) {
  return jacobian.transpose() * cg.gradient;
}

ParametricResult optimize_parametric(const WaveformFamily& family,
                                     const Eigen::VectorXd& init,
                                     const OptimizationConfig& config) {
  config.cost.validate();
  const SensorModel model = zero_field_model(config.omega0);
  auto evaluate = [&](const Eigen::VectorXd& p, Eigen::VectorXd* grad) {
    const ControlWaveform wf = family.waveform(p);
    const CostGradient cg = cost_and_gradient(model, wf, config.cost);
    if (grad) *grad = parametric_gradient(cg, family.jacobian(p));
    return cg.cost;
  };

  ParametricResult r;
  r.params = init;
  Eigen::VectorXd g;
  r.cost = evaluate(r.params, &g);
  r.initial_gradient_norm = g.norm();
  r.history.push_back(r.cost);
  double step = config.initial_rate / std::max(g.norm(), 1e-300);
  Eigen::VectorXd prev_p, prev_g;

  int it = 0;
  for (; it < config.max_iters; ++it) {
    if (g.norm() <= config.gradient_tolerance * r.initial_gradient_norm) {
      r.converged = true;
      break;
    }
    if (prev_p.size() == r.params.size()) {
      const Eigen::VectorXd sp = r.params - prev_p;
      const Eigen::VectorXd sg = g - prev_g;
      const double sy = sp.dot(sg);
      if (sy > 0) step = sp.squaredNorm() / sy;
    }
    bool accepted = false;
    Eigen::VectorXd p_trial, g_trial;
    double c_trial = 0.0;
    for (int k = 0; k < 60; ++k) {
      p_trial = r.params - step * g;
      c_trial = evaluate(p_trial, &g_trial);
      if (c_trial < r.cost) {
        accepted = true;
        break;
      }
      step *= config.backtrack_factor;
    }
    if (!accepted) {
      r.converged = true;
      break;
    }
    prev_p = r.params;
    prev_g = g;
    r.params = p_trial;
    g = g_trial;
    r.cost = c_trial;
    r.history.push_back(r.cost);
  }
  r.iterations = it;
  r.gradient_norm = g.norm();
  if (r.gradient_norm <= config.gradient_tolerance * r.initial_gradient_norm)
    r.converged = true;
  return r;
}

double estimate_cost_deviation(const Eigen::VectorXd& phi_ref,
                               const ControlWaveform& u_ref,
                               const ControlWaveform& u_app) {
  if (phi_ref.size() != u_ref.values.size() ||
      u_ref.values.size() != u_app.values.size() ||
      std::abs(u_ref.tau - u_app.tau) > 1e-12 * u_ref.tau)
    throw std::invalid_argument("cost deviation inputs are on different grids");
  return u_ref.dt() * phi_ref.dot(u_app.values - u_ref.values);
}

double eta_change_from_cost(double delta_cost, double eta) {
  return -delta_cost / std::abs(eta);
}

// ---------------------------------------------------------------------------
// Verification

OptimalityReport verify_optimality(const OptimizationResult& result,
                                   const OptimalityTolerances& tol) {
  const ControlWaveform& wf = result.waveform;
  const OctDiagnostics& d = result.diagnostics;
  const int n = wf.n_t();
  const double edge = wf.u_max * (1.0 - 1e-6);
  const double phi_max = d.phi.cwiseAbs().maxCoeff();
  // Interior runs from u alone; the Phi-aware labels would make the singular
  // check circular.
  const std::vector<ArcLabel> structure = classify_arcs(wf);

  OptimalityReport rep;
  int consistent = 0;
  double sing_phi = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = wf.values(i);
    const double phi = d.phi(i);
    if (std::abs(u) > edge) {
      ++rep.bang_samples;
      // u = -u_max Sgn(Phi); a vanishing Phi is compatible with either sign.
      if (u * phi <= 0 || std::abs(phi) <= 1e-9 * phi_max) ++consistent;
    } else if (structure[i] == ArcLabel::Singular) {
      ++rep.singular_samples;
      sing_phi = std::max(sing_phi, std::abs(phi));
    }
  }
  rep.bang_consistency_rate =
      rep.bang_samples ? static_cast<double>(consistent) / rep.bang_samples : 1.0;
  rep.singular_phi_ratio = phi_max > 0 ? sing_phi / phi_max : 0.0;
  rep.h_oc_mean = d.h_oc.mean();
  const double var = (d.h_oc.array() - rep.h_oc_mean).square().mean();
  rep.h_oc_constancy = std::sqrt(var) / std::abs(rep.h_oc_mean);

  rep.bang_ok = rep.bang_consistency_rate >= tol.bang_consistency;
  rep.singular_ok = rep.singular_phi_ratio < tol.singular_phi_ratio;
  rep.h_oc_constant_ok = rep.h_oc_constancy < tol.h_oc_constancy;
  rep.h_oc_negative_ok = rep.h_oc_mean < 0;
  return rep;
}

OptimizationResult diagnose(const SensorModel& model,
                            const ControlWaveform& waveform,
                            const CostSpec& cost) {
  OptimizationResult r;
  ControlWaveform wf = waveform;
  wf.envelope.reset();
  const Trajectory traj = evolve(zero_field_model(model.omega0), wf);
  r.diagnostics = adjoint_diagnostics(traj, cost).second;
  r.waveform = std::move(wf);
  r.arc_labels = classify_arcs(r.waveform, r.diagnostics.phi);
  r.history.push_back(r.diagnostics.cost_value);
  return r;
}

}  // namespace qsense
