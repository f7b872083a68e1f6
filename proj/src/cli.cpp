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

#include "qsense/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "qsense/kernel.hpp"
#include "qsense/oct.hpp"
#include "qsense/parallel.hpp"
#include "qsense/protocols.hpp"

#ifndef QSENSE_VERSION
#define QSENSE_VERSION "0.0.0"
#endif

namespace qsense::cli {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

const std::set<std::string> kCommands = {"simulate", "optimize",  "sweep",
                                         "kernel",   "calibrate", "verify"};

void check(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

// JSON numbers go through the same 12-digit rounding as the CSV.
ojson number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return std::stod(format_number(x));
}

ojson numbers(const Eigen::VectorXd& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

// ---------------------------------------------------------------------------
// Config reading

void only_keys(const json& j, const std::string& where,
               const std::set<std::string>& allowed) {
  check(j.is_object(), where + " must be an object");
  for (const auto& [key, _] : j.items())
    check(allowed.count(key) > 0, "unknown field '" + where + "." + key + "'");
}

template <typename T>
void read(const json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field '" + where + "." + key + "' has the wrong type");
  }
}

template <typename T>
void read(const json& j, const char* key, std::optional<T>& dst,
          const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  T v{};
  read(j, key, v, where);
  dst = v;
}

// ---------------------------------------------------------------------------
// Output

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : width_(header.size()) {
    row_strings(header);
  }

  void row(std::initializer_list<std::string> cells) {
    row_strings(std::vector<std::string>(cells));
  }

  std::string str() const { return text_.str(); }

 private:
  void row_strings(const std::vector<std::string>& cells) {
    if (cells.size() != width_) throw std::logic_error("csv row width");
    for (std::size_t k = 0; k < cells.size(); ++k)
      text_ << (k ? "," : "") << cells[k];
    text_ << '\n';
  }

  std::size_t width_;
  std::ostringstream text_;
};

std::string num(double x) { return format_number(x); }

struct Artifacts {
  std::string csv;
  ojson results = ojson::object();
  ojson checks = ojson::object();
};

std::string eigen_version() {
  return std::to_string(EIGEN_WORLD_VERSION) + "." +
         std::to_string(EIGEN_MAJOR_VERSION) + "." +
         std::to_string(EIGEN_MINOR_VERSION);
}

void add_check(Artifacts& a, const std::string& name, bool pass, double value,
               double threshold) {
  a.checks[name] = {{"pass", pass},
                    {"value", number(value)},
                    {"threshold", number(threshold)}};
}

// ---------------------------------------------------------------------------
// Protocol construction

double absolute_tau(const RunConfig& c, double tau_over_tqsl) {
  return tau_over_tqsl * t_qsl(c.u_max);
}

// Protocol files carry their own duration.
double requested_tau(const RunConfig& c) {
  return c.protocol == "file" ? 0.0 : absolute_tau(c, *c.tau);
}

SensorModel zero_model(const RunConfig& c) { return {c.omega0, 0.0}; }

Frame frame_of(const RunConfig& c) {
  return c.rwa ? Frame::Rotating : Frame::Lab;
}

double detune_omega(const RunConfig& c, double tau) {
  if (c.drive_omega) return *c.drive_omega;
  return c.omega0 + approx_detune(c.u_max, std::min(tau, t_qsl(c.u_max))).detune;
}

int protocol_n_t(const RunConfig& c, double tau, double carrier) {
  if (c.n_t > 0) return c.n_t;
  if (c.rwa) return 400;
  return std::min(20000, carrier_resolved_n_t(tau, 2.0 * carrier, 400));
}

struct LoadedWaveform {
  ControlWaveform waveform;
  double omega0 = 1.0;
  CostSpec cost;
};

LoadedWaveform load_result(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot read input '" + path + "'");
  json j;
  try {
    in >> j;
    LoadedWaveform out;
    const json& wf = j.at("results").at("waveform");
    out.waveform = ControlWaveform(
        wf.at("tau").get<double>(), wf.at("u_max").get<double>(),
        Eigen::Map<const Eigen::VectorXd>(
            wf.at("values").get<std::vector<double>>().data(),
            static_cast<Eigen::Index>(wf.at("values").size())));
    const json& cfg = j.at("config");
    out.omega0 = cfg.at("model").at("omega0").get<double>();
    out.cost.kind =
        cost_kind_from_string(cfg.at("optimizer").at("cost").get<std::string>());
    out.cost.smooth_weight =
        cfg.at("optimizer").at("smooth_weight").get<double>();
    out.waveform.validate();
    return out;
  } catch (const json::exception& e) {
    throw ConfigError("input '" + path + "' is not an optimize result: " +
                      e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError("input '" + path + "': " + e.what());
  }
}

ControlWaveform build_protocol(const RunConfig& c, double tau) {
  if (c.protocol == "yx")
    return yx_waveform({c.u_max, tau, c.omega0},
                       protocol_n_t(c, tau, c.omega0));
  if (c.protocol == "detune") {
    DetuneParams p{c.u_max, tau, detune_omega(c, tau), c.phase_a, c.omega0};
    return detune_waveform(
        p, protocol_n_t(c, tau, std::max(c.omega0, std::abs(p.omega))));
  }
  return load_result(c.input).waveform;
}

// ---------------------------------------------------------------------------
// Commands

Artifacts simulate(const RunConfig& c) {
  const ControlWaveform wf = build_protocol(c, requested_tau(c));
  const Trajectory traj = evolve(zero_model(c), wf, frame_of(c));
  const Eigen::VectorXd q = qfi_series(traj);
  const Eigen::VectorXd sz = sigma_z_series(traj);

  Artifacts a;
  Csv csv({"t", "u", "p0", "sigma_z", "qfi"});
  double norm_err = 0.0, bound_excess = -INFINITY;
  for (int k = 0; k <= wf.n_t(); ++k) {
    const double t = k * wf.dt();
    const AugmentedState& s = traj.states[k];
    norm_err = std::max(norm_err, std::abs(s.psi0.norm() - 1.0));
    bound_excess = std::max(bound_excess, q(k) - t * t);
    csv.row({num(t), num(wf.values(std::min(k, wf.n_t() - 1))),
             num(probability_zero(s)), num(sz(k)), num(q(k))});
  }
  a.csv = csv.str();
  const AugmentedState& f = traj.final_state();
  a.results = {{"tau", number(wf.tau)},
               {"tau_over_tqsl", number(wf.tau / wf.t_qsl())},
               {"n_t", wf.n_t()},
               {"eta", number(sensitivity(f))},
               {"p0", number(probability_zero(f))},
               {"qfi", number(qfi(f))}};
  add_check(a, "norm_preserved", norm_err < 1e-10, norm_err, 1e-10);
  add_check(a, "qfi_below_t2", bound_excess <= 1e-9, bound_excess, 1e-9);
  return a;
}

OptimizationConfig optimization_config(const RunConfig& c, double tau) {
  OptimizationConfig oc;
  oc.omega0 = c.omega0;
  oc.u_max = c.u_max;
  oc.tau = tau;
  oc.n_t = c.n_t > 0 ? c.n_t : 400;
  oc.cost.kind = cost_kind_from_string(c.cost);
  oc.cost.smooth_weight = c.smooth_weight;
  oc.max_iters = c.max_iters;
  oc.seeds = c.seeds;
  return oc;
}

void add_report(Artifacts& a, const OptimalityReport& r,
                const OptimalityTolerances& tol) {
  add_check(a, "bang_consistency", r.bang_ok, r.bang_consistency_rate,
            tol.bang_consistency);
  add_check(a, "singular_phi_ratio", r.singular_ok, r.singular_phi_ratio,
            tol.singular_phi_ratio);
  add_check(a, "h_oc_constancy", r.h_oc_constant_ok, r.h_oc_constancy,
            tol.h_oc_constancy);
  add_check(a, "h_oc_negative", r.h_oc_negative_ok, r.h_oc_mean, 0.0);
}

Artifacts optimize(const RunConfig& c) {
  const OptimizationConfig oc = optimization_config(c, absolute_tau(c, *c.tau));
  const OptimizationResult res = optimize_multistart(oc);
  const OptimalityTolerances tol;
  const OptimalityReport report = verify_optimality(res, tol);
  const AugmentedState f = evolve_final(zero_model(c), res.waveform, Frame::Lab);

  Artifacts a;
  Csv csv({"t", "u", "phi", "h_oc", "u_sing", "arc"});
  const auto& d = res.diagnostics;
  for (int i = 0; i < res.waveform.n_t(); ++i)
    csv.row({num(res.waveform.t_mid(i)), num(res.waveform.values(i)),
             num(d.phi(i)), num(d.h_oc(i)), num(d.u_sing(i)),
             std::string(1, arc_symbol(res.arc_labels[i]))});
  a.csv = csv.str();
  a.results = {
      {"cost_value", number(d.cost_value)},
      {"eta", number(sensitivity(f))},
      {"qfi", number(qfi(f))},
      {"converged", res.converged},
      {"iterations", res.iterations},
      {"start", res.start},
      {"arc_labels", encode_arcs(res.arc_labels)},
      {"singular_intervals", count_singular(res.arc_labels)},
      {"tau", number(oc.tau)},
      {"tau_over_tqsl", number(*c.tau)},
      {"waveform",
       {{"tau", number(oc.tau)},
        {"u_max", number(oc.u_max)},
        {"values", numbers(res.waveform.values)}}}};
  add_report(a, report, tol);
  return a;
}

struct SweepPoint {
  double eta = 0.0;
  std::string arcs;
};

Artifacts sweep(const RunConfig& c) {
  const std::vector<double> grid = c.tau_values();
  std::vector<SweepPoint> points(grid.size());
  std::string label = c.protocol + (c.rwa ? "_rwa" : "");

  parallel_for(grid.size(), [&](std::size_t k) {
    const double tau = absolute_tau(c, grid[k]);
    SweepPoint& pt = points[k];
    if (c.protocol == "optimal") {
      const OptimizationResult r =
          optimize_multistart(optimization_config(c, tau));
      pt.eta = sensitivity(zero_model(c), r.waveform);
      pt.arcs = encode_arcs(r.arc_labels);
    } else if (c.protocol == "yx") {
      pt.eta = c.rwa ? eta_yx_rwa(c.u_max, tau)
                     : sensitivity(zero_model(c), build_protocol(c, tau));
    } else if (c.rwa) {
      pt.eta = optimize_detune_rwa(c.u_max, tau).eta;
    } else {
      DetuneFullOptions opts;
      opts.n_t = c.n_t;
      pt.eta = optimize_detune_full(c.u_max, tau, c.omega0, opts).eta;
    }
  });

  Artifacts a;
  Csv csv({"tau_over_tqsl", "eta", "eta_over_tau", "protocol"});
  ojson rows = ojson::array();
  bool finite = true;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double tau = absolute_tau(c, grid[k]);
    const double eta = std::abs(points[k].eta);
    finite = finite && std::isfinite(eta);
    csv.row({num(grid[k]), num(eta), num(eta / tau), label});
    ojson row = {{"tau_over_tqsl", number(grid[k])},
                 {"eta", number(eta)},
                 {"eta_over_tau", number(eta / tau)}};
    if (!points[k].arcs.empty()) row["arc_labels"] = points[k].arcs;
    rows.push_back(row);
  }
  a.csv = csv.str();
  a.results = {{"protocol", label}, {"points", rows}};
  add_check(a, "all_finite", finite, finite ? 1.0 : 0.0, 1.0);
  if (!finite) throw std::domain_error("sweep produced non-finite values");
  return a;
}

Artifacts kernel(const RunConfig& c) {
  const ControlWaveform wf = build_protocol(c, requested_tau(c));
  const double tau = wf.tau;
  const KernelSamples k = numerical_kernel(zero_model(c), wf, c.n_centers,
                                           frame_of(c), c.impulse_area);
  const double eta = sensitivity(zero_model(c), wf, frame_of(c));

  Artifacts a;
  Csv csv({"t_prime", "K"});
  for (int j = 0; j < k.size(); ++j)
    csv.row({num(k.centers(j)), num(k.values(j))});
  a.csv = csv.str();
  const double rel = std::abs(k.integral - eta) / std::abs(eta);
  a.results = {{"tau", number(tau)},
               {"n_t", wf.n_t()},
               {"integral", number(k.integral)},
               {"eta", number(eta)}};
  add_check(a, "integral_matches_eta", rel < 1e-2, rel, 1e-2);
  if (c.protocol == "yx" && c.rwa && *c.tau <= 1.0) {
    const KernelSamples ref = analytic_kernel_yx_rwa(c.u_max, tau, c.n_centers);
    const double err = (k.values - ref.values).cwiseAbs().maxCoeff() /
                       ref.values.cwiseAbs().maxCoeff();
    add_check(a, "matches_closed_form", err < 1e-2, err, 1e-2);
  }
  return a;
}

Artifacts calibrate(const RunConfig& c) {
  const ControlWaveform protocol = build_protocol(c, requested_tau(c));
  const double tau = protocol.tau;
  DistortionModel dm;
  dm.step_amplitude = c.step_amplitude;
  dm.step_onset = c.step_onset;
  dm.duration = c.duration;
  dm.poles = c.poles;
  dm.validate();
  const int n_truth =
      std::max(2, static_cast<int>(std::ceil(c.duration / 0.01)) + 1);
  const SampledField truth = sample_distorted_pulse(dm, n_truth);

  std::vector<double> centers;
  const double half = 0.5 * tau;
  const int n_c =
      static_cast<int>(std::floor((c.duration - tau) / c.center_step + 1e-9)) +
      1;
  check(n_c >= 1, "record too short for one protocol window");
  for (int j = 0; j < n_c; ++j) centers.push_back(half + j * c.center_step);

  const auto records = simulate_measurement_sweep(
      zero_model(c), protocol, truth, centers, c.shots, c.seed, frame_of(c));
  const ReconstructionResult rec = reconstruct_waveform(records, truth);
  const KernelSamples k = numerical_kernel(zero_model(c), protocol,
                                           c.n_centers, frame_of(c),
                                           c.impulse_area);

  Artifacts a;
  Csv csv({"center", "truth", "window_average", "estimate", "stderr", "p_hat"});
  double window_ss = 0.0, stderr_sum = 0.0;
  int nonlinear = 0;
  for (std::size_t j = 0; j < records.size(); ++j) {
    const auto& r = records[j];
    const double avg = kernel_window_average(k, truth, r.center);
    window_ss += (r.estimate - avg) * (r.estimate - avg);
    stderr_sum += r.std_error;
    nonlinear += r.nonlinear;
    csv.row({num(r.center), num(rec.ground_truth(j)), num(avg),
             num(r.estimate), num(r.std_error), num(r.p_hat)});
  }
  a.csv = csv.str();
  const double n = static_cast<double>(records.size());
  a.results = {{"tau", number(tau)},
               {"centers", records.size()},
               {"rms_error", number(rec.rms_error)},
               {"window_rms_error", number(std::sqrt(window_ss / n))},
               {"mean_stderr", number(stderr_sum / n)},
               {"nonlinear_records", nonlinear}};
  add_check(a, "linear_regime", nonlinear == 0, nonlinear, 0.0);
  return a;
}

Artifacts verify(const RunConfig& c) {
  const LoadedWaveform in = load_result(c.input);
  const OptimizationResult res =
      diagnose({in.omega0, 0.0}, in.waveform, in.cost);
  const OptimalityTolerances tol;
  const OptimalityReport r = verify_optimality(res, tol);

  Artifacts a;
  add_report(a, r, tol);
  Csv csv({"check", "value", "threshold", "pass"});
  for (const auto& [name, v] : a.checks.items())
    csv.row({name, v["value"].is_null() ? "nan" : num(v["value"].get<double>()),
             num(v["threshold"].get<double>()),
             v["pass"].get<bool>() ? "PASS" : "FAIL"});
  a.csv = csv.str();
  a.results = {{"bang_samples", r.bang_samples},
               {"singular_samples", r.singular_samples},
               {"arc_labels", encode_arcs(res.arc_labels)},
               {"cost_value", number(res.diagnostics.cost_value)},
               {"passed", r.passed()}};
  return a;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw OutputError("cannot write '" + path + "'");
  return f;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (x == 0.0) return "0";
  char buf[64];
  const auto r =
      std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 12);
  return std::string(buf, r.ptr);
}

void RunConfig::validate() const {
  check(kCommands.count(command) > 0, "unknown command '" + command + "'");
  check(omega0 > 0 && std::isfinite(omega0), "omega0 must be > 0");
  check(u_max > 0 && std::isfinite(u_max), "u_max must be > 0");
  check(n_t >= 0, "n_t must be >= 0");
  check(format == "csv" || format == "json" || format == "both",
        "format must be csv, json or both");
  check(std::isfinite(phase_a), "phase a must be finite");
  if (drive_omega) check(std::isfinite(*drive_omega), "omega must be finite");

  const std::set<std::string> kinds = {"optimal", "yx", "detune", "file"};
  check(kinds.count(protocol) > 0, "unknown protocol '" + protocol + "'");
  if (command == "verify" || protocol == "file")
    check(!input.empty(), command + " needs an input result file");
  if (command == "verify") return;

  if (command == "sweep") {
    check(tau_grid.has_value(), "sweep needs tau_grid");
    check(protocol != "file", "sweep cannot use a file protocol");
    tau_values();
  } else if (protocol != "file") {
    check(tau.has_value(), command + " needs tau");
    check(*tau > 0 && std::isfinite(*tau), "tau must be > 0");
  }
  if (command == "optimize") check(protocol == "optimal", "optimize needs protocol optimal");
  if (command == "simulate" || command == "kernel" || command == "calibrate")
    check(protocol != "optimal", command + " needs protocol yx, detune or file");
  if (protocol == "optimal") {
    check(!rwa, "optimal control runs in the lab frame only");
    check(n_t == 0 || (n_t >= 100 && n_t <= 4000), "optimal n_t must be in [100, 4000]");
    check(cost == "eta2" || cost == "qfi", "cost must be eta2 or qfi");
    check(smooth_weight >= 0 && std::isfinite(smooth_weight), "smooth_weight must be >= 0");
    check(max_iters >= 1, "max_iters must be >= 1");
  }
  check(!(rwa && protocol == "file"), "file protocols carry no envelope; drop rwa");
  if (command == "kernel" || command == "calibrate") {
    check(n_centers >= 50, "n_centers must be >= 50");
    check(impulse_area > 0 && impulse_area <= 0.1, "impulse_area must be in (0, 0.1]");
  }
  if (command == "calibrate") {
    check(shots >= 0, "shots must be >= 0");
    check(center_step > 0, "center_step must be > 0");
    check(duration > step_onset && step_onset >= 0, "need 0 <= step_onset < duration");
    for (const auto& p : poles)
      check(p.time_constant > 0 && std::isfinite(p.weight), "pole time constants must be > 0");
  }
}

std::vector<double> RunConfig::tau_values() const {
  check(tau_grid.has_value(), "tau_grid is not set");
  double v[3];
  std::stringstream ss(*tau_grid);
  std::string part;
  int k = 0;
  while (std::getline(ss, part, ':')) {
    check(k < 3, "tau_grid must be start:stop:step");
    const auto r = std::from_chars(part.data(), part.data() + part.size(), v[k]);
    check(r.ec == std::errc() && r.ptr == part.data() + part.size(),
          "tau_grid entry '" + part + "' is not a number");
    ++k;
  }
  check(k == 3, "tau_grid must be start:stop:step");
  check(v[0] > 0 && v[2] > 0 && v[1] >= v[0], "tau_grid needs 0 < start <= stop and step > 0");
  const int n = static_cast<int>(std::floor((v[1] - v[0]) / v[2] + 1e-9)) + 1;
  check(n <= 10000, "tau_grid has too many points");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = std::stod(format_number(v[0] + i * v[2]));
  return out;
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  only_keys(j, "config",
            {"command", "model", "control", "protocol", "optimizer", "kernel",
             "calibration", "seed", "input", "output"});
  read(j, "command", c.command, "config");
  read(j, "seed", c.seed, "config");
  read(j, "input", c.input, "config");
  if (j.contains("model")) {
    const json& m = j["model"];
    only_keys(m, "model", {"omega0"});
    read(m, "omega0", c.omega0, "model");
  }
  if (j.contains("control")) {
    const json& m = j["control"];
    only_keys(m, "control", {"u_max", "tau", "tau_grid", "n_t", "rwa"});
    read(m, "u_max", c.u_max, "control");
    read(m, "tau", c.tau, "control");
    read(m, "tau_grid", c.tau_grid, "control");
    read(m, "n_t", c.n_t, "control");
    read(m, "rwa", c.rwa, "control");
  }
  if (j.contains("protocol")) {
    const json& m = j["protocol"];
    only_keys(m, "protocol", {"kind", "omega", "a"});
    read(m, "kind", c.protocol, "protocol");
    read(m, "omega", c.drive_omega, "protocol");
    read(m, "a", c.phase_a, "protocol");
  }
  if (j.contains("optimizer")) {
    const json& m = j["optimizer"];
    only_keys(m, "optimizer", {"cost", "smooth_weight", "max_iters", "seeds"});
    read(m, "cost", c.cost, "optimizer");
    read(m, "smooth_weight", c.smooth_weight, "optimizer");
    read(m, "max_iters", c.max_iters, "optimizer");
    read(m, "seeds", c.seeds, "optimizer");
  }
  if (j.contains("kernel")) {
    const json& m = j["kernel"];
    only_keys(m, "kernel", {"n_centers", "impulse_area"});
    read(m, "n_centers", c.n_centers, "kernel");
    read(m, "impulse_area", c.impulse_area, "kernel");
  }
  if (j.contains("calibration")) {
    const json& m = j["calibration"];
    only_keys(m, "calibration",
              {"shots", "step_amplitude", "step_onset", "duration",
               "center_step", "poles"});
    read(m, "shots", c.shots, "calibration");
    read(m, "step_amplitude", c.step_amplitude, "calibration");
    read(m, "step_onset", c.step_onset, "calibration");
    read(m, "duration", c.duration, "calibration");
    read(m, "center_step", c.center_step, "calibration");
    if (m.contains("poles")) {
      check(m["poles"].is_array(), "calibration.poles must be an array");
      c.poles.clear();
      for (const json& p : m["poles"]) {
        only_keys(p, "calibration.poles[]", {"weight", "time_constant"});
        DistortionPole pole;
        read(p, "weight", pole.weight, "calibration.poles[]");
        read(p, "time_constant", pole.time_constant, "calibration.poles[]");
        c.poles.push_back(pole);
      }
    }
  }
  if (j.contains("output")) {
    const json& m = j["output"];
    only_keys(m, "output", {"path", "format"});
    read(m, "path", c.output, "output");
    read(m, "format", c.format, "output");
  }
  return c;
}

ojson config_to_json(const RunConfig& c) {
  ojson poles = ojson::array();
  for (const auto& p : c.poles)
    poles.push_back({{"weight", number(p.weight)},
                     {"time_constant", number(p.time_constant)}});
  ojson control = {{"u_max", number(c.u_max)}};
  control["tau"] = c.tau ? number(*c.tau) : ojson(nullptr);
  control["tau_grid"] = c.tau_grid ? ojson(*c.tau_grid) : ojson(nullptr);
  control["n_t"] = c.n_t;
  control["rwa"] = c.rwa;
  ojson protocol = {{"kind", c.protocol}};
  protocol["omega"] = c.drive_omega ? number(*c.drive_omega) : ojson(nullptr);
  protocol["a"] = number(c.phase_a);
  return {{"command", c.command},
          {"model", {{"omega0", number(c.omega0)}}},
          {"control", control},
          {"protocol", protocol},
          {"optimizer",
           {{"cost", c.cost},
            {"smooth_weight", number(c.smooth_weight)},
            {"max_iters", c.max_iters},
            {"seeds", c.seeds}}},
          {"kernel",
           {{"n_centers", c.n_centers},
            {"impulse_area", number(c.impulse_area)}}},
          {"calibration",
           {{"shots", c.shots},
            {"step_amplitude", number(c.step_amplitude)},
            {"step_onset", number(c.step_onset)},
            {"duration", number(c.duration)},
            {"center_step", number(c.center_step)},
            {"poles", poles}}},
          {"seed", c.seed},
          {"input", c.input}};
}

void run(const RunConfig& c, std::ostream& out, std::ostream& log) {
  c.validate();

  // Fail on unwritable paths before doing any work.
  const bool want_csv = c.format != "json";
  const bool want_json = c.format != "csv";
  std::ofstream csv_file, json_file;
  if (!c.output.empty()) {
    if (want_csv) csv_file = open_output(c.output + ".csv");
    if (want_json) json_file = open_output(c.output + ".json");
  }

  Artifacts a;
  if (c.command == "simulate") a = simulate(c);
  else if (c.command == "optimize") a = optimize(c);
  else if (c.command == "sweep") a = sweep(c);
  else if (c.command == "kernel") a = kernel(c);
  else if (c.command == "calibrate") a = calibrate(c);
  else a = verify(c);

  ojson summary = {{"tool", "qsense"},
                   {"version", QSENSE_VERSION},
                   {"eigen", eigen_version()},
                   {"command", c.command},
                   {"seed", c.seed},
                   {"config", config_to_json(c)},
                   {"results", a.results},
                   {"checks", a.checks}};
  const std::string json_text = summary.dump(2) + "\n";

  std::ostream& csv_out = c.output.empty() ? out : csv_file;
  std::ostream& json_out = c.output.empty() ? out : json_file;
  if (want_csv) csv_out << a.csv;
  if (want_json) json_out << json_text;
  for (const auto& [name, v] : a.checks.items())
    log << (v["pass"].get<bool>() ? "PASS " : "FAIL ") << name << '\n';
  if ((want_csv && !csv_out) || (want_json && !json_out))
    throw OutputError("writing output failed");
}

int main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"qsense: optimal control for time-resolved qubit sensing"};
  app.set_version_flag("--version", QSENSE_VERSION);
  app.require_subcommand(1, 1);
  const std::map<std::string, std::string> about = {
      {"simulate", "evolve a protocol and tabulate p0, sigma_z and QFI"},
      {"optimize", "optimal control of the sensitivity or QFI"},
      {"sweep", "sensitivity versus interrogation time"},
      {"kernel", "time-domain response kernel of a protocol"},
      {"calibrate", "reconstruct a distorted pulse from simulated shots"},
      {"verify", "check optimality conditions of a saved optimum"}};
  for (const auto& name : kCommands)
    app.add_subcommand(name, about.at(name))->fallthrough();

  std::string config_path;
  RunConfig flags;
  std::string tau_grid;
  double tau = 0.0, omega = 0.0;
  app.add_option("--config", config_path, "JSON config file");
  auto* o_omega0 = app.add_option("--omega0", flags.omega0);
  auto* o_umax = app.add_option("--umax", flags.u_max, "drive bound");
  auto* o_tau = app.add_option("--tau", tau, "interrogation time / t_QSL");
  auto* o_grid = app.add_option("--tau-grid", tau_grid, "start:stop:step in t_QSL");
  auto* o_nt = app.add_option("--n-t", flags.n_t, "control intervals");
  auto* o_rwa = app.add_flag("--rwa", flags.rwa, "rotating-wave frame");
  auto* o_protocol = app.add_option("--protocol", flags.protocol,
                                    "optimal | yx | detune | file");
  auto* o_omega = app.add_option("--omega", omega, "detune drive frequency");
  auto* o_a = app.add_option("--phase-a", flags.phase_a, "detune phase / pi");
  auto* o_cost = app.add_option("--cost", flags.cost, "eta2 | qfi");
  auto* o_w = app.add_option("--smooth-weight", flags.smooth_weight);
  auto* o_iters = app.add_option("--max-iters", flags.max_iters);
  auto* o_seeds = app.add_option("--seeds", flags.seeds, "random-start seeds");
  auto* o_nc = app.add_option("--n-centers", flags.n_centers);
  auto* o_area = app.add_option("--impulse-area", flags.impulse_area);
  auto* o_shots = app.add_option("--shots", flags.shots);
  auto* o_amp = app.add_option("--step-amplitude", flags.step_amplitude);
  auto* o_onset = app.add_option("--step-onset", flags.step_onset);
  auto* o_dur = app.add_option("--duration", flags.duration);
  auto* o_cstep = app.add_option("--center-step", flags.center_step);
  auto* o_seed = app.add_option("--seed", flags.seed);
  auto* o_input = app.add_option("--input", flags.input, "optimize result JSON");
  auto* o_output = app.add_option("--output", flags.output,
                                  "output path without extension");
  auto* o_format = app.add_option("--format", flags.format, "csv | json | both");

  auto fail = [&](int code, const char* kind, const std::string& msg) {
    err << ojson{{"error", {{"code", code}, {"kind", kind}, {"message", msg}}}}
               .dump()
        << '\n';
    return code;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    return fail(kInvalidConfig, "invalid_config", e.what());
  }

  RunConfig c;
  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      check(in.good(), "cannot read config '" + config_path + "'");
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
      }
      c = config_from_json(j);
    }
    const std::string sub = app.get_subcommands().front()->get_name();
    check(c.command.empty() || c.command == sub,
          "config command '" + c.command + "' differs from '" + sub + "'");
    c.command = sub;

    if (*o_omega0) c.omega0 = flags.omega0;
    if (*o_umax) c.u_max = flags.u_max;
    if (*o_tau) c.tau = tau;
    if (*o_grid) c.tau_grid = tau_grid;
    if (*o_nt) c.n_t = flags.n_t;
    if (*o_rwa) c.rwa = flags.rwa;
    if (*o_protocol) c.protocol = flags.protocol;
    if (*o_omega) c.drive_omega = omega;
    if (*o_a) c.phase_a = flags.phase_a;
    if (*o_cost) c.cost = flags.cost;
    if (*o_w) c.smooth_weight = flags.smooth_weight;
    if (*o_iters) c.max_iters = flags.max_iters;
    if (*o_seeds) c.seeds = flags.seeds;
    if (*o_nc) c.n_centers = flags.n_centers;
    if (*o_area) c.impulse_area = flags.impulse_area;
    if (*o_shots) c.shots = flags.shots;
    if (*o_amp) c.step_amplitude = flags.step_amplitude;
    if (*o_onset) c.step_onset = flags.step_onset;
    if (*o_dur) c.duration = flags.duration;
    if (*o_cstep) c.center_step = flags.center_step;
    if (*o_seed) c.seed = flags.seed;
    if (*o_input) c.input = flags.input;
    if (*o_output) c.output = flags.output;
    if (*o_format) c.format = flags.format;
    if (c.protocol.empty())
      c.protocol = c.command == "optimize" || c.command == "sweep" ? "optimal"
                   : c.command == "verify"                         ? "file"
                                                                   : "yx";
    c.validate();
  } catch (const ConfigError& e) {
    return fail(kInvalidConfig, "invalid_config", e.what());
  }

  try {
    run(c, out, err);
  } catch (const ConfigError& e) {
    return fail(kInvalidConfig, "invalid_config", e.what());
  } catch (const OutputError& e) {
    return fail(kUnwritableOutput, "unwritable_output", e.what());
  } catch (const std::exception& e) {
    return fail(kNumericalFailure, "numerical_failure", e.what());
  }
  return kOk;
}

}  // namespace qsense::cli
