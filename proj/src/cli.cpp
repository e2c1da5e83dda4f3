// Copyright 2026 The combprep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "combprep/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "combprep/cci.hpp"
#include "combprep/circuit.hpp"
#include "combprep/errors.hpp"
#include "combprep/noise.hpp"
#include "combprep/parallel.hpp"
#include "combprep/random.hpp"
#include "combprep/stats.hpp"
#include "combprep/tci.hpp"

namespace combprep::cli {

using nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e) ||
      dynamic_cast<const json::exception*>(&e) || dynamic_cast<const CLI::ParseError*>(&e))
    return kExitConfig;
  if (dynamic_cast<const CapacityError*>(&e)) return kExitCapacity;
  if (dynamic_cast<const ConvergenceError*>(&e)) return kExitNotConverged;
  return kExitFailure;
}

std::string error_type(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const ArgumentError*>(&e)) return "ArgumentError";
  if (dynamic_cast<const json::exception*>(&e)) return "ConfigError";
  if (dynamic_cast<const CLI::ParseError*>(&e)) return "UsageError";
  if (dynamic_cast<const CapacityError*>(&e)) return "CapacityError";
  if (dynamic_cast<const ConvergenceError*>(&e)) return "ConvergenceError";
  if (dynamic_cast<const StateError*>(&e)) return "StateError";
  if (dynamic_cast<const EvaluationError*>(&e)) return "EvaluationError";
  if (dynamic_cast<const MetricError*>(&e)) return "MetricError";
  if (dynamic_cast<const ModelDomainError*>(&e)) return "ModelDomainError";
  if (dynamic_cast<const UnsupportedError*>(&e)) return "UnsupportedError";
  if (dynamic_cast<const NumericalError*>(&e)) return "NumericalError";
  return "Error";
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[digest[i] >> 4];
    s += hex[digest[i] & 15];
  }
  return s;
}

std::string config_hash(const json& config) { return sha256_hex(config.dump()); }

namespace {

void only_fields(const json& j, const std::set<std::string>& allowed, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError(what + ": unknown field '" + key + "'");
}

sim::Backend backend_from_json(const json& b) {
  only_fields(b, {"kind", "chi_max", "tol"}, "backend");
  sim::Backend out;
  out.kind = sim::backend_from_string(b.value("kind", std::string("dense")));
  out.chi_max = b.value("chi_max", 128);
  out.tol = b.value("tol", 1e-12);
  return out;
}

json backend_to_json(const sim::Backend& b) {
  return {{"kind", sim::to_string(b.kind)}, {"chi_max", b.chi_max}, {"tol", b.tol}};
}

json schedule_to_json(const iqsp::Schedule& s) {
  return {{"lambdas", s.lambdas},
          {"epochs", s.epochs},
          {"final_epochs", s.final_epochs},
          {"lr", s.lr}};
}

json matrix_rows(const std::vector<std::vector<double>>& rows) { return rows; }

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

// ------------------------------------------------------------- gradient scan

double log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("log_slope needs two or more points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(y[i] > 0.0)) throw MetricError("log_slope needs positive values");
    mx += x[i];
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (std::log(y[i]) - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

GradScanConfig grad_scan_from_json(const json& j) {
  only_fields(j,
              {"dims", "n_x", "layers", "mu", "covariance_family", "s0", "gamma", "random_init",
               "random_repeats", "warm_start", "warm_seeds", "schedule", "backend", "tci_chi",
               "seed"},
              "grad-scan config");
  GradScanConfig c;
  if (j.contains("dims")) c.dims = j.at("dims").get<std::vector<int>>();
  c.n_x = j.value("n_x", 6);
  c.layers = j.value("layers", 3);
  c.mu = j.value("mu", 0.5);
  if (j.contains("covariance_family")) {
    const auto s = j.at("covariance_family").get<std::string>();
    if (s == "tridiagonal")
      c.covariance = gridfunc::CovarianceFamily::tridiagonal;
    else if (s == "inverse_square")
      c.covariance = gridfunc::CovarianceFamily::inverse_square;
    else
      throw ConfigError("unknown covariance_family '" + s + "'");
  }
  c.s0 = j.value("s0", 0.05);
  c.gamma = j.value("gamma", 0.2);
  c.random_init = j.value("random_init", true);
  c.random_repeats = j.value("random_repeats", 100);
  c.warm_start = j.value("warm_start", true);
  c.warm_seeds = j.value("warm_seeds", 5);
  if (j.contains("schedule")) {
    json s = j.at("schedule");
    if (!s.contains("final_epochs")) s["final_epochs"] = 0;
    c.schedule = iqsp::schedule_from_json(s);
  }
  if (j.contains("backend")) c.backend = backend_from_json(j.at("backend"));
  c.tci_chi = j.value("tci_chi", 64);
  c.seed = j.value("seed", std::uint64_t{0});
  if (c.dims.empty() || c.n_x < 1 || c.layers < 1 || c.random_repeats < 1 || c.warm_seeds < 1)
    throw ConfigError("grad-scan config: invalid sizes");
  for (int d : c.dims)
    if (d < 1) throw ConfigError("grad-scan config: dims must be positive");
  return c;
}

json grad_scan_to_json(const GradScanConfig& c) {
  return {{"dims", c.dims},
          {"n_x", c.n_x},
          {"layers", c.layers},
          {"mu", c.mu},
          {"covariance_family", gridfunc::to_string(c.covariance)},
          {"s0", c.s0},
          {"gamma", c.gamma},
          {"random_init", c.random_init},
          {"random_repeats", c.random_repeats},
          {"warm_start", c.warm_start},
          {"warm_seeds", c.warm_seeds},
          {"schedule", schedule_to_json(c.schedule)},
          {"backend", backend_to_json(c.backend)},
          {"tci_chi", c.tci_chi},
          {"seed", c.seed}};
}

gridfunc::TargetSpec scan_target(const GradScanConfig& c, int d) {
  return gridfunc::TargetSpec::gaussian(std::vector<double>(static_cast<std::size_t>(d), c.mu),
                                        c.covariance, c.s0, c.gamma);
}

GradScanResult grad_scan(const GradScanConfig& c, std::ostream* log) {
  GradScanResult out;
  auto summarize = [&](const std::string& mode, int n, std::size_t first) {
    GradScanSummary s;
    s.mode = mode;
    s.n = n;
    s.rows = out.rows.size() - first;
    for (std::size_t i = first; i < out.rows.size(); ++i) {
      s.mean_avg_grad += out.rows[i].avg_grad;
      s.mean_overlap += out.rows[i].overlap;
    }
    if (s.rows) {
      s.mean_avg_grad /= static_cast<double>(s.rows);
      s.mean_overlap /= static_cast<double>(s.rows);
    }
    out.summary.push_back(s);
    if (log)
      *log << mode << " n=" << n << " rows=" << s.rows << " mean<|G|>=" << s.mean_avg_grad
           << " mean overlap=" << s.mean_overlap << std::endl;
  };

  for (int d : c.dims) {
    iqsp::IqspConfig ic;
    ic.grid = {d, c.n_x};
    ic.target = scan_target(c, d);
    ic.layers = c.layers;
    ic.schedule = c.schedule;
    ic.backend = c.backend;
    ic.tci_chi = c.tci_chi;
    ic.seed = c.seed;
    const int n = ic.grid.n_qubits();
    if (c.random_init) {
      const std::size_t first = out.rows.size();
      const sim::Target target = iqsp::homotopy_target(ic, 1.0);
      auto rows = sim::gradient_scan_random(ic.grid, c.layers, target, c.random_repeats,
                                            mix_seed(c.seed, static_cast<std::uint64_t>(d)),
                                            c.backend);
      out.rows.insert(out.rows.end(), rows.begin(), rows.end());
      summarize("random_init", n, first);
    }
    if (c.warm_start) {
      const std::size_t first = out.rows.size();
      for (int s = 0; s < c.warm_seeds; ++s) {
        ic.seed = mix_seed(c.seed, 1000 + static_cast<std::uint64_t>(s));
        auto trace = iqsp::run_iqsp(ic);
        for (const auto& rec : trace.steps) {
          if (rec.step == 0) continue;  // theta = 0 on the uniform target: G = 0 exactly
          out.rows.push_back({"warm_start", n, s, rec.step, rec.initial_overlap,
                              rec.initial_avg_grad});
        }
      }
      summarize("warm_start", n, first);
    }
  }
  std::vector<double> xs, ys;
  for (const auto& s : out.summary)
    if (s.mode == "random_init") {
      xs.push_back(s.n);
      ys.push_back(s.mean_avg_grad);
    }
  if (xs.size() >= 2) out.random_slope = log_slope(xs, ys);
  return out;
}

// ------------------------------------------------------------- baseline

std::vector<gridfunc::TargetSpec> default_baseline_targets(const gridfunc::GridSpec& grid) {
  const std::vector<double> mu(static_cast<std::size_t>(grid.d), 0.5);
  return {gridfunc::TargetSpec::ricker(mu, 0.25),
          gridfunc::TargetSpec::student_t(mu, Eigen::MatrixXd::Identity(grid.d, grid.d) * 0.05)};
}

BaselineConfig baseline_from_json(const json& j) {
  only_fields(j, {"grid", "targets", "layers", "schedule", "prune_threshold", "tci_chi", "seed"},
              "compare-baseline config");
  BaselineConfig c;
  if (j.contains("grid")) j.at("grid").get_to(c.grid);
  if (j.contains("targets"))
    for (const auto& t : j.at("targets")) c.targets.push_back(gridfunc::target_from_json(t));
  if (c.targets.empty()) c.targets = default_baseline_targets(c.grid);
  if (j.contains("layers")) c.layers = j.at("layers").get<std::vector<int>>();
  if (j.contains("schedule")) c.schedule = iqsp::schedule_from_json(j.at("schedule"));
  c.prune_threshold = j.value("prune_threshold", 1e-4);
  c.tci_chi = j.value("tci_chi", 64);
  c.seed = j.value("seed", std::uint64_t{0});
  for (const auto& t : c.targets)
    if (t.dimension() != c.grid.d) throw ConfigError("target dimension does not match the grid");
  if (c.grid.n_qubits() > stats::kEpsMaxLimit) throw CapacityError("eps_max needs n <= 20");
  for (int l : c.layers)
    if (l < 1) throw ConfigError("layers must be positive");
  return c;
}

json baseline_to_json(const BaselineConfig& c) {
  json grid;
  gridfunc::to_json(grid, c.grid);
  json targets = json::array();
  for (const auto& t : c.targets) targets.push_back(gridfunc::target_to_json(t));
  return {{"grid", grid},
          {"targets", targets},
          {"layers", c.layers},
          {"schedule", schedule_to_json(c.schedule)},
          {"prune_threshold", c.prune_threshold},
          {"tci_chi", c.tci_chi},
          {"seed", c.seed}};
}

std::vector<BaselinePoint> compare_baseline(const BaselineConfig& c, std::ostream* log) {
  std::vector<BaselinePoint> out;
  const auto targets = c.targets.empty() ? default_baseline_targets(c.grid) : c.targets;
  for (const auto& target : targets) {
    const StateVector f = gridfunc::dense_state(c.grid, target, false);
    std::vector<double> F(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) F[i] = f[i].real();
    for (int L : c.layers) {
      iqsp::IqspConfig ic;
      ic.grid = c.grid;
      ic.target = target;
      ic.layers = L;
      ic.schedule = c.schedule;
      ic.tci_chi = c.tci_chi;
      ic.seed = c.seed;
      auto trace = iqsp::run_iqsp(ic);
      auto circ = circuit::build_comb_ansatz(c.grid, L);
      circ.set_theta(trace.theta);
      BaselinePoint p;
      p.family = gridfunc::to_string(target.family());
      p.layers = L;
      p.su4_gates = circ.num_gates();
      p.rzz_gates =
          circuit::count_two_qubit(circuit::prune(circuit::compile_native(circ), c.prune_threshold));
      const StateVector phi = sim::run(circ).dense;
      p.eps_max = stats::eps_max(F, phi);
      p.infidelity = trace.final_infidelity;
      p.theta = trace.theta;
      if (log)
        *log << p.family << " L=" << L << " su4=" << p.su4_gates << " rzz=" << p.rzz_gates
             << " eps_max=" << p.eps_max << " infidelity=" << p.infidelity << std::endl;
      out.push_back(std::move(p));
    }
  }
  return out;
}

// ------------------------------------------------------------- subcommands

namespace {

struct Options {
  std::string config_path;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::string out_dir = ".";
  int threads = 0;
  std::string backend;
};

struct Output {
  json config;  // resolved
  json result;
  std::vector<std::pair<std::string, std::string>> files;
  json timing = json::object();
  int code = kExitOk;
  std::string note;  // message for a nonzero code
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void apply_backend(json& config, const Options& o, bool supported, const std::string& cmd) {
  if (o.backend.empty()) return;
  if (!supported) throw ConfigError("--backend is not used by " + cmd);
  sim::backend_from_string(o.backend);
  if (!config.contains("backend")) config["backend"] = json::object();
  config["backend"]["kind"] = o.backend;
}

// Loads a circuit from {"checkpoint": path} or {"circuit": {...}}.
circuit::Circuit circuit_from_config(json& config) {
  if (config.contains("checkpoint")) {
    json ck = read_json_file(config.at("checkpoint").get<std::string>());
    if (ck.contains("result") && ck["result"].contains("circuit")) ck = ck["result"]["circuit"];
    config.erase("checkpoint");
    config["circuit"] = ck;
  }
  if (!config.contains("circuit")) throw ConfigError("config needs 'circuit' or 'checkpoint'");
  return circuit::circuit_from_json(config.at("circuit"));
}

Output cmd_tci_build(json config, const Options& o) {
  if (o.has_seed) config["seed"] = o.seed;
  apply_backend(config, o, false, "tci-build");
  only_fields(config,
              {"grid", "target", "chi_max", "tol", "max_sweeps", "n_avg", "seed",
               "require_convergence"},
              "tci-build config");
  if (!config.contains("grid") || !config.contains("target"))
    throw ConfigError("tci-build config needs grid and target");
  gridfunc::GridSpec grid = config.at("grid").get<gridfunc::GridSpec>();
  grid.validate();
  auto spec = gridfunc::target_from_json(config.at("target"));
  if (spec.dimension() != grid.d) throw ConfigError("target dimension does not match the grid");
  const int chi = config.value("chi_max", 16);
  const double tol = config.value("tol", 1e-12);
  const int sweeps = config.value("max_sweeps", 24);
  const int n_avg = config.value("n_avg", 10000);
  const std::uint64_t seed = config.value("seed", std::uint64_t{0});
  const bool require = config.value("require_convergence", true);
  if (chi < 1 || sweeps < 1 || n_avg < 1) throw ConfigError("tci-build config: invalid value");

  Output out;
  out.config = {{"grid", config.at("grid")},
                {"target", gridfunc::target_to_json(spec)},
                {"chi_max", chi},
                {"tol", tol},
                {"max_sweeps", sweeps},
                {"n_avg", n_avg},
                {"seed", seed},
                {"require_convergence", require}};
  auto built = tci::build_target(spec, grid, chi, tol, sweeps, seed);
  const double eps = tci::tci_error(built.tci.mps, tci::target_function(spec, grid), n_avg,
                                    mix_seed(seed, 0x5e));
  out.result = {{"converged", built.tci.converged},
                {"eps_r", eps},
                {"eps_r_holdout", built.tci.eps_r},
                {"sweeps", built.tci.sweeps},
                {"n_evals", built.tci.n_evals},
                {"bond_dims", built.state.bond_dims()}};
  std::ostringstream csv;
  tci::write_convergence_csv(csv, built.tci.history);
  out.files.push_back({"tci_sweeps.csv", csv.str()});
  if (require && !built.tci.converged) {
    out.code = kExitNotConverged;
    out.note = "cross interpolation did not converge within max_sweeps";
  }
  return out;
}

Output cmd_iqsp_run(json config, const Options& o, std::ostream& log) {
  if (o.has_seed) config["seed"] = o.seed;
  apply_backend(config, o, true, "iqsp-run");
  const auto cfg = iqsp::config_from_json(config);
  Output out;
  out.config = iqsp::config_to_json(cfg);
  auto trace = iqsp::run_iqsp(cfg, [&](const iqsp::StepRecord& r) {
    log << "step " << r.step << " lambda=" << r.lambda << " initial_overlap=" << r.initial_overlap
        << " final_infidelity=" << r.final_infidelity << std::endl;
  });
  auto c = circuit::build_comb_ansatz(cfg.grid, cfg.layers);
  c.set_theta(trace.theta);
  out.result = iqsp::trace_to_json(trace);
  out.result["circuit"] = circuit::circuit_to_json(c);
  out.result["checkpoints"] = matrix_rows(trace.thetas);
  std::ostringstream epochs, steps;
  iqsp::write_epoch_csv(epochs, trace);
  steps << "step,lambda,initial_overlap,initial_avg_grad,final_infidelity,epochs\n";
  json secs = json::array();
  for (const auto& s : trace.steps) {
    steps << s.step << ',' << fmt(s.lambda) << ',' << fmt(s.initial_overlap) << ','
          << fmt(s.initial_avg_grad) << ',' << fmt(s.final_infidelity) << ',' << s.epochs << '\n';
    secs.push_back(s.seconds);
  }
  out.timing["step_seconds"] = secs;
  out.files.push_back({"iqsp_epochs.csv", epochs.str()});
  out.files.push_back({"iqsp_steps.csv", steps.str()});
  out.files.push_back({"checkpoint.json", circuit::circuit_to_json(c).dump(2) + "\n"});
  return out;
}

Output cmd_cci_run(json config, const Options& o) {
  if (o.has_seed) config["seed"] = o.seed;
  apply_backend(config, o, false, "cci-run");
  const auto cfg = cci::config_from_json(config);
  Output out;
  out.config = cci::config_to_json(cfg);
  auto r = cci::run_cci(cfg);
  out.result = cci::result_to_json(r);
  std::ostringstream csv;
  cci::write_trace_csv(csv, r);
  out.files.push_back({"cci_trace.csv", csv.str()});
  return out;
}

Output cmd_grad_scan(json config, const Options& o, std::ostream& log) {
  if (o.has_seed) config["seed"] = o.seed;
  apply_backend(config, o, true, "grad-scan");
  const auto cfg = grad_scan_from_json(config);
  Output out;
  out.config = grad_scan_to_json(cfg);
  auto r = grad_scan(cfg, &log);
  json summary = json::array();
  for (const auto& s : r.summary)
    summary.push_back({{"mode", s.mode},
                       {"n", s.n},
                       {"rows", s.rows},
                       {"mean_avg_grad", s.mean_avg_grad},
                       {"mean_overlap", s.mean_overlap}});
  out.result = {{"summary", summary}, {"random_log_slope", r.random_slope}};
  std::ostringstream csv;
  sim::write_scan_csv(csv, r.rows);
  out.files.push_back({"grad_scan.csv", csv.str()});
  return out;
}

Output cmd_noise_finetune(json config, const Options& o) {
  only_fields(config, {"iqsp", "theta", "finetune"}, "noise-finetune config");
  if (!config.contains("iqsp")) throw ConfigError("noise-finetune config needs an 'iqsp' block");
  json fj = config.value("finetune", json::object());
  if (o.has_seed) {
    config["iqsp"]["seed"] = o.seed;
    fj["seed"] = o.seed;
  }
  apply_backend(config["iqsp"], o, true, "noise-finetune");
  const auto icfg = iqsp::config_from_json(config.at("iqsp"));
  const auto fcfg = iqsp::finetune_from_json(fj);
  auto c = circuit::build_comb_ansatz(icfg.grid, icfg.layers);
  Output out;
  out.config = {{"iqsp", iqsp::config_to_json(icfg)}, {"finetune", iqsp::finetune_to_json(fcfg)}};
  std::vector<double> theta;
  if (config.contains("theta")) {
    theta = config.at("theta").get<std::vector<double>>();
    if (theta.size() != static_cast<std::size_t>(c.num_params()))
      throw ConfigError("theta has the wrong length for this circuit");
    out.config["theta"] = theta;
  } else {
    theta = iqsp::run_iqsp(icfg).theta;
  }
  c.set_theta(theta);
  const sim::Target target = iqsp::homotopy_target(icfg, 1.0);
  auto r = iqsp::noise_aware_finetune(c, target, fcfg);
  auto tuned = c;
  tuned.set_theta(r.theta);
  out.result = {{"noisy_before", r.noisy_before},
                {"noisy_before_err", r.noisy_before_err},
                {"noisy_after", r.noisy_after},
                {"noisy_after_err", r.noisy_after_err},
                {"clean_before", r.clean_before},
                {"clean_after", r.clean_after},
                {"clean_after_pruned", r.clean_after_pruned},
                {"two_qubit_before", r.two_qubit_before},
                {"two_qubit_after", r.two_qubit_after},
                {"theta_noise_unaware", theta},
                {"circuit", circuit::circuit_to_json(tuned)},
                {"native", circuit::native_to_json(r.native)}};
  std::ostringstream csv;
  csv << "epoch,noisy_infidelity\n";
  for (std::size_t e = 0; e < r.history.size(); ++e) csv << e << ',' << fmt(r.history[e]) << '\n';
  out.files.push_back({"finetune_epochs.csv", csv.str()});
  out.files.push_back({"circuit.qasm", circuit::export_qasm(r.native)});
  out.files.push_back({"checkpoint.json", circuit::circuit_to_json(tuned).dump(2) + "\n"});
  return out;
}

Output cmd_sample_stats(json config, const Options& o) {
  apply_backend(config, o, false, "sample-stats");
  if (config.contains("checkpoint") || config.contains("circuit")) {
    auto c = circuit_from_config(config);
    json grid;
    gridfunc::to_json(grid, c.grid());
    if (config.contains("grid") && config.at("grid") != grid)
      throw ConfigError("grid disagrees with the checkpoint");
    config["grid"] = grid;
    config["layers"] = c.layers();
    config["theta"] = c.theta();
    config.erase("circuit");
  }
  if (o.has_seed && config.contains("seeds")) {
    const std::size_t k = config.at("seeds").size();
    json s = json::array();
    for (std::size_t i = 0; i < k; ++i) s.push_back(o.seed + i);
    config["seeds"] = s;
  } else if (o.has_seed) {
    config["seeds"] = json::array({o.seed});
  }
  const auto cfg = stats::covariance_from_json(config);
  Output out;
  out.config = stats::covariance_to_json(cfg);
  auto rep = stats::covariance_experiment(cfg);
  out.result = stats::report_to_json(rep);
  std::ostringstream csv;
  csv << "seed,source,i,j,cov,cov_err,exact\n";
  for (const auto& run : rep.runs) {
    auto emit = [&](const char* src, const stats::Moments& m) {
      for (Eigen::Index i = 0; i < m.cov.rows(); ++i)
        for (Eigen::Index j = i; j < m.cov.cols(); ++j)
          csv << run.seed << ',' << src << ',' << i << ',' << j << ',' << fmt(m.cov(i, j)) << ','
              << fmt(m.cov_err(i, j)) << ',' << fmt(rep.target.cov(i, j)) << '\n';
    };
    emit("noiseless", run.noiseless);
    if (run.noisy) emit("noisy", *run.noisy);
  }
  out.files.push_back({"covariance.csv", csv.str()});
  return out;
}

Output cmd_compile(json config, const Options& o) {
  apply_backend(config, o, false, "compile");
  if (o.has_seed) throw ConfigError("--seed is not used by compile");
  auto c = circuit_from_config(config);
  only_fields(config, {"circuit", "prune_threshold", "measure"}, "compile config");
  const double thr = config.value("prune_threshold", 1e-4);
  const bool measure = config.value("measure", false);
  if (thr < 0.0) throw ConfigError("prune_threshold must be non-negative");
  Output out;
  out.config = {{"circuit", circuit::circuit_to_json(c)},
                {"prune_threshold", thr},
                {"measure", measure}};
  const auto native = circuit::compile_native(c);
  const auto pruned = circuit::prune(native, thr);
  out.result = {{"su4_gates", c.num_gates()},
                {"two_qubit_unpruned", circuit::count_two_qubit(native)},
                {"two_qubit", circuit::count_two_qubit(pruned)},
                {"native", circuit::native_to_json(pruned)}};
  out.files.push_back({"circuit.qasm", circuit::export_qasm(pruned, measure)});
  return out;
}

Output cmd_compare_baseline(json config, const Options& o, std::ostream& log) {
  if (o.has_seed) config["seed"] = o.seed;
  apply_backend(config, o, false, "compare-baseline");
  const auto cfg = baseline_from_json(config);
  Output out;
  out.config = baseline_to_json(cfg);
  auto pts = compare_baseline(cfg, &log);
  json arr = json::array();
  std::ostringstream csv;
  csv << "family,layers,su4_gates,rzz_gates,eps_max,infidelity\n";
  for (const auto& p : pts) {
    arr.push_back({{"family", p.family},
                   {"layers", p.layers},
                   {"su4_gates", p.su4_gates},
                   {"rzz_gates", p.rzz_gates},
                   {"eps_max", p.eps_max},
                   {"infidelity", p.infidelity},
                   {"theta", p.theta}});
    csv << p.family << ',' << p.layers << ',' << p.su4_gates << ',' << p.rzz_gates << ','
        << fmt(p.eps_max) << ',' << fmt(p.infidelity) << '\n';
  }
  out.result = {{"points", arr}};
  out.files.push_back({"baseline.csv", csv.str()});
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
  f << text;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

const std::vector<std::pair<std::string, std::string>>& commands() {
  static const std::vector<std::pair<std::string, std::string>> c{
      {"tci-build", "Cross-interpolate a target into an MPS and report its accuracy"},
      {"iqsp-run", "Train the comb circuit with the interpolative schedule"},
      {"cci-run", "Train the comb circuit by circuit cross interpolation"},
      {"grad-scan", "Gradient magnitudes for random and warm-started parameters"},
      {"noise-finetune", "Noise-aware fine-tuning, compilation and pruning"},
      {"sample-stats", "Shot-based means and covariances of a trained circuit"},
      {"compile", "Compile a checkpoint to native gates and OpenQASM 2.0"},
      {"compare-baseline", "Error against two-qubit gate count across circuit depths"}};
  return c;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quantum state preparation of multivariate functions"};
  app.name("combprep");
  app.require_subcommand(1);
  Options o;
  std::string seed_text;
  for (const auto& [name, desc] : commands()) {
    auto* sc = app.add_subcommand(name, desc);
    sc->add_option("--config", o.config_path, "Experiment config (JSON)")->required();
    sc->add_option("--seed", seed_text, "Seed, overrides the config");
    sc->add_option("--out", o.out_dir, "Output directory");
    sc->add_option("--threads", o.threads, "Thread bound (default: COMBPREP_THREADS or all cores)");
    sc->add_option("--backend", o.backend, "Simulator backend")
        ->check(CLI::IsMember({"dense", "mps"}));
  }

  std::string command;
  auto report = [&](const std::exception& e, int code) {
    json rec = {{"error",
                 {{"type", error_type(e)},
                  {"message", e.what()},
                  {"exit_code", code},
                  {"command", command}}}};
    err << rec.dump() << std::endl;
    try {
      if (!command.empty()) {
        fs::create_directories(o.out_dir);
        write_text(fs::path(o.out_dir) / "error.json", rec.dump(2) + "\n");
      }
    } catch (...) {
    }
    return code;
  };

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    return report(e, kExitConfig);
  }
  command = app.get_subcommands().front()->get_name();

  try {
    if (!seed_text.empty()) {
      std::size_t pos = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(seed_text, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != seed_text.size() || seed_text[0] == '-')
        throw ConfigError("--seed must be a non-negative integer");
      o.seed = v;
      o.has_seed = true;
    }
    if (o.threads < 0) throw ConfigError("--threads must be positive");
    if (o.threads > 0) set_num_threads(o.threads);

    const json config = read_json_file(o.config_path);
    const auto t0 = std::chrono::steady_clock::now();
    const std::string started = utc_now();
    Output res;
    if (command == "tci-build")
      res = cmd_tci_build(config, o);
    else if (command == "iqsp-run")
      res = cmd_iqsp_run(config, o, err);
    else if (command == "cci-run")
      res = cmd_cci_run(config, o);
    else if (command == "grad-scan")
      res = cmd_grad_scan(config, o, err);
    else if (command == "noise-finetune")
      res = cmd_noise_finetune(config, o);
    else if (command == "sample-stats")
      res = cmd_sample_stats(config, o);
    else if (command == "compile")
      res = cmd_compile(config, o);
    else
      res = cmd_compare_baseline(config, o, err);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(o.out_dir);
    const fs::path dir(o.out_dir);
    const std::string hash = config_hash(res.config);
    json doc = {{"command", command},
                {"config", res.config},
                {"config_sha256", hash},
                {"result", res.result}};
    write_text(dir / "result.json", doc.dump(2) + "\n");
    write_text(dir / "config.json", res.config.dump(2) + "\n");
    for (const auto& [name, text] : res.files) write_text(dir / name, text);
    json timing = res.timing;
    timing["command"] = command;
    timing["started_utc"] = started;
    timing["seconds"] = seconds;
    timing["threads"] = num_threads();
    timing["config_sha256"] = hash;
    write_text(dir / "timing.json", timing.dump(2) + "\n");
    if (res.code != kExitOk) return report(ConvergenceError(res.note), res.code);
    out << (dir / "result.json").string() << std::endl;
    return kExitOk;
  } catch (const std::exception& e) {
    return report(e, exit_code_for(e));
  }
}

int main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace combprep::cli
