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

#include "combprep/iqsp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <set>

#include "combprep/errors.hpp"
#include "combprep/random.hpp"
#include "combprep/tci.hpp"

namespace combprep::iqsp {

using nlohmann::json;

// ------------------------------------------------------------- schedule

Schedule Schedule::uniform(double delta_lambda, int epochs, int final_epochs, double lr) {
  if (!(delta_lambda > 0.0) || delta_lambda > 1.0)
    throw ConfigError("delta_lambda must lie in (0, 1]");
  Schedule s;
  const int k = static_cast<int>(std::ceil(1.0 / delta_lambda - 1e-9));
  for (int i = 0; i <= k; ++i) s.lambdas.push_back(std::min(1.0, i * delta_lambda));
  s.lambdas.back() = 1.0;
  s.epochs = epochs;
  s.final_epochs = final_epochs;
  s.lr = lr;
  return s;
}

int Schedule::epochs_at(std::size_t k) const {
  return k + 1 == lambdas.size() ? final_epochs : epochs;
}

void Schedule::validate() const {
  if (lambdas.empty()) throw ConfigError("schedule needs at least one lambda");
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    if (lambdas[k] < 0.0 || lambdas[k] > 1.0) throw ConfigError("lambda outside [0, 1]");
    if (k > 0 && !(lambdas[k] > lambdas[k - 1]))
      throw ConfigError("schedule must be strictly increasing");
  }
  if (lambdas.back() != 1.0) throw ConfigError("schedule must end at lambda = 1");
  if (epochs < 0 || final_epochs < 0) throw ConfigError("negative epoch count");
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
}

// ------------------------------------------------------------- Adam

AdamState::AdamState(std::size_t n_params, double lr_)
    : m(n_params, 0.0), v(n_params, 0.0), lr(lr_) {}

void AdamState::step(std::vector<double>& theta, const std::vector<double>& grad) {
  if (theta.size() != m.size() || grad.size() != m.size())
    throw ArgumentError("Adam state size does not match the parameters");
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double mh = m[i] / c1, vh = v[i] / c2;
    theta[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

// ------------------------------------------------------------- homotopy

gridfunc::LambdaFamily homotopy(const gridfunc::TargetSpec& spec) {
  using gridfunc::Family;
  switch (spec.family()) {
    case Family::gaussian:
      return gridfunc::lambda_family(spec);
    case Family::student_t: {
      auto full = spec.with_lambda(1.0);
      return [full](std::span<const double> x, double lambda) {
        return std::pow(full.eval(x), lambda);
      };
    }
    case Family::ricker: {
      auto full = spec.with_lambda(1.0);
      const double s2 = spec.sigma_scalar() * spec.sigma_scalar();
      return [full, s2](std::span<const double> x, double lambda) {
        const double g = std::exp(-lambda * full.quadratic_form(x) / (2.0 * s2));
        return (1.0 - lambda) * g + lambda * full.eval(x);
      };
    }
  }
  throw ArgumentError("unknown target family");
}

double delta_lambda_bound(const gridfunc::LambdaFamily& family, const gridfunc::GridSpec& grid,
                          double lambda, double eps, double h) {
  if (!(eps > 0.0)) throw ArgumentError("eps must be positive");
  const auto scheme =
      lambda - h >= 0.0 ? gridfunc::Difference::central : gridfunc::Difference::forward;
  const double norm = gridfunc::target_derivative_norm(family, grid, lambda, h, scheme);
  if (!(norm > 1e-300)) return std::numeric_limits<double>::infinity();
  return eps / norm;
}

double delta_lambda_bound(const gridfunc::TargetSpec& spec, const gridfunc::GridSpec& grid,
                          double lambda, double eps, double h) {
  return delta_lambda_bound(homotopy(spec), grid, lambda, eps, h);
}

// ------------------------------------------------------------- optimisation

StepResult optimize(const Objective& objective, std::vector<double> theta, AdamState& adam,
                    int n_epochs, double stop_below) {
  StepResult out;
  auto check = [](const Evaluation& ev) {
    if (!std::isfinite(ev.value)) throw NumericalError("cost is not finite");
    for (std::size_t i = 0; i < ev.grad.size(); ++i)
      if (!std::isfinite(ev.grad[i]))
        throw NumericalError("gradient component " + std::to_string(i) + " is not finite");
  };
  out.best_value = std::numeric_limits<double>::infinity();
  bool stopped = false;
  for (int e = 0; e < n_epochs; ++e) {
    Evaluation ev = objective(theta, e);
    check(ev);
    if (e == 0) {
      out.initial_value = ev.value;
      out.initial_avg_grad = sim::average_abs(ev.grad);
    }
    out.history.push_back(ev.value);
    if (ev.value < out.best_value) {
      out.best_value = ev.value;
      out.theta = theta;
    }
    out.epochs = e + 1;
    if (ev.value <= stop_below) {
      stopped = true;
      break;
    }
    adam.step(theta, ev.grad);
  }
  if (!stopped) {
    Evaluation ev = objective(theta, n_epochs);
    check(ev);
    if (n_epochs == 0) {
      out.initial_value = ev.value;
      out.initial_avg_grad = sim::average_abs(ev.grad);
    }
    if (ev.value < out.best_value) {
      out.best_value = ev.value;
      out.theta = theta;
    }
  }
  return out;
}

StepResult optimize_step(const circuit::Circuit& circuit, const sim::Target& target,
                         AdamState& adam, int n_epochs, const sim::Backend& backend,
                         double stop_below) {
  circuit::Circuit c = circuit;
  const auto method = backend.kind == sim::BackendKind::dense
                          ? sim::GradientMethod::adjoint
                          : sim::GradientMethod::parameter_shift;
  Objective obj = [&](const std::vector<double>& theta, int) {
    c.set_theta(theta);
    auto rep = sim::gradient(c, target, method, backend);
    return Evaluation{rep.value, std::move(rep.grad)};
  };
  return optimize(obj, circuit.theta(), adam, n_epochs, stop_below);
}

// ------------------------------------------------------------- driver

sim::Target homotopy_target(const IqspConfig& config, double lambda) {
  auto family = homotopy(config.target);
  tci::TciOptions opts;
  opts.initial_pivots.push_back(gridfunc::nearest_grid_bits(config.grid, config.target.mu()));
  auto built = tci::build_target(
      [&family, lambda](std::span<const double> x) { return family(x, lambda); }, config.grid,
      config.tci_chi, config.tci_tol, 24, config.seed, opts);
  return sim::Target(std::move(built.state));
}

namespace {

std::vector<double> random_theta(std::size_t m, std::uint64_t seed, std::uint64_t stream) {
  Rng rng(seed, stream);
  std::vector<double> t(m);
  for (auto& x : t) x = rng.uniform(-kPi, kPi);
  return t;
}

}  // namespace

IqspTrace run_iqsp(const IqspConfig& config, const StepCallback& on_step) {
  config.grid.validate();
  if (config.target.dimension() != config.grid.d)
    throw ConfigError("target dimension does not match the grid");
  if (!config.adaptive) config.schedule.validate();
  circuit::Circuit c = circuit::build_comb_ansatz(config.grid, config.layers);
  const std::size_t M = static_cast<std::size_t>(c.num_params());
  std::vector<double> theta(M, 0.0);
  IqspTrace trace;

  double lambda = config.adaptive ? 0.0 : config.schedule.lambdas.front();
  for (int k = 0;; ++k) {
    const bool last = lambda >= 1.0;
    const auto t0 = std::chrono::steady_clock::now();
    sim::Target target;
    try {
      target = homotopy_target(config, lambda);
    } catch (const Error& e) {
      throw EvaluationError("target construction failed at step " + std::to_string(k) + ": " +
                            e.what());
    }
    if (!config.warm_start && k > 0) {
      theta = random_theta(M, config.seed, static_cast<std::uint64_t>(k));
    } else if (k == 1 && config.init_jitter > 0.0) {
      Rng rng(config.seed, 0x6a);
      for (auto& x : theta) x += rng.uniform(-config.init_jitter, config.init_jitter);
    }
    c.set_theta(theta);

    StepRecord rec;
    rec.step = k;
    rec.lambda = lambda;
    int epochs = last ? config.schedule.final_epochs : config.schedule.epochs;
    if (k == 0 && lambda == 0.0) epochs = 0;  // theta = 0 prepares the uniform state
    AdamState adam(M, config.schedule.lr);
    StepResult res = optimize_step(c, target, adam, epochs, config.backend, config.stop_below);
    theta = res.theta;
    rec.initial_overlap = 1.0 - res.initial_value;
    rec.initial_avg_grad = res.initial_avg_grad;
    rec.final_infidelity = res.best_value;
    rec.epochs = res.epochs;
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace.steps.push_back(rec);
    trace.thetas.push_back(theta);
    trace.histories.push_back(std::move(res.history));
    if (on_step) on_step(rec);

    if (last) break;
    if (config.adaptive) {
      if (k + 1 >= config.max_steps) throw ConvergenceError("adaptive schedule exceeded max_steps");
      const double d = delta_lambda_bound(config.target, config.grid, lambda, config.adaptive_eps);
      lambda = std::min(1.0, lambda + d);
    } else {
      lambda = config.schedule.lambdas[static_cast<std::size_t>(k + 1)];
    }
  }
  trace.theta = theta;
  trace.final_infidelity = trace.steps.back().final_infidelity;
  return trace;
}

// ------------------------------------------------------------- noise aware

NoisyValue evaluate_noisy(const circuit::NativeCircuit& native, const sim::Target& target,
                          const noise::NoiseModel& model, std::size_t n_traj,
                          std::uint64_t seed, bool force_trajectories) {
  if (native.n_qubits <= noise::kDensityLimit && !force_trajectories)
    return {noise::noisy_infidelity_exact(native, target, model), 0.0};
  auto est = noise::noisy_infidelity_mc(native, target, model, n_traj, seed);
  return {est.value, est.std_error};
}

namespace {

double clean_native_infidelity(const circuit::NativeCircuit& native, const sim::Target& target) {
  StateVector s = sim::run_dense(sim::program_from_native(native));
  return std::clamp(1.0 - std::norm(inner(target.dense(), s)), 0.0, 1.0);
}

}  // namespace

FinetuneResult noise_aware_finetune(const circuit::Circuit& circuit, const sim::Target& target,
                                    const FinetuneConfig& config) {
  FinetuneResult out;
  circuit::Circuit c = circuit;
  const auto native0 = circuit::compile_native(c);
  out.two_qubit_before = circuit::count_two_qubit(native0);
  out.clean_before = sim::infidelity(c, target);
  auto before = evaluate_noisy(native0, target, config.model, config.eval_traj, config.seed,
                               config.force_trajectories);
  out.noisy_before = before.value;
  out.noisy_before_err = before.std_error;

  noise::NoisyGradientOptions gopts;
  gopts.engine = c.n_qubits() <= noise::kDensityLimit && !config.force_trajectories
                     ? noise::NoisyEngine::exact
                     : noise::NoisyEngine::trajectories;
  gopts.n_traj = config.n_traj;
  Objective obj = [&](const std::vector<double>& theta, int epoch) {
    c.set_theta(theta);
    auto o = gopts;
    o.seed = mix_seed(config.seed, static_cast<std::uint64_t>(epoch) + 1);
    auto g = noise::noisy_gradient(c, target, config.model, o);
    return Evaluation{g.report.value, std::move(g.report.grad)};
  };
  AdamState adam(static_cast<std::size_t>(c.num_params()), config.lr);
  StepResult res = optimize(obj, circuit.theta(), adam, config.epochs);
  out.theta = res.theta;
  out.history = std::move(res.history);

  c.set_theta(out.theta);
  out.clean_after = sim::infidelity(c, target);
  out.native = circuit::prune(circuit::compile_native(c), config.prune_threshold);
  out.two_qubit_after = circuit::count_two_qubit(out.native);
  out.clean_after_pruned = clean_native_infidelity(out.native, target);
  auto after = evaluate_noisy(out.native, target, config.model, config.eval_traj, config.seed,
                              config.force_trajectories);
  out.noisy_after = after.value;
  out.noisy_after_err = after.std_error;
  return out;
}

// ------------------------------------------------------------- JSON

namespace {

void only_fields(const json& j, const std::set<std::string>& allowed, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError(what + ": unknown field '" + key + "'");
}

}  // namespace

nlohmann::json trace_to_json(const IqspTrace& trace) {
  json steps = json::array();
  for (const auto& s : trace.steps)
    steps.push_back({{"step", s.step},
                     {"lambda", s.lambda},
                     {"initial_overlap", s.initial_overlap},
                     {"initial_avg_grad", s.initial_avg_grad},
                     {"final_infidelity", s.final_infidelity},
                     {"epochs", s.epochs}});
  return {{"steps", steps}, {"final_infidelity", trace.final_infidelity}, {"theta", trace.theta}};
}

void write_epoch_csv(std::ostream& os, const IqspTrace& trace) {
  os << "step,lambda,epoch,infidelity\n";
  char buf[64];
  for (std::size_t k = 0; k < trace.steps.size(); ++k)
    for (std::size_t e = 0; e < trace.histories[k].size(); ++e) {
      std::snprintf(buf, sizeof buf, "%.17g", trace.histories[k][e]);
      os << trace.steps[k].step << ',' << trace.steps[k].lambda << ',' << e << ',' << buf << '\n';
    }
}

Schedule schedule_from_json(const json& j) {
  only_fields(j, {"delta_lambda", "lambdas", "epochs", "final_epochs", "lr"}, "schedule");
  const int epochs = j.value("epochs", 1000);
  const int final_epochs = j.value("final_epochs", 10000);
  const double lr = j.value("lr", 1e-2);
  Schedule s;
  if (j.contains("lambdas")) {
    if (j.contains("delta_lambda")) throw ConfigError("give either lambdas or delta_lambda");
    s.lambdas = j.at("lambdas").get<std::vector<double>>();
    s.epochs = epochs;
    s.final_epochs = final_epochs;
    s.lr = lr;
  } else {
    s = Schedule::uniform(j.value("delta_lambda", 0.05), epochs, final_epochs, lr);
  }
  s.validate();
  return s;
}

IqspConfig config_from_json(const json& j) {
  only_fields(j,
              {"grid", "target", "layers", "schedule", "adaptive", "adaptive_eps", "max_steps",
               "backend", "tci", "warm_start", "stop_below", "init_jitter", "seed"},
              "iqsp config");
  IqspConfig c;
  if (!j.contains("grid") || !j.contains("target"))
    throw ConfigError("iqsp config needs grid and target");
  j.at("grid").get_to(c.grid);
  c.target = gridfunc::target_from_json(j.at("target"));
  c.layers = j.value("layers", 3);
  if (c.layers < 1) throw ConfigError("layers must be positive");
  if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
  c.adaptive = j.value("adaptive", false);
  c.adaptive_eps = j.value("adaptive_eps", 0.05);
  c.max_steps = j.value("max_steps", 200);
  if (j.contains("backend")) {
    const auto& b = j.at("backend");
    only_fields(b, {"kind", "chi_max", "tol"}, "backend");
    c.backend.kind = sim::backend_from_string(b.value("kind", std::string("dense")));
    c.backend.chi_max = b.value("chi_max", 128);
    c.backend.tol = b.value("tol", 1e-12);
  }
  if (j.contains("tci")) {
    const auto& t = j.at("tci");
    only_fields(t, {"chi_max", "tol"}, "tci");
    c.tci_chi = t.value("chi_max", 64);
    c.tci_tol = t.value("tol", 1e-12);
  }
  c.warm_start = j.value("warm_start", true);
  c.stop_below = j.value("stop_below", -1.0);
  c.init_jitter = j.value("init_jitter", 1e-6);
  if (c.init_jitter < 0.0) throw ConfigError("init_jitter must be non-negative");
  c.seed = j.value("seed", std::uint64_t{0});
  if (c.target.dimension() != c.grid.d) throw ConfigError("target dimension does not match the grid");
  return c;
}

nlohmann::json config_to_json(const IqspConfig& c) {
  json grid;
  gridfunc::to_json(grid, c.grid);
  return {{"grid", grid},
          {"target", gridfunc::target_to_json(c.target)},
          {"layers", c.layers},
          {"schedule",
           {{"lambdas", c.schedule.lambdas},
            {"epochs", c.schedule.epochs},
            {"final_epochs", c.schedule.final_epochs},
            {"lr", c.schedule.lr}}},
          {"adaptive", c.adaptive},
          {"adaptive_eps", c.adaptive_eps},
          {"max_steps", c.max_steps},
          {"backend",
           {{"kind", sim::to_string(c.backend.kind)},
            {"chi_max", c.backend.chi_max},
            {"tol", c.backend.tol}}},
          {"tci", {{"chi_max", c.tci_chi}, {"tol", c.tci_tol}}},
          {"warm_start", c.warm_start},
          {"stop_below", c.stop_below},
          {"init_jitter", c.init_jitter},
          {"seed", c.seed}};
}

FinetuneConfig finetune_from_json(const json& j) {
  only_fields(j,
              {"noise", "epochs", "lr", "n_traj", "force_trajectories", "eval_traj",
               "prune_threshold", "seed"},
              "finetune config");
  FinetuneConfig f;
  if (j.contains("noise")) f.model = noise::model_from_json(j.at("noise"));
  f.epochs = j.value("epochs", 200);
  f.lr = j.value("lr", 1e-3);
  f.n_traj = j.value("n_traj", std::size_t{1000});
  f.force_trajectories = j.value("force_trajectories", false);
  f.eval_traj = j.value("eval_traj", std::size_t{10000});
  f.prune_threshold = j.value("prune_threshold", 1e-4);
  f.seed = j.value("seed", std::uint64_t{0});
  if (f.epochs < 0 || f.n_traj < 2 || f.eval_traj < 2)
    throw ConfigError("finetune: invalid epoch or trajectory count");
  return f;
}

nlohmann::json finetune_to_json(const FinetuneConfig& f) {
  return {{"noise", noise::model_to_json(f.model)},
          {"epochs", f.epochs},
          {"lr", f.lr},
          {"n_traj", f.n_traj},
          {"force_trajectories", f.force_trajectories},
          {"eval_traj", f.eval_traj},
          {"prune_threshold", f.prune_threshold},
          {"seed", f.seed}};
}

}  // namespace combprep::iqsp
