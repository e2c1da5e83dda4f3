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

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <vector>

#include "json.hpp"

#include "combprep/circuit.hpp"
#include "combprep/gridfunc.hpp"
#include "combprep/noise.hpp"
#include "combprep/sim.hpp"

namespace combprep::iqsp {

struct Schedule {
  std::vector<double> lambdas;  // lambda_0 .. lambda_K, ending at 1
  int epochs = 1000;            // per step k < K
  int final_epochs = 10000;     // at k = K
  double lr = 1e-2;

  static Schedule uniform(double delta_lambda = 0.05, int epochs = 1000,
                          int final_epochs = 10000, double lr = 1e-2);
  int epochs_at(std::size_t k) const;
  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n_params, double lr);
  void step(std::vector<double>& theta, const std::vector<double>& grad);
};

// Interpolating family f(x, lambda) with f(., 0) constant and f(., 1) the
// target: exponent scaling for the Gaussian, f^lambda for the Student-t and
// (1 - lambda) G_lambda + lambda R for the Ricker wavelet, where G_lambda is
// the Gaussian exp(-lambda |x - mu|^2 / (2 sigma^2)).
gridfunc::LambdaFamily homotopy(const gridfunc::TargetSpec& spec);

// eps / || d|f(lambda)>/d lambda ||, +inf when the derivative vanishes.
double delta_lambda_bound(const gridfunc::LambdaFamily& family, const gridfunc::GridSpec& grid,
                          double lambda, double eps, double h = 1e-4);
double delta_lambda_bound(const gridfunc::TargetSpec& spec, const gridfunc::GridSpec& grid,
                          double lambda, double eps, double h = 1e-4);

// Value and gradient of a cost at theta.
struct Evaluation {
  double value = 0.0;
  std::vector<double> grad;
};
using Objective = std::function<Evaluation(const std::vector<double>& theta, int epoch)>;

struct StepResult {
  std::vector<double> theta;     // best seen
  double best_value = 0.0;
  double initial_value = 0.0;
  double initial_avg_grad = 0.0;
  std::vector<double> history;   // cost per epoch, before the update
  int epochs = 0;
};

// n_epochs Adam steps on the objective; stops early once the cost is at or
// below stop_below. Keeps the best parameters seen, including after the
// last update. Throws NumericalError on a non-finite gradient.
StepResult optimize(const Objective& objective, std::vector<double> theta, AdamState& adam,
                    int n_epochs, double stop_below = -1.0);

StepResult optimize_step(const circuit::Circuit& circuit, const sim::Target& target,
                         AdamState& adam, int n_epochs,
                         const sim::Backend& backend = {}, double stop_below = -1.0);

struct IqspConfig {
  gridfunc::GridSpec grid;
  gridfunc::TargetSpec target = gridfunc::TargetSpec::gaussian({0.5}, Eigen::MatrixXd::Constant(1, 1, 0.01));
  int layers = 3;
  Schedule schedule = Schedule::uniform();
  bool adaptive = false;         // step sizes from delta_lambda_bound
  double adaptive_eps = 0.05;
  int max_steps = 200;
  sim::Backend backend;
  int tci_chi = 64;
  double tci_tol = 1e-12;
  bool warm_start = true;        // false: fresh random theta at every step
  double stop_below = -1.0;      // optional early stop per step
  // Uniform noise of this size added to theta = 0 before step 1. At exactly
  // theta = 0 most parameters sit on a symmetric point with zero gradient and
  // Adam never moves them.
  double init_jitter = 1e-6;
  std::uint64_t seed = 0;
};

struct StepRecord {
  int step = 0;
  double lambda = 0.0;
  double initial_overlap = 0.0;
  double initial_avg_grad = 0.0;
  double final_infidelity = 0.0;
  int epochs = 0;
  double seconds = 0.0;
};

struct IqspTrace {
  std::vector<StepRecord> steps;
  std::vector<std::vector<double>> thetas;     // best theta per step
  std::vector<std::vector<double>> histories;  // infidelity per epoch per step
  std::vector<double> theta;                   // final
  double final_infidelity = 0.0;
};

// Target state for lambda on the grid, built by cross interpolation.
sim::Target homotopy_target(const IqspConfig& config, double lambda);

using StepCallback = std::function<void(const StepRecord&)>;
IqspTrace run_iqsp(const IqspConfig& config, const StepCallback& on_step = {});

// ------------------------------------------------------------- noise aware

struct FinetuneConfig {
  noise::NoiseModel model;
  int epochs = 200;
  double lr = 1e-3;
  // Trajectories per gradient; the exact engine is used for n <= 10 unless
  // force_trajectories is set.
  std::size_t n_traj = 1000;
  bool force_trajectories = false;
  std::size_t eval_traj = 10000;  // for the before/after report
  double prune_threshold = 1e-4;
  std::uint64_t seed = 0;
};

struct FinetuneResult {
  std::vector<double> theta;
  circuit::NativeCircuit native;  // compiled and pruned
  double noisy_before = 0.0;
  double noisy_before_err = 0.0;
  double noisy_after = 0.0;
  double noisy_after_err = 0.0;
  double clean_before = 0.0;
  double clean_after = 0.0;          // unpruned
  double clean_after_pruned = 0.0;
  int two_qubit_before = 0;
  int two_qubit_after = 0;
  std::vector<double> history;
};

struct NoisyValue {
  double value = 0.0;
  double std_error = 0.0;
};
// Exact for n <= 10, trajectories otherwise.
NoisyValue evaluate_noisy(const circuit::NativeCircuit& native, const sim::Target& target,
                          const noise::NoiseModel& model, std::size_t n_traj,
                          std::uint64_t seed, bool force_trajectories = false);

FinetuneResult noise_aware_finetune(const circuit::Circuit& circuit, const sim::Target& target,
                                    const FinetuneConfig& config);

// ------------------------------------------------------------- output

nlohmann::json trace_to_json(const IqspTrace& trace);
void write_epoch_csv(std::ostream& os, const IqspTrace& trace);
IqspConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const IqspConfig& config);
Schedule schedule_from_json(const nlohmann::json& j);
FinetuneConfig finetune_from_json(const nlohmann::json& j);
nlohmann::json finetune_to_json(const FinetuneConfig& config);

}  // namespace combprep::iqsp
