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
#include <vector>

#include "json.hpp"

#include "combprep/circuit.hpp"
#include "combprep/sim.hpp"

namespace combprep::noise {

// Every RZZ(theta) is followed by independent single-qubit depolarizing
// channels of rate r(theta) on both qubits, with
//   eps(theta) = a + b theta,  r = (1 - sqrt(1 - 5 eps / 4)) / 3.
struct NoiseModel {
  double a = 2.1e-4;
  double b = 1.43e-3;

  bool noiseless() const { return a == 0.0 && b == 0.0; }
};

double error_rate(const NoiseModel& model, double theta);
double depol_rate(const NoiseModel& model, double theta);
// dr/dtheta.
double depol_rate_derivative(const NoiseModel& model, double theta);

nlohmann::json model_to_json(const NoiseModel& model);
NoiseModel model_from_json(const nlohmann::json& j);

inline constexpr int kDensityLimit = 10;

// ------------------------------------------------------------- exact

// Density matrix as a 2n-qubit vector: entry (i, j) at index i * 2^n + j.
using DensityVector = StateVector;

// Evolves rho through the program; noise marker k applies depolarizing
// channels of rate rates[k] on both of its qubits.
DensityVector run_density(const sim::Program& p, const std::vector<double>& rates);
Eigen::MatrixXcd density_matrix(const DensityVector& rho, int n);
// Depolarizing channel of rate r on one qubit of rho.
void apply_depolarizing(DensityVector& rho, int n, int q, double r);

// Rates of every noise marker of a program.
std::vector<double> program_rates(const sim::Program& p, const NoiseModel& model);

double noisy_infidelity_exact(const circuit::NativeCircuit& native,
                              const sim::Target& target, const NoiseModel& model);

// ------------------------------------------------------------- trajectories

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_traj = 0;
  std::size_t n_error_traj = 0;  // trajectories with at least one Pauli
};

// Samples the Pauli insertions of trajectory traj_index (one code per noise
// marker, see sim::NoiseEvents). Uses the stream (seed, traj_index).
sim::NoiseEvents sample_events(const std::vector<double>& rates, std::uint64_t seed,
                               std::uint64_t traj_index);

McEstimate noisy_infidelity_mc(const circuit::NativeCircuit& native,
                               const sim::Target& target, const NoiseModel& model,
                               std::size_t n_traj, std::uint64_t seed,
                               const sim::Backend& backend = {});

// ------------------------------------------------------------- gradients

enum class NoisyEngine { exact, trajectories };

struct NoisyGradientOptions {
  NoisyEngine engine = NoisyEngine::trajectories;
  std::size_t n_traj = 1000;
  std::uint64_t seed = 0;
};

struct NoisyGradient {
  sim::GradientReport report;       // report.value is the noisy infidelity
  double value_std_error = 0.0;     // 0 for the exact engine
  std::vector<double> std_error;    // per component; empty for exact
};

// Gradient of the noisy infidelity of compile_native(c) with respect to the
// SU(4) parameters, including the angle dependence of the noise rates.
NoisyGradient noisy_gradient(const circuit::Circuit& c, const sim::Target& target,
                             const NoiseModel& model, const NoisyGradientOptions& opts);

// Noisy infidelity of the circuit's compiled form evaluated on the SU(4)
// level program (same value as noisy_infidelity_exact on compile_native(c)).
double noisy_infidelity_exact(const circuit::Circuit& c, const sim::Target& target,
                              const NoiseModel& model);

// ------------------------------------------------------------- sampling

// Measurement shots of the noisy native circuit: each shot draws its own
// trajectory (stream (seed, shot)) and one bitstring from it.
std::vector<Bits> sample_noisy(const circuit::NativeCircuit& native,
                               const NoiseModel& model, std::size_t n_shots,
                               std::uint64_t seed);

}  // namespace combprep::noise
