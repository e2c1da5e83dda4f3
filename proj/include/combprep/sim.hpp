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

#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "combprep/circuit.hpp"
#include "combprep/common.hpp"
#include "combprep/tensornet.hpp"

namespace combprep::sim {

inline constexpr int kDenseLimit = 26;

enum class BackendKind { dense, mps };

struct Backend {
  BackendKind kind = BackendKind::dense;
  int chi_max = 128;
  double tol = 1e-12;

  static Backend dense() { return {}; }
  static Backend mps(int chi_max = 128, double tol = 1e-12) {
    return {BackendKind::mps, chi_max, tol};
  }
};

std::string to_string(BackendKind k);
BackendKind backend_from_string(const std::string& s);

// ------------------------------------------------------------- programs
//
// A flat list of one- and two-qubit operations, optionally carrying
// parameter derivatives, plus noise markers placed after every RZZ. Two-qubit
// matrices use q0 as the more significant index.

enum class OpKind { one, two, noise };

struct Op {
  OpKind kind = OpKind::one;
  int q0 = 0;
  int q1 = -1;
  Mat2 u1 = Mat2::Identity();
  Mat4 u2 = Mat4::Identity();
  bool diagonal = false;    // u2 is diagonal (RZZ)
  std::vector<int> params;  // global parameter indices
  std::vector<Mat2> d1;     // derivatives for one-qubit ops
  std::vector<Mat4> d2;     // derivatives for two-qubit ops
  // Noise markers: canonical RZZ angle, its source parameter (or -1) and
  // d(angle)/d(parameter).
  double angle = 0.0;
  int angle_param = -1;
  double slope = 0.0;
};

struct Program {
  int n_qubits = 0;
  bool uniform_start = true;  // start in |+...+> (Hadamard column folded in)
  int num_params = 0;
  std::vector<Op> ops;

  int num_noise() const;
};

// One op per SU(4) gate.
Program program_from_circuit(const circuit::Circuit& c);
// Four ops per SU(4) gate with a noise marker after each of the first three.
Program segmented_program(const circuit::Circuit& c);
// Native gate list with a noise marker after every RZZ; no parameters.
Program program_from_native(const circuit::NativeCircuit& native);

// Pauli insertions for a trajectory: one code per noise marker,
// code = p_a + 4 * p_b with p in {0: I, 1: X, 2: Y, 3: Z}.
using NoiseEvents = std::vector<std::uint8_t>;

// ------------------------------------------------------------- dense kernels

StateVector initial_state(int n, bool uniform);
void apply_one(StateVector& s, int n, int q, const Mat2& u);
void apply_two(StateVector& s, int n, int q0, int q1, const Mat4& u);
void apply_pauli(StateVector& s, int n, int q, int p);

// Applies ops [begin, end) in place (noise markers insert the Paulis given
// by events, which may be empty for noiseless runs).
void run_ops(const Program& p, StateVector& s, std::size_t begin,
             std::size_t end, std::span<const std::uint8_t> events = {});
StateVector run_dense(const Program& p, std::span<const std::uint8_t> events = {});

// Vector-Jacobian product: with psi = final state and B = make_bra(psi)
// (the only place psi is exposed),
// returns Re <B| d psi / d theta_k> for every parameter. The forward pass can
// start from a cached state taken just before op start_op.
struct Vjp {
  std::vector<double> grad;
};
using BraFunction = std::function<StateVector(const StateVector& psi)>;
Vjp adjoint_vjp(const Program& p, const BraFunction& make_bra,
                std::span<const std::uint8_t> events = {},
                const StateVector* start = nullptr, std::size_t start_op = 0);

// ------------------------------------------------------------- MPS backend

struct MpsRun {
  tensornet::Mps state;
  double truncation_weight = 0.0;  // accumulated discarded weight
};
MpsRun run_mps(const Program& p, int chi_max, double tol,
               std::span<const std::uint8_t> events = {});

// ------------------------------------------------------------- targets

// A normalised target state; dense and MPS forms are produced on demand
// and cached.
class Target {
 public:
  Target() = default;
  explicit Target(tensornet::Mps state);
  explicit Target(StateVector dense);

  int n_qubits() const;
  const tensornet::Mps& mps() const;
  const StateVector& dense() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// ------------------------------------------------------------- circuits

struct State {
  BackendKind kind = BackendKind::dense;
  StateVector dense;
  tensornet::Mps mps;
  double truncation_weight = 0.0;
};

State run(const circuit::Circuit& c, const Backend& backend = {});

// <target|state>
cplx target_overlap(const State& s, const Target& target);
double infidelity(const State& s, const Target& target);
double infidelity(const circuit::Circuit& c, const Target& target,
                  const Backend& backend = {});

enum class GradientMethod { parameter_shift, adjoint, finite_diff };
std::string to_string(GradientMethod m);

struct GradientReport {
  std::vector<double> grad;
  double avg_abs = 0.0;
  std::string method;
  std::uint64_t evaluations = 0;  // circuit executions
  double value = 0.0;             // infidelity at the evaluation point
};

double average_abs(std::span<const double> g);

GradientReport gradient(const circuit::Circuit& c, const Target& target,
                        GradientMethod method, const Backend& backend = {},
                        double h = 1e-6);

// ------------------------------------------------------------- scans

struct ScanRow {
  std::string mode;
  int n = 0;
  int repeat = 0;
  int step = -1;  // IQSP step for warm starts
  double overlap = 0.0;
  double avg_grad = 0.0;
};

// Random initialisation: theta_i uniform in [-pi, pi], one RNG stream per
// repeat.
std::vector<ScanRow> gradient_scan_random(const gridfunc::GridSpec& grid,
                                          int layers, const Target& target,
                                          int n_repeats, std::uint64_t seed,
                                          const Backend& backend = {});

// Warm starts: the parameters entering IQSP step k (optimum of step k-1)
// evaluated against the step-k target.
struct WarmStartStep {
  int step = 0;
  double lambda = 0.0;
  std::vector<double> theta;
  Target target;
};
std::vector<ScanRow> gradient_scan_warm(const gridfunc::GridSpec& grid,
                                        int layers,
                                        const std::vector<WarmStartStep>& steps,
                                        int repeat, const Backend& backend = {});

void write_scan_csv(std::ostream& os, const std::vector<ScanRow>& rows);

}  // namespace combprep::sim
