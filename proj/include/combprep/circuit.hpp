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

#include <array>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "combprep/common.hpp"
#include "combprep/gridfunc.hpp"

namespace combprep::circuit {

inline constexpr int kSu4Params = 15;

// Parameter layout of one SU(4) gate:
//   [c1, c2, c3, A1(phi, theta, lambda), A2(...), B1(...), B2(...)]
// U = (A1 x A2) exp(i (c1 XX + c2 YY + c3 ZZ)) (B1 x B2), each local block
// Rz(phi) Ry(theta) Rz(lambda). The first qubit of the pair is the more
// significant index of the 4x4 matrix.
enum Su4Slot : int { c1 = 0, c2 = 1, c3 = 2, a1 = 3, a2 = 6, b1 = 9, b2 = 12 };

Mat2 rx(double angle);
Mat2 ry(double angle);
Mat2 rz(double angle);
Mat2 hadamard();
Mat2 pauli(int p);  // 0 = I, 1 = X, 2 = Y, 3 = Z
Mat2 euler_zyz(double phi, double theta, double lambda);
Mat4 kron(const Mat2& a, const Mat2& b);
// exp(-i angle/2 Z x Z).
Mat4 rzz(double angle);

Mat4 su4_unitary(std::span<const double> params);
// dU/dparams[k] for k = 0..14.
std::array<Mat4, kSu4Params> su4_derivatives(std::span<const double> params);

// The gate split into four time-ordered pieces, each followed (in the noisy
// model) by the noise of the RZZ it contains:
//   T1 = exp(i c1 XX)(B1 x B2), T2 = exp(i c2 YY), T3 = exp(i c3 ZZ),
//   T4 = A1 x A2.
// params_of[k] lists the gate-local parameter indices piece k depends on,
// derivs[k][m] is the derivative with respect to params_of[k][m].
struct Su4Pieces {
  std::array<Mat4, 4> u;
  std::array<std::vector<int>, 4> params_of;
  std::array<std::vector<Mat4>, 4> derivs;
};
Su4Pieces su4_pieces(std::span<const double> params);

// Canonical RZZ angle of exp(i c Z x Z) = RZZ(-2c), folded into [0, pi/2]:
// RZZ(-2c) = (post[0] x post[1]) RZZ(angle) (pre[0] x pre[1]) up to a global
// phase, with Pauli corrections. slope is d(angle)/dc (+-2; 0 at angle 0).
struct FoldedAngle {
  double angle = 0.0;
  double slope = 0.0;
  std::array<Mat2, 2> pre;
  std::array<Mat2, 2> post;
};
FoldedAngle fold_rzz_angle(double c);

struct Su4Gate {
  int q0 = 0;
  int q1 = 1;
  bool operator==(const Su4Gate&) const = default;
};

class Circuit {
 public:
  Circuit() = default;
  Circuit(gridfunc::GridSpec grid, int layers, std::vector<Su4Gate> gates);

  const gridfunc::GridSpec& grid() const { return grid_; }
  int n_qubits() const { return grid_.n_qubits(); }
  int layers() const { return layers_; }
  const std::vector<Su4Gate>& gates() const { return gates_; }
  int num_gates() const { return static_cast<int>(gates_.size()); }
  int num_params() const { return kSu4Params * num_gates(); }

  const std::vector<double>& theta() const { return theta_; }
  void set_theta(std::vector<double> theta);
  std::span<const double> gate_params(int g) const;

 private:
  gridfunc::GridSpec grid_;
  int layers_ = 0;
  std::vector<Su4Gate> gates_;
  std::vector<double> theta_;
};

// Hadamard column, then L layers of (staircase across variables, then an
// even and an odd brickwork pass inside every variable block). theta = 0.
Circuit build_comb_ansatz(const gridfunc::GridSpec& grid, int layers);

enum class GateKind { h, rx, ry, rz, rzz };
std::string to_string(GateKind k);

struct NativeGate {
  GateKind kind = GateKind::h;
  int q0 = 0;
  int q1 = -1;
  double angle = 0.0;
  // Provenance of RZZ gates: source SU(4) gate, canonical slot (0..2) and
  // d(angle)/d(canonical coordinate).
  int source_gate = -1;
  int slot = -1;
  double slope = 0.0;
};

struct NativeCircuit {
  int n_qubits = 0;
  int source_params = 0;  // M of the source circuit
  std::vector<NativeGate> gates;
  int pruned = 0;         // RZZ gates removed by prune()
};

NativeCircuit compile_native(const Circuit& circuit);
NativeCircuit prune(const NativeCircuit& native, double theta_min = 1e-4);
int count_two_qubit(const NativeCircuit& native);

// Dense 2^n x 2^n unitaries for small n (testing).
Eigen::MatrixXcd circuit_unitary(const Circuit& circuit, bool with_hadamards = true);
Eigen::MatrixXcd native_unitary(const NativeCircuit& native);

std::string export_qasm(const NativeCircuit& native, bool measure = false);
NativeCircuit parse_qasm(const std::string& text);

nlohmann::json circuit_to_json(const Circuit& circuit);
Circuit circuit_from_json(const nlohmann::json& j);
nlohmann::json native_to_json(const NativeCircuit& native);

}  // namespace combprep::circuit
