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

#include "combprep/circuit.hpp"

#include <cmath>
#include <cstdio>
#include <optional>
#include <regex>
#include <sstream>

#include "combprep/errors.hpp"

namespace combprep::circuit {

using nlohmann::json;

namespace {
const cplx kI(0.0, 1.0);

Mat4 pauli_pair(int p) {
  Mat2 m = pauli(p);
  return kron(m, m);
}

// Derivatives of Rz(phi) Ry(theta) Rz(lambda) with respect to its angles.
std::array<Mat2, 3> euler_derivatives(double phi, double theta, double lambda) {
  const Mat2 z = pauli(3), y = pauli(2);
  Mat2 e = euler_zyz(phi, theta, lambda);
  return {(-0.5 * kI) * z * e, rz(phi) * ((-0.5 * kI) * y) * ry(theta) * rz(lambda),
          e * ((-0.5 * kI) * z)};
}

Mat4 exp_pair(int p, double c) {
  return std::cos(c) * Mat4::Identity() + (kI * std::sin(c)) * pauli_pair(p);
}

void check_params(std::span<const double> params) {
  if (params.size() != kSu4Params)
    throw ArgumentError("SU(4) gates take exactly 15 parameters");
}
}  // namespace

Mat2 rx(double a) {
  Mat2 m;
  m << std::cos(a / 2), -kI * std::sin(a / 2), -kI * std::sin(a / 2), std::cos(a / 2);
  return m;
}

Mat2 ry(double a) {
  Mat2 m;
  m << std::cos(a / 2), -std::sin(a / 2), std::sin(a / 2), std::cos(a / 2);
  return m;
}

Mat2 rz(double a) {
  Mat2 m;
  m << std::exp(-0.5 * kI * a), 0.0, 0.0, std::exp(0.5 * kI * a);
  return m;
}

Mat2 hadamard() {
  Mat2 m;
  const double s = 1.0 / std::sqrt(2.0);
  m << s, s, s, -s;
  return m;
}

Mat2 pauli(int p) {
  Mat2 m;
  switch (p) {
    case 0:
      m << 1, 0, 0, 1;
      break;
    case 1:
      m << 0, 1, 1, 0;
      break;
    case 2:
      m << 0, -kI, kI, 0;
      break;
    case 3:
      m << 1, 0, 0, -1;
      break;
    default:
      throw ArgumentError("pauli index must be 0..3");
  }
  return m;
}

Mat2 euler_zyz(double phi, double theta, double lambda) {
  return rz(phi) * ry(theta) * rz(lambda);
}

Mat4 kron(const Mat2& a, const Mat2& b) {
  Mat4 m;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) m.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return m;
}

Mat4 rzz(double angle) {
  Mat4 m = Mat4::Zero();
  const cplx em = std::exp(-0.5 * kI * angle), ep = std::exp(0.5 * kI * angle);
  m(0, 0) = em;
  m(1, 1) = ep;
  m(2, 2) = ep;
  m(3, 3) = em;
  return m;
}

Mat4 su4_unitary(std::span<const double> p) {
  check_params(p);
  Mat4 core = exp_pair(1, p[0]) * exp_pair(2, p[1]) * exp_pair(3, p[2]);
  Mat4 ka = kron(euler_zyz(p[3], p[4], p[5]), euler_zyz(p[6], p[7], p[8]));
  Mat4 kb = kron(euler_zyz(p[9], p[10], p[11]), euler_zyz(p[12], p[13], p[14]));
  return ka * core * kb;
}

std::array<Mat4, kSu4Params> su4_derivatives(std::span<const double> p) {
  check_params(p);
  Mat4 core = exp_pair(1, p[0]) * exp_pair(2, p[1]) * exp_pair(3, p[2]);
  Mat2 ea1 = euler_zyz(p[3], p[4], p[5]), ea2 = euler_zyz(p[6], p[7], p[8]);
  Mat2 eb1 = euler_zyz(p[9], p[10], p[11]), eb2 = euler_zyz(p[12], p[13], p[14]);
  Mat4 ka = kron(ea1, ea2), kb = kron(eb1, eb2);
  auto da1 = euler_derivatives(p[3], p[4], p[5]);
  auto da2 = euler_derivatives(p[6], p[7], p[8]);
  auto db1 = euler_derivatives(p[9], p[10], p[11]);
  auto db2 = euler_derivatives(p[12], p[13], p[14]);
  std::array<Mat4, kSu4Params> d;
  for (int k = 0; k < 3; ++k) d[k] = ka * (kI * pauli_pair(k + 1) * core) * kb;
  Mat4 ck = core * kb, kc = ka * core;
  for (int k = 0; k < 3; ++k) {
    d[3 + k] = kron(da1[k], ea2) * ck;
    d[6 + k] = kron(ea1, da2[k]) * ck;
    d[9 + k] = kc * kron(db1[k], eb2);
    d[12 + k] = kc * kron(eb1, db2[k]);
  }
  return d;
}

Su4Pieces su4_pieces(std::span<const double> p) {
  check_params(p);
  Su4Pieces out;
  Mat2 ea1 = euler_zyz(p[3], p[4], p[5]), ea2 = euler_zyz(p[6], p[7], p[8]);
  Mat2 eb1 = euler_zyz(p[9], p[10], p[11]), eb2 = euler_zyz(p[12], p[13], p[14]);
  auto da1 = euler_derivatives(p[3], p[4], p[5]);
  auto da2 = euler_derivatives(p[6], p[7], p[8]);
  auto db1 = euler_derivatives(p[9], p[10], p[11]);
  auto db2 = euler_derivatives(p[12], p[13], p[14]);

  Mat4 xx = exp_pair(1, p[0]);
  out.u[0] = xx * kron(eb1, eb2);
  out.params_of[0] = {0, 9, 10, 11, 12, 13, 14};
  out.derivs[0].push_back(kI * pauli_pair(1) * out.u[0]);
  for (int k = 0; k < 3; ++k) out.derivs[0].push_back(xx * kron(db1[k], eb2));
  for (int k = 0; k < 3; ++k) out.derivs[0].push_back(xx * kron(eb1, db2[k]));

  for (int s = 1; s <= 2; ++s) {
    out.u[s] = exp_pair(s + 1, p[s]);
    out.params_of[s] = {s};
    out.derivs[s].push_back(kI * pauli_pair(s + 1) * out.u[s]);
  }

  out.u[3] = kron(ea1, ea2);
  out.params_of[3] = {3, 4, 5, 6, 7, 8};
  for (int k = 0; k < 3; ++k) out.derivs[3].push_back(kron(da1[k], ea2));
  for (int k = 0; k < 3; ++k) out.derivs[3].push_back(kron(ea1, da2[k]));
  return out;
}

FoldedAngle fold_rzz_angle(double c) {
  // exp(i c ZZ) = RZZ(t) with t = -2c reduced into [-pi, pi].
  const double t = std::remainder(-2.0 * c, 2.0 * kPi);
  const double half = 0.5 * kPi;
  const Mat2 id = Mat2::Identity(), x = pauli(1), z = pauli(3);
  FoldedAngle f;
  f.pre = {id, id};
  f.post = {id, id};
  if (t >= 0.0 && t <= half) {
    f.angle = t;
    f.slope = -2.0;
  } else if (t > half) {
    // RZZ(t) ~ (Z x Z) X_a RZZ(pi - t) X_a
    f.angle = kPi - t;
    f.slope = 2.0;
    f.pre = {x, id};
    f.post = {z * x, z};
  } else if (t >= -half) {
    // RZZ(t) = X_a RZZ(-t) X_a
    f.angle = -t;
    f.slope = 2.0;
    f.pre = {x, id};
    f.post = {x, id};
  } else {
    // RZZ(t) ~ (Z x Z) RZZ(pi + t)
    f.angle = kPi + t;
    f.slope = -2.0;
    f.post = {z, z};
  }
  if (f.angle == 0.0) f.slope = 0.0;
  return f;
}

// ---------------------------------------------------------------- Circuit

Circuit::Circuit(gridfunc::GridSpec grid, int layers, std::vector<Su4Gate> gates)
    : grid_(grid), layers_(layers), gates_(std::move(gates)) {
  grid_.validate();
  const int n = grid_.n_qubits();
  for (const auto& g : gates_)
    if (g.q0 < 0 || g.q1 < 0 || g.q0 >= n || g.q1 >= n || g.q0 == g.q1)
      throw ArgumentError("circuit gate qubit indices out of range");
  theta_.assign(static_cast<std::size_t>(num_params()), 0.0);
}

void Circuit::set_theta(std::vector<double> theta) {
  if (static_cast<int>(theta.size()) != num_params())
    throw ArgumentError("set_theta: expected " + std::to_string(num_params()) +
                        " parameters, got " + std::to_string(theta.size()));
  for (double t : theta)
    if (!std::isfinite(t)) throw ArgumentError("set_theta: non-finite parameter");
  theta_ = std::move(theta);
}

std::span<const double> Circuit::gate_params(int g) const {
  return std::span<const double>(theta_).subspan(
      static_cast<std::size_t>(g * kSu4Params), kSu4Params);
}

Circuit build_comb_ansatz(const gridfunc::GridSpec& grid, int layers) {
  grid.validate();
  if (layers < 1) throw ArgumentError("build_comb_ansatz: L must be >= 1");
  const int d = grid.d, nx = grid.n_x;
  std::vector<Su4Gate> gates;
  for (int l = 0; l < layers; ++l) {
    for (int i = 0; i + 1 < d; ++i) gates.push_back({i * nx, (i + 1) * nx});
    for (int i = 0; i < d; ++i) {
      const int base = i * nx;
      for (int q = 0; q + 1 < nx; q += 2) gates.push_back({base + q, base + q + 1});
      for (int q = 1; q + 1 < nx; q += 2) gates.push_back({base + q, base + q + 1});
    }
  }
  return Circuit(grid, layers, std::move(gates));
}

// ---------------------------------------------------------------- native

std::string to_string(GateKind k) {
  switch (k) {
    case GateKind::h:
      return "h";
    case GateKind::rx:
      return "rx";
    case GateKind::ry:
      return "ry";
    case GateKind::rz:
      return "rz";
    case GateKind::rzz:
      return "rzz";
  }
  return "?";
}

namespace {

// Intermediate op stream: single-qubit matrices are fused, Hadamards and
// RZZ gates act as barriers.
struct RawOp {
  enum Kind { mat, h, rzz } kind;
  int q0 = 0;
  Mat2 m;
  NativeGate gate;
};

double wrap_angle(double a) { return std::remainder(a, 2.0 * kPi); }

void emit_zyz(const Mat2& u, int q, std::vector<NativeGate>& out) {
  const double c = std::abs(u(0, 0)), s = std::abs(u(1, 0));
  const double theta = 2.0 * std::atan2(s, c);
  double sum = 0.0, diff = 0.0;
  if (c > 1e-14) sum = std::arg(u(1, 1)) - std::arg(u(0, 0));
  if (s > 1e-14) diff = std::arg(u(1, 0)) - std::arg(-u(0, 1));
  double phi = 0.5 * (sum + diff);
  double lambda = 0.5 * (sum - diff);
  // sum and diff are only known mod 2 pi each; one of the two parities
  // reproduces u, the other gives Ry(-theta).
  if (std::abs((euler_zyz(phi, theta, lambda).adjoint() * u).trace()) <
      2.0 * (1.0 - 1e-9)) {
    phi += kPi;
    lambda += kPi;
  }
  phi = wrap_angle(phi);
  lambda = wrap_angle(lambda);
  const double th = wrap_angle(theta);
  constexpr double kTiny = 1e-14;
  auto push = [&](GateKind k, double a) {
    if (std::abs(a) > kTiny) out.push_back({k, q, -1, a, -1, -1, 0.0});
  };
  push(GateKind::rz, lambda);
  push(GateKind::ry, th);
  push(GateKind::rz, phi);
}

std::vector<NativeGate> fuse(const std::vector<RawOp>& ops, int n) {
  std::vector<NativeGate> out;
  std::vector<std::optional<Mat2>> pending(static_cast<std::size_t>(n));
  auto flush = [&](int q) {
    auto& p = pending[static_cast<std::size_t>(q)];
    if (p) emit_zyz(*p, q, out);
    p.reset();
  };
  for (const auto& op : ops) {
    switch (op.kind) {
      case RawOp::mat: {
        auto& p = pending[static_cast<std::size_t>(op.q0)];
        p = p ? Mat2(op.m * *p) : op.m;
        break;
      }
      case RawOp::h:
        flush(op.q0);
        out.push_back({GateKind::h, op.q0, -1, 0.0, -1, -1, 0.0});
        break;
      case RawOp::rzz:
        flush(op.gate.q0);
        flush(op.gate.q1);
        out.push_back(op.gate);
        break;
    }
  }
  for (int q = 0; q < n; ++q) flush(q);
  return out;
}

Mat2 gate_matrix(const NativeGate& g) {
  switch (g.kind) {
    case GateKind::h:
      return hadamard();
    case GateKind::rx:
      return rx(g.angle);
    case GateKind::ry:
      return ry(g.angle);
    case GateKind::rz:
      return rz(g.angle);
    default:
      throw ArgumentError("gate_matrix: not a single-qubit gate");
  }
}

}  // namespace

NativeCircuit compile_native(const Circuit& circuit) {
  const int n = circuit.n_qubits();
  std::vector<RawOp> ops;
  for (int q = 0; q < n; ++q) ops.push_back({RawOp::h, q, Mat2::Identity(), {}});
  auto mat = [&](int q, const Mat2& m) { ops.push_back({RawOp::mat, q, m, {}}); };
  for (int g = 0; g < circuit.num_gates(); ++g) {
    const auto& gate = circuit.gates()[static_cast<std::size_t>(g)];
    const int a = gate.q0, b = gate.q1;
    auto p = circuit.gate_params(g);
    mat(a, euler_zyz(p[9], p[10], p[11]));
    mat(b, euler_zyz(p[12], p[13], p[14]));
    for (int slot = 0; slot < 3; ++slot) {
      Mat2 basis_in = Mat2::Identity(), basis_out = Mat2::Identity();
      if (slot == 0) {
        basis_in = ry(-0.5 * kPi);
        basis_out = ry(0.5 * kPi);
      } else if (slot == 1) {
        basis_in = rx(0.5 * kPi);
        basis_out = rx(-0.5 * kPi);
      }
      FoldedAngle f = fold_rzz_angle(p[static_cast<std::size_t>(slot)]);
      mat(a, f.pre[0] * basis_in);
      mat(b, f.pre[1] * basis_in);
      NativeGate rg{GateKind::rzz, a, b, f.angle, g, slot, f.slope};
      ops.push_back({RawOp::rzz, a, Mat2::Identity(), rg});
      mat(a, basis_out * f.post[0]);
      mat(b, basis_out * f.post[1]);
    }
    mat(a, euler_zyz(p[3], p[4], p[5]));
    mat(b, euler_zyz(p[6], p[7], p[8]));
  }
  NativeCircuit out;
  out.n_qubits = n;
  out.source_params = circuit.num_params();
  out.gates = fuse(ops, n);
  return out;
}

NativeCircuit prune(const NativeCircuit& native, double theta_min) {
  std::vector<RawOp> ops;
  int removed = 0;
  for (const auto& g : native.gates) {
    if (g.kind == GateKind::rzz) {
      if (g.angle <= theta_min) {
        ++removed;
        continue;
      }
      ops.push_back({RawOp::rzz, g.q0, Mat2::Identity(), g});
    } else if (g.kind == GateKind::h) {
      ops.push_back({RawOp::h, g.q0, Mat2::Identity(), {}});
    } else {
      ops.push_back({RawOp::mat, g.q0, gate_matrix(g), {}});
    }
  }
  NativeCircuit out;
  out.n_qubits = native.n_qubits;
  out.source_params = native.source_params;
  out.gates = fuse(ops, native.n_qubits);
  out.pruned = native.pruned + removed;
  return out;
}

int count_two_qubit(const NativeCircuit& native) {
  int k = 0;
  for (const auto& g : native.gates)
    if (g.kind == GateKind::rzz) ++k;
  return k;
}

// ---------------------------------------------------------------- dense

namespace {
void apply1(Eigen::MatrixXcd& s, int n, int q, const Mat2& u) {
  const Eigen::Index bit = Eigen::Index{1} << (n - 1 - q);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    if (i & bit) continue;
    Eigen::RowVectorXcd r0 = s.row(i), r1 = s.row(i | bit);
    s.row(i) = u(0, 0) * r0 + u(0, 1) * r1;
    s.row(i | bit) = u(1, 0) * r0 + u(1, 1) * r1;
  }
}

void apply2(Eigen::MatrixXcd& s, int n, int q0, int q1, const Mat4& u) {
  const Eigen::Index b0 = Eigen::Index{1} << (n - 1 - q0);
  const Eigen::Index b1 = Eigen::Index{1} << (n - 1 - q1);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    if ((i & b0) || (i & b1)) continue;
    const Eigen::Index idx[4] = {i, i | b1, i | b0, i | b0 | b1};
    Eigen::MatrixXcd rows(4, s.cols());
    for (int k = 0; k < 4; ++k) rows.row(k) = s.row(idx[k]);
    Eigen::MatrixXcd out = u * rows;
    for (int k = 0; k < 4; ++k) s.row(idx[k]) = out.row(k);
  }
}

void check_dense(int n) {
  if (n > 12) throw CapacityError("dense unitaries limited to 12 qubits");
}
}  // namespace

Eigen::MatrixXcd circuit_unitary(const Circuit& circuit, bool with_hadamards) {
  const int n = circuit.n_qubits();
  check_dense(n);
  Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(Eigen::Index{1} << n, Eigen::Index{1} << n);
  if (with_hadamards)
    for (int q = 0; q < n; ++q) apply1(u, n, q, hadamard());
  for (int g = 0; g < circuit.num_gates(); ++g) {
    const auto& gate = circuit.gates()[static_cast<std::size_t>(g)];
    apply2(u, n, gate.q0, gate.q1, su4_unitary(circuit.gate_params(g)));
  }
  return u;
}

Eigen::MatrixXcd native_unitary(const NativeCircuit& native) {
  const int n = native.n_qubits;
  check_dense(n);
  Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(Eigen::Index{1} << n, Eigen::Index{1} << n);
  for (const auto& g : native.gates) {
    if (g.kind == GateKind::rzz)
      apply2(u, n, g.q0, g.q1, rzz(g.angle));
    else
      apply1(u, n, g.q0, gate_matrix(g));
  }
  return u;
}

// ---------------------------------------------------------------- QASM

namespace {
std::string fmt_angle(double a) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", a);
  return buf;
}
}  // namespace

std::string export_qasm(const NativeCircuit& native, bool measure) {
  std::ostringstream os;
  os << "OPENQASM 2.0;\ninclude \"qelib1.inc\";\n";
  os << "qreg q[" << native.n_qubits << "];\n";
  if (measure) os << "creg c[" << native.n_qubits << "];\n";
  for (const auto& g : native.gates) {
    os << to_string(g.kind);
    if (g.kind != GateKind::h) os << '(' << fmt_angle(g.angle) << ')';
    os << " q[" << g.q0 << ']';
    if (g.kind == GateKind::rzz) os << ",q[" << g.q1 << ']';
    os << ";\n";
  }
  if (measure) os << "measure q -> c;\n";
  return os.str();
}

NativeCircuit parse_qasm(const std::string& text) {
  NativeCircuit out;
  std::istringstream is(text);
  std::string line;
  static const std::regex qreg(R"(^\s*qreg\s+q\[(\d+)\]\s*;\s*$)");
  static const std::regex gate(
      R"(^\s*(h|rx|ry|rz|rzz)(?:\(([^)]*)\))?\s+q\[(\d+)\](?:\s*,\s*q\[(\d+)\])?\s*;\s*$)");
  bool have_reg = false;
  while (std::getline(is, line)) {
    std::smatch m;
    if (line.empty() || line.rfind("//", 0) == 0) continue;
    if (line.rfind("OPENQASM", 0) == 0 || line.rfind("include", 0) == 0 ||
        line.rfind("creg", 0) == 0 || line.rfind("measure", 0) == 0)
      continue;
    if (std::regex_match(line, m, qreg)) {
      out.n_qubits = std::stoi(m[1]);
      have_reg = true;
      continue;
    }
    if (!std::regex_match(line, m, gate))
      throw ConfigError("parse_qasm: unsupported statement '" + line + "'");
    if (!have_reg) throw ConfigError("parse_qasm: gate before qreg");
    NativeGate g;
    const std::string k = m[1];
    g.kind = k == "h" ? GateKind::h
             : k == "rx" ? GateKind::rx
             : k == "ry" ? GateKind::ry
             : k == "rz" ? GateKind::rz
                         : GateKind::rzz;
    if (m[2].matched) g.angle = std::stod(m[2]);
    g.q0 = std::stoi(m[3]);
    if (m[4].matched) g.q1 = std::stoi(m[4]);
    if ((g.kind == GateKind::rzz) != (g.q1 >= 0))
      throw ConfigError("parse_qasm: wrong arity in '" + line + "'");
    if ((g.kind != GateKind::h) != m[2].matched)
      throw ConfigError("parse_qasm: missing or extra angle in '" + line + "'");
    if (g.q0 >= out.n_qubits || g.q1 >= out.n_qubits)
      throw ConfigError("parse_qasm: qubit out of range in '" + line + "'");
    out.gates.push_back(g);
  }
  return out;
}

// ---------------------------------------------------------------- JSON

json circuit_to_json(const Circuit& c) {
  json j;
  j["grid"] = c.grid();
  j["layers"] = c.layers();
  json gates = json::array();
  for (const auto& g : c.gates()) gates.push_back(json::array({g.q0, g.q1}));
  j["gates"] = std::move(gates);
  j["theta"] = c.theta();
  return j;
}

Circuit circuit_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("circuit JSON must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "grid" && it.key() != "layers" && it.key() != "gates" &&
        it.key() != "theta")
      throw ConfigError("circuit JSON: unknown field '" + it.key() + "'");
  try {
    auto grid = j.at("grid").get<gridfunc::GridSpec>();
    std::vector<Su4Gate> gates;
    for (const auto& g : j.at("gates")) {
      if (!g.is_array() || g.size() != 2)
        throw ConfigError("circuit JSON: gates are [q0, q1] pairs");
      gates.push_back({g[0].get<int>(), g[1].get<int>()});
    }
    Circuit c(grid, j.at("layers").get<int>(), std::move(gates));
    c.set_theta(j.at("theta").get<std::vector<double>>());
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("circuit JSON: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("circuit JSON: ") + e.what());
  }
}

json native_to_json(const NativeCircuit& native) {
  json j;
  j["n_qubits"] = native.n_qubits;
  j["source_params"] = native.source_params;
  j["pruned"] = native.pruned;
  j["two_qubit_count"] = count_two_qubit(native);
  json gates = json::array();
  for (const auto& g : native.gates) {
    json e;
    e["kind"] = to_string(g.kind);
    e["qubits"] = g.kind == GateKind::rzz ? json::array({g.q0, g.q1})
                                          : json::array({g.q0});
    if (g.kind != GateKind::h) e["angle"] = g.angle;
    if (g.source_gate >= 0) {
      e["source_gate"] = g.source_gate;
      e["slot"] = g.slot;
    }
    gates.push_back(std::move(e));
  }
  j["gates"] = std::move(gates);
  return j;
}

}  // namespace combprep::circuit
