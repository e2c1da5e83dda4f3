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

#include "combprep/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <optional>
#include <ostream>

#include "combprep/errors.hpp"
#include "combprep/parallel.hpp"
#include "combprep/random.hpp"

namespace combprep::sim {

using circuit::Circuit;
using circuit::kSu4Params;

std::string to_string(BackendKind k) {
  return k == BackendKind::dense ? "dense" : "mps";
}

BackendKind backend_from_string(const std::string& s) {
  if (s == "dense") return BackendKind::dense;
  if (s == "mps") return BackendKind::mps;
  throw ConfigError("unknown backend '" + s + "'");
}

std::string to_string(GradientMethod m) {
  switch (m) {
    case GradientMethod::parameter_shift: return "parameter_shift";
    case GradientMethod::adjoint: return "adjoint";
    case GradientMethod::finite_diff: return "finite_diff";
  }
  return "?";
}

int Program::num_noise() const {
  int k = 0;
  for (const auto& op : ops)
    if (op.kind == OpKind::noise) ++k;
  return k;
}

// ------------------------------------------------------------- programs

Program program_from_circuit(const Circuit& c) {
  Program p;
  p.n_qubits = c.n_qubits();
  p.num_params = c.num_params();
  p.ops.reserve(static_cast<std::size_t>(c.num_gates()));
  for (int g = 0; g < c.num_gates(); ++g) {
    const auto& gate = c.gates()[static_cast<std::size_t>(g)];
    auto params = c.gate_params(g);
    Op op;
    op.kind = OpKind::two;
    op.q0 = gate.q0;
    op.q1 = gate.q1;
    op.u2 = circuit::su4_unitary(params);
    auto d = circuit::su4_derivatives(params);
    op.d2.assign(d.begin(), d.end());
    for (int k = 0; k < kSu4Params; ++k) op.params.push_back(g * kSu4Params + k);
    p.ops.push_back(std::move(op));
  }
  return p;
}

Program segmented_program(const Circuit& c) {
  Program p;
  p.n_qubits = c.n_qubits();
  p.num_params = c.num_params();
  for (int g = 0; g < c.num_gates(); ++g) {
    const auto& gate = c.gates()[static_cast<std::size_t>(g)];
    auto params = c.gate_params(g);
    auto pieces = circuit::su4_pieces(params);
    for (int k = 0; k < 4; ++k) {
      Op op;
      op.kind = OpKind::two;
      op.q0 = gate.q0;
      op.q1 = gate.q1;
      op.u2 = pieces.u[static_cast<std::size_t>(k)];
      op.d2 = pieces.derivs[static_cast<std::size_t>(k)];
      for (int local : pieces.params_of[static_cast<std::size_t>(k)])
        op.params.push_back(g * kSu4Params + local);
      p.ops.push_back(std::move(op));
      if (k < 3) {
        auto folded = circuit::fold_rzz_angle(params[static_cast<std::size_t>(k)]);
        Op mark;
        mark.kind = OpKind::noise;
        mark.q0 = gate.q0;
        mark.q1 = gate.q1;
        mark.angle = folded.angle;
        mark.slope = folded.slope;
        mark.angle_param = g * kSu4Params + k;
        p.ops.push_back(std::move(mark));
      }
    }
  }
  return p;
}

Program program_from_native(const circuit::NativeCircuit& native) {
  using circuit::GateKind;
  Program p;
  p.n_qubits = native.n_qubits;
  p.uniform_start = false;
  p.num_params = 0;
  for (const auto& g : native.gates) {
    Op op;
    op.q0 = g.q0;
    switch (g.kind) {
      case GateKind::h: op.u1 = circuit::hadamard(); break;
      case GateKind::rx: op.u1 = circuit::rx(g.angle); break;
      case GateKind::ry: op.u1 = circuit::ry(g.angle); break;
      case GateKind::rz: op.u1 = circuit::rz(g.angle); break;
      case GateKind::rzz:
        op.kind = OpKind::two;
        op.q1 = g.q1;
        op.u2 = circuit::rzz(g.angle);
        op.diagonal = true;
        break;
    }
    p.ops.push_back(op);
    if (g.kind == GateKind::rzz) {
      Op mark;
      mark.kind = OpKind::noise;
      mark.q0 = g.q0;
      mark.q1 = g.q1;
      mark.angle = g.angle;
      mark.slope = g.slope;
      mark.angle_param =
          g.source_gate >= 0 ? g.source_gate * kSu4Params + g.slot : -1;
      p.ops.push_back(mark);
    }
  }
  return p;
}

// ------------------------------------------------------------- kernels

namespace {

constexpr std::size_t kChunk = std::size_t{1} << 14;

std::size_t num_chunks(std::size_t count) { return (count + kChunk - 1) / kChunk; }

template <typename Body>
void for_chunks(std::size_t count, Body&& body) {
  parallel_for(num_chunks(count), [&](std::size_t c) {
    body(c, c * kChunk, std::min(count, (c + 1) * kChunk));
  });
}

// Amplitudes grouped in runs of 2^lo contiguous entries. For a two-qubit op
// at bit positions lo < hi the partners of run j start at base(j) plus
// {0, b1, b0, b0 + b1}; a one-qubit op uses lo = hi.
struct BlockLayout {
  std::size_t len = 1;
  std::size_t per_outer = 1;
  std::size_t outer_stride = 0;
  std::size_t count = 0;
  std::size_t per_chunk = 1;

  std::size_t base(std::size_t j) const {
    return (j / per_outer) * outer_stride + (j % per_outer) * 2 * len;
  }
  std::size_t chunks() const { return (count + per_chunk - 1) / per_chunk; }
};

BlockLayout block_layout(std::size_t dim, int lo, int hi) {
  BlockLayout b;
  b.len = std::size_t{1} << lo;
  const std::size_t h = std::size_t{1} << hi;
  b.per_outer = lo == hi ? dim / (2 * b.len) : h / (2 * b.len);
  b.outer_stride = lo == hi ? dim : 2 * h;
  b.count = dim / ((lo == hi ? 2 : 4) * b.len);
  b.per_chunk = std::max<std::size_t>(1, kChunk / b.len);
  return b;
}

template <typename Body>
void for_blocks(const BlockLayout& b, Body&& body) {
  parallel_for(b.chunks(), [&](std::size_t c) {
    const std::size_t j0 = c * b.per_chunk;
    body(c, j0, std::min(b.count, j0 + b.per_chunk));
  });
}

struct RealMat4 {
  double re[16], im[16];
};

RealMat4 split(const Mat4& u, bool adjoint) {
  RealMat4 m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      const cplx x = adjoint ? std::conj(u(c, r)) : u(r, c);
      m.re[4 * r + c] = x.real();
      m.im[4 * r + c] = x.imag();
    }
  return m;
}

inline void mat4_run(double* const p[4], std::size_t len, const RealMat4& m) {
  for (std::size_t k = 0; k < len; ++k) {
    const std::size_t re = 2 * k, im = re + 1;
    double xr[4], xi[4];
    for (int r = 0; r < 4; ++r) {
      xr[r] = p[r][re];
      xi[r] = p[r][im];
    }
    for (int r = 0; r < 4; ++r) {
      double yr = 0.0, yi = 0.0;
      for (int c = 0; c < 4; ++c) {
        yr += m.re[4 * r + c] * xr[c] - m.im[4 * r + c] * xi[c];
        yi += m.re[4 * r + c] * xi[c] + m.im[4 * r + c] * xr[c];
      }
      p[r][re] = yr;
      p[r][im] = yi;
    }
  }
}

inline std::size_t insert_zero(std::size_t x, int pos) {
  const std::size_t low = (std::size_t{1} << pos) - 1;
  return ((x & ~low) << 1) | (x & low);
}

void check_state(const StateVector& s, int n) {
  if (s.size() != (std::size_t{1} << n))
    throw ArgumentError("state vector size does not match qubit count");
}

void check_qubit(int q, int n) {
  if (q < 0 || q >= n) throw ArgumentError("qubit index out of range");
}

struct TwoSite {
  std::size_t b0, b1;
  int lo, hi;
};

TwoSite two_site(int n, int q0, int q1) {
  check_qubit(q0, n);
  check_qubit(q1, n);
  if (q0 == q1) throw ArgumentError("two-qubit op on a single qubit");
  const int p0 = n - 1 - q0, p1 = n - 1 - q1;
  return {std::size_t{1} << p0, std::size_t{1} << p1, std::min(p0, p1),
          std::max(p0, p1)};
}

void apply_diag(StateVector& s, int n, int q0, int q1, const Mat4& u) {
  const TwoSite t = two_site(n, q0, q1);
  const cplx d[4] = {u(0, 0), u(1, 1), u(2, 2), u(3, 3)};
  cplx* a = s.data();
  for_chunks(s.size(), [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      a[i] *= d[((i & t.b0) ? 2 : 0) + ((i & t.b1) ? 1 : 0)];
  });
}

}  // namespace

StateVector initial_state(int n, bool uniform) {
  if (n < 1) throw ArgumentError("need at least one qubit");
  if (n > kDenseLimit)
    throw CapacityError("dense backend limited to " + std::to_string(kDenseLimit) +
                        " qubits");
  const std::size_t dim = std::size_t{1} << n;
  if (uniform) return StateVector(dim, cplx(1.0 / std::sqrt(static_cast<double>(dim)), 0.0));
  StateVector s(dim, cplx(0.0, 0.0));
  s[0] = 1.0;
  return s;
}

void apply_one(StateVector& s, int n, int q, const Mat2& u) {
  check_state(s, n);
  check_qubit(q, n);
  const int pos = n - 1 - q;
  const std::size_t bit = std::size_t{1} << pos;
  const cplx m00 = u(0, 0), m01 = u(0, 1), m10 = u(1, 0), m11 = u(1, 1);
  cplx* a = s.data();
  for_chunks(s.size() / 2, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t i0 = insert_zero(k, pos), i1 = i0 | bit;
      const cplx x0 = a[i0], x1 = a[i1];
      a[i0] = m00 * x0 + m01 * x1;
      a[i1] = m10 * x0 + m11 * x1;
    }
  });
}

void apply_two(StateVector& s, int n, int q0, int q1, const Mat4& u) {
  check_state(s, n);
  const TwoSite t = two_site(n, q0, q1);
  const RealMat4 m = split(u, false);
  const BlockLayout b = block_layout(s.size(), t.lo, t.hi);
  double* a = reinterpret_cast<double*>(s.data());
  for_blocks(b, [&](std::size_t, std::size_t j0, std::size_t j1) {
    for (std::size_t j = j0; j < j1; ++j) {
      const std::size_t base = b.base(j);
      double* const p[4] = {a + 2 * base, a + 2 * (base + t.b1), a + 2 * (base + t.b0),
                            a + 2 * (base + t.b0 + t.b1)};
      mat4_run(p, b.len, m);
    }
  });
}

void apply_pauli(StateVector& s, int n, int q, int p) {
  if (p == 0) return;
  check_state(s, n);
  check_qubit(q, n);
  const int pos = n - 1 - q;
  const std::size_t bit = std::size_t{1} << pos;
  cplx* a = s.data();
  const cplx I(0.0, 1.0);
  for_chunks(s.size() / 2, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t i0 = insert_zero(k, pos), i1 = i0 | bit;
      switch (p) {
        case 1: std::swap(a[i0], a[i1]); break;
        case 2: {
          const cplx x0 = a[i0];
          a[i0] = -I * a[i1];
          a[i1] = I * x0;
          break;
        }
        case 3: a[i1] = -a[i1]; break;
        default: break;
      }
    }
  });
}

namespace {

void apply_op(StateVector& s, int n, const Op& op, bool adjoint) {
  switch (op.kind) {
    case OpKind::one:
      apply_one(s, n, op.q0, adjoint ? Mat2(op.u1.adjoint()) : op.u1);
      break;
    case OpKind::two:
      if (op.diagonal)
        apply_diag(s, n, op.q0, op.q1, adjoint ? Mat4(op.u2.adjoint()) : op.u2);
      else
        apply_two(s, n, op.q0, op.q1, adjoint ? Mat4(op.u2.adjoint()) : op.u2);
      break;
    case OpKind::noise: break;
  }
}

void apply_event(StateVector& s, int n, const Op& op, std::uint8_t code) {
  apply_pauli(s, n, op.q0, code & 3);
  apply_pauli(s, n, op.q1, (code >> 2) & 3);
}

void check_events(const Program& p, std::span<const std::uint8_t> events) {
  if (!events.empty() && events.size() != static_cast<std::size_t>(p.num_noise()))
    throw ArgumentError("event list does not match the number of noise points");
}

// Number of noise markers before op index `end`.
std::size_t noise_before(const Program& p, std::size_t end) {
  std::size_t k = 0;
  for (std::size_t i = 0; i < end; ++i)
    if (p.ops[i].kind == OpKind::noise) ++k;
  return k;
}

}  // namespace

void run_ops(const Program& p, StateVector& s, std::size_t begin, std::size_t end,
             std::span<const std::uint8_t> events) {
  check_events(p, events);
  if (end > p.ops.size() || begin > end) throw ArgumentError("op range out of bounds");
  std::size_t e = events.empty() ? 0 : noise_before(p, begin);
  for (std::size_t i = begin; i < end; ++i) {
    const Op& op = p.ops[i];
    if (op.kind == OpKind::noise) {
      if (!events.empty()) apply_event(s, p.n_qubits, op, events[e]);
      ++e;
    } else {
      apply_op(s, p.n_qubits, op, false);
    }
  }
}

StateVector run_dense(const Program& p, std::span<const std::uint8_t> events) {
  StateVector s = initial_state(p.n_qubits, p.uniform_start);
  run_ops(p, s, 0, p.ops.size(), events);
  return s;
}

namespace {

// psi <- U^dagger psi and lambda <- U^dagger lambda for a two-qubit op,
// returning E[j][i] = sum_rest psi_new[j, rest] conj(lambda_old[i, rest]).
std::array<cplx, 16> backward_two(StateVector& psi, StateVector& lam, int n,
                                  const Op& op) {
  const TwoSite t = two_site(n, op.q0, op.q1);
  const Mat4 ud = op.u2.adjoint();
  apply_two(psi, n, op.q0, op.q1, ud);
  const BlockLayout b = block_layout(psi.size(), t.lo, t.hi);
  std::vector<std::array<double, 32>> partial(b.chunks());
  const double* a = reinterpret_cast<const double*>(psi.data());
  const double* l = reinterpret_cast<const double*>(lam.data());
  for_blocks(b, [&](std::size_t chunk, std::size_t j0, std::size_t j1) {
    double er[16] = {}, ei[16] = {};
    for (std::size_t j = j0; j < j1; ++j) {
      const std::size_t base = b.base(j);
      const std::size_t off[4] = {2 * base, 2 * (base + t.b1), 2 * (base + t.b0),
                                  2 * (base + t.b0 + t.b1)};
      const double* const pa[4] = {a + off[0], a + off[1], a + off[2], a + off[3]};
      const double* const pl[4] = {l + off[0], l + off[1], l + off[2], l + off[3]};
#pragma omp simd reduction(+ : er[:16], ei[:16])
      for (std::size_t k = 0; k < b.len; ++k) {
        const std::size_t re = 2 * k, im = re + 1;
        for (int jj = 0; jj < 4; ++jj)
          for (int ii = 0; ii < 4; ++ii) {
            er[4 * jj + ii] += pa[jj][re] * pl[ii][re] + pa[jj][im] * pl[ii][im];
            ei[4 * jj + ii] += pa[jj][im] * pl[ii][re] - pa[jj][re] * pl[ii][im];
          }
      }
    }
    auto& out = partial[chunk];
    for (int k = 0; k < 16; ++k) {
      out[static_cast<std::size_t>(k)] = er[k];
      out[static_cast<std::size_t>(16 + k)] = ei[k];
    }
  });
  apply_two(lam, n, op.q0, op.q1, ud);
  std::array<cplx, 16> e{};
  for (const auto& acc : partial)
    for (std::size_t k = 0; k < 16; ++k) e[k] += cplx(acc[k], acc[16 + k]);
  return e;
}

std::array<cplx, 4> backward_one(StateVector& psi, StateVector& lam, int n,
                                 const Op& op) {
  check_qubit(op.q0, n);
  const int pos = n - 1 - op.q0;
  const std::size_t bit = std::size_t{1} << pos;
  const Mat2 ud = op.u1.adjoint();
  const cplx m00 = ud(0, 0), m01 = ud(0, 1), m10 = ud(1, 0), m11 = ud(1, 1);
  const std::size_t count = psi.size() / 2;
  std::vector<std::array<cplx, 4>> partial(num_chunks(count));
  cplx* a = psi.data();
  cplx* l = lam.data();
  for_chunks(count, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
    std::array<cplx, 4> acc{};
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t i0 = insert_zero(k, pos), i1 = i0 | bit;
      const cplx x0 = m00 * a[i0] + m01 * a[i1];
      const cplx x1 = m10 * a[i0] + m11 * a[i1];
      a[i0] = x0;
      a[i1] = x1;
      const cplx y0 = l[i0], y1 = l[i1];
      acc[0] += x0 * std::conj(y0);
      acc[1] += x0 * std::conj(y1);
      acc[2] += x1 * std::conj(y0);
      acc[3] += x1 * std::conj(y1);
      l[i0] = m00 * y0 + m01 * y1;
      l[i1] = m10 * y0 + m11 * y1;
    }
    partial[chunk] = acc;
  });
  std::array<cplx, 4> e{};
  for (const auto& acc : partial)
    for (std::size_t k = 0; k < 4; ++k) e[k] += acc[k];
  return e;
}

}  // namespace

Vjp adjoint_vjp(const Program& p, const BraFunction& make_bra,
                std::span<const std::uint8_t> events, const StateVector* start,
                std::size_t start_op) {
  check_events(p, events);
  const int n = p.n_qubits;
  Vjp out;
  out.grad.assign(static_cast<std::size_t>(p.num_params), 0.0);
  StateVector psi;
  if (start) {
    psi = *start;
    check_state(psi, n);
  } else {
    psi = initial_state(n, p.uniform_start);
    start_op = 0;
  }
  run_ops(p, psi, start_op, p.ops.size(), events);
  StateVector lam = make_bra(psi);
  check_state(lam, n);

  std::size_t e = events.empty() ? 0 : static_cast<std::size_t>(p.num_noise());
  for (std::size_t k = p.ops.size(); k-- > 0;) {
    const Op& op = p.ops[k];
    if (op.kind == OpKind::noise) {
      if (!events.empty()) {
        --e;
        apply_event(psi, n, op, events[e]);
        apply_event(lam, n, op, events[e]);
      }
      continue;
    }
    if (op.params.empty()) {
      apply_op(psi, n, op, true);
      apply_op(lam, n, op, true);
      continue;
    }
    if (op.kind == OpKind::two) {
      auto env = backward_two(psi, lam, n, op);
      for (std::size_t m = 0; m < op.params.size(); ++m) {
        const Mat4& d = op.d2[m];
        cplx acc = 0.0;
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) acc += d(i, j) * env[static_cast<std::size_t>(4 * j + i)];
        out.grad[static_cast<std::size_t>(op.params[m])] += acc.real();
      }
    } else {
      auto env = backward_one(psi, lam, n, op);
      for (std::size_t m = 0; m < op.params.size(); ++m) {
        const Mat2& d = op.d1[m];
        cplx acc = 0.0;
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) acc += d(i, j) * env[static_cast<std::size_t>(2 * j + i)];
        out.grad[static_cast<std::size_t>(op.params[m])] += acc.real();
      }
    }
  }
  return out;
}

// ------------------------------------------------------------- MPS backend

namespace {

const Mat4& swap_matrix() {
  static const Mat4 s = [] {
    Mat4 m = Mat4::Zero();
    m(0, 0) = m(1, 2) = m(2, 1) = m(3, 3) = 1.0;
    return m;
  }();
  return s;
}

}  // namespace

MpsRun run_mps(const Program& p, int chi_max, double tol,
               std::span<const std::uint8_t> events) {
  check_events(p, events);
  const int n = p.n_qubits;
  if (n < 1) throw ArgumentError("need at least one qubit");
  MpsRun out;
  if (p.uniform_start) {
    out.state = tensornet::Mps::uniform(n);
  } else {
    Bits zeros(static_cast<std::size_t>(n), 0);
    out.state = tensornet::Mps::basis_state(zeros);
  }
  auto& st = out.state;
  const Mat4& sw = swap_matrix();
  std::size_t e = 0;
  for (const auto& op : p.ops) {
    switch (op.kind) {
      case OpKind::one:
        check_qubit(op.q0, n);
        st.apply_one_site(op.q0, op.u1);
        break;
      case OpKind::noise:
        if (!events.empty()) {
          const int pa = events[e] & 3, pb = (events[e] >> 2) & 3;
          if (pa) st.apply_one_site(op.q0, circuit::pauli(pa));
          if (pb) st.apply_one_site(op.q1, circuit::pauli(pb));
        }
        ++e;
        break;
      case OpKind::two: {
        check_qubit(op.q0, n);
        check_qubit(op.q1, n);
        const int lo = std::min(op.q0, op.q1), hi = std::max(op.q0, op.q1);
        for (int s = hi - 1; s > lo; --s)
          out.truncation_weight += st.apply_two_site(s, sw, chi_max, tol);
        const Mat4 u = op.q0 == lo ? op.u2 : Mat4(sw * op.u2 * sw);
        out.truncation_weight += st.apply_two_site(lo, u, chi_max, tol);
        for (int s = lo + 1; s < hi; ++s)
          out.truncation_weight += st.apply_two_site(s, sw, chi_max, tol);
        break;
      }
    }
  }
  st.normalize();
  return out;
}

// ------------------------------------------------------------- targets

struct Target::Impl {
  int n = 0;
  mutable std::mutex mutex;
  mutable std::optional<tensornet::Mps> mps;
  mutable std::optional<StateVector> dense;
};

Target::Target(tensornet::Mps state) : impl_(std::make_shared<Impl>()) {
  const double nrm = state.norm();
  if (!(nrm > 0.0) || !std::isfinite(nrm)) throw ArgumentError("target state has zero norm");
  if (std::abs(nrm - 1.0) > 1e-14) state.scale(1.0 / nrm);
  impl_->n = state.size();
  impl_->mps = std::move(state);
}

Target::Target(StateVector dense) : impl_(std::make_shared<Impl>()) {
  const std::size_t dim = dense.size();
  if (dim < 2 || (dim & (dim - 1)) != 0)
    throw ArgumentError("target length must be a power of two");
  const double nrm = vector_norm(dense);
  if (!(nrm > 0.0) || !std::isfinite(nrm)) throw ArgumentError("target state has zero norm");
  for (auto& x : dense) x /= nrm;
  int n = 0;
  while ((std::size_t{1} << n) < dim) ++n;
  impl_->n = n;
  impl_->dense = std::move(dense);
}

int Target::n_qubits() const {
  if (!impl_) throw StateError("empty target");
  return impl_->n;
}

const tensornet::Mps& Target::mps() const {
  if (!impl_) throw StateError("empty target");
  std::lock_guard<std::mutex> lock(impl_->mutex);
  if (!impl_->mps) impl_->mps = tensornet::Mps::from_dense(*impl_->dense);
  return *impl_->mps;
}

const StateVector& Target::dense() const {
  if (!impl_) throw StateError("empty target");
  std::lock_guard<std::mutex> lock(impl_->mutex);
  if (!impl_->dense) {
    if (impl_->n > kDenseLimit)
      throw CapacityError("target too large for a dense vector");
    impl_->dense = impl_->mps->to_dense();
  }
  return *impl_->dense;
}

// ------------------------------------------------------------- circuits

State run(const Circuit& c, const Backend& backend) {
  State s;
  s.kind = backend.kind;
  Program p = program_from_circuit(c);
  if (backend.kind == BackendKind::dense) {
    s.dense = run_dense(p);
  } else {
    MpsRun r = run_mps(p, backend.chi_max, backend.tol);
    s.mps = std::move(r.state);
    s.truncation_weight = r.truncation_weight;
  }
  return s;
}

cplx target_overlap(const State& s, const Target& target) {
  if (s.kind == BackendKind::dense) {
    if (s.dense.size() != (std::size_t{1} << target.n_qubits()))
      throw ArgumentError("target and state sizes differ");
    return inner(target.dense(), s.dense);
  }
  if (s.mps.size() != target.n_qubits())
    throw ArgumentError("target and state sizes differ");
  return tensornet::mps_overlap(target.mps(), s.mps);
}

double infidelity(const State& s, const Target& target) {
  return std::clamp(1.0 - std::norm(target_overlap(s, target)), 0.0, 1.0);
}

double infidelity(const Circuit& c, const Target& target, const Backend& backend) {
  if (c.n_qubits() != target.n_qubits())
    throw ArgumentError("target and circuit sizes differ");
  return infidelity(run(c, backend), target);
}

double average_abs(std::span<const double> g) {
  if (g.empty()) return 0.0;
  CompensatedSum s;
  for (double x : g) s.add(std::abs(x));
  return s.value() / static_cast<double>(g.size());
}

namespace {

std::vector<Mat4> gate_unitaries(const Circuit& c) {
  std::vector<Mat4> u;
  u.reserve(static_cast<std::size_t>(c.num_gates()));
  for (int g = 0; g < c.num_gates(); ++g) u.push_back(circuit::su4_unitary(c.gate_params(g)));
  return u;
}

// Infidelities at theta + shift_i e_i and theta - shift_i e_i for all i.
std::vector<std::array<double, 2>> shifted_values(const Circuit& c, const Target& target,
                                                  const Backend& backend,
                                                  const std::vector<double>& shift) {
  const int n = c.n_qubits();
  const std::size_t M = static_cast<std::size_t>(c.num_params());
  std::vector<std::array<double, 2>> out(M);
  const auto& theta = c.theta();

  if (backend.kind == BackendKind::dense) {
    const auto units = gate_unitaries(c);
    const StateVector& f = target.dense();
    StateVector prefix = initial_state(n, true);
    for (int g = 0; g < c.num_gates(); ++g) {
      const auto& gate = c.gates()[static_cast<std::size_t>(g)];
      parallel_for(2 * kSu4Params, [&](std::size_t job) {
        const int local = static_cast<int>(job / 2);
        const double sign = job % 2 == 0 ? 1.0 : -1.0;
        const std::size_t idx = static_cast<std::size_t>(g * kSu4Params + local);
        std::array<double, kSu4Params> p;
        auto gp = c.gate_params(g);
        std::copy(gp.begin(), gp.end(), p.begin());
        p[static_cast<std::size_t>(local)] += sign * shift[idx];
        StateVector s = prefix;
        apply_two(s, n, gate.q0, gate.q1, circuit::su4_unitary(p));
        for (int h = g + 1; h < c.num_gates(); ++h) {
          const auto& gh = c.gates()[static_cast<std::size_t>(h)];
          apply_two(s, n, gh.q0, gh.q1, units[static_cast<std::size_t>(h)]);
        }
        out[idx][job % 2] = std::clamp(1.0 - std::norm(inner(f, s)), 0.0, 1.0);
      });
      apply_two(prefix, n, gate.q0, gate.q1, units[static_cast<std::size_t>(g)]);
    }
    return out;
  }

  parallel_for(2 * M, [&](std::size_t job) {
    const std::size_t idx = job / 2;
    std::vector<double> t = theta;
    t[idx] += (job % 2 == 0 ? 1.0 : -1.0) * shift[idx];
    Circuit shifted = c;
    shifted.set_theta(std::move(t));
    out[idx][job % 2] = infidelity(run(shifted, backend), target);
  });
  return out;
}

}  // namespace

GradientReport gradient(const Circuit& c, const Target& target, GradientMethod method,
                        const Backend& backend, double h) {
  if (c.n_qubits() != target.n_qubits())
    throw ArgumentError("target and circuit sizes differ");
  const std::size_t M = static_cast<std::size_t>(c.num_params());
  GradientReport rep;
  rep.method = to_string(method);
  rep.grad.assign(M, 0.0);

  if (method == GradientMethod::adjoint) {
    if (backend.kind != BackendKind::dense)
      throw UnsupportedError("adjoint gradients need the dense backend");
    const StateVector& f = target.dense();
    cplx a = 0.0;
    Program p = program_from_circuit(c);
    Vjp v = adjoint_vjp(p, [&](const StateVector& psi) {
      a = inner(f, psi);
      StateVector b(f.size());
      for (std::size_t i = 0; i < f.size(); ++i) b[i] = a * f[i];
      return b;
    });
    for (std::size_t i = 0; i < M; ++i) rep.grad[i] = -2.0 * v.grad[i];
    rep.value = std::clamp(1.0 - std::norm(a), 0.0, 1.0);
    rep.evaluations = 2;
  } else {
    std::vector<double> shift(M);
    for (std::size_t i = 0; i < M; ++i) {
      if (method == GradientMethod::finite_diff)
        shift[i] = h;
      else
        shift[i] = static_cast<int>(i % kSu4Params) < 3 ? 0.25 * kPi : 0.5 * kPi;
    }
    if (method == GradientMethod::finite_diff && !(h > 0.0))
      throw ArgumentError("finite-difference step must be positive");
    auto vals = shifted_values(c, target, backend, shift);
    for (std::size_t i = 0; i < M; ++i) {
      const double diff = vals[i][0] - vals[i][1];
      if (method == GradientMethod::finite_diff)
        rep.grad[i] = diff / (2.0 * h);
      else
        rep.grad[i] = static_cast<int>(i % kSu4Params) < 3 ? diff : 0.5 * diff;
    }
    rep.value = infidelity(run(c, backend), target);
    rep.evaluations = 2 * M + 1;
  }
  rep.avg_abs = average_abs(rep.grad);
  return rep;
}

// ------------------------------------------------------------- scans

namespace {

GradientMethod scan_method(const Backend& b) {
  return b.kind == BackendKind::dense ? GradientMethod::adjoint
                                      : GradientMethod::parameter_shift;
}

}  // namespace

std::vector<ScanRow> gradient_scan_random(const gridfunc::GridSpec& grid, int layers,
                                          const Target& target, int n_repeats,
                                          std::uint64_t seed, const Backend& backend) {
  if (n_repeats < 1) throw ArgumentError("n_repeats must be positive");
  Circuit c = circuit::build_comb_ansatz(grid, layers);
  std::vector<ScanRow> rows;
  for (int r = 0; r < n_repeats; ++r) {
    Rng rng(seed, static_cast<std::uint64_t>(r));
    std::vector<double> theta(static_cast<std::size_t>(c.num_params()));
    for (auto& t : theta) t = rng.uniform(-kPi, kPi);
    c.set_theta(std::move(theta));
    auto rep = gradient(c, target, scan_method(backend), backend);
    rows.push_back({"random_init", c.n_qubits(), r, -1, 1.0 - rep.value, rep.avg_abs});
  }
  return rows;
}

std::vector<ScanRow> gradient_scan_warm(const gridfunc::GridSpec& grid, int layers,
                                        const std::vector<WarmStartStep>& steps,
                                        int repeat, const Backend& backend) {
  Circuit c = circuit::build_comb_ansatz(grid, layers);
  std::vector<ScanRow> rows;
  for (const auto& st : steps) {
    c.set_theta(st.theta);
    auto rep = gradient(c, st.target, scan_method(backend), backend);
    rows.push_back({"warm_start", c.n_qubits(), repeat, st.step, 1.0 - rep.value,
                    rep.avg_abs});
  }
  return rows;
}

void write_scan_csv(std::ostream& os, const std::vector<ScanRow>& rows) {
  os << "mode,n,repeat,step,overlap,avg_grad\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", r.overlap, r.avg_grad);
    os << r.mode << ',' << r.n << ',' << r.repeat << ',' << r.step << ',' << buf << '\n';
  }
}

}  // namespace combprep::sim
