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

#include <cmath>
#include <sstream>

#include "catch_amalgamated.hpp"
#include "combprep/errors.hpp"
#include "combprep/random.hpp"
#include "combprep/sim.hpp"

using namespace combprep;
using namespace combprep::sim;
using Catch::Matchers::WithinAbs;

namespace {

StateVector random_state(int n, std::uint64_t seed) {
  Rng rng(seed);
  StateVector v(std::size_t{1} << n);
  for (auto& x : v) x = cplx(rng.normal(), rng.normal());
  const double nrm = vector_norm(v);
  for (auto& x : v) x /= nrm;
  return v;
}

Mat4 random_mat4(Rng& rng) {
  Mat4 m;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m(i, j) = cplx(rng.normal(), rng.normal());
  return m;
}

int bit(std::size_t i, int n, int q) { return static_cast<int>((i >> (n - 1 - q)) & 1u); }

// Full 2^n matrix of a two-qubit operator, assembled entry by entry.
Eigen::MatrixXcd embed(const Mat4& u, int n, int q0, int q1) {
  const std::size_t dim = std::size_t{1} << n;
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  const std::size_t mask = (std::size_t{1} << (n - 1 - q0)) | (std::size_t{1} << (n - 1 - q1));
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) {
      if ((i & ~mask) != (j & ~mask)) continue;
      m(i, j) = u(2 * bit(i, n, q0) + bit(i, n, q1), 2 * bit(j, n, q0) + bit(j, n, q1));
    }
  return m;
}

Eigen::VectorXcd as_eigen(const StateVector& v) {
  return Eigen::Map<const Eigen::VectorXcd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

circuit::Circuit random_circuit(int d, int nx, int layers, std::uint64_t seed) {
  auto c = circuit::build_comb_ansatz({d, nx}, layers);
  Rng rng(seed);
  std::vector<double> t(static_cast<std::size_t>(c.num_params()));
  for (auto& x : t) x = rng.uniform(-kPi, kPi);
  c.set_theta(t);
  return c;
}

// |<a|b>| for equal-length vectors.
double abs_overlap(const StateVector& a, const StateVector& b) {
  return std::abs(inner(a, b));
}

}  // namespace

TEST_CASE("dense kernels match embedded matrices", "[sim]") {
  const int n = 5;
  Rng rng(3);
  for (auto [q0, q1] : {std::pair{0, 1}, {3, 1}, {4, 0}, {2, 4}}) {
    Mat4 u = random_mat4(rng);
    StateVector s = random_state(n, 11);
    Eigen::VectorXcd expect = embed(u, n, q0, q1) * as_eigen(s);
    apply_two(s, n, q0, q1, u);
    CHECK((as_eigen(s) - expect).norm() < 1e-12);
  }
  for (int q = 0; q < n; ++q) {
    Mat2 u = circuit::euler_zyz(0.3 * q, 1.1, -0.4);
    StateVector s = random_state(n, 5);
    Eigen::VectorXcd expect =
        embed(circuit::kron(u, Mat2::Identity()), n, q, (q + 1) % n) * as_eigen(s);
    apply_one(s, n, q, u);
    CHECK((as_eigen(s) - expect).norm() < 1e-12);
    for (int p = 1; p < 4; ++p) {
      StateVector a = random_state(n, 7);
      Eigen::VectorXcd e2 =
          embed(circuit::kron(circuit::pauli(p), Mat2::Identity()), n, q, (q + 1) % n) *
          as_eigen(a);
      apply_pauli(a, n, q, p);
      CHECK((as_eigen(a) - e2).norm() < 1e-12);
    }
  }
}

TEST_CASE("run: identity ansatz and dense oracle", "[sim]") {
  auto c = circuit::build_comb_ansatz({2, 3}, 2);
  State s = run(c);
  const double amp = 1.0 / 8.0;
  for (auto x : s.dense) CHECK_THAT(std::abs(x - cplx(amp, 0)), WithinAbs(0.0, 1e-14));

  c = random_circuit(2, 3, 2, 17);
  s = run(c);
  Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(64);
  zero(0) = 1.0;
  Eigen::VectorXcd expect = circuit::circuit_unitary(c) * zero;
  CHECK((as_eigen(s.dense) - expect).norm() < 1e-12);
  CHECK_THAT(vector_norm(s.dense), WithinAbs(1.0, 1e-10));
}

TEST_CASE("single CNOT-class gate on |++>", "[sim]") {
  // c = (pi/4, 0, 0) gives exp(i pi/4 XX), locally equivalent to CNOT.
  std::vector<double> p(15, 0.0);
  p[0] = 0.25 * kPi;
  p[9 + 1] = 0.5 * kPi;  // B1 = Ry(pi/2)
  circuit::Circuit c({1, 2}, 1, {{0, 1}});
  c.set_theta(p);
  State s = run(c);
  // Oracle: build the 4x4 by hand.
  const cplx i(0, 1);
  Mat4 xx = circuit::kron(circuit::pauli(1), circuit::pauli(1));
  Mat4 core = std::cos(0.25 * kPi) * Mat4::Identity() + i * std::sin(0.25 * kPi) * xx;
  Mat4 u = core * circuit::kron(circuit::ry(0.5 * kPi), Mat2::Identity());
  Eigen::Vector4cd plus = Eigen::Vector4cd::Constant(0.5);
  Eigen::Vector4cd expect = u * plus;
  CHECK((as_eigen(s.dense) - expect).norm() < 1e-14);
}

TEST_CASE("dense and MPS backends agree", "[sim]") {
  auto c = random_circuit(2, 6, 1, 23);
  State d = run(c);
  State m = run(c, Backend::mps(64));
  StateVector md = m.mps.to_dense();
  CHECK(abs_overlap(d.dense, md) > 1.0 - 1e-10);
  CHECK(m.truncation_weight >= 0.0);

  auto c3 = random_circuit(3, 3, 2, 5);
  State d3 = run(c3);
  State m3 = run(c3, Backend::mps(tensornet::kUnboundedChi, 0.0));
  StateVector m3d = m3.mps.to_dense();
  double worst = 0.0;
  for (std::size_t k = 0; k < m3d.size(); ++k) worst = std::max(worst, std::abs(m3d[k] - d3.dense[k]));
  CHECK(worst < 1e-8);
  CHECK(m3.truncation_weight < 1e-20);
}

TEST_CASE("native and segmented programs reproduce the circuit state", "[sim]") {
  auto c = random_circuit(2, 3, 2, 41);
  StateVector ref = run(c).dense;
  StateVector seg = run_dense(segmented_program(c));
  CHECK(abs_overlap(ref, seg) > 1.0 - 1e-12);
  auto native = circuit::compile_native(c);
  Program np = program_from_native(native);
  CHECK(np.num_noise() == circuit::count_two_qubit(native));
  StateVector nat = run_dense(np);
  CHECK(abs_overlap(ref, nat) > 1.0 - 1e-12);
  StateVector natm = run_mps(np, 64, 1e-14).state.to_dense();
  CHECK(abs_overlap(ref, natm) > 1.0 - 1e-10);
}

TEST_CASE("infidelity values", "[sim]") {
  auto c = circuit::build_comb_ansatz({2, 3}, 1);
  Target uniform(StateVector(64, cplx(1.0, 0.0)));
  CHECK_THAT(infidelity(c, uniform), WithinAbs(0.0, 1e-14));
  CHECK_THAT(infidelity(c, uniform, Backend::mps()), WithinAbs(0.0, 1e-12));

  StateVector orth(64, cplx(0.0, 0.0));
  orth[0] = 1.0;
  orth[1] = -1.0;
  CHECK_THAT(infidelity(c, Target(orth)), WithinAbs(1.0, 1e-14));

  gridfunc::GridSpec g{1, 6};
  auto spec = gridfunc::TargetSpec::gaussian({0.5}, Eigen::MatrixXd::Constant(1, 1, 0.01));
  StateVector f = gridfunc::dense_state(g, spec, true);
  auto rc = random_circuit(1, 6, 2, 0);
  Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(64);
  zero(0) = 1.0;
  Eigen::VectorXcd phi = circuit::circuit_unitary(rc) * zero;
  const double expect = 1.0 - std::norm(as_eigen(f).dot(phi));
  CHECK_THAT(infidelity(rc, Target(f)), WithinAbs(expect, 1e-10));
  CHECK_THAT(infidelity(rc, Target(tensornet::Mps::from_dense(f)), Backend::mps()),
             WithinAbs(expect, 1e-10));

  CHECK_THROWS_AS(infidelity(rc, Target(StateVector(128, cplx(1.0, 0.0)))), ArgumentError);
}

TEST_CASE("gradient engines agree", "[sim]") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto c = random_circuit(2, 3, 1, 100 + seed);
    StateVector f = random_state(6, 200 + seed);
    Target t(f);
    auto ps = gradient(c, t, GradientMethod::parameter_shift);
    auto ad = gradient(c, t, GradientMethod::adjoint);
    auto fd = gradient(c, t, GradientMethod::finite_diff, {}, 1e-6);
    auto pm = gradient(c, t, GradientMethod::parameter_shift, Backend::mps(64));
    REQUIRE(ps.grad.size() == static_cast<std::size_t>(c.num_params()));
    for (std::size_t i = 0; i < ps.grad.size(); ++i) {
      CHECK_THAT(ps.grad[i], WithinAbs(ad.grad[i], 1e-10));
      CHECK_THAT(ps.grad[i], WithinAbs(fd.grad[i], 1e-6));
      CHECK_THAT(ps.grad[i], WithinAbs(pm.grad[i], 1e-9));
    }
    CHECK_THAT(ps.value, WithinAbs(ad.value, 1e-12));
    CHECK(ps.evaluations == 2 * ps.grad.size() + 1);
  }
}

TEST_CASE("gradient special cases", "[sim]") {
  auto c = circuit::build_comb_ansatz({2, 3}, 1);
  Target uniform(StateVector(64, cplx(1.0, 0.0)));
  for (auto m : {GradientMethod::parameter_shift, GradientMethod::adjoint}) {
    auto rep = gradient(c, uniform, m);
    for (double g : rep.grad) CHECK_THAT(g, WithinAbs(0.0, 1e-12));
  }
  std::vector<double> g{0.3, -0.1, 0.2};
  CHECK_THAT(average_abs(g), WithinAbs(0.2, 1e-16));
  CHECK_THROWS_AS(gradient(c, uniform, GradientMethod::adjoint, Backend::mps()),
                  UnsupportedError);
  auto big = circuit::build_comb_ansatz({1, 27}, 1);
  CHECK_THROWS_AS(run(big), CapacityError);
}

TEST_CASE("vector-Jacobian product with Pauli insertions", "[sim]") {
  auto c = random_circuit(2, 2, 1, 9);
  Program p = segmented_program(c);
  Rng rng(4);
  NoiseEvents ev(static_cast<std::size_t>(p.num_noise()));
  for (auto& e : ev) e = static_cast<std::uint8_t>(rng.below(16));
  StateVector b = random_state(4, 77);
  auto value = [&](const circuit::Circuit& cc) {
    Program q = segmented_program(cc);
    return inner(b, run_dense(q, ev)).real();
  };
  Vjp v = adjoint_vjp(p, [&](const StateVector&) { return b; }, ev);
  const double h = 1e-6;
  for (int i = 0; i < c.num_params(); ++i) {
    auto t = c.theta();
    t[static_cast<std::size_t>(i)] += h;
    auto cp = c;
    cp.set_theta(t);
    t[static_cast<std::size_t>(i)] -= 2 * h;
    auto cm = c;
    cm.set_theta(t);
    CHECK_THAT(v.grad[static_cast<std::size_t>(i)], WithinAbs((value(cp) - value(cm)) / (2 * h), 1e-8));
  }
  // Starting from a cached prefix gives the same result.
  StateVector prefix = initial_state(4, true);
  run_ops(p, prefix, 0, 5, ev);
  Vjp w = adjoint_vjp(p, [&](const StateVector&) { return b; }, ev, &prefix, 5);
  for (std::size_t i = 0; i < v.grad.size(); ++i)
    CHECK_THAT(w.grad[i], WithinAbs(v.grad[i], 1e-12));
}

TEST_CASE("gradient scans are deterministic", "[sim]") {
  gridfunc::GridSpec g{2, 3};
  auto spec = gridfunc::TargetSpec::gaussian({0.5, 0.5}, gridfunc::CovarianceFamily::tridiagonal,
                                             0.05, 0.5);
  Target t(gridfunc::dense_state(g, spec, true));
  auto a = gradient_scan_random(g, 1, t, 4, 42);
  auto b = gradient_scan_random(g, 1, t, 4, 42);
  REQUIRE(a.size() == 4);
  std::ostringstream sa, sb;
  write_scan_csv(sa, a);
  write_scan_csv(sb, b);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().rfind("mode,n,repeat,step,overlap,avg_grad\n", 0) == 0);
  for (const auto& r : a) {
    CHECK(r.overlap >= 0.0);
    CHECK(r.overlap <= 1.0);
    CHECK(r.avg_grad > 0.0);
  }
  const auto np = static_cast<std::size_t>(circuit::build_comb_ansatz(g, 1).num_params());
  WarmStartStep st{1, 0.05, std::vector<double>(np, 0.0), t};
  auto w = gradient_scan_warm(g, 1, {st}, 0);
  REQUIRE(w.size() == 1);
  CHECK(w[0].mode == "warm_start");
}
