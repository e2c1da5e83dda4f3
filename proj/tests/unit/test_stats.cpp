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

#include "catch_amalgamated.hpp"
#include "combprep/errors.hpp"
#include "combprep/iqsp.hpp"
#include "combprep/random.hpp"
#include "combprep/stats.hpp"

using namespace combprep;
using namespace combprep::stats;
using Catch::Matchers::WithinAbs;

TEST_CASE("moments by hand", "[stats]") {
  gridfunc::GridSpec g{2, 1};
  auto t = ShotTable::from_bits(g, {bits_from_string("00"), bits_from_string("11")});
  auto m = moments(t);
  CHECK_THAT(m.mean(0), WithinAbs(0.25, 1e-15));
  CHECK_THAT(m.mean(1), WithinAbs(0.25, 1e-15));
  CHECK_THAT(m.cov(0, 1), WithinAbs(0.0625, 1e-15));
  CHECK_THAT(m.cov(0, 0), WithinAbs(0.0625, 1e-15));
  // two shots: Var_ij = cov_ij^2 + cov_ii cov_jj
  CHECK_THAT(m.cov_var(0, 1), WithinAbs(2 * 0.0625 * 0.0625, 1e-15));
  CHECK_THAT(m.cov_err(0, 1), WithinAbs(2 * std::sqrt(2 * 0.0625 * 0.0625), 1e-15));

  CHECK_THROWS_AS(moments(ShotTable::from_bits(g, {bits_from_string("01")})), ArgumentError);
  CHECK_THROWS_AS(ShotTable::from_bits(g, {bits_from_string("011")}), ArgumentError);
}

TEST_CASE("variance formula and symmetry", "[stats]") {
  gridfunc::GridSpec g{3, 4};
  Rng rng(3);
  std::vector<Bits> shots;
  for (int s = 0; s < 57; ++s) {
    Bits b(12);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng.below(2));
    shots.push_back(b);
  }
  auto t = ShotTable::from_bits(g, shots);
  auto m = moments(t);
  // independent recomputation from the raw values
  const int n = 57;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double si = 0, sj = 0, sij = 0;
      for (int s = 0; s < n; ++s) {
        si += t.values(s, i);
        sj += t.values(s, j);
        sij += t.values(s, i) * t.values(s, j);
      }
      const double c = sij / n - (si / n) * (sj / n);
      CHECK_THAT(m.cov(i, j), WithinAbs(c, 1e-14));
      CHECK(m.cov(i, j) == m.cov(j, i));
      CHECK(m.cov_var(i, j) == m.cov_var(j, i));
    }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK_THAT(m.cov_var(i, j),
                 WithinAbs((m.cov(i, j) * m.cov(i, j) + m.cov(i, i) * m.cov(j, j)) / (n - 1), 1e-16));

  // constant table: zero covariance exactly
  std::vector<Bits> same(10, bits_from_string("101100111010"));
  auto z = moments(ShotTable::from_bits(g, same));
  CHECK(z.cov.isZero(0.0));
}

TEST_CASE("uniform sampling reproduces the discrete uniform moments", "[stats]") {
  gridfunc::GridSpec g{2, 6};
  Rng rng(7);
  std::vector<Bits> shots(100000, Bits(12));
  for (auto& b : shots)
    for (auto& x : b) x = static_cast<std::uint8_t>(rng.below(2));
  auto m = moments(ShotTable::from_bits(g, shots));
  // brute force over the 64 grid points of one variable
  double mu = 0, m2 = 0;
  for (int k = 0; k < 64; ++k) {
    mu += k / 64.0 / 64.0;
    m2 += (k / 64.0) * (k / 64.0) / 64.0;
  }
  const double var = m2 - mu * mu;
  CHECK_THAT(mu, WithinAbs(63.0 / 128.0, 1e-15));
  for (int i = 0; i < 2; ++i) {
    CHECK_THAT(m.mean(i), WithinAbs(mu, 0.003));
    CHECK_THAT(m.cov(i, i), WithinAbs(var, 0.003));
  }
  CHECK_THAT(m.cov(0, 1), WithinAbs(0.0, 0.003));

  std::vector<double> p(4096, 1.0 / 4096);
  auto e = distribution_moments(g, p);
  CHECK_THAT(e.mean(0), WithinAbs(mu, 1e-14));
  CHECK_THAT(e.cov(1, 1), WithinAbs(var, 1e-14));
  CHECK_THAT(e.cov(0, 1), WithinAbs(0.0, 1e-14));
}

TEST_CASE("eps_max", "[stats]") {
  std::vector<double> F{0.3, -1.2, 2.0, 0.1};
  double nf = 0;
  for (double x : F) nf += x * x;
  nf = std::sqrt(nf);
  StateVector phi(4), neg(4), rot(4);
  for (int i = 0; i < 4; ++i) {
    phi[i] = F[i] / nf;
    neg[i] = -phi[i];
    rot[i] = cplx(0.0, 1.0) * phi[i];
  }
  CHECK_THAT(eps_max(F, phi), WithinAbs(0.0, 1e-15));
  CHECK_THAT(eps_max(F, neg), WithinAbs(0.0, 1e-15));
  CHECK_THAT(eps_max(F, rot), WithinAbs(0.0, 1e-15));
  CHECK_THROWS_AS(eps_max(F, std::span<const cplx>(phi.data(), 3)), ArgumentError);
}

TEST_CASE("eps_max of a trained Ricker circuit against a recomputation", "[stats]") {
  iqsp::IqspConfig cfg;
  cfg.grid = {2, 3};
  cfg.target = gridfunc::TargetSpec::ricker({0.5, 0.5}, 0.25);
  cfg.layers = 2;
  cfg.schedule = iqsp::Schedule::uniform(0.5, 30, 60, 1e-2);
  auto trace = iqsp::run_iqsp(cfg);
  auto c = circuit::build_comb_ansatz(cfg.grid, 2);
  c.set_theta(trace.theta);
  const StateVector phi = sim::run(c).dense;
  const StateVector f = gridfunc::dense_state(cfg.grid, cfg.target, false);
  std::vector<double> F(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) F[i] = f[i].real();

  // export the amplitudes as text and recompute from the parsed copy
  nlohmann::json ex = nlohmann::json::array();
  for (auto a : phi) ex.push_back({a.real(), a.imag()});
  auto back = nlohmann::json::parse(ex.dump());
  std::vector<cplx> amp;
  for (auto& a : back) amp.emplace_back(a[0].get<double>(), a[1].get<double>());
  double nf = 0;
  cplx ov = 0;
  for (std::size_t i = 0; i < F.size(); ++i) {
    nf += F[i] * F[i];
    ov += F[i] * amp[i];
  }
  nf = std::sqrt(nf);
  const cplx ph = std::conj(ov) / std::abs(ov);
  double brute = 0;
  for (std::size_t i = 0; i < F.size(); ++i) brute = std::max(brute, std::abs(F[i] - nf * ph * amp[i]));
  CHECK_THAT(eps_max(F, phi), WithinAbs(brute, 1e-12));
  CHECK(brute > 0.0);
}

TEST_CASE("covariance experiment", "[stats]") {
  iqsp::IqspConfig icfg;
  icfg.grid = {2, 4};
  Eigen::MatrixXd S(2, 2);
  S << 0.02, 0.008, 0.008, 0.02;
  icfg.target = gridfunc::TargetSpec::gaussian({0.5, 0.5}, S);
  icfg.layers = 3;
  icfg.schedule = iqsp::Schedule::uniform(0.25, 200, 6000, 1e-2);
  auto trace = iqsp::run_iqsp(icfg);
  REQUIRE(trace.final_infidelity < 1e-3);

  CovarianceConfig cfg;
  cfg.grid = icfg.grid;
  cfg.target = icfg.target;
  cfg.layers = 3;
  cfg.theta = trace.theta;
  cfg.n_shots = 10000;
  cfg.seeds.clear();
  for (std::uint64_t s = 0; s < 20; ++s) cfg.seeds.push_back(s);
  auto rep = covariance_experiment(cfg);
  REQUIRE(rep.runs.size() == 20);
  // error bars cover the sampled circuit's own moments at the nominal rate;
  // the distance to the target moments also carries the training error
  CHECK(rep.within_circuit >= 0.9);
  const double bias = (rep.circuit.cov - rep.target.cov).cwiseAbs().maxCoeff();
  INFO("within target " << rep.within_noiseless << ", max moment bias " << bias);
  CHECK(bias < 2e-3);
  CHECK_FALSE(rep.within_noisy.has_value());
  // brute-force |f|^2-weighted moments over the 16 x 16 grid
  {
    const Eigen::MatrixXd Si = S.inverse();
    double w = 0, m0 = 0, m00 = 0, m01 = 0;
    for (int a = 0; a < 16; ++a)
      for (int b = 0; b < 16; ++b) {
        const Eigen::Vector2d x(a / 16.0 - 0.5, b / 16.0 - 0.5);
        const double p = std::exp(-x.dot(Si * x));
        w += p;
        m0 += p * a / 16.0;
        m00 += p * (a / 16.0) * (a / 16.0);
        m01 += p * (a / 16.0) * (b / 16.0);
      }
    m0 /= w;
    CHECK_THAT(rep.target.mean(0), WithinAbs(m0, 1e-12));
    CHECK(rep.target.mean(0) < 0.5);
    CHECK_THAT(rep.target.cov(0, 0), WithinAbs(m00 / w - m0 * m0, 1e-12));
    CHECK_THAT(rep.target.cov(0, 1), WithinAbs(m01 / w - m0 * m0, 1e-12));
  }

  auto again = covariance_experiment(cfg);
  CHECK(report_to_json(rep).dump() == report_to_json(again).dump());

  cfg.seeds = {3};
  cfg.n_shots = 2000;
  cfg.noise = noise::NoiseModel{};
  auto noisy = covariance_experiment(cfg);
  REQUIRE(noisy.within_noisy.has_value());
  CHECK(noisy.runs[0].noisy->n_shots == 2000);

  auto j = covariance_to_json(cfg);
  CHECK(covariance_to_json(covariance_from_json(j)) == j);
  j["theta"] = std::vector<double>{1.0};
  CHECK_THROWS_AS(covariance_experiment(covariance_from_json(j)), ConfigError);
}
