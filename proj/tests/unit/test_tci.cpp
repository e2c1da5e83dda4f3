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
#include <limits>
#include <sstream>

#include "catch_amalgamated.hpp"
#include "combprep/errors.hpp"
#include "combprep/random.hpp"
#include "combprep/tci.hpp"

using namespace combprep;
using namespace combprep::tci;
using gridfunc::CovarianceFamily;
using gridfunc::GridSpec;
using gridfunc::TargetSpec;
using Catch::Matchers::WithinAbs;

namespace {
double x_of(BitsView b, int start, int len) {
  return gridfunc::decode_bits(b.subspan(static_cast<std::size_t>(start),
                                         static_cast<std::size_t>(len)));
}

// Rank of a dense unfolding computed with a plain SVD.
int unfolding_rank(const BitFunction& f, int n, int cut, double rel) {
  const int rows = 1 << cut, cols = 1 << (n - cut);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      m(r, c) = f(bits_of((static_cast<std::uint64_t>(r) << (n - cut)) | c, n));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  int k = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > rel * s(0)) ++k;
  return k;
}
}  // namespace

TEST_CASE("separable function has unit bond across variables", "[tci]") {
  BitFunction f = [](BitsView b) {
    double x = x_of(b, 0, 5), y = x_of(b, 5, 5);
    return std::exp(-3.0 * (x - 0.4) * (x - 0.4)) * (1.0 + y * y);
  };
  auto r = tt_cross(f, 10, 16, 1e-12, 10, 3);
  REQUIRE(r.converged);
  CHECK(r.mps.bond_dims()[5] == 1);
  CHECK(tci_error(r.mps, f, 2000, 1) < 1e-12);
}

TEST_CASE("sum of univariate functions has rank two", "[tci]") {
  BitFunction f = [](BitsView b) {
    double x = x_of(b, 0, 5), y = x_of(b, 5, 5);
    return 1.0 + std::sin(2.0 * x) + std::cos(3.0 * y);
  };
  // Oracle: dense SVD of the unfolding.
  CHECK(unfolding_rank(f, 10, 5, 1e-12) == 2);
  auto r = tt_cross(f, 10, 16, 1e-12, 10, 4);
  REQUIRE(r.converged);
  CHECK(r.mps.bond_dims()[5] <= 2);
}

TEST_CASE("interpolant is exact on its pivots", "[tci]") {
  GridSpec grid{2, 5};
  auto spec = TargetSpec::gaussian({0.3, 0.6}, CovarianceFamily::tridiagonal,
                                   0.05, 0.2);
  auto f = target_function(spec, grid);
  auto r = tt_cross(f, 10, 6, 1e-12, 4, 5);
  const int n = 10;
  for (int l = 1; l < n; ++l) {
    const auto& rows = r.pivots.row_pivots[static_cast<std::size_t>(l)];
    const auto& cols = r.pivots.column_pivots[static_cast<std::size_t>(l)];
    REQUIRE(rows.size() == cols.size());
    for (auto i : rows)
      for (auto j : cols) {
        Bits b = bits_of((i << (n - l)) | j, n);
        double v = f(b);
        CHECK(std::abs(r.mps.amplitude(b).real() - v) <=
              1e-10 * std::max(std::abs(v), 1e-3));
      }
  }
  std::ostringstream os;
  write_convergence_csv(os, r.history);
  CHECK(os.str().rfind("sweep,max_chi,eps_r,n_evals\n", 0) == 0);
}

TEST_CASE("tci_error metric", "[tci]") {
  GridSpec grid{1, 8};
  auto spec = TargetSpec::gaussian({0.5}, CovarianceFamily::tridiagonal, 0.05,
                                   0.0);
  auto f = target_function(spec, grid);
  auto dense = gridfunc::dense_state(grid, spec, false);
  auto exact = tensornet::Mps::from_dense(dense);
  CHECK_THAT(tci_error(exact, f, 5000, 1), WithinAbs(0.0, 1e-12));

  const double delta = 1e-3;
  Rng rng(99);
  StateVector noisy = dense;
  for (auto& a : noisy) a *= 1.0 + delta * rng.uniform(-1.0, 1.0);
  auto pert = tensornet::Mps::from_dense(noisy);
  double e = tci_error(pert, f, 10000, 2);
  CHECK(e > delta / 3.0);
  CHECK(e < 3.0 * delta);

  BitFunction zero_mostly = [](BitsView b) { return b[0] == 0 && b[1] == 0 ? 1.0 : 0.0; };
  CHECK_THROWS_AS(tci_error(exact, zero_mostly, 100, 1), MetricError);
}

TEST_CASE("build_target on Gaussians", "[tci]") {
  GridSpec grid{2, 6};
  auto flat = TargetSpec::gaussian({0.5, 0.5}, CovarianceFamily::tridiagonal,
                                   0.05, 0.2, 0.0);
  auto u = build_target(flat, grid, 16, 1e-12);
  CHECK(u.state.max_bond() == 1);
  CHECK_THAT(std::norm(tensornet::mps_overlap(tensornet::Mps::uniform(12), u.state)),
             WithinAbs(1.0, 1e-12));

  GridSpec g1{1, 6};
  auto spec = TargetSpec::gaussian({0.4}, CovarianceFamily::tridiagonal, 0.05,
                                   0.2);
  auto b = build_target(spec, g1, 16, 1e-12);
  auto dense = gridfunc::dense_state(g1, spec, true);
  auto st = b.state.to_dense();
  cplx ov = 0.0;
  for (std::size_t i = 0; i < st.size(); ++i) ov += std::conj(dense[i]) * st[i];
  CHECK(std::norm(ov) >= 1.0 - 1e-10);

  // Fidelity against dense enumeration for a small correlated case.
  GridSpec g2{2, 5};
  auto s2 = TargetSpec::gaussian({0.45, 0.55}, CovarianceFamily::tridiagonal,
                                 0.05, 0.2);
  auto b2 = build_target(s2, g2, 16, 1e-11);
  auto d2 = gridfunc::dense_state(g2, s2, true);
  auto st2 = b2.state.to_dense();
  cplx ov2 = 0.0;
  for (std::size_t i = 0; i < st2.size(); ++i) ov2 += std::conj(d2[i]) * st2[i];
  CHECK(std::norm(ov2) >= 1.0 - 1e-10);
}

TEST_CASE("degenerate and failing inputs", "[tci]") {
  BitFunction one = [](BitsView b) { return b[0] ? 2.0 : 1.0; };
  auto r = tt_cross(one, 1, 4, 1e-12, 3, 0);
  CHECK(r.converged);
  CHECK(r.mps.amplitude(Bits{1}).real() == 2.0);

  BitFunction bad = [](BitsView b) {
    return b[2] ? std::numeric_limits<double>::quiet_NaN() : 1.0;
  };
  CHECK_THROWS_AS(tt_cross(bad, 6, 4, 1e-12, 3, 0), EvaluationError);
  CHECK_THROWS_AS(tt_cross(one, 4, 0, 1e-12, 3, 0), ArgumentError);
}

TEST_CASE("tt_cross is seed reproducible", "[tci]") {
  GridSpec grid{3, 4};
  auto spec = TargetSpec::gaussian({0.3, 0.5, 0.7},
                                   CovarianceFamily::inverse_square, 0.05, 0.3);
  auto a = build_target(spec, grid, 12, 1e-12, 6, 42);
  auto b = build_target(spec, grid, 12, 1e-12, 6, 42);
  REQUIRE(a.state.bond_dims() == b.state.bond_dims());
  for (int i = 0; i < a.state.size(); ++i)
    CHECK(a.state.site(i).stacked_rows() == b.state.site(i).stacked_rows());
}
