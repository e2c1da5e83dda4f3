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
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "json.hpp"

#include "combprep/common.hpp"
#include "combprep/gridfunc.hpp"

namespace combprep::tensornet {

using MatrixXc = Eigen::MatrixXcd;

// Rank-3 tensor A[a, b, c] with physical index b in {0, 1}, stored as the
// two matrices A^0 and A^1 of shape (chi_left, chi_right).
struct SiteTensor {
  std::array<MatrixXc, 2> m;

  SiteTensor() = default;
  SiteTensor(Eigen::Index left, Eigen::Index right)
      : m{MatrixXc::Zero(left, right), MatrixXc::Zero(left, right)} {}

  Eigen::Index left() const { return m[0].rows(); }
  Eigen::Index right() const { return m[0].cols(); }

  // (chi_left * 2) x chi_right with row index b * chi_left + a.
  MatrixXc stacked_rows() const;
  // chi_left x (2 * chi_right) with column index b * chi_right + c.
  MatrixXc stacked_cols() const;
  static SiteTensor from_stacked_rows(const MatrixXc& s, Eigen::Index left);
  static SiteTensor from_stacked_cols(const MatrixXc& s, Eigen::Index right);
};

inline constexpr int kUnboundedChi = std::numeric_limits<int>::max();

// Discarded weight bookkeeping for SVD truncations, relative to the squared
// norm of the state at the time of the cut.
struct TruncationInfo {
  double max_discarded = 0.0;
  double total_discarded = 0.0;
  int cuts = 0;
};

class Mps {
 public:
  Mps() = default;
  explicit Mps(std::vector<SiteTensor> sites);

  static Mps basis_state(BitsView bits);
  static Mps uniform(int n);
  static Mps product(const std::vector<std::array<cplx, 2>>& locals);
  // TT-SVD of a dense vector (index order as in combprep::index_of).
  static Mps from_dense(std::span<const cplx> v, int chi_max = kUnboundedChi,
                        double tol = 0.0, TruncationInfo* info = nullptr);
  // Gaussian random entries; bond dims min(chi, 2^i, 2^(n-i)).
  static Mps random(int n, int chi, std::uint64_t seed, bool normalize = true);

  int size() const { return static_cast<int>(sites_.size()); }
  const SiteTensor& site(int i) const { return sites_.at(static_cast<std::size_t>(i)); }
  const std::vector<SiteTensor>& sites() const { return sites_; }
  // chi_0 .. chi_n with chi_0 = chi_n = 1.
  std::vector<int> bond_dims() const;
  int max_bond() const;
  const std::optional<int>& gauge_center() const { return center_; }

  cplx amplitude(BitsView bits) const;
  double norm() const;
  StateVector to_dense() const;

  void canonicalize(int center);
  void normalize();
  void scale(cplx s);

  // Local updates used by the circuit simulator. The two-site update acts on
  // (i, i+1) with the first site as the more significant index of the 4x4
  // matrix, and returns the discarded weight relative to the norm squared.
  void apply_one_site(int i, const Mat2& u);
  double apply_two_site(int i, const Mat4& u, int chi_max, double tol);

  // Replaces the tensors; invalidates the gauge center.
  void set_site(int i, SiteTensor t);

 private:
  void validate() const;
  std::vector<SiteTensor> sites_;
  std::optional<int> center_;
};

cplx mps_amplitude(const Mps& state, BitsView bits);
cplx mps_overlap(const Mps& a, const Mps& b);  // <a|b>

// SVD compression: every bond <= chi_max and the discarded squared weight
// per bond (relative to the norm squared) <= tol; chi_max takes precedence.
// The output has the norm of the input.
Mps mps_truncate(const Mps& state, int chi_max, double tol,
                 TruncationInfo* info = nullptr);

// Sequential conditional sampling. Requires |norm - 1| <= 1e-6.
std::vector<Bits> mps_sample(const Mps& state, std::size_t n_shots,
                             std::uint64_t seed);

// Largest absolute deviation from an isometry, for testing gauges.
double left_isometry_residual(const SiteTensor& t);
double right_isometry_residual(const SiteTensor& t);

// Comb tensor network: a backbone of d rail tensors R_k[l, r, t] carrying
// only virtual indices, and one tooth chain of n_x physical tensors per
// variable hanging from rail k through index t.
class CombTn {
 public:
  CombTn() = default;
  CombTn(gridfunc::GridSpec grid, std::vector<std::vector<MatrixXc>> rails,
         std::vector<std::vector<SiteTensor>> teeth);

  const gridfunc::GridSpec& grid() const { return grid_; }
  // rails()[k][t] is the (left x right) slice of R_k at tooth index t.
  const std::vector<std::vector<MatrixXc>>& rails() const { return rails_; }
  const std::vector<std::vector<SiteTensor>>& teeth() const { return teeth_; }

  std::vector<int> backbone_bonds() const;  // d + 1 entries
  std::vector<int> tooth_bonds() const;     // tooth index dimension per rail

  cplx amplitude(BitsView bits) const;
  StateVector to_dense() const;

 private:
  gridfunc::GridSpec grid_;
  std::vector<std::vector<MatrixXc>> rails_;
  std::vector<std::vector<SiteTensor>> teeth_;
};

CombTn mps_to_comb(const Mps& state, const gridfunc::GridSpec& grid);

nlohmann::json mps_to_json(const Mps& state);
Mps mps_from_json(const nlohmann::json& j);
nlohmann::json comb_to_json(const CombTn& comb);
CombTn comb_from_json(const nlohmann::json& j);

}  // namespace combprep::tensornet
