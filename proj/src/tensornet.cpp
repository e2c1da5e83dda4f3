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

#include "combprep/tensornet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "combprep/errors.hpp"
#include "combprep/linalg.hpp"
#include "combprep/random.hpp"

namespace combprep::tensornet {

using nlohmann::json;

MatrixXc SiteTensor::stacked_rows() const {
  const Eigen::Index l = left();
  MatrixXc s(2 * l, right());
  s.topRows(l) = m[0];
  s.bottomRows(l) = m[1];
  return s;
}

MatrixXc SiteTensor::stacked_cols() const {
  const Eigen::Index r = right();
  MatrixXc s(left(), 2 * r);
  s.leftCols(r) = m[0];
  s.rightCols(r) = m[1];
  return s;
}

SiteTensor SiteTensor::from_stacked_rows(const MatrixXc& s, Eigen::Index left) {
  SiteTensor t;
  t.m[0] = s.topRows(left);
  t.m[1] = s.bottomRows(left);
  return t;
}

SiteTensor SiteTensor::from_stacked_cols(const MatrixXc& s, Eigen::Index right) {
  SiteTensor t;
  t.m[0] = s.leftCols(right);
  t.m[1] = s.rightCols(right);
  return t;
}

namespace {

// Sequential SVD of a (left x 2^m) matrix whose column index is a big-endian
// bitstring, producing m site tensors with the given left boundary.
std::vector<SiteTensor> tt_svd(MatrixXc c, int m, int chi_max, double tol,
                               TruncationInfo* info) {
  std::vector<SiteTensor> sites;
  sites.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m - 1; ++i) {
    const Eigen::Index l = c.rows();
    const Eigen::Index rest = c.cols() / 2;
    MatrixXc mat(2 * l, rest);
    mat.topRows(l) = c.leftCols(rest);
    mat.bottomRows(l) = c.rightCols(rest);
    c.resize(0, 0);
    auto svd = linalg::truncated_svd(mat, chi_max, tol);
    if (info) {
      info->max_discarded = std::max(info->max_discarded, svd.discarded);
      info->total_discarded += svd.discarded;
      ++info->cuts;
    }
    sites.push_back(SiteTensor::from_stacked_rows(svd.u, l));
    c = svd.s.asDiagonal() * svd.vh;
  }
  SiteTensor last(c.rows(), 1);
  last.m[0] = c.col(0);
  last.m[1] = c.col(1);
  sites.push_back(std::move(last));
  return sites;
}

void check_bits(int n, BitsView bits) {
  if (static_cast<int>(bits.size()) != n)
    throw ArgumentError("bitstring length " + std::to_string(bits.size()) +
                        " does not match " + std::to_string(n) + " sites");
}

}  // namespace

Mps::Mps(std::vector<SiteTensor> sites) : sites_(std::move(sites)) {
  validate();
}

void Mps::validate() const {
  if (sites_.empty()) throw ArgumentError("MPS must have at least one site");
  if (sites_.front().left() != 1 || sites_.back().right() != 1)
    throw ArgumentError("MPS boundary bonds must be 1");
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    const auto& t = sites_[i];
    if (t.m[0].rows() != t.m[1].rows() || t.m[0].cols() != t.m[1].cols())
      throw ArgumentError("MPS site tensor slices disagree in shape");
    if (i + 1 < sites_.size() && t.right() != sites_[i + 1].left())
      throw ArgumentError("MPS bond mismatch at bond " + std::to_string(i + 1));
  }
}

Mps Mps::basis_state(BitsView bits) {
  std::vector<SiteTensor> sites;
  for (auto b : bits) {
    SiteTensor t(1, 1);
    t.m[b & 1u](0, 0) = 1.0;
    sites.push_back(std::move(t));
  }
  return Mps(std::move(sites));
}

Mps Mps::uniform(int n) {
  const double a = 1.0 / std::sqrt(2.0);
  return product(std::vector<std::array<cplx, 2>>(
      static_cast<std::size_t>(n), std::array<cplx, 2>{a, a}));
}

Mps Mps::product(const std::vector<std::array<cplx, 2>>& locals) {
  std::vector<SiteTensor> sites;
  for (const auto& l : locals) {
    SiteTensor t(1, 1);
    t.m[0](0, 0) = l[0];
    t.m[1](0, 0) = l[1];
    sites.push_back(std::move(t));
  }
  return Mps(std::move(sites));
}

Mps Mps::from_dense(std::span<const cplx> v, int chi_max, double tol,
                    TruncationInfo* info) {
  if (v.size() < 2 || !std::has_single_bit(v.size()))
    throw ArgumentError("from_dense: length must be a power of two >= 2");
  const int n = std::countr_zero(v.size());
  MatrixXc c(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) c(0, static_cast<Eigen::Index>(i)) = v[i];
  return Mps(tt_svd(std::move(c), n, chi_max, tol, info));
}

Mps Mps::random(int n, int chi, std::uint64_t seed, bool normalize) {
  if (n < 1 || chi < 1) throw ArgumentError("random MPS: n, chi must be >= 1");
  Rng rng(seed);
  std::vector<int> bonds(static_cast<std::size_t>(n + 1), 1);
  for (int i = 1; i < n; ++i) {
    int lim = std::min(i, n - i);
    int cap = lim >= 30 ? chi : std::min(chi, 1 << lim);
    bonds[static_cast<std::size_t>(i)] = cap;
  }
  std::vector<SiteTensor> sites;
  for (int i = 0; i < n; ++i) {
    SiteTensor t(bonds[static_cast<std::size_t>(i)],
                 bonds[static_cast<std::size_t>(i + 1)]);
    for (auto& m : t.m)
      for (Eigen::Index a = 0; a < m.rows(); ++a)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
          double re = rng.normal();
          double im = rng.normal();
          m(a, c) = cplx(re, im);
        }
    sites.push_back(std::move(t));
  }
  Mps out(std::move(sites));
  if (normalize) out.normalize();
  return out;
}

std::vector<int> Mps::bond_dims() const {
  std::vector<int> b;
  b.reserve(sites_.size() + 1);
  b.push_back(static_cast<int>(sites_.front().left()));
  for (const auto& t : sites_) b.push_back(static_cast<int>(t.right()));
  return b;
}

int Mps::max_bond() const {
  auto b = bond_dims();
  return *std::max_element(b.begin(), b.end());
}

cplx Mps::amplitude(BitsView bits) const {
  check_bits(size(), bits);
  Eigen::RowVectorXcd v = sites_[0].m[bits[0] & 1u].row(0);
  for (std::size_t i = 1; i < sites_.size(); ++i) v = v * sites_[i].m[bits[i] & 1u];
  return v(0);
}

double Mps::norm() const { return std::sqrt(std::max(0.0, mps_overlap(*this, *this).real())); }

StateVector Mps::to_dense() const {
  if (size() > 30) throw CapacityError("to_dense: too many sites");
  // Rows enumerate prefixes in big-endian order.
  MatrixXc cur(1, 1);
  cur(0, 0) = 1.0;
  for (const auto& t : sites_) {
    MatrixXc next(cur.rows() * 2, t.right());
    for (Eigen::Index r = 0; r < cur.rows(); ++r) {
      next.row(2 * r) = cur.row(r) * t.m[0];
      next.row(2 * r + 1) = cur.row(r) * t.m[1];
    }
    cur.swap(next);
  }
  StateVector v(static_cast<std::size_t>(cur.rows()));
  for (Eigen::Index r = 0; r < cur.rows(); ++r) v[static_cast<std::size_t>(r)] = cur(r, 0);
  return v;
}

namespace {
void move_right(std::vector<SiteTensor>& s, int i) {
  MatrixXc q, r;
  const Eigen::Index l = s[static_cast<std::size_t>(i)].left();
  linalg::thin_qr(s[static_cast<std::size_t>(i)].stacked_rows(), q, r);
  s[static_cast<std::size_t>(i)] = SiteTensor::from_stacked_rows(q, l);
  auto& nxt = s[static_cast<std::size_t>(i + 1)];
  nxt.m[0] = r * nxt.m[0];
  nxt.m[1] = r * nxt.m[1];
}

void move_left(std::vector<SiteTensor>& s, int i) {
  MatrixXc q, r;
  const Eigen::Index rt = s[static_cast<std::size_t>(i)].right();
  linalg::thin_qr(s[static_cast<std::size_t>(i)].stacked_cols().adjoint(), q, r);
  s[static_cast<std::size_t>(i)] =
      SiteTensor::from_stacked_cols(q.adjoint(), rt);
  auto& prv = s[static_cast<std::size_t>(i - 1)];
  MatrixXc ra = r.adjoint();
  prv.m[0] = prv.m[0] * ra;
  prv.m[1] = prv.m[1] * ra;
}
}  // namespace

void Mps::canonicalize(int center) {
  if (center < 0 || center >= size())
    throw ArgumentError("canonicalize: center out of range");
  if (center_) {
    for (int i = *center_; i < center; ++i) move_right(sites_, i);
    for (int i = *center_; i > center; --i) move_left(sites_, i);
  } else {
    for (int i = 0; i < center; ++i) move_right(sites_, i);
    for (int i = size() - 1; i > center; --i) move_left(sites_, i);
  }
  center_ = center;
}

void Mps::normalize() {
  double nrm = norm();
  if (!(nrm > 0.0) || !std::isfinite(nrm))
    throw StateError("normalize: zero or non-finite norm");
  scale(1.0 / nrm);
}

void Mps::scale(cplx s) {
  std::size_t k = center_ ? static_cast<std::size_t>(*center_) : 0;
  sites_[k].m[0] *= s;
  sites_[k].m[1] *= s;
}

void Mps::set_site(int i, SiteTensor t) {
  sites_.at(static_cast<std::size_t>(i)) = std::move(t);
  center_.reset();
  validate();
}

void Mps::apply_one_site(int i, const Mat2& u) {
  auto& t = sites_.at(static_cast<std::size_t>(i));
  MatrixXc a0 = u(0, 0) * t.m[0] + u(0, 1) * t.m[1];
  MatrixXc a1 = u(1, 0) * t.m[0] + u(1, 1) * t.m[1];
  t.m[0].swap(a0);
  t.m[1].swap(a1);
}

double Mps::apply_two_site(int i, const Mat4& u, int chi_max, double tol) {
  if (i < 0 || i + 1 >= size())
    throw ArgumentError("apply_two_site: site out of range");
  if (!center_ || (*center_ != i && *center_ != i + 1)) canonicalize(i);
  auto& a = sites_[static_cast<std::size_t>(i)];
  auto& b = sites_[static_cast<std::size_t>(i + 1)];
  const Eigen::Index l = a.left(), r = b.right();
  MatrixXc theta[2][2];
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y) theta[x][y] = a.m[x] * b.m[y];
  MatrixXc mat(2 * l, 2 * r);
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y) {
      MatrixXc acc = MatrixXc::Zero(l, r);
      for (int xp = 0; xp < 2; ++xp)
        for (int yp = 0; yp < 2; ++yp) {
          cplx g = u(2 * x + y, 2 * xp + yp);
          if (g != cplx(0.0)) acc += g * theta[xp][yp];
        }
      mat.block(x * l, y * r, l, r) = acc;
    }
  auto svd = linalg::truncated_svd(mat, chi_max, tol);
  a = SiteTensor::from_stacked_rows(svd.u, l);
  b = SiteTensor::from_stacked_cols(svd.s.asDiagonal() * svd.vh, r);
  center_ = i + 1;
  return svd.discarded;
}

cplx mps_amplitude(const Mps& state, BitsView bits) {
  return state.amplitude(bits);
}

cplx mps_overlap(const Mps& a, const Mps& b) {
  if (a.size() != b.size())
    throw ArgumentError("mps_overlap: site count mismatch");
  MatrixXc e = MatrixXc::Ones(1, 1);
  for (int i = 0; i < a.size(); ++i) {
    const auto& ta = a.site(i);
    const auto& tb = b.site(i);
    e = ta.m[0].adjoint() * (e * tb.m[0]) + ta.m[1].adjoint() * (e * tb.m[1]);
  }
  return e(0, 0);
}

Mps mps_truncate(const Mps& state, int chi_max, double tol,
                 TruncationInfo* info) {
  if (chi_max < 1) throw ArgumentError("mps_truncate: chi_max must be >= 1");
  if (tol < 0.0) throw ArgumentError("mps_truncate: tol must be >= 0");
  const double norm_in = state.norm();
  Mps work = state;
  work.canonicalize(0);
  std::vector<SiteTensor> sites = work.sites();
  for (int i = 0; i + 1 < work.size(); ++i) {
    auto& t = sites[static_cast<std::size_t>(i)];
    const Eigen::Index l = t.left();
    auto svd = linalg::truncated_svd(t.stacked_rows(), chi_max, tol);
    if (info) {
      info->max_discarded = std::max(info->max_discarded, svd.discarded);
      info->total_discarded += svd.discarded;
      ++info->cuts;
    }
    t = SiteTensor::from_stacked_rows(svd.u, l);
    MatrixXc sv = svd.s.asDiagonal() * svd.vh;
    auto& nxt = sites[static_cast<std::size_t>(i + 1)];
    nxt.m[0] = sv * nxt.m[0];
    nxt.m[1] = sv * nxt.m[1];
  }
  Mps out(std::move(sites));
  out.canonicalize(out.size() - 1);
  const double norm_out = out.norm();
  if (norm_out > 0.0 && norm_in > 0.0) out.scale(norm_in / norm_out);
  return out;
}

std::vector<Bits> mps_sample(const Mps& state, std::size_t n_shots,
                             std::uint64_t seed) {
  const double nrm = state.norm();
  if (std::abs(nrm - 1.0) > 1e-6)
    throw StateError("mps_sample: state is not normalised (norm " +
                     std::to_string(nrm) + ")");
  Mps work = state;
  work.canonicalize(0);
  const int n = work.size();
  Rng rng(seed);
  std::vector<Bits> shots(n_shots, Bits(static_cast<std::size_t>(n)));
  for (std::size_t s = 0; s < n_shots; ++s) {
    Eigen::RowVectorXcd left = Eigen::RowVectorXcd::Ones(1);
    for (int i = 0; i < n; ++i) {
      const auto& t = work.site(i);
      Eigen::RowVectorXcd v0 = left * t.m[0];
      Eigen::RowVectorXcd v1 = left * t.m[1];
      double p0 = v0.squaredNorm();
      double p1 = v1.squaredNorm();
      double u = rng.uniform();
      int b = (u * (p0 + p1) < p0) ? 0 : 1;
      shots[s][static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(b);
      left = b == 0 ? v0 / std::sqrt(p0) : v1 / std::sqrt(p1);
    }
  }
  return shots;
}

double left_isometry_residual(const SiteTensor& t) {
  MatrixXc g = t.m[0].adjoint() * t.m[0] + t.m[1].adjoint() * t.m[1];
  return (g - MatrixXc::Identity(g.rows(), g.cols())).norm();
}

double right_isometry_residual(const SiteTensor& t) {
  MatrixXc g = t.m[0] * t.m[0].adjoint() + t.m[1] * t.m[1].adjoint();
  return (g - MatrixXc::Identity(g.rows(), g.cols())).norm();
}

// ---------------------------------------------------------------- comb

CombTn::CombTn(gridfunc::GridSpec grid,
               std::vector<std::vector<MatrixXc>> rails,
               std::vector<std::vector<SiteTensor>> teeth)
    : grid_(grid), rails_(std::move(rails)), teeth_(std::move(teeth)) {
  grid_.validate();
  const auto d = static_cast<std::size_t>(grid_.d);
  if (rails_.size() != d || teeth_.size() != d)
    throw ArgumentError("CombTn: need one rail and one tooth per variable");
  Eigen::Index prev_right = 1;
  for (std::size_t k = 0; k < d; ++k) {
    const auto& rail = rails_[k];
    const auto& tooth = teeth_[k];
    if (rail.empty()) throw ArgumentError("CombTn: empty rail tensor");
    if (static_cast<int>(tooth.size()) != grid_.n_x)
      throw ArgumentError("CombTn: tooth length must equal n_x");
    for (const auto& slice : rail)
      if (slice.rows() != rail[0].rows() || slice.cols() != rail[0].cols())
        throw ArgumentError("CombTn: rail slices disagree in shape");
    if (rail[0].rows() != prev_right)
      throw ArgumentError("CombTn: backbone bond mismatch");
    prev_right = rail[0].cols();
    if (tooth.front().left() != static_cast<Eigen::Index>(rail.size()) ||
        tooth.back().right() != 1)
      throw ArgumentError("CombTn: tooth boundary mismatch");
    for (std::size_t i = 0; i + 1 < tooth.size(); ++i)
      if (tooth[i].right() != tooth[i + 1].left())
        throw ArgumentError("CombTn: tooth bond mismatch");
  }
  if (prev_right != 1) throw ArgumentError("CombTn: right boundary must be 1");
}

std::vector<int> CombTn::backbone_bonds() const {
  std::vector<int> b;
  b.push_back(static_cast<int>(rails_.front()[0].rows()));
  for (const auto& r : rails_) b.push_back(static_cast<int>(r[0].cols()));
  return b;
}

std::vector<int> CombTn::tooth_bonds() const {
  std::vector<int> b;
  for (const auto& r : rails_) b.push_back(static_cast<int>(r.size()));
  return b;
}

cplx CombTn::amplitude(BitsView bits) const {
  check_bits(grid_.n_qubits(), bits);
  MatrixXc acc = MatrixXc::Ones(1, 1);
  for (std::size_t k = 0; k < rails_.size(); ++k) {
    const auto& tooth = teeth_[k];
    const std::size_t off = k * static_cast<std::size_t>(grid_.n_x);
    Eigen::VectorXcd v = tooth.back().m[bits[off + tooth.size() - 1] & 1u].col(0);
    for (std::size_t i = tooth.size() - 1; i-- > 0;)
      v = tooth[i].m[bits[off + i] & 1u] * v;
    MatrixXc slice = MatrixXc::Zero(rails_[k][0].rows(), rails_[k][0].cols());
    for (std::size_t t = 0; t < rails_[k].size(); ++t)
      slice += v(static_cast<Eigen::Index>(t)) * rails_[k][t];
    acc = acc * slice;
  }
  return acc(0, 0);
}

StateVector CombTn::to_dense() const {
  const int n = grid_.n_qubits();
  if (n > 26) throw CapacityError("CombTn::to_dense: too many sites");
  StateVector v(std::size_t{1} << n);
  for (std::uint64_t i = 0; i < v.size(); ++i) v[i] = amplitude(bits_of(i, n));
  return v;
}

CombTn mps_to_comb(const Mps& state, const gridfunc::GridSpec& grid) {
  grid.validate();
  if (state.size() % grid.n_x != 0 || state.size() != grid.n_qubits())
    throw ArgumentError("mps_to_comb: site count does not match the grid");
  const int d = grid.d, nx = grid.n_x;
  if (d == 1) {
    std::vector<std::vector<MatrixXc>> rails{{MatrixXc::Ones(1, 1)}};
    std::vector<std::vector<SiteTensor>> teeth{state.sites()};
    return CombTn(grid, std::move(rails), std::move(teeth));
  }
  if (nx > 16)
    throw CapacityError("mps_to_comb: n_x > 16 is not supported");
  // Remove numerically redundant bond directions before splitting.
  Mps s = mps_truncate(state, kUnboundedChi, 1e-26);
  std::vector<std::vector<MatrixXc>> rails;
  std::vector<std::vector<SiteTensor>> teeth;
  const Eigen::Index cols = Eigen::Index{1} << nx;
  for (int k = 0; k < d; ++k) {
    // Products over the block for every bitstring (big-endian order).
    std::vector<MatrixXc> prods{MatrixXc::Identity(s.site(k * nx).left(),
                                                   s.site(k * nx).left())};
    for (int i = 0; i < nx; ++i) {
      const auto& t = s.site(k * nx + i);
      std::vector<MatrixXc> next;
      next.reserve(prods.size() * 2);
      for (const auto& p : prods) {
        next.push_back(p * t.m[0]);
        next.push_back(p * t.m[1]);
      }
      prods.swap(next);
    }
    const Eigen::Index l = prods[0].rows(), r = prods[0].cols();
    MatrixXc blk(l * r, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& p = prods[static_cast<std::size_t>(c)];
      for (Eigen::Index a = 0; a < l; ++a)
        for (Eigen::Index b = 0; b < r; ++b) blk(a * r + b, c) = p(a, b);
    }
    auto svd = linalg::truncated_svd(blk, kUnboundedChi, 1e-28);
    MatrixXc us = svd.u * svd.s.asDiagonal();
    std::vector<MatrixXc> rail;
    for (Eigen::Index t = 0; t < us.cols(); ++t) {
      MatrixXc slice(l, r);
      for (Eigen::Index a = 0; a < l; ++a)
        for (Eigen::Index b = 0; b < r; ++b) slice(a, b) = us(a * r + b, t);
      rail.push_back(std::move(slice));
    }
    rails.push_back(std::move(rail));
    teeth.push_back(tt_svd(svd.vh, nx, kUnboundedChi, 1e-28, nullptr));
  }
  return CombTn(grid, std::move(rails), std::move(teeth));
}

// ---------------------------------------------------------------- JSON

namespace {
json matrix_json(const MatrixXc& m) {
  json rows = json::array();
  for (Eigen::Index a = 0; a < m.rows(); ++a) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row.push_back(json::array({m(a, c).real(), m(a, c).imag()}));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXc matrix_from(const json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ConfigError("tensor JSON: expected nested arrays");
  MatrixXc m(static_cast<Eigen::Index>(j.size()),
             static_cast<Eigen::Index>(j[0].size()));
  for (Eigen::Index a = 0; a < m.rows(); ++a) {
    const json& row = j[static_cast<std::size_t>(a)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m.cols())
      throw ConfigError("tensor JSON: ragged array");
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const json& z = row[static_cast<std::size_t>(c)];
      if (!z.is_array() || z.size() != 2)
        throw ConfigError("tensor JSON: scalars are [re, im] pairs");
      m(a, c) = cplx(z[0].get<double>(), z[1].get<double>());
    }
  }
  return m;
}

// A[a][b][c] -> [re, im].
json site_json(const SiteTensor& t) {
  json out = json::array();
  for (Eigen::Index a = 0; a < t.left(); ++a) {
    json phys = json::array();
    for (int b = 0; b < 2; ++b) {
      json row = json::array();
      for (Eigen::Index c = 0; c < t.right(); ++c)
        row.push_back(json::array({t.m[b](a, c).real(), t.m[b](a, c).imag()}));
      phys.push_back(std::move(row));
    }
    out.push_back(std::move(phys));
  }
  return out;
}

SiteTensor site_from(const json& j) {
  if (!j.is_array() || j.empty())
    throw ConfigError("tensor JSON: site tensor must be a nested array");
  const auto l = static_cast<Eigen::Index>(j.size());
  const json& first = j[0];
  if (!first.is_array() || first.size() != 2)
    throw ConfigError("tensor JSON: physical dimension must be 2");
  const auto r = static_cast<Eigen::Index>(first[0].size());
  SiteTensor t(l, r);
  for (Eigen::Index a = 0; a < l; ++a) {
    const json& phys = j[static_cast<std::size_t>(a)];
    if (!phys.is_array() || phys.size() != 2)
      throw ConfigError("tensor JSON: physical dimension must be 2");
    for (int b = 0; b < 2; ++b) {
      const json& row = phys[static_cast<std::size_t>(b)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != r)
        throw ConfigError("tensor JSON: ragged site tensor");
      for (Eigen::Index c = 0; c < r; ++c) {
        const json& z = row[static_cast<std::size_t>(c)];
        if (!z.is_array() || z.size() != 2)
          throw ConfigError("tensor JSON: scalars are [re, im] pairs");
        t.m[b](a, c) = cplx(z[0].get<double>(), z[1].get<double>());
      }
    }
  }
  return t;
}

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const char* what) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok)
      throw ConfigError(std::string(what) + ": unknown field '" + it.key() + "'");
  }
}
}  // namespace

json mps_to_json(const Mps& state) {
  json j;
  j["n"] = state.size();
  j["bond_dims"] = state.bond_dims();
  j["scalar_type"] = "complex128";
  json tensors = json::array();
  for (const auto& t : state.sites()) tensors.push_back(site_json(t));
  j["tensors"] = std::move(tensors);
  return j;
}

Mps mps_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("MPS JSON must be an object");
  reject_unknown(j, {"n", "bond_dims", "scalar_type", "tensors"}, "MPS JSON");
  try {
    if (j.at("scalar_type").get<std::string>() != "complex128")
      throw ConfigError("MPS JSON: unsupported scalar_type");
    std::vector<SiteTensor> sites;
    for (const auto& t : j.at("tensors")) sites.push_back(site_from(t));
    Mps out(std::move(sites));
    if (out.size() != j.at("n").get<int>() ||
        out.bond_dims() != j.at("bond_dims").get<std::vector<int>>())
      throw ConfigError("MPS JSON: n or bond_dims inconsistent with tensors");
    return out;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("MPS JSON: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("MPS JSON: ") + e.what());
  }
}

json comb_to_json(const CombTn& comb) {
  json j;
  j["grid"] = comb.grid();
  j["backbone_bonds"] = comb.backbone_bonds();
  j["tooth_bonds"] = comb.tooth_bonds();
  j["scalar_type"] = "complex128";
  json rails = json::array();
  for (const auto& rail : comb.rails()) {
    json r = json::array();
    for (const auto& slice : rail) r.push_back(matrix_json(slice));
    rails.push_back(std::move(r));
  }
  j["rails"] = std::move(rails);
  json teeth = json::array();
  for (const auto& tooth : comb.teeth()) {
    json t = json::array();
    for (const auto& s : tooth) t.push_back(site_json(s));
    teeth.push_back(std::move(t));
  }
  j["teeth"] = std::move(teeth);
  return j;
}

CombTn comb_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("comb JSON must be an object");
  reject_unknown(j, {"grid", "backbone_bonds", "tooth_bonds", "scalar_type",
                     "rails", "teeth"},
                 "comb JSON");
  try {
    auto grid = j.at("grid").get<gridfunc::GridSpec>();
    std::vector<std::vector<MatrixXc>> rails;
    for (const auto& r : j.at("rails")) {
      std::vector<MatrixXc> rail;
      for (const auto& s : r) rail.push_back(matrix_from(s));
      rails.push_back(std::move(rail));
    }
    std::vector<std::vector<SiteTensor>> teeth;
    for (const auto& t : j.at("teeth")) {
      std::vector<SiteTensor> tooth;
      for (const auto& s : t) tooth.push_back(site_from(s));
      teeth.push_back(std::move(tooth));
    }
    return CombTn(grid, std::move(rails), std::move(teeth));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("comb JSON: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("comb JSON: ") + e.what());
  }
}

}  // namespace combprep::tensornet
