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

#include "combprep/tci.hpp"

#include <cmath>
#include <ostream>
#include <unordered_map>

#include "combprep/errors.hpp"
#include "combprep/parallel.hpp"
#include "combprep/random.hpp"

namespace combprep::tci {

using tensornet::Mps;
using tensornet::SiteTensor;

namespace {

constexpr int kMaxSites = 62;

std::uint64_t random_index(Rng& rng, int n) {
  return n >= 64 ? rng.bits() : (rng.bits() >> (64 - n));
}

// Memoised function evaluation keyed by the integer bitstring.
class Evaluator {
 public:
  Evaluator(const BitFunction& f, int n) : f_(f), n_(n) {}

  void prefetch(const std::vector<std::uint64_t>& keys) {
    std::vector<std::uint64_t> missing;
    for (auto k : keys)
      if (!cache_.count(k)) missing.push_back(k);
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    std::vector<double> values(missing.size());
    parallel_for(missing.size(), [&](std::size_t i) {
      values[i] = call(missing[i]);
    });
    for (std::size_t i = 0; i < missing.size(); ++i) insert(missing[i], values[i]);
  }

  double at(std::uint64_t key) {
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    double v = call(key);
    insert(key, v);
    return v;
  }

  double fmax() const { return fmax_; }
  std::uint64_t evals() const { return evals_; }

 private:
  double call(std::uint64_t key) const {
    Bits bits = bits_of(key, n_);
    double v = f_(bits);
    if (!std::isfinite(v))
      throw EvaluationError("function returned a non-finite value at " +
                            bits_to_string(bits));
    return v;
  }
  void insert(std::uint64_t key, double v) {
    cache_.emplace(key, v);
    ++evals_;
    fmax_ = std::max(fmax_, std::abs(v));
  }

  const BitFunction& f_;
  int n_;
  std::unordered_map<std::uint64_t, double> cache_;
  double fmax_ = 0.0;
  std::uint64_t evals_ = 0;
};

// Full-pivoting Gaussian elimination; returns (row, col) pivots in order of
// selection, stopping at max_rank or when the residual falls to abs_tol.
std::vector<std::pair<int, int>> rrlu(Eigen::MatrixXd m, int max_rank,
                                      double abs_tol) {
  std::vector<std::pair<int, int>> piv;
  const int limit =
      std::min<int>(max_rank, static_cast<int>(std::min(m.rows(), m.cols())));
  while (static_cast<int>(piv.size()) < limit) {
    Eigen::Index r = 0, c = 0;
    double best = m.cwiseAbs().maxCoeff(&r, &c);
    if (!(best > abs_tol)) break;
    piv.emplace_back(static_cast<int>(r), static_cast<int>(c));
    const double p = m(r, c);
    Eigen::VectorXd col = m.col(c);
    Eigen::RowVectorXd row = m.row(r);
    m.noalias() -= col * (row / p);
    m.row(r).setZero();
    m.col(c).setZero();
  }
  return piv;
}

std::uint64_t low_mask(int bits) {
  return bits >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << bits) - 1);
}

class Cross {
 public:
  Cross(const BitFunction& f, int n, int chi_max, const TciOptions& opt)
      : eval_(f, n), n_(n), chi_max_(chi_max), opt_(opt) {
    rows_.assign(static_cast<std::size_t>(n + 1), {});
    cols_.assign(static_cast<std::size_t>(n + 1), {});
  }

  void init(std::uint64_t x0) {
    for (int l = 0; l <= n_; ++l) {
      rows_[static_cast<std::size_t>(l)] = {l == 0 ? 0 : (x0 >> (n_ - l))};
      cols_[static_cast<std::size_t>(l)] = {x0 & low_mask(n_ - l)};
    }
  }

  // Two-site update on sites (l, l+1): refreshes the pivots of bond l+1.
  void update_bond(int l) {
    const auto& left = rows_[static_cast<std::size_t>(l)];
    const auto& right = cols_[static_cast<std::size_t>(l + 2)];
    const int suffix_len = n_ - l - 1;
    const int right_len = n_ - l - 2;
    std::vector<std::uint64_t> row_keys, col_keys;
    for (auto i : left)
      for (std::uint64_t b = 0; b < 2; ++b) row_keys.push_back((i << 1) | b);
    for (std::uint64_t b = 0; b < 2; ++b)
      for (auto j : right) col_keys.push_back((b << right_len) | j);
    Eigen::MatrixXd pi = fill(row_keys, col_keys, suffix_len);
    auto piv = rrlu(pi, chi_max_, opt_.pivot_tol * eval_.fmax());
    if (piv.empty())
      throw EvaluationError(
          "tt_cross: function vanishes on every explored fiber");
    auto& new_rows = rows_[static_cast<std::size_t>(l + 1)];
    auto& new_cols = cols_[static_cast<std::size_t>(l + 1)];
    new_rows.clear();
    new_cols.clear();
    for (auto [r, c] : piv) {
      new_rows.push_back(row_keys[static_cast<std::size_t>(r)]);
      new_cols.push_back(col_keys[static_cast<std::size_t>(c)]);
    }
  }

  // Interpolant from the current pivots after a right-to-left single-site
  // reselection of the column pivots (makes both families nested).
  Mps build(PivotSets* out, double* max_condition) {
    auto rows = rows_;
    auto cols = cols_;
    for (int l = n_ - 1; l >= 1; --l) {
      const auto& r_keys = rows[static_cast<std::size_t>(l)];
      const auto& next = cols[static_cast<std::size_t>(l + 1)];
      const int next_len = n_ - l - 1;
      std::vector<std::uint64_t> col_keys;
      for (std::uint64_t b = 0; b < 2; ++b)
        for (auto j : next) col_keys.push_back((b << next_len) | j);
      Eigen::MatrixXd m = fill(r_keys, col_keys, n_ - l);
      auto piv = rrlu(m, static_cast<int>(r_keys.size()),
                      opt_.pivot_tol * eval_.fmax());
      if (piv.empty())
        throw EvaluationError("tt_cross: singular pivot matrix");
      std::vector<std::uint64_t> nr, nc;
      for (auto [r, c] : piv) {
        nr.push_back(r_keys[static_cast<std::size_t>(r)]);
        nc.push_back(col_keys[static_cast<std::size_t>(c)]);
      }
      rows[static_cast<std::size_t>(l)] = std::move(nr);
      cols[static_cast<std::size_t>(l)] = std::move(nc);
    }
    std::vector<SiteTensor> sites;
    double cond = 1.0;
    for (int l = 0; l < n_; ++l) {
      const auto& ri = rows[static_cast<std::size_t>(l)];
      const auto& cj = cols[static_cast<std::size_t>(l + 1)];
      const auto rl = static_cast<Eigen::Index>(ri.size());
      const auto rr = static_cast<Eigen::Index>(cj.size());
      const int suffix_len = n_ - l - 1;
      Eigen::MatrixXd t(2 * rl, rr);
      std::vector<std::uint64_t> keys;
      for (Eigen::Index b = 0; b < 2; ++b)
        for (Eigen::Index a = 0; a < rl; ++a)
          for (Eigen::Index c = 0; c < rr; ++c)
            keys.push_back((((ri[static_cast<std::size_t>(a)] << 1) |
                             static_cast<std::uint64_t>(b))
                            << suffix_len) |
                           cj[static_cast<std::size_t>(c)]);
      eval_.prefetch(keys);
      std::size_t k = 0;
      for (Eigen::Index b = 0; b < 2; ++b)
        for (Eigen::Index a = 0; a < rl; ++a)
          for (Eigen::Index c = 0; c < rr; ++c) t(b * rl + a, c) = eval_.at(keys[k++]);
      Eigen::MatrixXd a_mat;
      if (l + 1 < n_) {
        Eigen::MatrixXd p =
            fill(rows[static_cast<std::size_t>(l + 1)], cj, suffix_len);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(p.transpose());
        a_mat = lu.solve(t.transpose()).transpose();
        Eigen::JacobiSVD<Eigen::MatrixXd> sv(p);
        const auto& s = sv.singularValues();
        cond = std::max(cond, s(0) / s(s.size() - 1));
      } else {
        a_mat = t;
      }
      SiteTensor site(rl, rr);
      site.m[0] = a_mat.topRows(rl).cast<cplx>();
      site.m[1] = a_mat.bottomRows(rl).cast<cplx>();
      sites.push_back(std::move(site));
    }
    if (out) {
      out->row_pivots = std::move(rows);
      out->column_pivots = std::move(cols);
    }
    if (max_condition) *max_condition = cond;
    return Mps(std::move(sites));
  }

  Evaluator& evaluator() { return eval_; }
  const std::vector<std::vector<std::uint64_t>>& rows() const { return rows_; }
  const std::vector<std::vector<std::uint64_t>>& cols() const { return cols_; }

 private:
  Eigen::MatrixXd fill(const std::vector<std::uint64_t>& row_keys,
                       const std::vector<std::uint64_t>& col_keys,
                       int suffix_len) {
    std::vector<std::uint64_t> keys;
    keys.reserve(row_keys.size() * col_keys.size());
    for (auto r : row_keys)
      for (auto c : col_keys) keys.push_back((r << suffix_len) | c);
    eval_.prefetch(keys);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(row_keys.size()),
                      static_cast<Eigen::Index>(col_keys.size()));
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = eval_.at(keys[k++]);
    return m;
  }

  Evaluator eval_;
  int n_;
  int chi_max_;
  const TciOptions& opt_;
  std::vector<std::vector<std::uint64_t>> rows_;
  std::vector<std::vector<std::uint64_t>> cols_;
};

double relative_error(const Mps& state, const std::vector<std::uint64_t>& pts,
                      const std::vector<double>& fv, int n, bool strict) {
  std::size_t best = 0;
  bool found = false;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (fv[i] != 0.0 && (!found || std::abs(fv[i]) > std::abs(fv[best]))) {
      best = i;
      found = true;
    }
  if (!found) throw MetricError("tci_error: f vanishes at every sampled point");
  const cplx ref = state.amplitude(bits_of(pts[best], n));
  if (ref == cplx(0.0))
    throw MetricError("tci_error: state vanishes at the reference point");
  const cplx scale = fv[best] / ref;
  std::vector<double> terms(pts.size(), 0.0);
  std::vector<std::uint8_t> used(pts.size(), 0);
  parallel_for(pts.size(), [&](std::size_t i) {
    if (fv[i] == 0.0) return;
    cplx psi = scale * state.amplitude(bits_of(pts[i], n));
    terms[i] = std::abs((fv[i] - psi) / fv[i]);
    used[i] = 1;
  });
  CompensatedSum s;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (used[i]) {
      s.add(terms[i]);
      ++count;
    }
  const std::size_t skipped = pts.size() - count;
  if (strict && skipped * 10 > pts.size())
    throw MetricError("tci_error: f vanishes at " + std::to_string(skipped) +
                      " of " + std::to_string(pts.size()) + " sampled points");
  return s.value() / static_cast<double>(count);
}

TciResult dense_small(const BitFunction& f, int n) {
  TciResult res;
  SiteTensor t(1, 1);
  for (std::uint8_t b = 0; b < 2; ++b) {
    Bits bits{b};
    double v = f(bits);
    if (!std::isfinite(v))
      throw EvaluationError("function returned a non-finite value at " +
                            bits_to_string(bits));
    t.m[b](0, 0) = v;
  }
  (void)n;
  res.mps = Mps({t});
  res.converged = true;
  res.n_evals = 2;
  res.sweeps = 0;
  res.pivots.row_pivots = {{0}, {}};
  res.pivots.column_pivots = {{}, {0}};
  return res;
}

}  // namespace

TciResult tt_cross(const BitFunction& f, int n, int chi_max, double tol,
                   int max_sweeps, std::uint64_t seed,
                   const TciOptions& options) {
  if (n < 1) throw ArgumentError("tt_cross: n must be >= 1");
  if (chi_max < 1) throw ArgumentError("tt_cross: chi_max must be >= 1");
  if (max_sweeps < 1) throw ArgumentError("tt_cross: max_sweeps must be >= 1");
  if (n > kMaxSites) throw CapacityError("tt_cross: n > 62 is not supported");
  if (n < 2) return dense_small(f, n);

  Cross cross(f, n, chi_max, options);
  Evaluator& ev = cross.evaluator();

  // First pivot: largest |f| among the supplied and random candidates.
  Rng rng(seed, 1);
  std::vector<std::uint64_t> cand;
  for (const auto& p : options.initial_pivots) {
    if (static_cast<int>(p.size()) != n)
      throw ArgumentError("tt_cross: initial pivot length mismatch");
    cand.push_back(index_of(p));
  }
  for (int i = 0; i < options.random_candidates; ++i)
    cand.push_back(random_index(rng, n));
  if (cand.empty()) cand.push_back(random_index(rng, n));
  ev.prefetch(cand);
  std::uint64_t x0 = cand[0];
  for (auto c : cand)
    if (std::abs(ev.at(c)) > std::abs(ev.at(x0))) x0 = c;
  if (ev.at(x0) == 0.0)
    throw EvaluationError("tt_cross: no candidate pivot with f != 0");
  cross.init(x0);

  // Held-out error sample.
  Rng hold(seed, 2);
  const bool exhaustive = n <= 10 && (1 << n) <= options.holdout_points;
  std::vector<std::uint64_t> pts;
  if (exhaustive) {
    for (std::uint64_t i = 0; i < (std::uint64_t{1} << n); ++i) pts.push_back(i);
  } else {
    for (int i = 0; i < options.holdout_points; ++i)
      pts.push_back(random_index(hold, n));
  }
  ev.prefetch(pts);
  std::vector<double> fv;
  for (auto p : pts) fv.push_back(ev.at(p));

  TciResult res;
  auto prev_rows = cross.rows();
  auto prev_cols = cross.cols();
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    for (int l = n - 2; l >= 0; --l) cross.update_bond(l);
    for (int l = 0; l <= n - 2; ++l) cross.update_bond(l);
    SweepRecord rec;
    rec.sweep = sweep;
    res.mps = cross.build(&res.pivots, &rec.max_pivot_condition);
    rec.max_chi = res.mps.max_bond();
    rec.eps_r = relative_error(res.mps, pts, fv, n, false);
    rec.n_evals = ev.evals();
    res.history.push_back(rec);
    res.sweeps = sweep;
    res.eps_r = rec.eps_r;
    if (rec.eps_r <= tol) {
      res.converged = true;
      break;
    }
    if (cross.rows() == prev_rows && cross.cols() == prev_cols) break;
    prev_rows = cross.rows();
    prev_cols = cross.cols();
  }
  res.n_evals = ev.evals();
  return res;
}

double tci_error(const Mps& state, const BitFunction& f, int n_avg,
                 std::uint64_t seed) {
  if (n_avg < 1) throw ArgumentError("tci_error: n_avg must be >= 1");
  const int n = state.size();
  if (n > 63) throw CapacityError("tci_error: too many sites");
  Rng rng(seed);
  std::vector<std::uint64_t> pts(static_cast<std::size_t>(n_avg));
  for (auto& p : pts) p = random_index(rng, n);
  std::vector<double> fv(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) {
    fv[i] = f(bits_of(pts[i], n));
    if (!std::isfinite(fv[i]))
      throw EvaluationError("tci_error: non-finite function value");
  });
  return relative_error(state, pts, fv, n, true);
}

BitFunction target_function(const gridfunc::TargetSpec& spec,
                            const gridfunc::GridSpec& grid) {
  grid.validate();
  if (spec.dimension() != grid.d)
    throw ArgumentError("target dimension does not match the grid");
  return [spec, grid](BitsView bits) {
    auto x = gridfunc::decode_point(grid, bits);
    return spec.eval(x);
  };
}

namespace {
BuildResult finish(TciResult tci) {
  BuildResult out;
  out.state = tci.mps;
  out.state.canonicalize(0);
  out.state.normalize();
  out.tci = std::move(tci);
  return out;
}
}  // namespace

BuildResult build_target(const gridfunc::TargetSpec& spec,
                         const gridfunc::GridSpec& grid, int chi_max,
                         double tol, int max_sweeps, std::uint64_t seed,
                         TciOptions options) {
  options.initial_pivots.push_back(gridfunc::nearest_grid_bits(grid, spec.mu()));
  return finish(tt_cross(target_function(spec, grid), grid.n_qubits(), chi_max,
                         tol, max_sweeps, seed, options));
}

BuildResult build_target(
    const std::function<double(std::span<const double>)>& f,
    const gridfunc::GridSpec& grid, int chi_max, double tol, int max_sweeps,
    std::uint64_t seed, TciOptions options) {
  grid.validate();
  BitFunction g = [&f, grid](BitsView bits) {
    auto x = gridfunc::decode_point(grid, bits);
    return f(x);
  };
  return finish(tt_cross(g, grid.n_qubits(), chi_max, tol, max_sweeps, seed,
                         options));
}

void write_convergence_csv(std::ostream& os,
                           const std::vector<SweepRecord>& history) {
  os << "sweep,max_chi,eps_r,n_evals\n";
  os.precision(17);
  for (const auto& r : history)
    os << r.sweep << ',' << r.max_chi << ',' << r.eps_r << ',' << r.n_evals
       << '\n';
}

}  // namespace combprep::tci
