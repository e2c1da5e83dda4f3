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

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "combprep/common.hpp"
#include "combprep/gridfunc.hpp"
#include "combprep/tensornet.hpp"

namespace combprep::tci {

using BitFunction = std::function<double(BitsView)>;

struct TciOptions {
  // Pivots whose magnitude falls below pivot_tol * max|f| are not added.
  double pivot_tol = 1e-14;
  // Extra candidates for the first pivot (e.g. the expected maximum).
  std::vector<Bits> initial_pivots;
  // Number of random candidates for the first pivot.
  int random_candidates = 64;
  // Size of the held-out sample used for the per-sweep error.
  int holdout_points = 1024;
};

struct SweepRecord {
  int sweep = 0;
  int max_chi = 0;
  double eps_r = 0.0;
  std::uint64_t n_evals = 0;
  double max_pivot_condition = 0.0;
};

// Pivot sets: row_pivots[l] holds prefixes of length l, column_pivots[l]
// suffixes of length n - l, both stored as integers (big-endian).
struct PivotSets {
  std::vector<std::vector<std::uint64_t>> row_pivots;
  std::vector<std::vector<std::uint64_t>> column_pivots;
};

struct TciResult {
  tensornet::Mps mps;  // interpolant of f (not normalised)
  bool converged = false;
  double eps_r = 0.0;  // on the held-out sample
  int sweeps = 0;
  std::uint64_t n_evals = 0;
  std::vector<SweepRecord> history;
  PivotSets pivots;
};

TciResult tt_cross(const BitFunction& f, int n, int chi_max, double tol,
                   int max_sweeps, std::uint64_t seed,
                   const TciOptions& options = {});

// Mean relative error over n_avg uniformly random bitstrings, after
// rescaling the state to f at the largest sampled |f|.
double tci_error(const tensornet::Mps& state, const BitFunction& f,
                 int n_avg, std::uint64_t seed);

// f(decode(bits)) for a target spec on a grid.
BitFunction target_function(const gridfunc::TargetSpec& spec,
                            const gridfunc::GridSpec& grid);

struct BuildResult {
  tensornet::Mps state;  // normalised
  TciResult tci;
};

BuildResult build_target(const gridfunc::TargetSpec& spec,
                         const gridfunc::GridSpec& grid, int chi_max,
                         double tol, int max_sweeps = 24,
                         std::uint64_t seed = 0, TciOptions options = {});

// Same, for an arbitrary function of the decoded point.
BuildResult build_target(
    const std::function<double(std::span<const double>)>& f,
    const gridfunc::GridSpec& grid, int chi_max, double tol,
    int max_sweeps = 24, std::uint64_t seed = 0, TciOptions options = {});

void write_convergence_csv(std::ostream& os,
                           const std::vector<SweepRecord>& history);

}  // namespace combprep::tci
