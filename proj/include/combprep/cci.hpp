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

#include "json.hpp"

#include "combprep/circuit.hpp"
#include "combprep/common.hpp"
#include "combprep/gridfunc.hpp"
#include "combprep/sim.hpp"

namespace combprep::cci {

// Single-bit flips of p (bit order) followed by flips of adjacent bit pairs.
std::vector<Bits> propose_pivots(BitsView p);

class PivotSet {
 public:
  explicit PivotSet(std::size_t capacity = 0) : capacity_(capacity) {}

  std::size_t size() const { return pivots_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return pivots_.empty(); }
  bool full() const { return pivots_.size() >= capacity_; }
  const std::vector<Bits>& pivots() const { return pivots_; }
  const std::vector<double>& values() const { return values_; }

  bool contains(BitsView p) const;
  // Returns false (and changes nothing) for a duplicate; CapacityError when full.
  bool add(Bits p, double value);
  void remove(std::size_t i);

 private:
  std::size_t capacity_;
  std::vector<Bits> pivots_;
  std::vector<double> values_;
};

// Target values on basis states, divided by the grid norm of f.
class CciTarget {
 public:
  CciTarget(gridfunc::GridSpec grid, std::function<double(std::span<const double>)> f);
  CciTarget(gridfunc::GridSpec grid, const gridfunc::TargetSpec& spec);

  double operator()(BitsView bits) const;
  double norm() const { return norm_; }
  const gridfunc::GridSpec& grid() const { return grid_; }
  Bits argmax_hint() const { return hint_; }
  void set_argmax_hint(Bits b) { hint_ = std::move(b); }

 private:
  gridfunc::GridSpec grid_;
  std::function<double(std::span<const double>)> f_;
  double norm_ = 1.0;
  Bits hint_;
};

inline constexpr int kCciNormLimit = 20;

using AmplitudeFunction = std::function<cplx(BitsView)>;
AmplitudeFunction amplitudes_of(const sim::State& state);

// +1 or -1 so that the amplitude on the first pivot has non-negative real part.
double phase_sign(const PivotSet& pivots, const AmplitudeFunction& amplitude);

// sum_i |f(p_i) - s <p_i|phi>|^2 with s = phase_sign.
double cci_cost(const PivotSet& pivots, const AmplitudeFunction& amplitude);
double cci_cost(const PivotSet& pivots, const sim::State& state);

struct GrowResult {
  bool added = false;
  bool improved = false;  // some candidate raised the cost above C(P)
  Bits pivot;
  double cost_before = 0.0;
  double cost_after = 0.0;
};

// Adds the candidate among the proposals of all pivots that maximizes
// C(P + {q}), ties going to the lexicographically smallest bitstring. Adds
// the smallest candidate when none raises the cost; adds nothing when every
// proposal is already a pivot.
GrowResult grow_pivots(PivotSet& pivots, const CciTarget& target,
                       const AmplitudeFunction& amplitude);

struct CostGradient {
  double value = 0.0;
  std::vector<double> grad;
};
CostGradient cci_cost_gradient(const circuit::Circuit& c, const PivotSet& pivots);

struct CciConfig {
  gridfunc::GridSpec grid;
  gridfunc::TargetSpec target =
      gridfunc::TargetSpec::gaussian({0.5}, Eigen::MatrixXd::Constant(1, 1, 0.01));
  int layers = 2;
  std::size_t max_pivots = 8;
  int epochs = 500;           // Adam epochs per optimization phase
  double lr = 1e-2;
  int max_iterations = 40;    // growth plus refresh iterations
  double tol = 1e-10;
  double init_jitter = 1e-6;
  bool random_first_pivot = false;
  std::uint64_t seed = 0;
};

struct CciRecord {
  int iteration = 0;
  std::size_t n_pivots = 0;
  double cost_start = 0.0;   // at the start of the optimization phase
  double cost = 0.0;         // after it
  double infidelity = 0.0;   // full state against the normalized target
  std::string action;        // grow, grow-fallback, refresh, converged, exhausted
  Bits pivot;                // pivot added by the action, if any
};

struct CciResult {
  std::vector<double> theta;
  std::vector<Bits> pivots;
  std::vector<CciRecord> trace;
  double final_cost = 0.0;
  double final_infidelity = 0.0;
  bool converged = false;
};

CciResult run_cci(const CciConfig& config);

nlohmann::json result_to_json(const CciResult& result);
void write_trace_csv(std::ostream& os, const CciResult& result);
CciConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const CciConfig& config);

}  // namespace combprep::cci
