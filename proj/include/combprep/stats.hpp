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
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "combprep/circuit.hpp"
#include "combprep/common.hpp"
#include "combprep/gridfunc.hpp"
#include "combprep/noise.hpp"

namespace combprep::stats {

// Measured bitstrings decoded into grid coordinates, one row per shot.
struct ShotTable {
  gridfunc::GridSpec grid;
  Eigen::MatrixXd values;  // n_shots x d

  std::size_t n_shots() const { return static_cast<std::size_t>(values.rows()); }
  static ShotTable from_bits(const gridfunc::GridSpec& grid, const std::vector<Bits>& shots);
};

struct Moments {
  std::size_t n_shots = 0;
  Eigen::VectorXd mean;
  Eigen::VectorXd mean_err;  // 2 standard errors
  Eigen::MatrixXd cov;       // plain averages, 1/n
  Eigen::MatrixXd cov_var;   // (cov_ij^2 + cov_ii cov_jj) / (n - 1)
  Eigen::MatrixXd cov_err;   // 2 sqrt(cov_var)
};

Moments moments(const ShotTable& shots);

struct ExactMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};
// Moments of the grid distribution with the given probabilities (2^n entries).
ExactMoments distribution_moments(const gridfunc::GridSpec& grid, std::span<const double> probs);
// Moments of |f|^2 on the grid.
ExactMoments target_moments(const gridfunc::GridSpec& grid, const gridfunc::TargetSpec& spec);

inline constexpr int kEpsMaxLimit = 20;

// max_x |F(x) - N_F <x|phi>| with N_F = ||F|| and the global phase of phi
// chosen so that <F|phi> is real and non-negative.
double eps_max(std::span<const double> F, std::span<const cplx> phi);

struct CovarianceConfig {
  gridfunc::GridSpec grid;
  gridfunc::TargetSpec target =
      gridfunc::TargetSpec::gaussian({0.5}, Eigen::MatrixXd::Constant(1, 1, 0.01));
  int layers = 3;
  std::vector<double> theta;       // trained parameters
  std::size_t n_shots = 10000;
  std::vector<std::uint64_t> seeds{0};
  std::optional<noise::NoiseModel> noise;  // also sample the noisy native circuit
  double prune_threshold = 1e-4;
};

struct CovarianceRun {
  std::uint64_t seed = 0;
  Moments noiseless;
  std::optional<Moments> noisy;
  // fraction of the d(d+1)/2 distinct entries with |cov - exact| <= cov_err
  double within_noiseless = 0.0;
  std::optional<double> within_noisy;
  // same against the circuit's own exact moments (sampling error only)
  double within_circuit = 0.0;
};

struct CovarianceReport {
  ExactMoments target;   // |f|^2 on the grid
  ExactMoments circuit;  // |phi|^2 of the noiseless circuit
  Eigen::MatrixXd sigma;  // the continuous Sigma of the spec, for reference
  std::vector<CovarianceRun> runs;
  double within_noiseless = 0.0;  // pooled over runs
  std::optional<double> within_noisy;
  double within_circuit = 0.0;
};

CovarianceReport covariance_experiment(const CovarianceConfig& config);

// Fraction of distinct entries of cov within err of reference.
double fraction_within(const Eigen::MatrixXd& cov, const Eigen::MatrixXd& err,
                       const Eigen::MatrixXd& reference);

nlohmann::json moments_to_json(const Moments& m);
nlohmann::json report_to_json(const CovarianceReport& r);
CovarianceConfig covariance_from_json(const nlohmann::json& j);
nlohmann::json covariance_to_json(const CovarianceConfig& c);

}  // namespace combprep::stats
