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

#include <exception>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "combprep/gridfunc.hpp"
#include "combprep/iqsp.hpp"
#include "combprep/sim.hpp"

namespace combprep::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitCapacity = 3,
  kExitNotConverged = 4,
};

int exit_code_for(const std::exception& e);
std::string error_type(const std::exception& e);

std::string sha256_hex(std::string_view data);
// Hash of the canonical (sorted-key, compact) dump.
std::string config_hash(const nlohmann::json& config);

// ------------------------------------------------------------- gradient scan

struct GradScanConfig {
  std::vector<int> dims{2, 3, 4};
  int n_x = 6;
  int layers = 3;
  // Gaussian target: mu_i = mu, covariance family with s0 and gamma.
  double mu = 0.5;
  gridfunc::CovarianceFamily covariance = gridfunc::CovarianceFamily::tridiagonal;
  double s0 = 0.05;
  double gamma = 0.2;
  bool random_init = true;
  int random_repeats = 100;
  bool warm_start = true;
  int warm_seeds = 5;
  // IQSP schedule for the warm-start runs. Training at lambda = 1 is
  // skipped: only the initial values of each step enter the scan.
  iqsp::Schedule schedule = iqsp::Schedule::uniform(0.05, 1000, 0);
  sim::Backend backend;
  int tci_chi = 64;
  std::uint64_t seed = 0;
};

struct GradScanSummary {
  std::string mode;
  int n = 0;
  std::size_t rows = 0;
  double mean_avg_grad = 0.0;
  double mean_overlap = 0.0;
};

struct GradScanResult {
  std::vector<sim::ScanRow> rows;
  std::vector<GradScanSummary> summary;
  double random_slope = 0.0;  // d ln(mean <|G|>) / dn over the random-init means
};

GradScanConfig grad_scan_from_json(const nlohmann::json& j);
nlohmann::json grad_scan_to_json(const GradScanConfig& c);
gridfunc::TargetSpec scan_target(const GradScanConfig& c, int d);
// log_progress receives one line per finished (mode, n) block.
GradScanResult grad_scan(const GradScanConfig& c, std::ostream* log = nullptr);

// Least-squares slope of ln(y) against x.
double log_slope(const std::vector<double>& x, const std::vector<double>& y);

// ------------------------------------------------------------- baseline

struct BaselineConfig {
  gridfunc::GridSpec grid{2, 6};
  std::vector<gridfunc::TargetSpec> targets;  // default: Ricker and Student-t
  std::vector<int> layers{1, 2, 3};
  iqsp::Schedule schedule = iqsp::Schedule::uniform();
  double prune_threshold = 1e-4;
  int tci_chi = 64;
  std::uint64_t seed = 0;
};

struct BaselinePoint {
  std::string family;
  int layers = 0;
  int su4_gates = 0;
  int rzz_gates = 0;  // after compilation and pruning
  double eps_max = 0.0;
  double infidelity = 0.0;
  std::vector<double> theta;
};

// Ricker (sigma = 0.25) and Student-t (Sigma = 0.05 I), both centred at 0.5.
std::vector<gridfunc::TargetSpec> default_baseline_targets(const gridfunc::GridSpec& grid);

BaselineConfig baseline_from_json(const nlohmann::json& j);
nlohmann::json baseline_to_json(const BaselineConfig& c);
std::vector<BaselinePoint> compare_baseline(const BaselineConfig& c, std::ostream* log = nullptr);

// ------------------------------------------------------------- entry point

// Runs one subcommand. Output files go to --out; errors are reported as a
// JSON record on err and in error.json.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int main(int argc, char** argv);

}  // namespace combprep::cli
