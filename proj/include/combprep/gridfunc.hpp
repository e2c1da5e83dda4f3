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

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "combprep/common.hpp"

namespace combprep::gridfunc {

// Binary grid: d variables with n_x qubits each, variables laid out
// contiguously, most significant bit first.
struct GridSpec {
  int d = 1;
  int n_x = 1;

  int n_qubits() const { return d * n_x; }
  std::uint64_t points_per_variable() const { return std::uint64_t{1} << n_x; }
  void validate() const;

  bool operator==(const GridSpec&) const = default;
};

// sum_a bits[a] * 2^-(a+1).
double decode_bits(BitsView bits);

// Decodes an n-qubit bitstring into the d grid coordinates.
std::vector<double> decode_point(const GridSpec& grid, BitsView bits);

// Grid point nearest to x (per coordinate, rounding to the closest multiple
// of 2^-n_x and clamping into the grid).
Bits nearest_grid_bits(const GridSpec& grid, std::span<const double> x);

enum class Family { gaussian, ricker, student_t };
enum class CovarianceFamily { tridiagonal, inverse_square };

std::string to_string(Family f);
std::string to_string(CovarianceFamily f);

Eigen::MatrixXd covariance_matrix(
    CovarianceFamily family, int d, double s0, double gamma);

// A named target function family with its parameters. For the Gaussian the
// interpolation parameter lambda scales the exponent; for the other
// families lambda is carried but does not change the function.
class TargetSpec {
 public:
  static TargetSpec gaussian(
      std::vector<double> mu, const Eigen::MatrixXd& sigma,
      double lambda = 1.0);
  static TargetSpec gaussian(
      std::vector<double> mu, CovarianceFamily cov, double s0, double gamma,
      double lambda = 1.0);
  static TargetSpec ricker(
      std::vector<double> mu, double sigma, double lambda = 1.0);
  static TargetSpec student_t(
      std::vector<double> mu, const Eigen::MatrixXd& sigma,
      double lambda = 1.0);
  static TargetSpec student_t(
      std::vector<double> mu, CovarianceFamily cov, double s0, double gamma,
      double lambda = 1.0);

  Family family() const { return family_; }
  int dimension() const { return static_cast<int>(mu_.size()); }
  const std::vector<double>& mu() const { return mu_; }
  double lambda() const { return lambda_; }
  const Eigen::MatrixXd& sigma_matrix() const { return sigma_; }
  const Eigen::MatrixXd& sigma_inverse() const { return sigma_inv_; }
  double sigma_scalar() const { return sigma_scalar_; }
  const std::optional<CovarianceFamily>& covariance_family() const {
    return cov_family_;
  }
  double s0() const { return s0_; }
  double gamma() const { return gamma_; }

  TargetSpec with_lambda(double lambda) const;

  // Unnormalised function value at x (length d).
  double eval(std::span<const double> x) const;

  // (x - mu)^T Sigma^-1 (x - mu) for the matrix families, |x - mu|^2 for
  // Ricker.
  double quadratic_form(std::span<const double> x) const;

 private:
  TargetSpec() = default;
  void finalize();

  Family family_ = Family::gaussian;
  std::vector<double> mu_;
  Eigen::MatrixXd sigma_;
  Eigen::MatrixXd sigma_inv_;
  double sigma_scalar_ = 0.0;
  std::optional<CovarianceFamily> cov_family_;
  double s0_ = 0.0;
  double gamma_ = 0.0;
  double lambda_ = 1.0;
};

double eval_target(const TargetSpec& spec, std::span<const double> x);

// f(x, lambda) as a function handle.
using LambdaFamily =
    std::function<double(std::span<const double> x, double lambda)>;

// lambda-dependence as defined on the spec itself (exponent scaling for the
// Gaussian, constant in lambda otherwise).
LambdaFamily lambda_family(const TargetSpec& spec);

// Largest qubit count for which dense 2^n enumeration is offered.
inline constexpr int kDenseEnumerationLimit = 26;

// Dense vector of f over the whole grid, optionally normalised.
StateVector dense_state(
    const GridSpec& grid, const std::function<double(std::span<const double>)>& f,
    bool normalize);
StateVector dense_state(const GridSpec& grid, const TargetSpec& spec,
                        bool normalize);

enum class Difference { forward, central };

// || |f(lambda+h)> - |f(lambda)> || / h over normalised dense states
// (central: || |f(lambda+h)> - |f(lambda-h)> || / 2h).
double target_derivative_norm(
    const LambdaFamily& family, const GridSpec& grid, double lambda, double h,
    Difference scheme = Difference::forward);
double target_derivative_norm(
    const TargetSpec& spec, const GridSpec& grid, double lambda, double h,
    Difference scheme = Difference::forward);

// JSON (de)serialisation. Unknown fields are rejected.
void to_json(nlohmann::json& j, const GridSpec& grid);
void from_json(const nlohmann::json& j, GridSpec& grid);
nlohmann::json target_to_json(const TargetSpec& spec);
TargetSpec target_from_json(const nlohmann::json& j);

}  // namespace combprep::gridfunc
