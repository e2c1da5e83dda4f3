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

#include <Eigen/Dense>

namespace combprep::linalg {

struct Svd {
  Eigen::MatrixXcd u;        // rows x k
  Eigen::VectorXd s;         // k
  Eigen::MatrixXcd vh;       // k x cols
  double discarded = 0.0;    // relative discarded squared weight
};

// Thin SVD keeping the smallest rank k <= chi_max whose discarded squared
// weight, relative to the total, does not exceed tol (k >= 1).
Svd truncated_svd(const Eigen::MatrixXcd& m, int chi_max, double tol);

// Thin QR: m = q * r with q having orthonormal columns.
void thin_qr(const Eigen::MatrixXcd& m, Eigen::MatrixXcd& q,
             Eigen::MatrixXcd& r);

}  // namespace combprep::linalg
