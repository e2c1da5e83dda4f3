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

#include "combprep/linalg.hpp"

#include <algorithm>

#include "combprep/errors.hpp"

namespace combprep::linalg {

Svd truncated_svd(const Eigen::MatrixXcd& m, int chi_max, double tol) {
  if (chi_max < 1) throw ArgumentError("truncated_svd: chi_max must be >= 1");
  if (!m.allFinite()) throw NumericalError("truncated_svd: non-finite input");
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const Eigen::Index full = s.size();
  double total = s.squaredNorm();
  Eigen::Index k = full;
  if (total > 0.0) {
    // Grow the discarded tail from the smallest value while it stays
    // within tol.
    double tail = 0.0;
    while (k > 1) {
      double next = tail + s(k - 1) * s(k - 1);
      if (next > tol * total) break;
      tail = next;
      --k;
    }
  } else {
    k = 1;
  }
  k = std::min<Eigen::Index>(k, chi_max);
  k = std::max<Eigen::Index>(k, 1);
  Svd out;
  out.u = svd.matrixU().leftCols(k);
  out.s = s.head(k);
  out.vh = svd.matrixV().leftCols(k).adjoint();
  out.discarded =
      total > 0.0 ? s.tail(full - k).squaredNorm() / total : 0.0;
  return out;
}

void thin_qr(const Eigen::MatrixXcd& m, Eigen::MatrixXcd& q,
             Eigen::MatrixXcd& r) {
  const Eigen::Index k = std::min(m.rows(), m.cols());
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(m);
  q = qr.householderQ() * Eigen::MatrixXcd::Identity(m.rows(), k);
  r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
}

}  // namespace combprep::linalg
