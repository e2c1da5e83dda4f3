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

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace combprep {

using cplx = std::complex<double>;

// A computational-basis bitstring, one entry per qubit (values 0 or 1).
// Qubit 0 is the most significant bit of the first variable.
using Bits = std::vector<std::uint8_t>;
using BitsView = std::span<const std::uint8_t>;

using StateVector = std::vector<cplx>;

using Mat2 = Eigen::Matrix2cd;
using Mat4 = Eigen::Matrix4cd;

inline constexpr double kPi = 3.14159265358979323846;

// Dense index of a bitstring: bits[0] is the most significant bit, so dense
// order equals lexicographic bitstring order.
inline std::uint64_t index_of(BitsView bits) {
  std::uint64_t idx = 0;
  for (auto b : bits) idx = (idx << 1) | (b & 1u);
  return idx;
}

inline Bits bits_of(std::uint64_t index, int n) {
  Bits bits(static_cast<std::size_t>(n));
  for (int k = n - 1; k >= 0; --k) {
    bits[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(index & 1u);
    index >>= 1;
  }
  return bits;
}

inline std::string bits_to_string(BitsView bits) {
  std::string s;
  s.reserve(bits.size());
  for (auto b : bits) s.push_back(b ? '1' : '0');
  return s;
}

Bits bits_from_string(const std::string& s);

// Neumaier-compensated running sum; used wherever a reduction order must not
// affect the last bits of a result.
class CompensatedSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double vector_norm(std::span<const cplx> v);
cplx inner(std::span<const cplx> a, std::span<const cplx> b);  // <a|b>

}  // namespace combprep
