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

#include <cmath>
#include <cstdlib>
#include <string>

#include "combprep/common.hpp"
#include "combprep/errors.hpp"
#include "combprep/parallel.hpp"
#include "combprep/random.hpp"

namespace combprep {

Bits bits_from_string(const std::string& s) {
  Bits bits;
  bits.reserve(s.size());
  for (char c : s) {
    if (c == '0')
      bits.push_back(0);
    else if (c == '1')
      bits.push_back(1);
    else
      throw ArgumentError("invalid bit character in '" + s + "'");
  }
  return bits;
}

double vector_norm(std::span<const cplx> v) {
  CompensatedSum s;
  for (const auto& a : v) s.add(std::norm(a));
  return std::sqrt(s.value());
}

cplx inner(std::span<const cplx> a, std::span<const cplx> b) {
  if (a.size() != b.size()) throw ArgumentError("inner: size mismatch");
  CompensatedSum re, im;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cplx t = std::conj(a[i]) * b[i];
    re.add(t.real());
    im.add(t.imag());
  }
  return {re.value(), im.value()};
}

namespace {
int initial_threads() {
  if (const char* env = std::getenv("COMBPREP_THREADS")) {
    int t = std::atoi(env);
    if (t > 0) return t;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}
std::atomic<int>& thread_setting() {
  static std::atomic<int> threads{initial_threads()};
  return threads;
}
}  // namespace

int num_threads() { return thread_setting().load(); }

void set_num_threads(int threads) {
  if (threads < 1) throw ArgumentError("thread count must be >= 1");
  thread_setting().store(threads);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = uniform(-1.0, 1.0);
    v = uniform(-1.0, 1.0);
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  has_spare_ = true;
  return u * m;
}

}  // namespace combprep
