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

#include "combprep/gridfunc.hpp"

#include <cmath>
#include <set>

#include "combprep/errors.hpp"
#include "combprep/parallel.hpp"

namespace combprep::gridfunc {

using nlohmann::json;

void GridSpec::validate() const {
  if (d < 1) throw ConfigError("grid: d must be >= 1");
  if (n_x < 1) throw ConfigError("grid: n_x must be >= 1");
  if (n_x > 52) throw ConfigError("grid: n_x must be <= 52");
}

double decode_bits(BitsView bits) {
  double x = 0.0;
  double w = 0.5;
  for (auto b : bits) {
    if (b) x += w;
    w *= 0.5;
  }
  return x;
}

std::vector<double> decode_point(const GridSpec& grid, BitsView bits) {
  if (static_cast<int>(bits.size()) != grid.n_qubits())
    throw ArgumentError("decode_point: bitstring length mismatch");
  std::vector<double> x(static_cast<std::size_t>(grid.d));
  for (int i = 0; i < grid.d; ++i)
    x[static_cast<std::size_t>(i)] = decode_bits(
        bits.subspan(static_cast<std::size_t>(i * grid.n_x),
                     static_cast<std::size_t>(grid.n_x)));
  return x;
}

Bits nearest_grid_bits(const GridSpec& grid, std::span<const double> x) {
  if (static_cast<int>(x.size()) != grid.d)
    throw ArgumentError("nearest_grid_bits: dimension mismatch");
  Bits bits;
  bits.reserve(static_cast<std::size_t>(grid.n_qubits()));
  const double scale = std::ldexp(1.0, grid.n_x);
  const double top = scale - 1.0;
  for (double xi : x) {
    double k = std::clamp(std::round(xi * scale), 0.0, top);
    auto idx = static_cast<std::uint64_t>(k);
    Bits b = bits_of(idx, grid.n_x);
    bits.insert(bits.end(), b.begin(), b.end());
  }
  return bits;
}

std::string to_string(Family f) {
  switch (f) {
    case Family::gaussian:
      return "gaussian";
    case Family::ricker:
      return "ricker";
    case Family::student_t:
      return "student_t";
  }
  return "?";
}

std::string to_string(CovarianceFamily f) {
  return f == CovarianceFamily::tridiagonal ? "tridiagonal" : "inverse_square";
}

Eigen::MatrixXd covariance_matrix(
    CovarianceFamily family, int d, double s0, double gamma) {
  if (d < 1) throw ConfigError("covariance_matrix: d must be >= 1");
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (i == j) {
        s(i, j) = s0;
      } else if (family == CovarianceFamily::tridiagonal) {
        if (std::abs(i - j) == 1) s(i, j) = gamma * s0;
      } else {
        double dist = static_cast<double>(std::abs(i - j));
        s(i, j) = gamma * s0 / (dist * dist);
      }
    }
  }
  return s;
}

TargetSpec TargetSpec::gaussian(
    std::vector<double> mu, const Eigen::MatrixXd& sigma, double lambda) {
  TargetSpec t;
  t.family_ = Family::gaussian;
  t.mu_ = std::move(mu);
  t.sigma_ = sigma;
  t.lambda_ = lambda;
  t.finalize();
  return t;
}

TargetSpec TargetSpec::gaussian(
    std::vector<double> mu, CovarianceFamily cov, double s0, double gamma,
    double lambda) {
  const int d = static_cast<int>(mu.size());
  TargetSpec t = gaussian(std::move(mu), covariance_matrix(cov, d, s0, gamma),
                          lambda);
  t.cov_family_ = cov;
  t.s0_ = s0;
  t.gamma_ = gamma;
  return t;
}

TargetSpec TargetSpec::ricker(std::vector<double> mu, double sigma,
                              double lambda) {
  TargetSpec t;
  t.family_ = Family::ricker;
  t.mu_ = std::move(mu);
  t.sigma_scalar_ = sigma;
  t.lambda_ = lambda;
  t.finalize();
  return t;
}

TargetSpec TargetSpec::student_t(
    std::vector<double> mu, const Eigen::MatrixXd& sigma, double lambda) {
  TargetSpec t;
  t.family_ = Family::student_t;
  t.mu_ = std::move(mu);
  t.sigma_ = sigma;
  t.lambda_ = lambda;
  t.finalize();
  return t;
}

TargetSpec TargetSpec::student_t(
    std::vector<double> mu, CovarianceFamily cov, double s0, double gamma,
    double lambda) {
  const int d = static_cast<int>(mu.size());
  TargetSpec t = student_t(std::move(mu), covariance_matrix(cov, d, s0, gamma),
                           lambda);
  t.cov_family_ = cov;
  t.s0_ = s0;
  t.gamma_ = gamma;
  return t;
}

void TargetSpec::finalize() {
  const int d = dimension();
  if (d < 1) throw ConfigError("target: mu must have at least one entry");
  if (!std::isfinite(lambda_) || lambda_ < 0.0 || lambda_ > 1.0)
    throw ConfigError("target: lambda must lie in [0, 1]");
  for (double m : mu_)
    if (!std::isfinite(m)) throw ConfigError("target: mu must be finite");
  if (family_ == Family::ricker) {
    if (!(sigma_scalar_ > 0.0) || !std::isfinite(sigma_scalar_))
      throw ConfigError("target: Ricker sigma must be positive");
    return;
  }
  if (sigma_.rows() != d || sigma_.cols() != d)
    throw ConfigError("target: sigma_matrix must be d x d");
  if (!sigma_.allFinite()) throw ConfigError("target: sigma_matrix not finite");
  const double scale = std::max(1.0, sigma_.cwiseAbs().maxCoeff());
  if ((sigma_ - sigma_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ConfigError("target: sigma_matrix must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma_);
  if (llt.info() != Eigen::Success)
    throw ConfigError("target: sigma_matrix must be positive definite");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma_);
  if (eig.eigenvalues().minCoeff() <= 0.0)
    throw ConfigError("target: sigma_matrix must be positive definite");
  sigma_inv_ = llt.solve(Eigen::MatrixXd::Identity(d, d));
  sigma_inv_ = 0.5 * (sigma_inv_ + sigma_inv_.transpose()).eval();
}

TargetSpec TargetSpec::with_lambda(double lambda) const {
  if (!std::isfinite(lambda) || lambda < 0.0 || lambda > 1.0)
    throw ConfigError("target: lambda must lie in [0, 1]");
  TargetSpec t = *this;
  t.lambda_ = lambda;
  return t;
}

double TargetSpec::quadratic_form(std::span<const double> x) const {
  const int d = dimension();
  if (static_cast<int>(x.size()) != d)
    throw ArgumentError("target: point dimension mismatch");
  if (family_ == Family::ricker) {
    double r2 = 0.0;
    for (int i = 0; i < d; ++i) {
      double dx = x[static_cast<std::size_t>(i)] - mu_[static_cast<std::size_t>(i)];
      r2 += dx * dx;
    }
    return r2;
  }
  double q = 0.0;
  for (int i = 0; i < d; ++i) {
    double dxi = x[static_cast<std::size_t>(i)] - mu_[static_cast<std::size_t>(i)];
    double row = 0.0;
    for (int j = 0; j < d; ++j)
      row += sigma_inv_(i, j) *
             (x[static_cast<std::size_t>(j)] - mu_[static_cast<std::size_t>(j)]);
    q += dxi * row;
  }
  return q;
}

double TargetSpec::eval(std::span<const double> x) const {
  const double q = quadratic_form(x);
  switch (family_) {
    case Family::gaussian:
      return std::exp(-0.5 * lambda_ * q);
    case Family::ricker: {
      const double u = q / (2.0 * sigma_scalar_ * sigma_scalar_);
      return (1.0 - u) * std::exp(-u);
    }
    case Family::student_t:
      return std::pow(1.0 + q, -1.5);
  }
  return 0.0;
}

double eval_target(const TargetSpec& spec, std::span<const double> x) {
  return spec.eval(x);
}

LambdaFamily lambda_family(const TargetSpec& spec) {
  if (spec.family() == Family::gaussian) {
    return [spec](std::span<const double> x, double lambda) {
      return std::exp(-0.5 * lambda * spec.quadratic_form(x));
    };
  }
  return [spec](std::span<const double> x, double) { return spec.eval(x); };
}

StateVector dense_state(
    const GridSpec& grid,
    const std::function<double(std::span<const double>)>& f, bool normalize) {
  grid.validate();
  const int n = grid.n_qubits();
  if (n > kDenseEnumerationLimit)
    throw CapacityError("dense_state: n = " + std::to_string(n) +
                        " exceeds the dense enumeration limit");
  const std::uint64_t dim = std::uint64_t{1} << n;
  StateVector v(dim);
  const std::uint64_t per = grid.points_per_variable();
  const double step = std::ldexp(1.0, -grid.n_x);
  constexpr std::uint64_t kChunk = 1u << 14;
  const std::uint64_t chunks = (dim + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    std::vector<double> x(static_cast<std::size_t>(grid.d));
    const std::uint64_t lo = c * kChunk;
    const std::uint64_t hi = std::min(dim, lo + kChunk);
    for (std::uint64_t idx = lo; idx < hi; ++idx) {
      std::uint64_t rest = idx;
      for (int i = grid.d - 1; i >= 0; --i) {
        x[static_cast<std::size_t>(i)] = static_cast<double>(rest % per) * step;
        rest /= per;
      }
      v[idx] = f(x);
    }
  });
  if (normalize) {
    const double nrm = vector_norm(v);
    if (!(nrm > 0.0) || !std::isfinite(nrm))
      throw StateError("dense_state: function has zero or non-finite norm");
    for (auto& a : v) a /= nrm;
  }
  return v;
}

StateVector dense_state(const GridSpec& grid, const TargetSpec& spec,
                        bool normalize) {
  return dense_state(
      grid, [&spec](std::span<const double> x) { return spec.eval(x); },
      normalize);
}

namespace {
StateVector family_state(const LambdaFamily& family, const GridSpec& grid,
                         double lambda) {
  return dense_state(
      grid,
      [&family, lambda](std::span<const double> x) { return family(x, lambda); },
      true);
}

double distance(const StateVector& a, const StateVector& b) {
  CompensatedSum s;
  for (std::size_t i = 0; i < a.size(); ++i) s.add(std::norm(a[i] - b[i]));
  return std::sqrt(s.value());
}
}  // namespace

double target_derivative_norm(
    const LambdaFamily& family, const GridSpec& grid, double lambda, double h,
    Difference scheme) {
  if (!(h > 0.0)) throw ArgumentError("target_derivative_norm: h must be > 0");
  if (scheme == Difference::forward) {
    StateVector a = family_state(family, grid, lambda);
    StateVector b = family_state(family, grid, lambda + h);
    return distance(a, b) / h;
  }
  StateVector a = family_state(family, grid, lambda - h);
  StateVector b = family_state(family, grid, lambda + h);
  return distance(a, b) / (2.0 * h);
}

double target_derivative_norm(
    const TargetSpec& spec, const GridSpec& grid, double lambda, double h,
    Difference scheme) {
  return target_derivative_norm(lambda_family(spec), grid, lambda, h, scheme);
}

// ---------------------------------------------------------------- JSON

void to_json(json& j, const GridSpec& grid) {
  j = json{{"d", grid.d}, {"n_x", grid.n_x}};
}

void from_json(const json& j, GridSpec& grid) {
  if (!j.is_object()) throw ConfigError("grid must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "d" && it.key() != "n_x")
      throw ConfigError("grid: unknown field '" + it.key() + "'");
  if (!j.contains("d") || !j.contains("n_x"))
    throw ConfigError("grid: fields 'd' and 'n_x' are required");
  grid.d = j.at("d").get<int>();
  grid.n_x = j.at("n_x").get<int>();
  grid.validate();
}

namespace {
json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty())
    throw ConfigError("target: sigma_matrix must be a nested array");
  const auto r = static_cast<Eigen::Index>(j.size());
  const auto c = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const json& row = j.at(static_cast<std::size_t>(i));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c)
      throw ConfigError("target: sigma_matrix rows must have equal length");
    for (Eigen::Index k = 0; k < c; ++k)
      m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

Family family_from_string(const std::string& s) {
  if (s == "gaussian") return Family::gaussian;
  if (s == "ricker") return Family::ricker;
  if (s == "student_t") return Family::student_t;
  throw ConfigError("target: unknown family '" + s + "'");
}

CovarianceFamily cov_from_string(const std::string& s) {
  if (s == "tridiagonal") return CovarianceFamily::tridiagonal;
  if (s == "inverse_square") return CovarianceFamily::inverse_square;
  throw ConfigError("target: unknown covariance_family '" + s + "'");
}
}  // namespace

json target_to_json(const TargetSpec& spec) {
  json j;
  j["family"] = to_string(spec.family());
  j["mu"] = spec.mu();
  j["lambda"] = spec.lambda();
  if (spec.family() == Family::ricker) {
    j["sigma_scalar"] = spec.sigma_scalar();
    return j;
  }
  j["sigma_matrix"] = matrix_to_json(spec.sigma_matrix());
  if (spec.covariance_family()) {
    j["covariance_family"] = to_string(*spec.covariance_family());
    j["s0"] = spec.s0();
    j["gamma"] = spec.gamma();
  }
  return j;
}

TargetSpec target_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("target must be an object");
  static const std::set<std::string> known = {
      "family", "mu",    "lambda", "sigma_matrix", "sigma_scalar",
      "covariance_family", "s0", "gamma"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("target: unknown field '" + it.key() + "'");
  if (!j.contains("family") || !j.contains("mu"))
    throw ConfigError("target: fields 'family' and 'mu' are required");
  try {
    const Family family = family_from_string(j.at("family").get<std::string>());
    auto mu = j.at("mu").get<std::vector<double>>();
    const double lambda = j.value("lambda", 1.0);
    const int d = static_cast<int>(mu.size());
    if (family == Family::ricker) {
      if (!j.contains("sigma_scalar"))
        throw ConfigError("target: Ricker requires 'sigma_scalar'");
      return TargetSpec::ricker(std::move(mu),
                                j.at("sigma_scalar").get<double>(), lambda);
    }
    std::optional<CovarianceFamily> cov;
    double s0 = 0.0, gamma = 0.0;
    if (j.contains("covariance_family")) {
      cov = cov_from_string(j.at("covariance_family").get<std::string>());
      if (!j.contains("s0") || !j.contains("gamma"))
        throw ConfigError("target: covariance_family requires 's0' and 'gamma'");
      s0 = j.at("s0").get<double>();
      gamma = j.at("gamma").get<double>();
    }
    Eigen::MatrixXd sigma;
    if (j.contains("sigma_matrix")) {
      sigma = matrix_from_json(j.at("sigma_matrix"));
      if (cov) {
        Eigen::MatrixXd expect = covariance_matrix(*cov, d, s0, gamma);
        if (sigma.rows() != d || sigma.cols() != d ||
            (sigma - expect).cwiseAbs().maxCoeff() > 1e-12)
          throw ConfigError(
              "target: sigma_matrix disagrees with covariance_family");
      }
    } else if (cov) {
      sigma = covariance_matrix(*cov, d, s0, gamma);
    } else {
      throw ConfigError(
          "target: requires 'sigma_matrix' or 'covariance_family'");
    }
    if (cov) {
      return family == Family::gaussian
                 ? TargetSpec::gaussian(std::move(mu), *cov, s0, gamma, lambda)
                 : TargetSpec::student_t(std::move(mu), *cov, s0, gamma,
                                         lambda);
    }
    return family == Family::gaussian
               ? TargetSpec::gaussian(std::move(mu), sigma, lambda)
               : TargetSpec::student_t(std::move(mu), sigma, lambda);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("target: ") + e.what());
  }
}

}  // namespace combprep::gridfunc
