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

#include "combprep/stats.hpp"

#include <cmath>
#include <set>

#include "combprep/errors.hpp"
#include "combprep/sim.hpp"
#include "combprep/tensornet.hpp"

namespace combprep::stats {

using nlohmann::json;

ShotTable ShotTable::from_bits(const gridfunc::GridSpec& grid, const std::vector<Bits>& shots) {
  grid.validate();
  ShotTable t;
  t.grid = grid;
  t.values.resize(static_cast<Eigen::Index>(shots.size()), grid.d);
  for (std::size_t s = 0; s < shots.size(); ++s) {
    if (shots[s].size() != static_cast<std::size_t>(grid.n_qubits()))
      throw ArgumentError("shot length does not match the grid");
    const auto x = gridfunc::decode_point(grid, shots[s]);
    for (int a = 0; a < grid.d; ++a) t.values(static_cast<Eigen::Index>(s), a) = x[a];
  }
  return t;
}

Moments moments(const ShotTable& shots) {
  const auto n = static_cast<Eigen::Index>(shots.n_shots());
  if (n < 2) throw ArgumentError("moments need at least two shots");
  const double nd = static_cast<double>(n);
  Moments m;
  m.n_shots = shots.n_shots();
  m.mean = shots.values.colwise().mean().transpose();
  const Eigen::MatrixXd second = shots.values.transpose() * shots.values / nd;
  m.cov = second - m.mean * m.mean.transpose();
  m.cov = 0.5 * (m.cov + m.cov.transpose());
  const Eigen::Index d = m.cov.rows();
  m.cov_var.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      m.cov_var(i, j) = (m.cov(i, j) * m.cov(i, j) + m.cov(i, i) * m.cov(j, j)) / (nd - 1.0);
  m.cov_err = 2.0 * m.cov_var.cwiseSqrt();
  m.mean_err = 2.0 * (m.cov.diagonal() / (nd - 1.0)).cwiseSqrt();
  return m;
}

ExactMoments distribution_moments(const gridfunc::GridSpec& grid, std::span<const double> probs) {
  const int n = grid.n_qubits();
  if (probs.size() != (std::size_t{1} << n)) throw ArgumentError("probability vector size");
  const int d = grid.d;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(d, d);
  double total = 0.0;
  for (std::uint64_t i = 0; i < probs.size(); ++i) {
    if (probs[i] == 0.0) continue;
    const auto x = gridfunc::decode_point(grid, bits_of(i, n));
    const Eigen::Map<const Eigen::VectorXd> v(x.data(), d);
    mean += probs[i] * v;
    second += probs[i] * v * v.transpose();
    total += probs[i];
  }
  if (!(total > 0.0)) throw ArgumentError("probabilities sum to zero");
  mean /= total;
  second /= total;
  return {mean, second - mean * mean.transpose()};
}

ExactMoments target_moments(const gridfunc::GridSpec& grid, const gridfunc::TargetSpec& spec) {
  if (grid.n_qubits() > gridfunc::kDenseEnumerationLimit)
    throw CapacityError("exact moments need dense enumeration");
  const StateVector f = gridfunc::dense_state(grid, spec, true);
  std::vector<double> p(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) p[i] = std::norm(f[i]);
  return distribution_moments(grid, p);
}

double eps_max(std::span<const double> F, std::span<const cplx> phi) {
  if (F.size() != phi.size()) throw ArgumentError("eps_max: size mismatch");
  if (F.size() > (std::size_t{1} << kEpsMaxLimit))
    throw CapacityError("eps_max needs n <= " + std::to_string(kEpsMaxLimit));
  long double nf2 = 0.0L;
  cplx ov = 0.0;
  for (std::size_t i = 0; i < F.size(); ++i) {
    nf2 += static_cast<long double>(F[i]) * F[i];
    ov += F[i] * phi[i];
  }
  const double nf = std::sqrt(static_cast<double>(nf2));
  const cplx phase = std::abs(ov) > 0.0 ? std::conj(ov) / std::abs(ov) : cplx(1.0);
  double e = 0.0;
  for (std::size_t i = 0; i < F.size(); ++i) e = std::max(e, std::abs(F[i] - nf * phase * phi[i]));
  return e;
}

double fraction_within(const Eigen::MatrixXd& cov, const Eigen::MatrixXd& err,
                       const Eigen::MatrixXd& reference) {
  const Eigen::Index d = cov.rows();
  int hit = 0, total = 0;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i; j < d; ++j) {
      ++total;
      if (std::abs(cov(i, j) - reference(i, j)) <= err(i, j)) ++hit;
    }
  return total ? static_cast<double>(hit) / total : 1.0;
}

CovarianceReport covariance_experiment(const CovarianceConfig& config) {
  config.grid.validate();
  if (config.n_shots < 2) throw ConfigError("covariance experiment needs n_shots >= 2");
  if (config.seeds.empty()) throw ConfigError("covariance experiment needs at least one seed");
  circuit::Circuit c = circuit::build_comb_ansatz(config.grid, config.layers);
  if (config.theta.size() != static_cast<std::size_t>(c.num_params()))
    throw ConfigError("theta has " + std::to_string(config.theta.size()) + " entries, the circuit " +
                      std::to_string(c.num_params()));
  c.set_theta(config.theta);

  CovarianceReport rep;
  rep.target = target_moments(config.grid, config.target);
  rep.sigma = config.target.sigma_matrix();

  const StateVector psi = sim::run(c).dense;
  std::vector<double> probs(psi.size());
  for (std::size_t i = 0; i < psi.size(); ++i) probs[i] = std::norm(psi[i]);
  rep.circuit = distribution_moments(config.grid, probs);
  tensornet::Mps mps = tensornet::Mps::from_dense(psi);
  mps.normalize();

  std::optional<circuit::NativeCircuit> native;
  if (config.noise)
    native = circuit::prune(circuit::compile_native(c), config.prune_threshold);

  double hits = 0.0, noisy_hits = 0.0, circuit_hits = 0.0;
  for (std::uint64_t seed : config.seeds) {
    CovarianceRun run;
    run.seed = seed;
    run.noiseless = moments(
        ShotTable::from_bits(config.grid, tensornet::mps_sample(mps, config.n_shots, seed)));
    run.within_noiseless =
        fraction_within(run.noiseless.cov, run.noiseless.cov_err, rep.target.cov);
    hits += run.within_noiseless;
    run.within_circuit = fraction_within(run.noiseless.cov, run.noiseless.cov_err, rep.circuit.cov);
    circuit_hits += run.within_circuit;
    if (native) {
      run.noisy = moments(ShotTable::from_bits(
          config.grid, noise::sample_noisy(*native, *config.noise, config.n_shots, seed)));
      run.within_noisy = fraction_within(run.noisy->cov, run.noisy->cov_err, rep.target.cov);
      noisy_hits += *run.within_noisy;
    }
    rep.runs.push_back(std::move(run));
  }
  const double ns = static_cast<double>(config.seeds.size());
  rep.within_noiseless = hits / ns;
  rep.within_circuit = circuit_hits / ns;
  if (native) rep.within_noisy = noisy_hits / ns;
  return rep;
}

// ------------------------------------------------------------- JSON

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

json exact_json(const ExactMoments& e) {
  return {{"mean", vector_json(e.mean)}, {"cov", matrix_json(e.cov)}};
}

}  // namespace

json moments_to_json(const Moments& m) {
  return {{"n_shots", m.n_shots},
          {"mean", vector_json(m.mean)},
          {"mean_err", vector_json(m.mean_err)},
          {"cov", matrix_json(m.cov)},
          {"cov_err", matrix_json(m.cov_err)}};
}

json report_to_json(const CovarianceReport& r) {
  json runs = json::array();
  for (const auto& run : r.runs) {
    json j = {{"seed", run.seed},
              {"noiseless", moments_to_json(run.noiseless)},
              {"within_noiseless", run.within_noiseless},
              {"within_circuit", run.within_circuit}};
    if (run.noisy) {
      j["noisy"] = moments_to_json(*run.noisy);
      j["within_noisy"] = *run.within_noisy;
    }
    runs.push_back(j);
  }
  json out = {{"target_grid", exact_json(r.target)},
              {"circuit", exact_json(r.circuit)},
              {"sigma", matrix_json(r.sigma)},
              {"runs", runs},
              {"within_noiseless", r.within_noiseless},
              {"within_circuit", r.within_circuit}};
  if (r.within_noisy) out["within_noisy"] = *r.within_noisy;
  return out;
}

CovarianceConfig covariance_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("sample-stats config must be an object");
  static const std::set<std::string> allowed{"grid",  "target", "layers", "theta",
                                             "n_shots", "seeds", "noise", "prune_threshold"};
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError("sample-stats config: unknown field '" + key + "'");
  if (!j.contains("grid") || !j.contains("target") || !j.contains("theta"))
    throw ConfigError("sample-stats config needs grid, target and theta");
  CovarianceConfig c;
  j.at("grid").get_to(c.grid);
  c.target = gridfunc::target_from_json(j.at("target"));
  c.layers = j.value("layers", 3);
  c.theta = j.at("theta").get<std::vector<double>>();
  c.n_shots = j.value("n_shots", std::size_t{10000});
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("noise")) c.noise = noise::model_from_json(j.at("noise"));
  c.prune_threshold = j.value("prune_threshold", 1e-4);
  if (c.target.dimension() != c.grid.d) throw ConfigError("target dimension does not match the grid");
  return c;
}

json covariance_to_json(const CovarianceConfig& c) {
  json grid;
  gridfunc::to_json(grid, c.grid);
  json j = {{"grid", grid},
            {"target", gridfunc::target_to_json(c.target)},
            {"layers", c.layers},
            {"theta", c.theta},
            {"n_shots", c.n_shots},
            {"seeds", c.seeds},
            {"prune_threshold", c.prune_threshold}};
  if (c.noise) j["noise"] = noise::model_to_json(*c.noise);
  return j;
}

}  // namespace combprep::stats
