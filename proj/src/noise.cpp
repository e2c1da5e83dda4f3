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

#include "combprep/noise.hpp"

#include <algorithm>
#include <cmath>

#include "combprep/errors.hpp"
#include "combprep/parallel.hpp"
#include "combprep/random.hpp"

namespace combprep::noise {

using sim::OpKind;
using sim::Program;

double error_rate(const NoiseModel& model, double theta) {
  return model.a + model.b * theta;
}

namespace {

double checked_eps(const NoiseModel& model, double theta) {
  if (!(theta >= 0.0)) throw ModelDomainError("noise rate needs a non-negative angle");
  const double eps = error_rate(model, theta);
  if (eps < 0.0) throw ModelDomainError("negative error rate");
  if (1.0 - 1.25 * eps <= 0.0)
    throw ModelDomainError("error rate outside the depolarizing domain");
  return eps;
}

}  // namespace

double depol_rate(const NoiseModel& model, double theta) {
  const double eps = checked_eps(model, theta);
  const double x = 1.25 * eps;
  // (1 - sqrt(1 - x)) / 3 without cancellation.
  return x / (3.0 * (1.0 + std::sqrt(1.0 - x)));
}

double depol_rate_derivative(const NoiseModel& model, double theta) {
  const double eps = checked_eps(model, theta);
  return 5.0 * model.b / (24.0 * std::sqrt(1.0 - 1.25 * eps));
}

nlohmann::json model_to_json(const NoiseModel& model) {
  return {{"a", model.a}, {"b", model.b}};
}

NoiseModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("noise model must be an object");
  NoiseModel m;
  for (const auto& [key, value] : j.items()) {
    if (key == "a")
      m.a = value.get<double>();
    else if (key == "b")
      m.b = value.get<double>();
    else
      throw ConfigError("unknown noise field '" + key + "'");
  }
  checked_eps(m, 0.0);
  checked_eps(m, 0.5 * kPi);
  return m;
}

// ------------------------------------------------------------- exact

namespace {

// rho00 <- alpha rho00 + beta rho11, rho11 <- beta rho00 + alpha rho11,
// off-diagonal blocks scaled by gamma.
void apply_channel(DensityVector& rho, int n, int q, double alpha, double beta,
                   double gamma) {
  const std::size_t row = std::size_t{1} << (2 * n - 1 - q);
  const std::size_t col = std::size_t{1} << (n - 1 - q);
  cplx* d = rho.data();
  for (std::size_t i = 0; i < rho.size(); ++i) {
    if (i & (row | col)) continue;
    const cplx r00 = d[i], r11 = d[i | row | col];
    d[i] = alpha * r00 + beta * r11;
    d[i | row | col] = beta * r00 + alpha * r11;
    d[i | col] *= gamma;
    d[i | row] *= gamma;
  }
}

void apply_deriv_channel(DensityVector& rho, int n, int q) {
  apply_channel(rho, n, q, -2.0, 2.0, -4.0);
}

DensityVector initial_density(const Program& p) {
  const int n = p.n_qubits;
  if (n < 1) throw ArgumentError("need at least one qubit");
  if (n > kDensityLimit)
    throw CapacityError("density matrices are limited to " + std::to_string(kDensityLimit) +
                        " qubits; use the trajectory backend");
  const std::size_t dim = std::size_t{1} << n;
  if (p.uniform_start) return DensityVector(dim * dim, cplx(1.0 / static_cast<double>(dim), 0.0));
  DensityVector rho(dim * dim, cplx(0.0, 0.0));
  rho[0] = 1.0;
  return rho;
}

void apply_unitary_op(DensityVector& rho, int n, const sim::Op& op) {
  if (op.kind == OpKind::one) {
    sim::apply_one(rho, 2 * n, op.q0, op.u1);
    sim::apply_one(rho, 2 * n, n + op.q0, op.u1.conjugate());
  } else if (op.kind == OpKind::two) {
    sim::apply_two(rho, 2 * n, op.q0, op.q1, op.u2);
    sim::apply_two(rho, 2 * n, n + op.q0, n + op.q1, op.u2.conjugate());
  }
}

// Runs ops [begin, end); marker k uses rates[k].
void density_ops(const Program& p, DensityVector& rho, std::size_t begin, std::size_t end,
                 std::size_t marker, const std::vector<double>& rates) {
  const int n = p.n_qubits;
  for (std::size_t i = begin; i < end; ++i) {
    const auto& op = p.ops[i];
    if (op.kind == OpKind::noise) {
      apply_depolarizing(rho, n, op.q0, rates[marker]);
      apply_depolarizing(rho, n, op.q1, rates[marker]);
      ++marker;
    } else {
      apply_unitary_op(rho, n, op);
    }
  }
}

// <f| rho |f>
double expectation(const DensityVector& rho, const StateVector& f) {
  const std::size_t dim = f.size();
  cplx acc = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    cplx row = 0.0;
    for (std::size_t j = 0; j < dim; ++j) row += rho[i * dim + j] * f[j];
    acc += std::conj(f[i]) * row;
  }
  return acc.real();
}

void check_rates(const Program& p, const std::vector<double>& rates) {
  if (rates.size() != static_cast<std::size_t>(p.num_noise()))
    throw ArgumentError("one rate per noise marker is required");
}

const StateVector& target_dense(const sim::Target& target, int n) {
  if (target.n_qubits() != n) throw ArgumentError("target and circuit sizes differ");
  return target.dense();
}

}  // namespace

void apply_depolarizing(DensityVector& rho, int n, int q, double r) {
  if (r == 0.0) return;
  apply_channel(rho, n, q, 1.0 - 2.0 * r, 2.0 * r, 1.0 - 4.0 * r);
}

DensityVector run_density(const Program& p, const std::vector<double>& rates) {
  check_rates(p, rates);
  DensityVector rho = initial_density(p);
  density_ops(p, rho, 0, p.ops.size(), 0, rates);
  return rho;
}

Eigen::MatrixXcd density_matrix(const DensityVector& rho, int n) {
  const Eigen::Index dim = Eigen::Index{1} << n;
  if (static_cast<Eigen::Index>(rho.size()) != dim * dim)
    throw ArgumentError("density vector size does not match qubit count");
  Eigen::MatrixXcd m(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) m(i, j) = rho[static_cast<std::size_t>(i * dim + j)];
  return m;
}

std::vector<double> program_rates(const Program& p, const NoiseModel& model) {
  std::vector<double> r;
  for (const auto& op : p.ops)
    if (op.kind == OpKind::noise) r.push_back(depol_rate(model, op.angle));
  return r;
}

double noisy_infidelity_exact(const circuit::NativeCircuit& native, const sim::Target& target,
                              const NoiseModel& model) {
  Program p = sim::program_from_native(native);
  if (p.n_qubits > kDensityLimit)
    throw CapacityError("density matrices are limited to " + std::to_string(kDensityLimit) +
                        " qubits; use the trajectory backend");
  const StateVector& f = target_dense(target, p.n_qubits);
  DensityVector rho = run_density(p, program_rates(p, model));
  return std::clamp(1.0 - expectation(rho, f), 0.0, 1.0);
}

double noisy_infidelity_exact(const circuit::Circuit& c, const sim::Target& target,
                              const NoiseModel& model) {
  Program p = sim::segmented_program(c);
  if (p.n_qubits > kDensityLimit)
    throw CapacityError("density matrices are limited to " + std::to_string(kDensityLimit) +
                        " qubits; use the trajectory backend");
  const StateVector& f = target_dense(target, p.n_qubits);
  DensityVector rho = run_density(p, program_rates(p, model));
  return std::clamp(1.0 - expectation(rho, f), 0.0, 1.0);
}

// ------------------------------------------------------------- trajectories

namespace {

void draw_events(const std::vector<double>& rates, Rng& rng, sim::NoiseEvents& ev) {
  ev.assign(rates.size(), 0);
  for (std::size_t k = 0; k < rates.size(); ++k) {
    const double r = rates[k];
    std::uint8_t code = 0;
    for (int slot = 0; slot < 2; ++slot) {
      const double u = rng.uniform();
      if (u < 3.0 * r) {
        const int p = 1 + std::min(2, static_cast<int>(u / r));
        code = static_cast<std::uint8_t>(code | (p << (2 * slot)));
      }
    }
    ev[k] = code;
  }
}

// Index of the first marker with a Pauli, or events.size().
std::size_t first_error(const sim::NoiseEvents& ev) {
  for (std::size_t k = 0; k < ev.size(); ++k)
    if (ev[k]) return k;
  return ev.size();
}

std::vector<std::size_t> marker_ops(const Program& p) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < p.ops.size(); ++i)
    if (p.ops[i].kind == OpKind::noise) idx.push_back(i);
  return idx;
}

constexpr std::size_t kCacheBytes = std::size_t{1} << 30;

// Noiseless states just before every noise marker, when they fit in memory.
struct PrefixCache {
  std::vector<std::size_t> op_index;
  std::vector<StateVector> states;

  PrefixCache(const Program& p) : op_index(marker_ops(p)) {
    const std::size_t bytes = op_index.size() * (sizeof(cplx) << p.n_qubits);
    if (bytes > kCacheBytes) return;
    StateVector s = sim::initial_state(p.n_qubits, p.uniform_start);
    std::size_t done = 0;
    for (std::size_t k = 0; k < op_index.size(); ++k) {
      sim::run_ops(p, s, done, op_index[k]);
      done = op_index[k];
      states.push_back(s);
    }
  }
  bool enabled() const { return !states.empty() || op_index.empty(); }
};

StateVector run_trajectory(const Program& p, const PrefixCache& cache,
                           const sim::NoiseEvents& ev) {
  const std::size_t k = first_error(ev);
  if (cache.enabled() && k < ev.size()) {
    StateVector s = cache.states[k];
    sim::run_ops(p, s, cache.op_index[k], p.ops.size(), ev);
    return s;
  }
  return sim::run_dense(p, ev);
}

double infid(const StateVector& f, const StateVector& s) {
  return std::clamp(1.0 - std::norm(inner(f, s)), 0.0, 1.0);
}

double no_error_probability(const std::vector<double>& rates) {
  double p0 = 1.0;
  for (double r : rates) p0 *= (1.0 - 3.0 * r) * (1.0 - 3.0 * r);
  return p0;
}

}  // namespace

sim::NoiseEvents sample_events(const std::vector<double>& rates, std::uint64_t seed,
                               std::uint64_t traj_index) {
  Rng rng(seed, traj_index);
  sim::NoiseEvents ev;
  draw_events(rates, rng, ev);
  return ev;
}

McEstimate noisy_infidelity_mc(const circuit::NativeCircuit& native, const sim::Target& target,
                               const NoiseModel& model, std::size_t n_traj,
                               std::uint64_t seed, const sim::Backend& backend) {
  if (n_traj < 2) throw ArgumentError("at least two trajectories are required");
  Program p = sim::program_from_native(native);
  if (target.n_qubits() != p.n_qubits) throw ArgumentError("target and circuit sizes differ");
  const auto rates = program_rates(p, model);
  const double p0 = no_error_probability(rates);

  std::vector<double> z(n_traj, 0.0);
  std::vector<std::uint8_t> had_error(n_traj, 0);
  double x0 = 0.0;
  if (backend.kind == sim::BackendKind::dense) {
    const StateVector& f = target.dense();
    x0 = infid(f, sim::run_dense(p));
    PrefixCache cache(p);
    parallel_for(n_traj, [&](std::size_t t) {
      auto ev = sample_events(rates, seed, t);
      if (first_error(ev) == ev.size()) return;
      had_error[t] = 1;
      z[t] = infid(f, run_trajectory(p, cache, ev));
    });
  } else {
    const auto& fm = target.mps();
    auto value = [&](const sim::NoiseEvents& ev) {
      auto run = sim::run_mps(p, backend.chi_max, backend.tol, ev);
      return std::clamp(1.0 - std::norm(tensornet::mps_overlap(fm, run.state)), 0.0, 1.0);
    };
    x0 = value({});
    parallel_for(n_traj, [&](std::size_t t) {
      auto ev = sample_events(rates, seed, t);
      if (first_error(ev) == ev.size()) return;
      had_error[t] = 1;
      z[t] = value(ev);
    });
  }

  CompensatedSum sum;
  std::size_t errors = 0;
  for (std::size_t t = 0; t < n_traj; ++t) {
    sum.add(z[t]);
    errors += had_error[t];
  }
  const double mean = sum.value() / static_cast<double>(n_traj);
  CompensatedSum sq;
  for (double v : z) sq.add((v - mean) * (v - mean));
  McEstimate out;
  out.value = p0 * x0 + mean;
  out.std_error = std::sqrt(sq.value() / static_cast<double>(n_traj - 1) /
                            static_cast<double>(n_traj));
  out.n_traj = n_traj;
  out.n_error_traj = errors;
  return out;
}

// ------------------------------------------------------------- gradients

namespace {

struct MarkerInfo {
  std::vector<double> rate, drate, slope;
  std::vector<int> param;
};

MarkerInfo marker_info(const Program& p, const NoiseModel& model) {
  MarkerInfo m;
  for (const auto& op : p.ops) {
    if (op.kind != OpKind::noise) continue;
    m.rate.push_back(depol_rate(model, op.angle));
    m.drate.push_back(depol_rate_derivative(model, op.angle));
    m.slope.push_back(op.slope);
    m.param.push_back(op.angle_param);
  }
  return m;
}

NoisyGradient exact_gradient(const circuit::Circuit& c, const sim::Target& target,
                             const NoiseModel& model) {
  Program p = sim::segmented_program(c);
  const int n = p.n_qubits;
  if (n > kDensityLimit)
    throw CapacityError("density matrices are limited to " + std::to_string(kDensityLimit) +
                        " qubits; use the trajectory backend");
  const StateVector& f = target_dense(target, n);
  const MarkerInfo info = marker_info(p, model);
  const std::size_t M = static_cast<std::size_t>(c.num_params());

  NoisyGradient out;
  auto& rep = out.report;
  rep.method = "noisy_exact";
  rep.grad.assign(M, 0.0);
  const double fid = expectation(run_density(p, info.rate), f);
  rep.value = std::clamp(1.0 - fid, 0.0, 1.0);

  // Unitary part: shift rule with the rates frozen.
  std::vector<std::array<double, 2>> vals(M);
  parallel_for(2 * M, [&](std::size_t job) {
    const std::size_t i = job / 2;
    const bool canonical = static_cast<int>(i % circuit::kSu4Params) < 3;
    const double shift = canonical ? 0.25 * kPi : 0.5 * kPi;
    auto theta = c.theta();
    theta[i] += job % 2 == 0 ? shift : -shift;
    circuit::Circuit shifted = c;
    shifted.set_theta(std::move(theta));
    Program ps = sim::segmented_program(shifted);
    vals[i][job % 2] = 1.0 - expectation(run_density(ps, info.rate), f);
  });
  for (std::size_t i = 0; i < M; ++i) {
    const bool canonical = static_cast<int>(i % circuit::kSu4Params) < 3;
    const double diff = vals[i][0] - vals[i][1];
    rep.grad[i] = canonical ? diff : 0.5 * diff;
  }

  // Rate part: dI/dr_k from (K x D + D x K) at marker k.
  const auto ops_at = marker_ops(p);
  std::vector<double> dr(ops_at.size(), 0.0);
  parallel_for(ops_at.size(), [&](std::size_t k) {
    if (info.drate[k] == 0.0 || info.slope[k] == 0.0 || info.param[k] < 0) return;
    DensityVector rho = initial_density(p);
    density_ops(p, rho, 0, ops_at[k], 0, info.rate);
    const auto& op = p.ops[ops_at[k]];
    DensityVector a = rho;
    apply_depolarizing(a, n, op.q1, info.rate[k]);
    apply_deriv_channel(a, n, op.q0);
    apply_deriv_channel(rho, n, op.q1);
    apply_depolarizing(rho, n, op.q0, info.rate[k]);
    for (std::size_t i = 0; i < rho.size(); ++i) rho[i] += a[i];
    density_ops(p, rho, ops_at[k] + 1, p.ops.size(), k + 1, info.rate);
    dr[k] = -expectation(rho, f);
  });
  for (std::size_t k = 0; k < dr.size(); ++k)
    if (info.param[k] >= 0)
      rep.grad[static_cast<std::size_t>(info.param[k])] += dr[k] * info.drate[k] * info.slope[k];

  rep.evaluations = 2 * M + 1 + dr.size();
  rep.avg_abs = sim::average_abs(rep.grad);
  return out;
}

NoisyGradient trajectory_gradient(const circuit::Circuit& c, const sim::Target& target,
                                  const NoiseModel& model, std::size_t n_traj,
                                  std::uint64_t seed) {
  if (n_traj < 2) throw ArgumentError("at least two trajectories are required");
  Program p = sim::segmented_program(c);
  const int n = p.n_qubits;
  const StateVector& f = target_dense(target, n);
  const MarkerInfo info = marker_info(p, model);
  const std::size_t M = static_cast<std::size_t>(c.num_params());
  const double p0 = no_error_probability(info.rate);

  auto bra_for = [&f](double& x) {
    return [&f, &x](const StateVector& psi) {
      const cplx a = inner(f, psi);
      x = std::clamp(1.0 - std::norm(a), 0.0, 1.0);
      StateVector b(f.size());
      for (std::size_t i = 0; i < f.size(); ++i) b[i] = -2.0 * a * f[i];
      return b;
    };
  };

  double x0 = 0.0;
  sim::Vjp g0 = sim::adjoint_vjp(p, bra_for(x0));

  PrefixCache cache(p);
  std::vector<std::uint8_t> had_error(n_traj, 0);
  std::vector<double> xt(n_traj, 0.0);
  std::vector<std::vector<double>> gt(n_traj);
  parallel_for(n_traj, [&](std::size_t t) {
    auto ev = sample_events(info.rate, seed, t);
    const std::size_t k = first_error(ev);
    if (k == ev.size()) return;
    had_error[t] = 1;
    double x = 0.0;
    sim::Vjp v = cache.enabled()
                     ? sim::adjoint_vjp(p, bra_for(x), ev, &cache.states[k], cache.op_index[k])
                     : sim::adjoint_vjp(p, bra_for(x), ev);
    // Score of the insertion pattern.
    std::vector<double> g = std::move(v.grad);
    for (std::size_t j = 0; j < ev.size(); ++j) {
      if (info.param[j] < 0 || info.slope[j] == 0.0) continue;
      double score = 0.0;
      for (int slot = 0; slot < 2; ++slot) {
        const bool hit = ((ev[j] >> (2 * slot)) & 3) != 0;
        score += hit ? info.drate[j] / info.rate[j]
                     : -3.0 * info.drate[j] / (1.0 - 3.0 * info.rate[j]);
      }
      g[static_cast<std::size_t>(info.param[j])] += (x - x0) * score * info.slope[j];
    }
    xt[t] = x;
    gt[t] = std::move(g);
  });

  NoisyGradient out;
  auto& rep = out.report;
  rep.method = "noisy_trajectories";
  rep.grad.assign(M, 0.0);
  out.std_error.assign(M, 0.0);
  const double nt = static_cast<double>(n_traj);
  std::size_t errors = 0;
  for (std::size_t i = 0; i < M; ++i) {
    CompensatedSum s;
    for (std::size_t t = 0; t < n_traj; ++t)
      if (had_error[t]) s.add(gt[t][i]);
    const double mean = s.value() / nt;
    CompensatedSum sq;
    for (std::size_t t = 0; t < n_traj; ++t) {
      const double v = had_error[t] ? gt[t][i] : 0.0;
      sq.add((v - mean) * (v - mean));
    }
    rep.grad[i] = p0 * g0.grad[i] + mean;
    out.std_error[i] = std::sqrt(sq.value() / (nt - 1.0) / nt);
  }
  CompensatedSum s, sq;
  for (std::size_t t = 0; t < n_traj; ++t) {
    s.add(xt[t]);
    errors += had_error[t];
  }
  const double mean = s.value() / nt;
  for (double v : xt) sq.add((v - mean) * (v - mean));
  rep.value = p0 * x0 + mean;
  out.value_std_error = std::sqrt(sq.value() / (nt - 1.0) / nt);
  rep.evaluations = 1 + errors;
  rep.avg_abs = sim::average_abs(rep.grad);
  return out;
}

}  // namespace

NoisyGradient noisy_gradient(const circuit::Circuit& c, const sim::Target& target,
                             const NoiseModel& model, const NoisyGradientOptions& opts) {
  if (c.n_qubits() != target.n_qubits()) throw ArgumentError("target and circuit sizes differ");
  if (opts.engine == NoisyEngine::exact) return exact_gradient(c, target, model);
  return trajectory_gradient(c, target, model, opts.n_traj, opts.seed);
}

// ------------------------------------------------------------- sampling

namespace {

Bits draw_bits(const std::vector<double>& cumulative, double u, int n) {
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u * cumulative.back());
  std::size_t idx = static_cast<std::size_t>(it - cumulative.begin());
  idx = std::min(idx, cumulative.size() - 1);
  return bits_of(idx, n);
}

std::vector<double> cumulative_probs(const StateVector& s) {
  std::vector<double> c(s.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    acc += std::norm(s[i]);
    c[i] = acc;
  }
  return c;
}

}  // namespace

std::vector<Bits> sample_noisy(const circuit::NativeCircuit& native, const NoiseModel& model,
                               std::size_t n_shots, std::uint64_t seed) {
  Program p = sim::program_from_native(native);
  const int n = p.n_qubits;
  const auto rates = program_rates(p, model);
  const auto clean = cumulative_probs(sim::run_dense(p));
  PrefixCache cache(p);
  std::vector<Bits> shots(n_shots);
  parallel_for(n_shots, [&](std::size_t t) {
    Rng rng(seed, t);
    sim::NoiseEvents ev;
    draw_events(rates, rng, ev);
    const double u = rng.uniform();
    if (first_error(ev) == ev.size()) {
      shots[t] = draw_bits(clean, u, n);
    } else {
      shots[t] = draw_bits(cumulative_probs(run_trajectory(p, cache, ev)), u, n);
    }
  });
  return shots;
}

}  // namespace combprep::noise
