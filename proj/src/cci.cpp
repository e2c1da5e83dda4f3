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

#include "combprep/cci.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include "combprep/errors.hpp"
#include "combprep/iqsp.hpp"
#include "combprep/random.hpp"

namespace combprep::cci {

using nlohmann::json;

std::vector<Bits> propose_pivots(BitsView p) {
  const std::size_t n = p.size();
  std::vector<Bits> out;
  out.reserve(n > 0 ? 2 * n - 1 : 0);
  for (std::size_t a = 0; a < n; ++a) {
    Bits q(p.begin(), p.end());
    q[a] ^= 1u;
    out.push_back(std::move(q));
  }
  for (std::size_t a = 0; a + 1 < n; ++a) {
    Bits q(p.begin(), p.end());
    q[a] ^= 1u;
    q[a + 1] ^= 1u;
    out.push_back(std::move(q));
  }
  return out;
}

// ------------------------------------------------------------- PivotSet

bool PivotSet::contains(BitsView p) const {
  return std::any_of(pivots_.begin(), pivots_.end(),
                     [&](const Bits& q) { return std::equal(q.begin(), q.end(), p.begin(), p.end()); });
}

bool PivotSet::add(Bits p, double value) {
  if (contains(p)) return false;
  if (full()) throw CapacityError("pivot set is full");
  if (!pivots_.empty() && p.size() != pivots_.front().size())
    throw ArgumentError("pivot length mismatch");
  pivots_.push_back(std::move(p));
  values_.push_back(value);
  return true;
}

void PivotSet::remove(std::size_t i) {
  if (i >= pivots_.size()) throw ArgumentError("pivot index out of range");
  pivots_.erase(pivots_.begin() + static_cast<std::ptrdiff_t>(i));
  values_.erase(values_.begin() + static_cast<std::ptrdiff_t>(i));
}

// ------------------------------------------------------------- target

CciTarget::CciTarget(gridfunc::GridSpec grid, std::function<double(std::span<const double>)> f)
    : grid_(grid), f_(std::move(f)) {
  grid_.validate();
  const int n = grid_.n_qubits();
  if (n > kCciNormLimit)
    throw CapacityError("normalizing the target needs n <= " + std::to_string(kCciNormLimit));
  long double s = 0.0L;
  double best = -std::numeric_limits<double>::infinity();
  for (std::uint64_t i = 0; i < (std::uint64_t{1} << n); ++i) {
    const Bits b = bits_of(i, n);
    const double v = f_(gridfunc::decode_point(grid_, b));
    s += static_cast<long double>(v) * v;
    if (v > best) {
      best = v;
      hint_ = b;
    }
  }
  if (!(s > 0.0L)) throw ModelDomainError("target vanishes on the grid");
  norm_ = std::sqrt(static_cast<double>(s));
}

CciTarget::CciTarget(gridfunc::GridSpec grid, const gridfunc::TargetSpec& spec)
    : CciTarget(grid, [spec](std::span<const double> x) { return spec.eval(x); }) {
  if (spec.dimension() != grid.d) throw ArgumentError("target dimension does not match the grid");
  hint_ = gridfunc::nearest_grid_bits(grid, spec.mu());
}

double CciTarget::operator()(BitsView bits) const {
  return f_(gridfunc::decode_point(grid_, bits)) / norm_;
}

// ------------------------------------------------------------- cost

AmplitudeFunction amplitudes_of(const sim::State& state) {
  if (state.kind == sim::BackendKind::dense)
    return [&state](BitsView b) { return state.dense[index_of(b)]; };
  return [&state](BitsView b) { return state.mps.amplitude(b); };
}

double phase_sign(const PivotSet& pivots, const AmplitudeFunction& amplitude) {
  if (pivots.empty()) return 1.0;
  return amplitude(pivots.pivots().front()).real() < 0.0 ? -1.0 : 1.0;
}

double cci_cost(const PivotSet& pivots, const AmplitudeFunction& amplitude) {
  const double s = phase_sign(pivots, amplitude);
  double c = 0.0;
  for (std::size_t i = 0; i < pivots.size(); ++i)
    c += std::norm(pivots.values()[i] - s * amplitude(pivots.pivots()[i]));
  return c;
}

double cci_cost(const PivotSet& pivots, const sim::State& state) {
  return cci_cost(pivots, amplitudes_of(state));
}

namespace {

struct Candidate {
  bool found = false;
  bool improved = false;
  Bits pivot;
  double residual = 0.0;
};

// Largest residual among the proposals of all pivots; ties and the all-zero
// case go to the lexicographically smallest bitstring.
Candidate best_candidate(const PivotSet& pivots, const CciTarget& target,
                         const AmplitudeFunction& amplitude) {
  std::set<Bits> candidates;
  for (const auto& p : pivots.pivots())
    for (auto& q : propose_pivots(p))
      if (!pivots.contains(q)) candidates.insert(std::move(q));
  Candidate out;
  if (candidates.empty()) return out;
  out.found = true;
  const double s = phase_sign(pivots, amplitude);
  double best = -1.0;
  for (const auto& q : candidates) {
    const double r = std::norm(target(q) - s * amplitude(q));
    if (r > best) {
      best = r;
      out.pivot = q;
    }
  }
  out.residual = best;
  out.improved = best > 0.0;
  return out;
}

}  // namespace

GrowResult grow_pivots(PivotSet& pivots, const CciTarget& target,
                       const AmplitudeFunction& amplitude) {
  GrowResult out;
  if (pivots.full()) throw CapacityError("pivot set is full");
  out.cost_before = cci_cost(pivots, amplitude);
  out.cost_after = out.cost_before;
  const Candidate q = best_candidate(pivots, target, amplitude);
  if (!q.found) return out;
  out.improved = q.improved;
  out.pivot = q.pivot;
  out.added = pivots.add(out.pivot, target(out.pivot));
  out.cost_after = cci_cost(pivots, amplitude);
  return out;
}

CostGradient cci_cost_gradient(const circuit::Circuit& c, const PivotSet& pivots) {
  CostGradient out;
  std::vector<std::uint64_t> idx;
  for (const auto& p : pivots.pivots()) idx.push_back(index_of(p));
  const sim::Program prog = sim::program_from_circuit(c);
  sim::Vjp v = sim::adjoint_vjp(prog, [&](const StateVector& psi) {
    StateVector b(psi.size(), cplx(0.0));
    const double s = idx.empty() || psi[idx[0]].real() >= 0.0 ? 1.0 : -1.0;
    double cost = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const cplx r = pivots.values()[i] - s * psi[idx[i]];
      cost += std::norm(r);
      b[idx[i]] = s * r;
    }
    out.value = cost;
    return b;
  });
  out.grad.resize(v.grad.size());
  for (std::size_t k = 0; k < v.grad.size(); ++k) out.grad[k] = -2.0 * v.grad[k];
  return out;
}

// ------------------------------------------------------------- driver

namespace {

double full_infidelity(const StateVector& target, const StateVector& psi) {
  return std::clamp(1.0 - std::norm(inner(target, psi)), 0.0, 1.0);
}

// Never the first pivot: it fixes the sign convention.
std::size_t smallest_residual(const PivotSet& pivots, const AmplitudeFunction& amplitude) {
  const double s = phase_sign(pivots, amplitude);
  std::size_t arg = 1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < pivots.size(); ++i) {
    const double r = std::norm(pivots.values()[i] - s * amplitude(pivots.pivots()[i]));
    if (r < best) {
      best = r;
      arg = i;
    }
  }
  return arg;
}

}  // namespace

CciResult run_cci(const CciConfig& config) {
  if (config.max_pivots < 1) throw ConfigError("max_pivots must be at least 1");
  if (config.max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
  CciTarget target(config.grid, config.target);
  const int n = config.grid.n_qubits();
  StateVector tvec(std::size_t{1} << n);
  for (std::uint64_t i = 0; i < tvec.size(); ++i) tvec[i] = target(bits_of(i, n));

  circuit::Circuit c = circuit::build_comb_ansatz(config.grid, config.layers);
  std::vector<double> theta(static_cast<std::size_t>(c.num_params()), 0.0);
  bool jittered = false;
  double lr = config.lr;

  PivotSet P(config.max_pivots);
  Bits first = target.argmax_hint();
  if (config.random_first_pivot) {
    Rng rng(config.seed, 0x70);
    for (auto& b : first) b = static_cast<std::uint8_t>(rng.below(2));
  }
  P.add(first, target(first));

  CciResult out;
  for (int it = 0; it < config.max_iterations; ++it) {
    CciRecord rec;
    rec.iteration = it;
    rec.n_pivots = P.size();

    c.set_theta(theta);
    StateVector psi = sim::run_dense(sim::program_from_circuit(c));
    const double c0 = cci_cost(P, [&](BitsView b) { return psi[index_of(b)]; });
    rec.cost_start = c0;
    if (c0 > config.tol) {
      if (!jittered && config.init_jitter > 0.0) {
        Rng rng(config.seed, 0x6a);
        for (auto& x : theta) x += rng.uniform(-config.init_jitter, config.init_jitter);
        jittered = true;
      }
      circuit::Circuit work = c;
      iqsp::Objective obj = [&](const std::vector<double>& th, int) {
        work.set_theta(th);
        auto g = cci_cost_gradient(work, P);
        return iqsp::Evaluation{g.value, std::move(g.grad)};
      };
      iqsp::AdamState adam(theta.size(), lr);
      auto res = iqsp::optimize(obj, theta, adam, config.epochs, config.tol);
      // keep the unperturbed point if the phase made things worse
      if (res.best_value <= c0) theta = res.theta;
      // a phase that cannot halve the cost is stuck at the Adam step size
      if (res.best_value > 0.5 * c0) lr *= 0.5;
      c.set_theta(theta);
      psi = sim::run_dense(sim::program_from_circuit(c));
    }
    AmplitudeFunction amp = [&](BitsView b) { return psi[index_of(b)]; };
    rec.cost = cci_cost(P, amp);
    rec.infidelity = full_infidelity(tvec, psi);

    if (it + 1 == config.max_iterations) {
      rec.action = "stop";
      out.trace.push_back(rec);
      break;
    }
    // converged once no proposal carries a residual either
    const Candidate next = best_candidate(P, target, amp);
    if (rec.cost < config.tol && (!next.found || next.residual < config.tol)) {
      rec.action = "converged";
      out.converged = true;
      out.trace.push_back(rec);
      break;
    }
    if (P.full()) {
      if (P.size() > 1) P.remove(smallest_residual(P, amp));
      rec.action = "refresh";
    } else {
      rec.action = "grow";
    }
    auto g = grow_pivots(P, target, amp);
    if (!g.added) {
      rec.action = "exhausted";
      out.trace.push_back(rec);
      break;
    }
    if (!g.improved) rec.action += "-fallback";
    rec.pivot = g.pivot;
    out.trace.push_back(rec);
  }
  out.theta = theta;
  out.pivots = P.pivots();
  out.final_cost = out.trace.back().cost;
  out.final_infidelity = out.trace.back().infidelity;
  return out;
}

// ------------------------------------------------------------- output

json result_to_json(const CciResult& r) {
  json trace = json::array();
  for (const auto& t : r.trace)
    trace.push_back({{"iteration", t.iteration},
                     {"n_pivots", t.n_pivots},
                     {"cost_start", t.cost_start},
                     {"cost", t.cost},
                     {"infidelity", t.infidelity},
                     {"action", t.action},
                     {"pivot", bits_to_string(t.pivot)}});
  json pivots = json::array();
  for (const auto& p : r.pivots) pivots.push_back(bits_to_string(p));
  return {{"theta", r.theta},
          {"pivots", pivots},
          {"trace", trace},
          {"final_cost", r.final_cost},
          {"final_infidelity", r.final_infidelity},
          {"converged", r.converged}};
}

void write_trace_csv(std::ostream& os, const CciResult& r) {
  os << "iteration,n_pivots,cost,infidelity\n";
  char buf[96];
  for (const auto& t : r.trace) {
    std::snprintf(buf, sizeof buf, "%d,%zu,%.17g,%.17g\n", t.iteration, t.n_pivots, t.cost,
                  t.infidelity);
    os << buf;
  }
}

CciConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("cci config must be an object");
  static const std::set<std::string> allowed{
      "grid",  "target", "layers",     "max_pivots",         "epochs", "lr",
      "max_iterations", "tol", "init_jitter", "random_first_pivot", "seed"};
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError("cci config: unknown field '" + key + "'");
  if (!j.contains("grid") || !j.contains("target"))
    throw ConfigError("cci config needs grid and target");
  CciConfig c;
  j.at("grid").get_to(c.grid);
  c.target = gridfunc::target_from_json(j.at("target"));
  c.layers = j.value("layers", 2);
  c.max_pivots = j.value("max_pivots", std::size_t{8});
  c.epochs = j.value("epochs", 500);
  c.lr = j.value("lr", 1e-2);
  c.max_iterations = j.value("max_iterations", 40);
  c.tol = j.value("tol", 1e-10);
  c.init_jitter = j.value("init_jitter", 1e-6);
  c.random_first_pivot = j.value("random_first_pivot", false);
  c.seed = j.value("seed", std::uint64_t{0});
  if (c.layers < 1 || c.max_pivots < 1 || c.epochs < 0 || c.max_iterations < 1 || c.lr < 0.0)
    throw ConfigError("cci config: invalid value");
  if (c.target.dimension() != c.grid.d) throw ConfigError("target dimension does not match the grid");
  return c;
}

json config_to_json(const CciConfig& c) {
  json grid;
  gridfunc::to_json(grid, c.grid);
  return {{"grid", grid},
          {"target", gridfunc::target_to_json(c.target)},
          {"layers", c.layers},
          {"max_pivots", c.max_pivots},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"max_iterations", c.max_iterations},
          {"tol", c.tol},
          {"init_jitter", c.init_jitter},
          {"random_first_pivot", c.random_first_pivot},
          {"seed", c.seed}};
}

}  // namespace combprep::cci
