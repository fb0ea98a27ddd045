#include "fdual/cps.hpp"

#include <algorithm>
#include <cmath>

namespace fdual {

bool CpsResiduals::ok(double tol) const noexcept {
  return min_q > 0.0 && sibling_sum <= tol && spread <= tol && martingale <= tol;
}

CpsResiduals check_cps(const MarketModel& model, const ConsistentPriceSystem& cps,
                       std::optional<double> lambda_prime) {
  const ScenarioTree& tree = model.tree();
  const std::size_t n = tree.size();
  if (cps.q_cond.size() != n || cps.s_tilde.size() != n) throw PreconditionError("CPS has wrong dimension");
  const double lam = lambda_prime.value_or(model.lambda());
  CpsResiduals r;
  r.min_q = 1.0;
  for (NodeId v = 0; v < static_cast<NodeId>(n); ++v) {
    const double s = cps.s_tilde[v], ask = model.ask(v);
    r.spread = std::max({r.spread, s - ask, (1.0 - lam) * ask - s});
    if (v != tree.root()) r.min_q = std::min(r.min_q, cps.q_cond[v]);
    if (tree.is_terminal(v)) continue;
    double qsum = 0.0, mean = 0.0;
    for (NodeId c : tree.children(v)) {
      qsum += cps.q_cond[c];
      mean += cps.q_cond[c] * cps.s_tilde[c];
    }
    r.sibling_sum = std::max(r.sibling_sum, std::abs(qsum - 1.0));
    r.martingale = std::max(r.martingale, std::abs(mean - s));
  }
  return r;
}

CpsProgram build_cps_program(const MarketModel& model, double lambda_prime) {
  const ScenarioTree& tree = model.tree();
  CpsProgram prog;
  prog.n_nodes = static_cast<int>(tree.size());
  LinearProgram& lp = prog.lp;
  for (int v = 0; v < prog.n_nodes; ++v) lp.add_variable(0.0);
  for (int v = 0; v < prog.n_nodes; ++v) lp.add_variable(0.0);
  lp.add_row({{prog.mass(tree.root()), 1.0}}, Relation::eq, 1.0);
  for (NodeId v : tree.internal_nodes()) {
    std::vector<std::pair<int, double>> mrow{{prog.mass(v), -1.0}}, wrow{{prog.value(v), -1.0}};
    for (NodeId c : tree.children(v)) {
      mrow.emplace_back(prog.mass(c), 1.0);
      wrow.emplace_back(prog.value(c), 1.0);
    }
    lp.add_row(std::move(mrow), Relation::eq, 0.0);
    lp.add_row(std::move(wrow), Relation::eq, 0.0);
  }
  prog.first_spread_row = static_cast<int>(lp.cons.rows.size());
  for (int v = 0; v < prog.n_nodes; ++v) {
    const double ask = model.ask(v), bid = (1.0 - lambda_prime) * ask;
    lp.add_row({{prog.value(v), 1.0}, {prog.mass(v), -ask}}, Relation::le, 0.0);
    lp.add_row({{prog.value(v), 1.0}, {prog.mass(v), -bid}}, Relation::ge, 0.0);
  }
  return prog;
}

namespace {

struct Interval {
  double lo, hi;
};

double clamp_to(double x, const Interval& I) { return std::min(std::max(x, I.lo), I.hi); }

// Children values clamp(d_c + shift) with sum_c q_c value_c = target, shift by bisection.
void assign_children(const ScenarioTree& tree, NodeId v, double target, const std::vector<double>& q,
                     const std::vector<double>& desired, const std::vector<Interval>& feas,
                     std::vector<double>& s) {
  const auto kids = tree.children(v);
  auto mean_at = [&](double shift) {
    double acc = 0.0;
    for (NodeId c : kids) acc += q[c] * clamp_to(desired[c] + shift, feas[c]);
    return acc;
  };
  double span = 1.0;
  for (NodeId c : kids) span = std::max({span, std::abs(desired[c] - feas[c].lo), std::abs(desired[c] - feas[c].hi)});
  double a = -2.0 * span, b = 2.0 * span;
  for (int it = 0; it < 200 && b - a > 0.0; ++it) {
    const double mid = 0.5 * (a + b);
    if (mid == a || mid == b) break;
    (mean_at(mid) < target ? a : b) = mid;
  }
  const double shift = std::abs(mean_at(a) - target) <= std::abs(mean_at(b) - target) ? a : b;
  for (NodeId c : kids) s[c] = clamp_to(desired[c] + shift, feas[c]);
}

}  // namespace

ConsistentPriceSystem cps_from_masses(const MarketModel& model, std::span<const double> mass,
                                      std::span<const double> value, double lambda_prime) {
  const ScenarioTree& tree = model.tree();
  const int n = static_cast<int>(tree.size());
  ConsistentPriceSystem cps;
  cps.q_cond.assign(n, 0.0);
  cps.s_tilde.assign(n, 0.0);
  cps.q_cond[tree.root()] = 1.0;
  std::vector<double> desired(n);
  for (NodeId v = 0; v < n; ++v) {
    if (!(mass[v] > 0.0)) throw PreconditionError("cps_from_masses needs strictly positive masses");
    desired[v] = value[v] / mass[v];
  }
  for (NodeId v : tree.internal_nodes()) {
    double total = 0.0;
    for (NodeId c : tree.children(v)) total += mass[c];
    for (NodeId c : tree.children(v)) cps.q_cond[c] = mass[c] / total;
  }
  std::vector<Interval> feas(n);
  for (NodeId v = n - 1; v >= 0; --v) {
    Interval I{(1.0 - lambda_prime) * model.ask(v), model.ask(v)};
    if (!tree.is_terminal(v)) {
      double lo = 0.0, hi = 0.0;
      for (NodeId c : tree.children(v)) {
        lo += cps.q_cond[c] * feas[c].lo;
        hi += cps.q_cond[c] * feas[c].hi;
      }
      I.lo = std::max(I.lo, lo);
      I.hi = std::min(I.hi, hi);
      if (I.lo > I.hi) I.lo = I.hi = 0.5 * (I.lo + I.hi);
    }
    feas[v] = I;
  }
  cps.s_tilde[tree.root()] = clamp_to(desired[tree.root()], feas[tree.root()]);
  for (NodeId v : tree.internal_nodes())
    assign_children(tree, v, cps.s_tilde[v], cps.q_cond, desired, feas, cps.s_tilde);
  return cps;
}

FindCpsResult find_cps(const MarketModel& model, double lambda_prime) {
  if (!(lambda_prime > 0.0) || lambda_prime > model.lambda())
    throw PreconditionError("lambda_prime must lie in (0, lambda]");
  const ScenarioTree& tree = model.tree();
  CpsProgram prog = build_cps_program(model, lambda_prime);
  LinearProgram& lp = prog.lp;
  lp.sense = Sense::maximize;
  const int t = lp.add_variable(1.0, -kInf, 1.0);
  for (NodeId v = 0; v < prog.n_nodes; ++v)
    if (v != tree.root()) lp.add_row({{prog.mass(v), 1.0}, {t, -tree.prob(v)}}, Relation::ge, 0.0);
  FindCpsResult out;
  out.report = solve_lp(lp, kEngineLp);
  if (out.report.status != SolveStatus::optimal) return out;
  out.min_density_ratio = out.report.x[t];
  if (!(out.min_density_ratio > 1e-9)) return out;
  const std::span<const double> x(out.report.x);
  out.cps = cps_from_masses(model, x.subspan(0, prog.n_nodes), x.subspan(prog.n_nodes, prog.n_nodes), lambda_prime);
  return out;
}

DensityPair cps_to_density(const MarketModel& model, const ConsistentPriceSystem& cps) {
  const ScenarioTree& tree = model.tree();
  DensityPair d;
  d.z0.assign(tree.size(), 1.0);
  d.z1.assign(tree.size(), 0.0);
  for (NodeId v = 0; v < static_cast<NodeId>(tree.size()); ++v) {
    if (v != tree.root()) d.z0[v] = d.z0[tree.parent(v)] * cps.q_cond[v] / tree.cond_prob(v);
    d.z1[v] = cps.s_tilde[v] * d.z0[v];
  }
  return d;
}

std::vector<double> terminal_measure(const MarketModel& model, const ConsistentPriceSystem& cps) {
  const ScenarioTree& tree = model.tree();
  std::vector<double> qnode(tree.size(), 1.0);
  for (NodeId v = 1; v < static_cast<NodeId>(tree.size()); ++v) qnode[v] = qnode[tree.parent(v)] * cps.q_cond[v];
  std::vector<double> out;
  for (NodeId w : tree.terminals()) out.push_back(qnode[w]);
  return out;
}

double expectation(const MarketModel& model, const ConsistentPriceSystem& cps, std::span<const double> claim) {
  const auto q = terminal_measure(model, cps);
  if (claim.size() != q.size()) throw PreconditionError("claim length differs from terminal count");
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) acc += q[i] * claim[i];
  return acc;
}

namespace {

// LP masses at or below this fraction of P(v) are treated as zero.
constexpr double kZeroMass = 1e-8;

// Zeroes numerically empty subtrees of an LP optimizer and, if any node ends up
// without mass, mixes in a strictly positive witness before converting to a CPS.
ConsistentPriceSystem positive_cps(const MarketModel& model, const std::vector<double>& mass,
                                   const std::vector<double>& value) {
  const ScenarioTree& tree = model.tree();
  const int n = static_cast<int>(tree.size());
  std::vector<double> m(mass), w(value);
  bool boundary = false;
  for (NodeId v = 0; v < n; ++v) {
    const bool dead = m[v] <= kZeroMass * tree.prob(v) || (v != tree.root() && m[tree.parent(v)] == 0.0);
    if (dead) {
      m[v] = 0.0;
      w[v] = 0.0;
      boundary = true;
    }
  }
  if (boundary) {
    const FindCpsResult witness = find_cps(model, model.lambda());
    if (!witness.cps) throw PreconditionError("no strictly positive CPS to mix with");
    const DensityPair d = cps_to_density(model, *witness.cps);
    for (NodeId v = 0; v < n; ++v) {
      m[v] = (1.0 - kMixWeight) * m[v] + kMixWeight * d.z0[v] * tree.prob(v);
      w[v] = (1.0 - kMixWeight) * w[v] + kMixWeight * d.z1[v] * tree.prob(v);
    }
  }
  ConsistentPriceSystem cps = cps_from_masses(model, m, w, model.lambda());
  cps.boundary = boundary;
  return cps;
}

}  // namespace

ExtremalResult extremal_cps(const MarketModel& model, std::span<const double> mass_cost,
                            std::span<const double> value_cost, Sense sense) {
  const int n = static_cast<int>(model.tree().size());
  if (mass_cost.size() != static_cast<std::size_t>(n) || value_cost.size() != static_cast<std::size_t>(n))
    throw PreconditionError("one cost per node required");
  CpsProgram prog = build_cps_program(model, model.lambda());
  prog.lp.sense = sense;
  for (NodeId v = 0; v < n; ++v) {
    prog.lp.objective[prog.mass(v)] = mass_cost[v];
    prog.lp.objective[prog.value(v)] = value_cost[v];
  }
  ExtremalResult out;
  out.report = solve_lp(prog.lp, kEngineLp);
  if (out.report.status != SolveStatus::optimal) return out;
  out.feasible = true;
  out.price = out.report.objective;
  out.mass.assign(out.report.x.begin(), out.report.x.begin() + n);
  out.value.assign(out.report.x.begin() + n, out.report.x.begin() + 2 * n);
  out.cps = positive_cps(model, out.mass, out.value);
  return out;
}

ExtremalResult extremal_expectation(const MarketModel& model, std::span<const double> claim, Sense sense) {
  const ScenarioTree& tree = model.tree();
  if (claim.size() != tree.terminals().size()) throw PreconditionError("claim length differs from terminal count");
  std::vector<double> mass_cost(tree.size(), 0.0), value_cost(tree.size(), 0.0);
  for (std::size_t i = 0; i < claim.size(); ++i) mass_cost[tree.terminals()[i]] = claim[i];
  return extremal_cps(model, mass_cost, value_cost, sense);
}

PriceInterval price_interval(const MarketModel& model, const EndowmentSet& endowments,
                             std::span<const double> q) {
  const std::vector<double> claim = endowments.combination(q);
  const ExtremalResult hi = extremal_expectation(model, claim, Sense::maximize);
  const ExtremalResult lo = extremal_expectation(model, claim, Sense::minimize);
  if (!hi.feasible || !lo.feasible) throw PreconditionError("the model admits no consistent price system");
  return {lo.price, hi.price};
}

const char* to_string(PriceMembership m) {
  switch (m) {
    case PriceMembership::interior: return "interior";
    case PriceMembership::boundary: return "boundary";
    case PriceMembership::none: return "none";
  }
  return "none";
}

PricedCps cps_with_price(const MarketModel& model, const EndowmentSet& endowments, std::span<const double> q,
                         double p) {
  PricedCps out;
  out.interval = price_interval(model, endowments, q);
  const double tol = kReplicableWidth * (1.0 + std::abs(p));
  if (p < out.interval.lo - tol || p > out.interval.hi + tol) return out;
  const bool on_edge = std::abs(p - out.interval.lo) <= tol || std::abs(p - out.interval.hi) <= tol;
  out.membership = on_edge ? PriceMembership::boundary : PriceMembership::interior;

  const ScenarioTree& tree = model.tree();
  const std::vector<double> claim = endowments.combination(q);
  CpsProgram prog = build_cps_program(model, model.lambda());
  LinearProgram& lp = prog.lp;
  lp.sense = Sense::maximize;
  std::vector<std::pair<int, double>> price_row;
  for (std::size_t i = 0; i < claim.size(); ++i) price_row.emplace_back(prog.mass(tree.terminals()[i]), claim[i]);
  // Snap boundary prices onto the interval so the row stays feasible.
  const double target = on_edge ? std::clamp(p, out.interval.lo, out.interval.hi) : p;
  lp.add_row(std::move(price_row), Relation::eq, target);
  const int t = lp.add_variable(1.0, -kInf, 1.0);
  for (NodeId v = 0; v < prog.n_nodes; ++v)
    if (v != tree.root()) lp.add_row({{prog.mass(v), 1.0}, {t, -tree.prob(v)}}, Relation::ge, 0.0);
  const SolveReport rep = solve_lp(lp, kEngineLp);
  if (rep.status != SolveStatus::optimal) {
    out.membership = PriceMembership::none;
    return out;
  }
  const std::vector<double> mass(rep.x.begin(), rep.x.begin() + prog.n_nodes);
  const std::vector<double> value(rep.x.begin() + prog.n_nodes, rep.x.begin() + 2 * prog.n_nodes);
  out.cps = positive_cps(model, mass, value);
  return out;
}

bool check_replicable(const MarketModel& model, const EndowmentSet& endowments, std::span<const double> q) {
  return price_interval(model, endowments, q).width() <= kReplicableWidth;
}

}  // namespace fdual
