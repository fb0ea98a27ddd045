#include "fdual/duality.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fdual/random.hpp"

namespace fdual {

namespace {

std::vector<double> backward_fill(const ScenarioTree& tree, std::vector<double> values) {
  const auto internal = tree.internal_nodes();
  for (auto it = internal.rbegin(); it != internal.rend(); ++it) {
    double acc = 0.0;
    for (NodeId c : tree.children(*it)) acc += tree.cond_prob(c) * values[c];
    values[*it] = acc;
  }
  return values;
}

struct PrimalProgram {
  SeparableConcaveProgram prog;
  static int buy(NodeId v) { return 2 * v; }
  static int sell(NodeId v) { return 2 * v + 1; }
};

PrimalProgram build_primal(const MarketModel& model, double x, const std::vector<double>& endow,
                           const UtilityFunction& u) {
  const ScenarioTree& tree = model.tree();
  PrimalProgram pp;
  SeparableConcaveProgram& prog = pp.prog;
  for (std::size_t v = 0; v < tree.size(); ++v) {
    prog.add_variable(0.0);
    prog.add_variable(0.0);
  }
  for (NodeId w : tree.terminals()) {
    std::vector<std::pair<int, double>> flat;
    ConcaveTerm t = utility_term(u, tree.prob(w));
    for (NodeId v : tree.path_to(w)) {
      flat.emplace_back(PrimalProgram::buy(v), 1.0);
      flat.emplace_back(PrimalProgram::sell(v), -1.0);
      t.coeffs.emplace_back(PrimalProgram::buy(v), -model.ask(v));
      t.coeffs.emplace_back(PrimalProgram::sell(v), model.bid(v));
    }
    t.offset = x + endow[tree.terminal_index(w)];
    prog.cons.add_row(std::move(flat), Relation::eq, 0.0);
    prog.terms.push_back(std::move(t));
  }
  return pp;
}

/// Interior point of the primal trades: the max-min-wealth LP solution plus
/// random round trips that cost at most half of the smallest wealth.
std::vector<double> random_interior_point(const MarketModel& model, double x, const std::vector<double>& endow,
                                          std::uint64_t seed) {
  const ScenarioTree& tree = model.tree();
  LinearProgram lp;
  lp.sense = Sense::maximize;
  for (std::size_t v = 0; v < tree.size(); ++v) {
    lp.add_variable(0.0);
    lp.add_variable(0.0);
  }
  const int t = lp.add_variable(1.0, -kInf, 1.0 + std::abs(x));
  for (NodeId w : tree.terminals()) {
    std::vector<std::pair<int, double>> flat, cash{{t, 1.0}};
    for (NodeId v : tree.path_to(w)) {
      flat.emplace_back(PrimalProgram::buy(v), 1.0);
      flat.emplace_back(PrimalProgram::sell(v), -1.0);
      cash.emplace_back(PrimalProgram::buy(v), model.ask(v));
      cash.emplace_back(PrimalProgram::sell(v), -model.bid(v));
    }
    lp.add_row(std::move(flat), Relation::eq, 0.0);
    lp.add_row(std::move(cash), Relation::le, x + endow[tree.terminal_index(w)]);
  }
  const SolveReport rep = solve_lp(lp, kEngineLp);
  if (rep.status != SolveStatus::optimal || !(rep.x[t] > 0.0))
    throw SolverFailure("no strictly positive terminal wealth for the randomized start", rep);
  const double level = rep.x[t];
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.1, 1.0);
  std::vector<double> point(rep.x.begin(), rep.x.begin() + 2 * static_cast<long>(tree.size()));
  const double per_node = level / (2.0 * (tree.horizon() + 1));
  for (NodeId v = 0; v < static_cast<NodeId>(tree.size()); ++v) {
    const double cost = model.ask(v) - model.bid(v);
    const double a = unit(rng) * (cost > 0.0 ? std::min(1.0, per_node / cost) : 1.0);
    point[PrimalProgram::buy(v)] = std::max(point[PrimalProgram::buy(v)], 0.0) + a;
    point[PrimalProgram::sell(v)] = std::max(point[PrimalProgram::sell(v)], 0.0) + a;
  }
  return point;
}

// Moves the right-hand sides of rows [first, first + r.size()) to the nearest
// consistent values when they are off by rounding only.
bool snap_to_face(ConstraintSet& cons, std::size_t first, std::span<const double> r) {
  LinearProgram lp;
  lp.cons = cons;
  lp.objective.assign(cons.n_vars(), 0.0);
  double scale = 1.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    SparseRow& row = lp.cons.rows[first + i];
    scale = std::max(scale, std::abs(r[i]));
    const int up = lp.add_variable(1.0);
    const int down = lp.add_variable(1.0);
    row.coeffs.emplace_back(up, -1.0);
    row.coeffs.emplace_back(down, 1.0);
  }
  const SolveReport rep = solve_lp(lp, kEngineLp);
  if (rep.status != SolveStatus::optimal || rep.objective > 1e-8 * scale) return false;
  for (std::size_t i = 0; i < r.size(); ++i)
    cons.rows[first + i].rhs = lp.cons.row_activity(first + i, rep.x) + rep.x[cons.n_vars() + 2 * i] -
                               rep.x[cons.n_vars() + 2 * i + 1];
  return true;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

ConcaveTerm utility_term(const UtilityFunction& u, double weight) {
  ConcaveTerm t;
  t.weight = weight;
  if (u.kind() == UtilityFunction::Kind::log) {
    t.kind = ConcaveTerm::Kind::log;
  } else {
    t.kind = ConcaveTerm::Kind::power;
    t.exponent = u.exponent();
  }
  return t;
}

double DeflatorResiduals::max() const noexcept { return std::max({nonnegativity, spread, drift}); }

std::pair<std::vector<double>, std::vector<double>> deflator_drift(const MarketModel& model, const Deflator& d) {
  const ScenarioTree& tree = model.tree();
  std::vector<double> d0(tree.size(), 0.0), d1(tree.size(), 0.0);
  for (NodeId v : tree.internal_nodes()) {
    double m0 = 0.0, m1 = 0.0;
    for (NodeId c : tree.children(v)) {
      m0 += tree.cond_prob(c) * d.y0[c];
      m1 += tree.cond_prob(c) * d.y1[c];
    }
    d0[v] = m0 - d.y0[v];
    d1[v] = m1 - d.y1[v];
  }
  return {std::move(d0), std::move(d1)};
}

DeflatorResiduals check_deflator(const MarketModel& model, const Deflator& d) {
  const ScenarioTree& tree = model.tree();
  if (d.y0.size() != tree.size() || d.y1.size() != tree.size())
    throw PreconditionError("deflator needs one value per node");
  DeflatorResiduals r;
  for (NodeId v = 0; v < static_cast<NodeId>(tree.size()); ++v) {
    r.nonnegativity = std::max({r.nonnegativity, -d.y0[v], -d.y1[v]});
    r.spread = std::max({r.spread, model.bid(v) * d.y0[v] - d.y1[v], d.y1[v] - model.ask(v) * d.y0[v]});
  }
  const auto [d0, d1] = deflator_drift(model, d);
  for (NodeId v : tree.internal_nodes())
    r.drift = std::max({r.drift, d0[v], model.ask(v) * d0[v] - d1[v], d1[v] - model.bid(v) * d0[v]});
  return r;
}

std::pair<double, double> martingale_residuals(const MarketModel& model, const Deflator& d) {
  const auto [d0, d1] = deflator_drift(model, d);
  double r0 = 0.0, r1 = 0.0;
  for (NodeId v : model.tree().internal_nodes()) {
    r0 = std::max(r0, std::abs(d0[v]));
    r1 = std::max(r1, std::abs(d1[v]));
  }
  return {r0, r1};
}

double max_deflated_drift(const MarketModel& model, const Portfolio& pf, const Deflator& d) {
  const ScenarioTree& tree = model.tree();
  auto wealth = [&](NodeId v) { return pf.bond[v] * d.y0[v] + pf.shares[v] * d.y1[v]; };
  double worst = wealth(tree.root()) - pf.x * d.y0[tree.root()];
  for (NodeId v : tree.internal_nodes()) {
    double m = 0.0;
    for (NodeId c : tree.children(v)) m += tree.cond_prob(c) * wealth(c);
    worst = std::max(worst, m - wealth(v));
  }
  return worst;
}

Deflator density_deflator(const MarketModel& model, const ConsistentPriceSystem& cps, double y) {
  DensityPair z = cps_to_density(model, cps);
  for (double& v : z.z0) v *= y;
  for (double& v : z.z1) v *= y;
  return {std::move(z.z0), std::move(z.z1)};
}

namespace {

ConstraintSet deflator_rows(const MarketModel& model, bool martingale) {
  const ScenarioTree& tree = model.tree();
  auto c0 = [](NodeId v) { return 2 * v; };
  auto c1 = [](NodeId v) { return 2 * v + 1; };
  ConstraintSet cons;
  for (std::size_t v = 0; v < tree.size(); ++v) {
    cons.add_variable(0.0);
    cons.add_variable(0.0);
  }
  for (NodeId v = 0; v < static_cast<NodeId>(tree.size()); ++v) {
    cons.add_row({{c1(v), 1.0}, {c0(v), -model.ask(v)}}, Relation::le, 0.0);
    cons.add_row({{c1(v), 1.0}, {c0(v), -model.bid(v)}}, Relation::ge, 0.0);
  }
  for (NodeId v : tree.internal_nodes()) {
    // d0 = sum p y0(c) - y0(v), d1 = sum p y1(c) - y1(v).
    std::vector<std::pair<int, double>> d0{{c0(v), -1.0}}, d1{{c1(v), -1.0}};
    for (NodeId c : tree.children(v)) {
      d0.emplace_back(c0(c), tree.cond_prob(c));
      d1.emplace_back(c1(c), tree.cond_prob(c));
    }
    auto combine = [](const std::vector<std::pair<int, double>>& a, double sa,
                      const std::vector<std::pair<int, double>>& b, double sb) {
      std::vector<std::pair<int, double>> out;
      for (const auto& [j, x] : a) out.emplace_back(j, sa * x);
      for (const auto& [j, x] : b) out.emplace_back(j, sb * x);
      return out;
    };
    if (martingale) {
      cons.add_row(std::move(d0), Relation::eq, 0.0);
      cons.add_row(std::move(d1), Relation::eq, 0.0);
      continue;
    }
    cons.add_row(d0, Relation::le, 0.0);
    cons.add_row(combine(d0, model.ask(v), d1, -1.0), Relation::le, 0.0);
    cons.add_row(combine(d1, 1.0, d0, -model.bid(v)), Relation::le, 0.0);
  }
  return cons;
}

}  // namespace

ConstraintSet deflator_cone(const MarketModel& model) { return deflator_rows(model, false); }

ConstraintSet martingale_deflators(const MarketModel& model) { return deflator_rows(model, true); }

PrimalSolution primal_solve(const MarketModel& model, const EndowmentSet& endowments, double x,
                            std::span<const double> q, const UtilityFunction& u, const PrimalOptions& opts) {
  const ScenarioTree& tree = model.tree();
  const KCheck k = feasible_K(model, endowments, x, q);
  if (k.membership != KMembership::interior)
    throw OutsideDomain("(x, q) is not in the interior of K: x must exceed " + std::to_string(k.threshold));
  PrimalSolution out;
  out.x = x;
  out.q.assign(q.begin(), q.end());
  if (std::any_of(q.begin(), q.end(), [](double v) { return v != 0.0; }))
    out.endowment_replicable = check_replicable(model, endowments, q);

  const std::vector<double> endow = endowments.combination(q);
  const PrimalProgram pp = build_primal(model, x, endow, u);
  ConcaveOptions co;
  co.tol = opts.tol;
  co.acceptable_tol = kAcceptableTol;
  co.max_iter = opts.max_iter;
  if (opts.init_seed) co.initial_point = random_interior_point(model, x, endow, *opts.init_seed);
  out.report = solve_concave(pp.prog, co);
  if (out.report.status != SolveStatus::optimal)
    throw SolverFailure("primal solve ended with status " + to_string(out.report.status), out.report);

  std::vector<NodeTrade> trades(tree.size());
  for (NodeId v = 0; v < static_cast<NodeId>(tree.size()); ++v)
    trades[v] = {std::max(out.report.x[PrimalProgram::buy(v)], 0.0),
                 std::max(out.report.x[PrimalProgram::sell(v)], 0.0)};
  out.portfolio = make_portfolio(model, x, std::move(trades), true);
  out.wealth = terminal_values(model, out.portfolio);
  for (std::size_t i = 0; i < out.wealth.size(); ++i) {
    out.wealth[i] += endow[i];
    if (!(out.wealth[i] > 0.0)) throw SolverFailure("optimal terminal wealth is not strictly positive", out.report);
  }
  for (NodeId w : tree.terminals()) out.value += tree.prob(w) * u.value(out.wealth[tree.terminal_index(w)]);
  out.liquidation_duals = out.report.row_duals;
  return out;
}

DualSolution extract_dual_from_primal(const MarketModel& model, const EndowmentSet& endowments,
                                      const UtilityFunction& u, const PrimalSolution& primal) {
  const ScenarioTree& tree = model.tree();
  if (primal.report.status != SolveStatus::optimal) throw PreconditionError("primal solution is not optimal");
  DualSolution out;
  std::vector<double> y0(tree.size(), 0.0), y1(tree.size(), 0.0);
  for (NodeId w : tree.terminals()) {
    const int i = tree.terminal_index(w);
    y0[w] = u.deriv(primal.wealth[i]);
    y1[w] = -primal.liquidation_duals[i] / tree.prob(w);
  }
  out.deflator = {backward_fill(tree, std::move(y0)), backward_fill(tree, std::move(y1))};
  out.y = out.deflator.y0[tree.root()];
  out.r.assign(endowments.n_claims(), 0.0);
  for (NodeId w : tree.terminals()) {
    const int i = tree.terminal_index(w);
    const double weight = tree.prob(w) * out.deflator.y0[w];
    for (std::size_t c = 0; c < endowments.n_claims(); ++c) out.r[c] += weight * endowments.claim(c)[i];
    out.value += tree.prob(w) * u.conjugate(out.deflator.y0[w]);
  }
  out.residuals = check_deflator(model, out.deflator);
  out.report = primal.report;
  double scale = 1.0;
  for (double v : out.deflator.y1) scale = std::max(scale, std::abs(v));
  if (out.residuals.max() > 1e-7 * scale)
    throw SolverFailure("primal multipliers do not form a deflator (residual " +
                            std::to_string(out.residuals.max()) + ")",
                        primal.report);
  return out;
}

const char* to_string(DualStatus s) {
  switch (s) {
    case DualStatus::optimal: return "optimal";
    case DualStatus::infeasible_outside_L: return "infeasible-outside-L";
    case DualStatus::infeasible_transcription: return "infeasible-transcription";
    case DualStatus::solver_failure: return "solver-failure";
  }
  return "solver-failure";
}

namespace {

DualSolveResult solve_dual_program(ConstraintSet rows, const MarketModel& model, const EndowmentSet& endowments,
                                   double y, std::span<const double> r, const UtilityFunction& u, double tol) {
  const ScenarioTree& tree = model.tree();
  if (r.size() != endowments.n_claims()) throw PreconditionError("r needs one entry per claim");
  auto c0 = [](NodeId v) { return 2 * v; };
  SeparableConcaveProgram prog;
  prog.cons = std::move(rows);
  prog.linear.assign(prog.cons.n_vars(), 0.0);
  prog.cons.add_row({{c0(tree.root()), 1.0}}, Relation::eq, y);
  const std::size_t first_price_row = prog.cons.rows.size();
  for (std::size_t i = 0; i < endowments.n_claims(); ++i) {
    std::vector<std::pair<int, double>> row;
    for (NodeId w : tree.terminals()) row.emplace_back(c0(w), tree.prob(w) * endowments.claim(i)[tree.terminal_index(w)]);
    prog.cons.add_row(std::move(row), Relation::eq, r[i]);
  }
  // -U~(y) is log y + 1 for log utility and y^s / s, s = p / (p - 1), for power utility.
  for (NodeId w : tree.terminals()) {
    ConcaveTerm t;
    t.weight = tree.prob(w);
    t.coeffs = {{c0(w), 1.0}};
    if (u.kind() == UtilityFunction::Kind::log) {
      t.kind = ConcaveTerm::Kind::log;
      prog.constant += tree.prob(w);
    } else {
      t.kind = ConcaveTerm::Kind::power;
      t.exponent = u.exponent() / (u.exponent() - 1.0);
    }
    prog.terms.push_back(std::move(t));
  }

  DualSolveResult res;
  ConcaveOptions co;
  co.tol = tol;
  co.acceptable_tol = kAcceptableTol;
  DualSolution& sol = res.solution;
  sol.y = y;
  sol.r.assign(r.begin(), r.end());
  sol.report = solve_concave(prog, co);
  const bool near_boundary = sol.report.status == SolveStatus::empty_interior ||
                             (sol.report.status == SolveStatus::infeasible && sol.report.phase1_slack > -1e-7);
  if (near_boundary) {
    // On the boundary of L some cone rows are tight for every feasible deflator.
    if (auto face = tighten_implicit_equalities(prog.cons)) {
      prog.cons = std::move(*face);
      const double slack = sol.report.phase1_slack;
      sol.report = solve_concave(prog, co);
      if (sol.report.status != SolveStatus::optimal && snap_to_face(prog.cons, first_price_row, r))
        sol.report = solve_concave(prog, co);
      if (sol.report.status == SolveStatus::optimal) sol.report.phase1_slack = slack;
    }
  }
  switch (sol.report.status) {
    case SolveStatus::optimal: break;
    case SolveStatus::infeasible:
    case SolveStatus::empty_interior:
      res.status = check_L(model, endowments, y, r) == LMembership::outside ? DualStatus::infeasible_outside_L
                                                                              : DualStatus::infeasible_transcription;
      return res;
    default: res.status = DualStatus::solver_failure; return res;
  }
  res.status = DualStatus::optimal;
  sol.deflator.y0.resize(tree.size());
  sol.deflator.y1.resize(tree.size());
  for (NodeId v = 0; v < static_cast<NodeId>(tree.size()); ++v) {
    sol.deflator.y0[v] = sol.report.x[2 * v];
    sol.deflator.y1[v] = sol.report.x[2 * v + 1];
  }
  for (NodeId w : tree.terminals()) sol.value += tree.prob(w) * u.conjugate(sol.deflator.y0[w]);
  sol.residuals = check_deflator(model, sol.deflator);
  for (std::size_t i = 0; i < endowments.n_claims(); ++i) {
    double e = 0.0;
    for (NodeId w : tree.terminals())
      e += tree.prob(w) * sol.deflator.y0[w] * endowments.claim(i)[tree.terminal_index(w)];
    sol.endowment_residual = std::max(sol.endowment_residual, std::abs(e - r[i]));
  }
  return res;
}

}  // namespace

DualSolveResult dual_solve(const MarketModel& model, const EndowmentSet& endowments, double y,
                           std::span<const double> r, const UtilityFunction& u, double tol) {
  DualSolveResult res = solve_dual_program(martingale_deflators(model), model, endowments, y, r, u, tol);
  if (res.status != DualStatus::optimal) return res;
  const DualSolveResult cone = dual_solve_cone(model, endowments, y, r, u, tol);
  res.solution.transcription_slack =
      cone.status == DualStatus::optimal ? res.solution.value - cone.solution.value : std::nan("");
  return res;
}

DualSolveResult dual_solve_cone(const MarketModel& model, const EndowmentSet& endowments, double y,
                                std::span<const double> r, const UtilityFunction& u, double tol) {
  return solve_dual_program(deflator_cone(model), model, endowments, y, r, u, tol);
}

const char* to_string(LMembership m) {
  switch (m) {
    case LMembership::interior: return "interior";
    case LMembership::boundary: return "boundary";
    case LMembership::outside: return "outside";
  }
  return "outside";
}

LMembership check_L(const MarketModel& model, const EndowmentSet& endowments, double y, std::span<const double> r) {
  const std::size_t n = endowments.n_claims();
  if (r.size() != n) throw PreconditionError("r needs one entry per claim");
  const double rmax = r.empty() ? 0.0 : std::abs(*std::max_element(r.begin(), r.end(), [](double a, double b) {
    return std::abs(a) < std::abs(b);
  }));
  if (y < 0.0) return LMembership::outside;
  if (y <= 1e-14) return rmax <= 1e-12 ? LMembership::boundary : LMembership::outside;
  if (n == 0) return LMembership::interior;
  if (n == 1) {
    const std::vector<double> unit{1.0};
    const PricedCps p = cps_with_price(model, endowments, unit, r[0] / y);
    switch (p.membership) {
      case PriceMembership::interior: return LMembership::interior;
      case PriceMembership::boundary: return LMembership::boundary;
      case PriceMembership::none: return LMembership::outside;
    }
  }
  // Several claims: a CPS pricing every claim at r_i / y, with the largest
  // smallest density ratio deciding between interior and boundary.
  const ScenarioTree& tree = model.tree();
  CpsProgram prog = build_cps_program(model, model.lambda());
  LinearProgram& lp = prog.lp;
  lp.sense = Sense::maximize;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<int, double>> row;
    for (NodeId w : tree.terminals()) row.emplace_back(prog.mass(w), endowments.claim(i)[tree.terminal_index(w)]);
    lp.add_row(std::move(row), Relation::eq, r[i] / y);
  }
  const int t = lp.add_variable(1.0, -kInf, 1.0);
  for (NodeId v = 0; v < prog.n_nodes; ++v)
    if (v != tree.root()) lp.add_row({{prog.mass(v), 1.0}, {t, -tree.prob(v)}}, Relation::ge, 0.0);
  const SolveReport rep = solve_lp(lp, kEngineLp);
  if (rep.status != SolveStatus::optimal) return LMembership::outside;
  return rep.x[t] > 1e-9 ? LMembership::interior : LMembership::boundary;
}

ConjugacyReport conjugacy_check(const MarketModel& model, const EndowmentSet& endowments, const UtilityFunction& u,
                                std::span<const PrimalPoint> primal_grid, std::span<const DualPoint> dual_grid) {
  ConjugacyReport rep;
  for (const DualPoint& d : dual_grid) {
    const DualSolveResult r = dual_solve(model, endowments, d.y, d.r, u);
    rep.dual_values.push_back(r.status == DualStatus::optimal ? r.solution.value : std::nan(""));
  }
  for (std::size_t i = 0; i < primal_grid.size(); ++i) {
    const PrimalPoint& p = primal_grid[i];
    const PrimalSolution primal = primal_solve(model, endowments, p.x, p.q, u);
    rep.primal_values.push_back(primal.value);
    double best = kInf;
    for (std::size_t j = 0; j < dual_grid.size(); ++j) {
      if (std::isnan(rep.dual_values[j])) continue;
      const double bound = rep.dual_values[j] + p.x * dual_grid[j].y + dot(p.q, dual_grid[j].r);
      rep.pairs.push_back({i, j, primal.value - bound});
      rep.max_excess = std::max(rep.max_excess, primal.value - bound);
      best = std::min(best, bound - primal.value);
    }
    const DualSolution ext = extract_dual_from_primal(model, endowments, u, primal);
    const DualSolveResult at = dual_solve(model, endowments, ext.y, ext.r, u);
    if (at.status == DualStatus::optimal)
      best = std::min(best, at.solution.value + p.x * ext.y + dot(p.q, ext.r) - primal.value);
    rep.attainment_gap.push_back(best);
  }
  return rep;
}

SubdifferentialResult subdifferential(const MarketModel& model, const EndowmentSet& endowments, double x,
                                      std::span<const double> q, const UtilityFunction& u, double h, double tol) {
  const PrimalSolution base = primal_solve(model, endowments, x, q, u);
  const DualSolution dual = extract_dual_from_primal(model, endowments, u, base);
  SubdifferentialResult out;
  out.y = dual.y;
  out.r = dual.r;
  out.membership = check_L(model, endowments, dual.y, dual.r);
  auto probe = [&](double dx, std::size_t dir, double dq) {
    std::vector<double> q2(q.begin(), q.end());
    if (dir < q2.size()) q2[dir] += dq;
    try {
      const PrimalSolution p = primal_solve(model, endowments, x + dx, q2, u);
      double lin = out.y * dx;
      if (dir < q2.size()) lin += out.r[dir] * dq;
      out.worst_violation = std::max(out.worst_violation, p.value - base.value - lin);
      ++out.probes;
    } catch (const OutsideDomain&) {
    }
  };
  const std::size_t none = q.size();
  probe(h, none, 0.0);
  probe(-h, none, 0.0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    probe(0.0, i, h);
    probe(0.0, i, -h);
  }
  out.certified = out.probes > 0 && out.worst_violation <= tol && out.membership != LMembership::outside;
  return out;
}

BipolarCheck bipolar_membership(const MarketModel& model, const EndowmentSet& endowments, double x,
                                std::span<const double> q, std::span<const double> g, double tol) {
  if (std::any_of(g.begin(), g.end(), [](double v) { return v < 0.0; }))
    throw PreconditionError("membership in C(x, q) is defined for nonnegative claims");
  std::vector<double> claim = endowments.combination(q);
  for (std::size_t i = 0; i < claim.size(); ++i) claim[i] = g[i] - claim[i];
  const SuperhedgeResult sh = superhedge_price(model, claim);
  if (!sh.ok) throw SolverFailure("superhedging LP failed", sh.hedge_report);
  BipolarCheck out;
  out.vertex_excess = sh.price - x;
  out.hedge_excess = sh.hedge_capital - x;
  out.member_by_vertices = out.vertex_excess <= tol;
  out.member_by_hedge = out.hedge_excess <= tol;
  return out;
}

BipolarReport verify_bipolar(const MarketModel& model, const EndowmentSet& endowments, const UtilityFunction& u,
                             double x, std::span<const double> q, int samples, std::uint64_t seed) {
  const ScenarioTree& tree = model.tree();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const PrimalSolution primal = primal_solve(model, endowments, x, q, u);
  const DualSolution dual = extract_dual_from_primal(model, endowments, u, primal);
  const std::vector<double> endow = endowments.combination(q);
  const auto vertices = random_cps_vertices(rng, model, 8);
  BipolarReport rep;

  auto record = [&](const std::vector<double>& g, bool expect_member) {
    const BipolarCheck c = bipolar_membership(model, endowments, x, q, g);
    if (!c.consistent()) ++rep.inconsistent;
    if (expect_member) {
      ++rep.members;
      if (c.member_by_vertices && c.member_by_hedge) ++rep.members_passing;
      for (const auto& v : vertices)
        rep.worst_member_excess =
            std::max(rep.worst_member_excess, expectation(model, v.cps, g) - x - expectation(model, v.cps, endow));
    } else {
      ++rep.non_members;
      if (!c.member_by_vertices && !c.member_by_hedge) ++rep.non_members_rejected;
    }
  };

  const KCheck k = feasible_K(model, endowments, x, q);
  record(std::vector<double>(tree.terminals().size(), 0.5 * (x - k.threshold)), true);
  for (int s = 0; s < samples; ++s) {
    // Optimal trades plus a scaled random liquidated strategy from zero capital.
    const Portfolio extra = random_portfolio(rng, model, 0.0, 1.0);
    const std::vector<double> dv = terminal_values(model, extra);
    double worst = 0.0, floor = kInf;
    for (std::size_t i = 0; i < dv.size(); ++i) {
      worst = std::max(worst, -dv[i]);
      floor = std::min(floor, primal.wealth[i]);
    }
    const double scale = worst > 0.0 ? std::min(1.0, 0.5 * floor / worst) : 1.0;
    const double shrink = 0.3 + 0.7 * unit(rng);
    std::vector<double> g(dv.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = shrink * (primal.wealth[i] + scale * dv[i]);
    record(g, true);

    // The optimal wealth has max_Q E^Q[W - q.E_T] = x; a bump with Q*-mass 1e-3 breaks it.
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, dv.size() - 1)(rng);
    const NodeId w = tree.terminals()[j];
    const double qstar = tree.prob(w) * dual.deflator.y0[w] / dual.y;
    std::vector<double> bumped(primal.wealth);
    bumped[j] += 1e-3 / qstar;
    record(bumped, false);
  }
  return rep;
}

}  // namespace fdual
