#include "fdual/shadow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

namespace fdual {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

bool ShadowCandidate::all_well_defined() const noexcept {
  return std::all_of(well_defined.begin(), well_defined.end(), [](bool b) { return b; });
}

ShadowCandidate candidate_shadow(const MarketModel& model, const Deflator& d) {
  const ScenarioTree& tree = model.tree();
  if (d.y0.size() != tree.size() || d.y1.size() != tree.size())
    throw PreconditionError("deflator needs one value per node");
  if (std::all_of(d.y0.begin(), d.y0.end(), [](double v) { return v == 0.0; }) &&
      std::all_of(d.y1.begin(), d.y1.end(), [](double v) { return v == 0.0; }))
    throw PreconditionError("deflator is identically zero");
  ShadowCandidate c;
  c.s_hat.assign(tree.size(), kNaN);
  c.well_defined.assign(tree.size(), false);
  for (NodeId v = 0; v < static_cast<NodeId>(tree.size()); ++v) {
    if (!(d.y0[v] > 0.0)) continue;
    const double s = d.y1[v] / d.y0[v];
    c.s_hat[v] = s;
    c.well_defined[v] = true;
    const double out = std::max({model.bid(v) - s, s - model.ask(v), 0.0});
    c.spread_violation = std::max(c.spread_violation, out);
    if (out > 1e-7 * model.ask(v))
      throw PreconditionError("candidate leaves the bid-ask spread at node " + std::to_string(v));
  }
  return c;
}

TradeConditionReport verify_trade_conditions(const MarketModel& model, const PrimalSolution& primal,
                                             const ShadowCandidate& cand, double tol, double trade_eps) {
  const ScenarioTree& tree = model.tree();
  if (primal.portfolio.trades.size() != tree.size() || cand.s_hat.size() != tree.size())
    throw PreconditionError("primal and candidate must come from the same model");
  TradeConditionReport rep;
  for (NodeId v = 0; v < static_cast<NodeId>(tree.size()); ++v) {
    const double net = primal.portfolio.trades[v].buy - primal.portfolio.trades[v].sell;
    if (std::abs(net) <= trade_eps) continue;
    TradeConditionReport::Node n;
    n.node = v;
    n.net_trade = net;
    n.s_hat = cand.s_hat[v];
    n.target = net > 0.0 ? model.ask(v) : model.bid(v);
    n.deviation = cand.well_defined[v] ? std::abs(n.s_hat - n.target) : kInf;
    rep.max_deviation = std::max(rep.max_deviation, n.deviation);
    rep.trading.push_back(n);
    if (!(n.deviation <= tol)) rep.violations.push_back(n);
  }
  return rep;
}

FrictionlessSolution frictionless_solve(const MarketModel& model, const ShadowCandidate& cand,
                                        const EndowmentSet& endowments, double x, std::span<const double> q,
                                        const UtilityFunction& u) {
  const ScenarioTree& tree = model.tree();
  if (cand.s_hat.size() != tree.size() || !cand.all_well_defined())
    throw PreconditionError("candidate must be defined at every node");
  const std::vector<double> endow = endowments.combination(q);

  SeparableConcaveProgram prog;
  std::vector<int> var(tree.size(), -1);
  for (NodeId v : tree.internal_nodes()) {
    const auto kids = tree.children(v);
    const bool moves = std::any_of(kids.begin(), kids.end(), [&](NodeId c) {
      return std::abs(cand.s_hat[c] - cand.s_hat[kids.front()]) > 1e-14 * (1.0 + std::abs(cand.s_hat[c]));
    });
    if (moves) var[v] = prog.add_variable();
  }
  for (NodeId w : tree.terminals()) {
    ConcaveTerm t = utility_term(u, tree.prob(w));
    t.offset = x + endow[tree.terminal_index(w)];
    const auto path = tree.path_to(w);
    for (std::size_t k = 0; k + 1 < path.size(); ++k)
      if (var[path[k]] >= 0) t.coeffs.emplace_back(var[path[k]], cand.s_hat[path[k + 1]] - cand.s_hat[path[k]]);
    prog.terms.push_back(std::move(t));
  }

  FrictionlessSolution out;
  out.holdings.assign(tree.size(), 0.0);
  std::vector<double> h;
  if (prog.cons.n_vars() > 0) {
    ConcaveOptions co;
    co.tol = kPrimalTol;
    co.acceptable_tol = kAcceptableTol;
    out.report = solve_concave(prog, co);
    if (out.report.status != SolveStatus::optimal)
      throw SolverFailure("frictionless solve ended with status " + to_string(out.report.status), out.report);
    h = out.report.x;
  } else {
    out.report.status = SolveStatus::optimal;
  }
  for (NodeId v = 0; v < static_cast<NodeId>(tree.size()); ++v)
    if (var[v] >= 0) out.holdings[v] = h[static_cast<std::size_t>(var[v])];
  out.wealth.assign(tree.terminals().size(), 0.0);
  for (NodeId w : tree.terminals()) {
    const int i = tree.terminal_index(w);
    const double wealth = prog.term_argument(static_cast<std::size_t>(i), h);
    if (!(wealth > 0.0)) throw SolverFailure("frictionless terminal wealth is not strictly positive", out.report);
    out.wealth[i] = wealth;
    out.value += tree.prob(w) * u.value(wealth);
  }
  return out;
}

double ClassicConditions::max() const noexcept {
  return std::max({y0_martingale_residual, y1_martingale_residual, price_match_residual});
}

ClassicConditions check_classic(const MarketModel& model, const EndowmentSet& endowments, const DualSolution& dual) {
  const ScenarioTree& tree = model.tree();
  ClassicConditions c;
  std::tie(c.y0_martingale_residual, c.y1_martingale_residual) = martingale_residuals(model, dual.deflator);
  if (!(dual.y > 0.0)) {
    c.price_match_residual = kInf;
    return c;
  }
  for (std::size_t i = 0; i < endowments.n_claims(); ++i) {
    double e = 0.0;
    for (NodeId w : tree.terminals())
      e += tree.prob(w) * dual.deflator.y0[w] * endowments.claim(i)[tree.terminal_index(w)];
    c.price_match_residual = std::max(c.price_match_residual, std::abs(e - dual.r[i]) / dual.y);
  }
  return c;
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::classic: return "classic";
    case Verdict::verified_at_optimum: return "verified-at-optimum";
    case Verdict::failed: return "failed";
  }
  return "failed";
}

ShadowVerdict shadow_verdict(const MarketModel& model, const EndowmentSet& endowments, const UtilityFunction& u,
                             const PrimalSolution& primal, const DualSolution& dual, double tol) {
  ShadowVerdict out;
  out.candidate = candidate_shadow(model, dual.deflator);
  out.trades = verify_trade_conditions(model, primal, out.candidate, tol);
  out.classic = check_classic(model, endowments, dual);
  out.primal_value = primal.value;
  out.shadow_value = kNaN;
  out.value_gap = kInf;
  if (out.candidate.all_well_defined()) {
    try {
      out.shadow_value = frictionless_solve(model, out.candidate, endowments, primal.x, primal.q, u).value;
      out.value_gap = std::abs(out.shadow_value - out.primal_value);
    } catch (const SolverFailure&) {
    }
  }
  if (out.classic.max() <= tol && out.value_gap <= tol)
    out.verdict = Verdict::classic;
  else if (out.trades.ok() && out.value_gap <= tol)
    out.verdict = Verdict::verified_at_optimum;
  return out;
}

DominationReport check_endowment_domination(const MarketModel& model, const EndowmentSet& endowments,
                                            double q_sign) {
  if (endowments.n_claims() != 1) throw PreconditionError("endowment domination needs exactly one claim");
  if (q_sign == 0.0 || std::isnan(q_sign)) throw PreconditionError("q must be nonzero");
  const ScenarioTree& tree = model.tree();
  const auto e = endowments.claim(0);
  DominationReport rep;
  if (q_sign > 0.0) {
    rep.a = -kInf;
    for (NodeId w : tree.terminals()) rep.a = std::max(rep.a, e[tree.terminal_index(w)] / model.bid(w));
    rep.satisfiable = std::isfinite(rep.a);
  } else {
    rep.a = kInf;
    for (NodeId w : tree.terminals()) rep.a = std::min(rep.a, e[tree.terminal_index(w)] / model.ask(w));
    rep.satisfiable = rep.a > 0.0;
  }
  return rep;
}

MarginalPriceReport marginal_price_report(const MarketModel& model, const EndowmentSet& endowments, double x,
                                          std::span<const double> q, const UtilityFunction& u, double tol) {
  const SubdifferentialResult sd = subdifferential(model, endowments, x, q, u);
  MarginalPriceReport rep;
  rep.y = sd.y;
  rep.r = sd.r;
  rep.inside = sd.y > 0.0;
  for (std::size_t i = 0; i < endowments.n_claims(); ++i) {
    std::vector<double> unit(endowments.n_claims(), 0.0);
    unit[i] = 1.0;
    const PriceInterval iv = price_interval(model, endowments, unit);
    const double p = sd.r[i] / sd.y;
    rep.prices.push_back(p);
    rep.intervals.push_back(iv);
    const double slack = tol * (1.0 + std::abs(p));
    if (!(p >= iv.lo - slack && p <= iv.hi + slack)) rep.inside = false;
  }
  return rep;
}

}  // namespace fdual
