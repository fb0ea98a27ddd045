#include "fdual/portfolio.hpp"

#include <algorithm>
#include <cmath>

namespace fdual {

Portfolio make_portfolio(const MarketModel& model, double x, std::vector<NodeTrade> trades, bool liquidate) {
  const ScenarioTree& tree = model.tree();
  const std::size_t n = tree.size();
  if (trades.size() != n) throw PreconditionError("one trade record per node required");
  for (const NodeTrade& t : trades)
    if (!(t.buy >= 0.0) || !(t.sell >= 0.0)) throw PreconditionError("trades must be nonnegative");
  Portfolio pf;
  pf.x = x;
  pf.liquidated = liquidate;
  pf.trades = std::move(trades);
  pf.bond.assign(n, 0.0);
  pf.shares.assign(n, 0.0);
  pf.slack.assign(n, 0.0);
  for (NodeId v = 0; v < static_cast<NodeId>(n); ++v) {
    const double bond0 = v == tree.root() ? x : pf.bond[tree.parent(v)];
    const double shares0 = v == tree.root() ? 0.0 : pf.shares[tree.parent(v)];
    NodeTrade& t = pf.trades[v];
    if (liquidate && tree.is_terminal(v)) {
      const double open = shares0 + t.net();
      if (open > 0.0) t.sell += open;
      else t.buy -= open;
    }
    pf.shares[v] = liquidate && tree.is_terminal(v) ? 0.0 : shares0 + t.net();
    pf.bond[v] = bond0 - model.ask(v) * t.buy + model.bid(v) * t.sell;
  }
  return pf;
}

double self_financing_residual(const MarketModel& model, const Portfolio& pf) {
  const ScenarioTree& tree = model.tree();
  double worst = 0.0;
  for (NodeId v = 0; v < static_cast<NodeId>(tree.size()); ++v) {
    const double bond0 = v == tree.root() ? pf.x : pf.bond[tree.parent(v)];
    const double shares0 = v == tree.root() ? 0.0 : pf.shares[tree.parent(v)];
    const NodeTrade& t = pf.trades[v];
    const double cash = pf.bond[v] - bond0 + model.ask(v) * t.buy - model.bid(v) * t.sell + pf.slack[v];
    worst = std::max({worst, std::abs(cash), std::abs(pf.shares[v] - shares0 - t.net())});
  }
  return worst;
}

std::vector<double> node_values(const MarketModel& model, const Portfolio& pf) {
  std::vector<double> v(model.tree().size());
  for (NodeId u = 0; u < static_cast<NodeId>(v.size()); ++u) v[u] = liquidation_value(model, pf.bond[u], pf.shares[u], u);
  return v;
}

std::vector<double> terminal_values(const MarketModel& model, const Portfolio& pf) {
  std::vector<double> out;
  for (NodeId w : model.tree().terminals()) out.push_back(liquidation_value(model, pf.bond[w], pf.shares[w], w));
  return out;
}

std::vector<double> martingale_closure(const MarketModel& model, const ConsistentPriceSystem& cps,
                                       std::span<const double> terminal) {
  const ScenarioTree& tree = model.tree();
  if (terminal.size() != tree.terminals().size()) throw PreconditionError("terminal vector has wrong length");
  std::vector<double> X(tree.size(), 0.0);
  for (NodeId w : tree.terminals()) X[w] = terminal[tree.terminal_index(w)];
  const auto internal = tree.internal_nodes();
  for (auto it = internal.rbegin(); it != internal.rend(); ++it) {
    double acc = 0.0;
    for (NodeId c : tree.children(*it)) acc += cps.q_cond[c] * X[c];
    X[*it] = acc;
  }
  return X;
}

AcceptabilityResult check_acceptable(const MarketModel& model, const Portfolio& pf, double a) {
  std::vector<double> loss = terminal_values(model, pf);
  for (double& l : loss) l = std::max(-l, 0.0);
  const ExtremalResult worst = extremal_expectation(model, loss, Sense::maximize);
  if (!worst.feasible) throw PreconditionError("the model admits no consistent price system");
  AcceptabilityResult out;
  out.required = std::max(worst.price, 0.0);
  out.acceptable = a >= out.required - 1e-9 * (1.0 + out.required);
  out.worst = worst.cps;
  if (out.acceptable) {
    const double shift = a - expectation(model, worst.cps, loss);
    std::vector<double> xt(loss);
    for (double& v : xt) v += std::max(shift, 0.0);
    out.witness = martingale_closure(model, worst.cps, xt);
  }
  return out;
}

DominanceCheck check_dominance(const MarketModel& model, const Portfolio& pf, const ConsistentPriceSystem& cps,
                               std::span<const double> x_terminal) {
  const std::vector<double> X = martingale_closure(model, cps, x_terminal);
  const std::vector<double> V = node_values(model, pf);
  DominanceCheck out;
  out.terminal_margin = kInf;
  out.node_margin = kInf;
  out.frictionless_margin = kInf;
  for (NodeId v = 0; v < static_cast<NodeId>(V.size()); ++v) {
    const double margin = V[v] + X[v];
    out.frictionless_margin = std::min(out.frictionless_margin, pf.bond[v] + pf.shares[v] * cps.s_tilde[v] + X[v]);
    if (model.tree().is_terminal(v)) out.terminal_margin = std::min(out.terminal_margin, margin);
    if (margin < out.node_margin) {
      out.node_margin = margin;
      out.worst_node = v;
    }
  }
  return out;
}

HedgeProgram build_hedge_program(const MarketModel& model, std::span<const double> claim) {
  const ScenarioTree& tree = model.tree();
  if (claim.size() != tree.terminals().size()) throw PreconditionError("claim length differs from terminal count");
  HedgeProgram hp;
  LinearProgram& lp = hp.lp;
  lp.sense = Sense::minimize;
  lp.add_variable(1.0, -kInf, kInf);
  for (NodeId v = 0; v < static_cast<NodeId>(tree.size()); ++v) {
    lp.add_variable(0.0);
    lp.add_variable(0.0);
  }
  for (NodeId w : tree.terminals()) {
    std::vector<std::pair<int, double>> flat, cash{{HedgeProgram::capital(), 1.0}};
    for (NodeId v : tree.path_to(w)) {
      flat.emplace_back(HedgeProgram::buy(v), 1.0);
      flat.emplace_back(HedgeProgram::sell(v), -1.0);
      cash.emplace_back(HedgeProgram::buy(v), -model.ask(v));
      cash.emplace_back(HedgeProgram::sell(v), model.bid(v));
    }
    lp.add_row(std::move(flat), Relation::eq, 0.0);
    lp.add_row(std::move(cash), Relation::ge, claim[tree.terminal_index(w)]);
  }
  return hp;
}

SuperhedgeResult superhedge_price(const MarketModel& model, std::span<const double> claim) {
  const ScenarioTree& tree = model.tree();
  SuperhedgeResult out;
  const ExtremalResult ext = extremal_expectation(model, claim, Sense::maximize);
  out.price_report = ext.report;
  const HedgeProgram hp = build_hedge_program(model, claim);
  out.hedge_report = solve_lp(hp.lp, kEngineLp);
  if (!ext.feasible || out.hedge_report.status != SolveStatus::optimal) return out;
  out.ok = true;
  out.price = ext.price;
  out.attaining = ext.cps;
  out.hedge_capital = out.hedge_report.objective;

  // Cancel simultaneous buys and sells at a node (a round trip only costs
  // the spread) and drop solver noise.
  const auto& x = out.hedge_report.x;
  double scale = 1.0;
  for (double v : x) scale = std::max(scale, std::abs(v));
  std::vector<NodeTrade> trades(tree.size());
  for (NodeId v = 0; v < static_cast<NodeId>(tree.size()); ++v) {
    const double b = std::max(x[HedgeProgram::buy(v)], 0.0), s = std::max(x[HedgeProgram::sell(v)], 0.0);
    const double net = b - s;
    if (std::abs(net) <= 1e-12 * scale) continue;
    trades[v] = net > 0.0 ? NodeTrade{net, 0.0} : NodeTrade{0.0, -net};
  }
  out.hedge = make_portfolio(model, out.hedge_capital, std::move(trades), true);
  const std::vector<double> vt = terminal_values(model, out.hedge);
  out.min_excess = kInf;
  for (std::size_t i = 0; i < vt.size(); ++i) out.min_excess = std::min(out.min_excess, vt[i] - claim[i]);
  return out;
}

double subhedge_price(const MarketModel& model, std::span<const double> claim) {
  std::vector<double> neg(claim.begin(), claim.end());
  for (double& v : neg) v = -v;
  const ExtremalResult ext = extremal_expectation(model, neg, Sense::maximize);
  if (!ext.feasible) throw PreconditionError("the model admits no consistent price system");
  return -ext.price;
}

const char* to_string(KMembership k) {
  switch (k) {
    case KMembership::interior: return "interior";
    case KMembership::boundary: return "boundary";
    case KMembership::outside: return "outside";
  }
  return "outside";
}

KCheck feasible_K(const MarketModel& model, const EndowmentSet& endowments, double x, std::span<const double> q) {
  std::vector<double> claim = endowments.combination(q);
  for (double& v : claim) v = -v;
  const ExtremalResult ext = extremal_expectation(model, claim, Sense::maximize);
  if (!ext.feasible) throw PreconditionError("the model admits no consistent price system");
  KCheck out;
  out.threshold = ext.price;
  if (x > ext.price + 1e-9) out.membership = KMembership::interior;
  else if (std::abs(x - ext.price) <= 1e-9) out.membership = KMembership::boundary;
  return out;
}

}  // namespace fdual
