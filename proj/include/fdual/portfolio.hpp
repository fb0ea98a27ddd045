#pragma once

#include <span>
#include <vector>

#include "fdual/cps.hpp"
#include "fdual/market.hpp"

namespace fdual {

/// Shares bought at the ask and sold at the bid at one node.
struct NodeTrade {
  double buy = 0.0;
  double sell = 0.0;
  double net() const noexcept { return buy - sell; }
};

/// Self-financing strategy on the tree. bond/shares are the holdings after
/// trading at each node; the position before the root trade is (x, 0).
struct Portfolio {
  double x = 0.0;
  std::vector<NodeTrade> trades;
  std::vector<double> bond;
  std::vector<double> shares;
  /// Cash discarded at each node (zero for strategies built by make_portfolio).
  std::vector<double> slack;
  bool liquidated = true;
};

/// Applies trades node by node with zero slack. With `liquidate`, a final
/// trade at every terminal node closes the stock position and is merged into
/// that node's trade record.
Portfolio make_portfolio(const MarketModel& model, double x, std::vector<NodeTrade> trades, bool liquidate = true);

/// Largest violation of the self-financing identity
/// bond(v) - bond(parent) = -S buy + (1-lambda) S sell - slack.
double self_financing_residual(const MarketModel& model, const Portfolio& pf);

/// Liquidation value of the post-trade holdings at every node.
std::vector<double> node_values(const MarketModel& model, const Portfolio& pf);
/// Liquidation value at the terminal nodes, in terminal order.
std::vector<double> terminal_values(const MarketModel& model, const Portfolio& pf);

struct AcceptabilityResult {
  bool acceptable = false;
  /// Smallest acceptable level: max over the closed CPS set of E^Q[(-V_T)^+].
  double required = 0.0;
  ConsistentPriceSystem worst;
  /// Nonnegative Q-martingale (worst Q) with root value a and X_T >= -V_T, per node.
  std::vector<double> witness;
};

AcceptabilityResult check_acceptable(const MarketModel& model, const Portfolio& pf, double a);

/// Q-martingale per node closing the given terminal values.
std::vector<double> martingale_closure(const MarketModel& model, const ConsistentPriceSystem& cps,
                                       std::span<const double> terminal);

struct DominanceCheck {
  /// min over terminals of V_T + X_T.
  double terminal_margin = 0.0;
  /// min over all nodes of V(v) + X(v).
  double node_margin = 0.0;
  NodeId worst_node = 0;
  /// min over all nodes of bond(v) + shares(v) S~(v) + X(v).
  double frictionless_margin = 0.0;
};

/// Compares V(phi), and the holdings valued at S~, with -X where X is the Q-martingale closing `x_terminal`.
DominanceCheck check_dominance(const MarketModel& model, const Portfolio& pf, const ConsistentPriceSystem& cps,
                               std::span<const double> x_terminal);

/// Minimum-capital hedge LP. Column 0 is the initial capital; node v trades
/// through columns buy(v), sell(v).
struct HedgeProgram {
  LinearProgram lp;
  static int capital() { return 0; }
  static int buy(NodeId v) { return 1 + 2 * v; }
  static int sell(NodeId v) { return 2 + 2 * v; }
};

HedgeProgram build_hedge_program(const MarketModel& model, std::span<const double> claim);

struct SuperhedgeResult {
  bool ok = false;
  /// sup over the closed CPS set of E^Q[g].
  double price = 0.0;
  /// Minimum initial capital of a liquidated hedge with V_T >= g.
  double hedge_capital = 0.0;
  Portfolio hedge;
  ConsistentPriceSystem attaining;
  /// min over terminals of V_T(hedge) - g.
  double min_excess = 0.0;
  SolveReport price_report;
  SolveReport hedge_report;
};

SuperhedgeResult superhedge_price(const MarketModel& model, std::span<const double> claim);

/// Lower arbitrage-free bound -superhedge(-g).
double subhedge_price(const MarketModel& model, std::span<const double> claim);

enum class KMembership { interior, boundary, outside };
const char* to_string(KMembership k);

struct KCheck {
  KMembership membership = KMembership::outside;
  /// Smallest x with a nonempty budget set: max_Q E^Q[-q.E_T].
  double threshold = 0.0;
};

KCheck feasible_K(const MarketModel& model, const EndowmentSet& endowments, double x, std::span<const double> q);

}  // namespace fdual
