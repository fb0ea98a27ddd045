#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fdual/cps.hpp"
#include "fdual/duality.hpp"
#include "fdual/market.hpp"
#include "fdual/portfolio.hpp"

namespace fdual {

struct RandomTreeOptions {
  int max_depth = 4;
  int max_branch = 3;
  double lambda = 0.1;
  /// Every claim gets payoffs uniform in [0, max_payoff].
  int n_claims = 1;
  double max_payoff = 3.0;
};

/// Random market with a frictionless equivalent martingale measure: each
/// branching node has at least one child strictly above and one strictly
/// below its price, single children keep the price.
Instance random_instance(std::mt19937_64& rng, const RandomTreeOptions& opts);

/// Claim with payoffs uniform in [lo, hi] per terminal node.
std::vector<double> random_claim(std::mt19937_64& rng, const ScenarioTree& tree, double lo, double hi);

/// Liquidated strategy from x with independent random buys and sells of up to
/// max_trade shares at each node.
Portfolio random_portfolio(std::mt19937_64& rng, const MarketModel& model, double x, double max_trade);

/// Liquidated strategy that never borrows and never shorts: buys spend at most
/// the cash on hand, sells at most the shares held.
Portfolio random_long_only_portfolio(std::mt19937_64& rng, const MarketModel& model, double x);

/// Random strategy scaled so that its liquidation value stays nonnegative at
/// every node (x must be positive).
Portfolio random_admissible_portfolio(std::mt19937_64& rng, const MarketModel& model, double x, double max_trade);

/// Point of the deflator cone with y0(root) = 1: a CPS density discounted by
/// random one-step factors, a vertex of the truncated cone, or a mixture.
Deflator random_deflator(std::mt19937_64& rng, const MarketModel& model);

/// CPS polytope vertices from random linear objectives.
std::vector<ExtremalResult> random_cps_vertices(std::mt19937_64& rng, const MarketModel& model, int count);

}  // namespace fdual
