#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fdual/convex.hpp"
#include "fdual/market.hpp"

namespace fdual {

/// LP tolerance used by the engines; tighter than the kernel default because
/// prices are compared at the 1e-9 level.
inline constexpr double kEngineLpTol = 1e-11;
inline constexpr LpOptions kEngineLp{kEngineLpTol, 200, 1e-9};
/// Weight of the strictly positive witness mixed into boundary optimizers.
inline constexpr double kMixWeight = 1e-7;
inline constexpr double kReplicableWidth = 1e-9;

/// A measure Q (as conditional edge probabilities, root entry 1) and a
/// Q-martingale S~ inside the bid-ask spread.
struct ConsistentPriceSystem {
  std::vector<double> q_cond;
  std::vector<double> s_tilde;
  /// Set when the LP optimizer charged some node with zero mass and had to be
  /// mixed with a strictly positive witness.
  bool boundary = false;
};

/// Z0 = E[dQ/dP | node] and Z1 = S~ Z0.
struct DensityPair {
  std::vector<double> z0;
  std::vector<double> z1;
};

struct CpsResiduals {
  double min_q = 0.0;
  double sibling_sum = 0.0;
  double spread = 0.0;
  double martingale = 0.0;
  bool ok(double tol = 1e-9) const noexcept;
};

/// Invariant residuals against the lambda'-spread of `model`.
CpsResiduals check_cps(const MarketModel& model, const ConsistentPriceSystem& cps,
                       std::optional<double> lambda_prime = std::nullopt);

/// Variable layout of the CPS polytope LP: for node v, mass m(v) = Q(v) is
/// column v and w(v) = m(v) S~(v) is column n + v.
struct CpsProgram {
  LinearProgram lp;
  int n_nodes = 0;
  /// Row index of the first spread row; spread rows come in (upper, lower) pairs per node.
  int first_spread_row = 0;
  int mass(NodeId v) const { return v; }
  int value(NodeId v) const { return n_nodes + v; }
};

/// Normalization, martingale and spread rows of the closed CPS polytope at
/// cost level lambda_prime, with zero objective.
CpsProgram build_cps_program(const MarketModel& model, double lambda_prime);

/// Converts strictly positive LP masses m and values w into a CPS. Q is read
/// off the masses exactly; S~ is the martingale inside the lambda'-spread that
/// stays closest to w/m (node-wise clamping plus a common shift per sibling set),
/// so that solver noise never shows up as a martingale residual.
ConsistentPriceSystem cps_from_masses(const MarketModel& model, std::span<const double> mass,
                                      std::span<const double> value, double lambda_prime);

struct FindCpsResult {
  std::optional<ConsistentPriceSystem> cps;
  /// max_Q min_v Q(v)/P(v); the CPS is accepted when this exceeds 1e-9.
  double min_density_ratio = 0.0;
  SolveReport report;
};

FindCpsResult find_cps(const MarketModel& model, double lambda_prime);

DensityPair cps_to_density(const MarketModel& model, const ConsistentPriceSystem& cps);

/// Terminal-node Q probabilities of a CPS.
std::vector<double> terminal_measure(const MarketModel& model, const ConsistentPriceSystem& cps);
double expectation(const MarketModel& model, const ConsistentPriceSystem& cps, std::span<const double> claim);

struct ExtremalResult {
  bool feasible = false;
  double price = 0.0;
  ConsistentPriceSystem cps;
  /// Raw LP masses and values (closure of the CPS set).
  std::vector<double> mass;
  std::vector<double> value;
  SolveReport report;
};

/// Optimizes sum_v mass_cost(v) Q(v) + value_cost(v) Q(v) S~(v) over the closed
/// CPS polytope; generic costs land on a vertex.
ExtremalResult extremal_cps(const MarketModel& model, std::span<const double> mass_cost,
                            std::span<const double> value_cost, Sense sense);

/// max or min over the closed CPS polytope of E^Q[claim].
ExtremalResult extremal_expectation(const MarketModel& model, std::span<const double> claim, Sense sense);

struct PriceInterval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const noexcept { return hi - lo; }
};

PriceInterval price_interval(const MarketModel& model, const EndowmentSet& endowments,
                             std::span<const double> q);

enum class PriceMembership { interior, boundary, none };
const char* to_string(PriceMembership m);

struct PricedCps {
  PriceMembership membership = PriceMembership::none;
  std::optional<ConsistentPriceSystem> cps;
  PriceInterval interval;
};

/// A CPS with E^Q[q.E_T] = p; boundary when p sits on an end of the interval.
PricedCps cps_with_price(const MarketModel& model, const EndowmentSet& endowments,
                         std::span<const double> q, double p);

bool check_replicable(const MarketModel& model, const EndowmentSet& endowments, std::span<const double> q);

}  // namespace fdual
