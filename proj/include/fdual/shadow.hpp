#pragma once

#include <span>
#include <vector>

#include "fdual/cps.hpp"
#include "fdual/duality.hpp"
#include "fdual/market.hpp"

namespace fdual {

/// Net trades below this size are solver noise.
inline constexpr double kTradeEps = 1e-7;
inline constexpr double kShadowTol = 1e-6;

/// S^ = Y1 / Y0 where Y0 > 0; NaN elsewhere.
struct ShadowCandidate {
  std::vector<double> s_hat;
  std::vector<bool> well_defined;
  /// Largest distance of a well-defined S^ outside [(1-lambda) S, S].
  double spread_violation = 0.0;
  bool all_well_defined() const noexcept;
};

/// Throws PreconditionError on an all-zero deflator or on S^ leaving the
/// spread by more than 1e-7 S.
ShadowCandidate candidate_shadow(const MarketModel& model, const Deflator& d);

struct TradeConditionReport {
  struct Node {
    NodeId node = 0;
    double net_trade = 0.0;
    double s_hat = 0.0;
    /// S for purchases, (1-lambda) S for sales.
    double target = 0.0;
    double deviation = 0.0;
  };
  /// Every node with |net trade| > trade_eps.
  std::vector<Node> trading;
  std::vector<Node> violations;
  double max_deviation = 0.0;
  bool ok() const noexcept { return violations.empty(); }
};

/// Purchases need S^ = S and sales need S^ = (1-lambda) S.
TradeConditionReport verify_trade_conditions(const MarketModel& model, const PrimalSolution& primal,
                                             const ShadowCandidate& cand, double tol = kShadowTol,
                                             double trade_eps = kTradeEps);

struct FrictionlessSolution {
  double value = 0.0;
  /// Shares held from each node to its children, zero at terminals and where
  /// S^ is constant across the children.
  std::vector<double> holdings;
  std::vector<double> wealth;
  SolveReport report;
};

/// Maximizes E[U(X_T + q.E_T)] trading the stock at S^ without costs, from x
/// in bond. Throws SolverFailure on a non-optimal solve and PreconditionError
/// on an ill-defined candidate.
FrictionlessSolution frictionless_solve(const MarketModel& model, const ShadowCandidate& cand,
                                        const EndowmentSet& endowments, double x, std::span<const double> q,
                                        const UtilityFunction& u);

struct ClassicConditions {
  /// Largest |E[Y(child) | v] - Y(v)|.
  double y0_martingale_residual = 0.0;
  double y1_martingale_residual = 0.0;
  /// max_i |E[Y0_T E^i] / y - r_i / y|.
  double price_match_residual = 0.0;
  double max() const noexcept;
};

ClassicConditions check_classic(const MarketModel& model, const EndowmentSet& endowments, const DualSolution& dual);

enum class Verdict { classic, verified_at_optimum, failed };
const char* to_string(Verdict v);

struct ShadowVerdict {
  ShadowCandidate candidate;
  TradeConditionReport trades;
  ClassicConditions classic;
  double primal_value = 0.0;
  /// NaN when the frictionless problem has no optimum.
  double shadow_value = 0.0;
  double value_gap = 0.0;
  Verdict verdict = Verdict::failed;
};

/// Classic when the martingale and pricing residuals and the value gap are
/// within tol; verified at the optimum when only the trade conditions and the
/// value gap hold; failed otherwise.
ShadowVerdict shadow_verdict(const MarketModel& model, const EndowmentSet& endowments, const UtilityFunction& u,
                             const PrimalSolution& primal, const DualSolution& dual, double tol = kShadowTol);

struct DominationReport {
  /// Smallest a with E_T <= a (1-lambda) S_T (q > 0) or largest a with E_T >= a S_T (q < 0).
  double a = 0.0;
  bool satisfiable = false;
};

/// Single claim only; q_sign must be nonzero.
DominationReport check_endowment_domination(const MarketModel& model, const EndowmentSet& endowments,
                                            double q_sign);

struct MarginalPriceReport {
  double y = 0.0;
  std::vector<double> r;
  /// r_i / y.
  std::vector<double> prices;
  /// Price interval of each claim alone.
  std::vector<PriceInterval> intervals;
  bool inside = false;
};

MarginalPriceReport marginal_price_report(const MarketModel& model, const EndowmentSet& endowments, double x,
                                          std::span<const double> q, const UtilityFunction& u,
                                          double tol = 1e-7);

}  // namespace fdual
