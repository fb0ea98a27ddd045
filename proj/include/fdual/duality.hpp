#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fdual/convex.hpp"
#include "fdual/cps.hpp"
#include "fdual/market.hpp"
#include "fdual/portfolio.hpp"

namespace fdual {

/// (x, q) outside the interior of K.
class OutsideDomain : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A solver returned a status other than optimal.
class SolverFailure : public std::runtime_error {
 public:
  SolverFailure(const std::string& what, SolveReport rep) : std::runtime_error(what), report(std::move(rep)) {}
  SolveReport report;
};

inline constexpr double kPrimalTol = 1e-12;
/// Stalled interior-point solves are accepted at this residual level.
inline constexpr double kAcceptableTol = 1e-9;

/// Per-node bond-numeraire and stock-numeraire deflator values.
struct Deflator {
  std::vector<double> y0;
  std::vector<double> y1;
};

/// Largest violation of each family of cone rows (zero when satisfied).
struct DeflatorResiduals {
  double nonnegativity = 0.0;
  double spread = 0.0;
  /// m0 <= y0 and S (m0 - y0) <= m1 - y1 <= (1-lambda) S (m0 - y0).
  double drift = 0.0;
  double max() const noexcept;
};

/// Deflator cone rows over variables y0(v) = 2v, y1(v) = 2v + 1, all nonnegative.
ConstraintSet deflator_cone(const MarketModel& model);

/// Spread rows with both one-step drifts zero: scaled CPS densities.
ConstraintSet martingale_deflators(const MarketModel& model);

DeflatorResiduals check_deflator(const MarketModel& model, const Deflator& d);

/// One-step conditional drifts (m0 - y0, m1 - y1) at every non-terminal node, zero at terminals.
std::pair<std::vector<double>, std::vector<double>> deflator_drift(const MarketModel& model, const Deflator& d);

/// Largest |E[Y(child) | v] - Y(v)| over non-terminal nodes, for y0 and y1.
std::pair<double, double> martingale_residuals(const MarketModel& model, const Deflator& d);

/// Largest one-step drift of the deflated wealth bond Y0 + shares Y1 of a
/// strategy, including the move from (x, 0) to the post-trade root holdings.
double max_deflated_drift(const MarketModel& model, const Portfolio& pf, const Deflator& d);

/// Scaled CPS density y (Z0, Z1).
Deflator density_deflator(const MarketModel& model, const ConsistentPriceSystem& cps, double y);

/// weight * U(.) as a concave program term with empty argument.
ConcaveTerm utility_term(const UtilityFunction& u, double weight);

struct PrimalOptions {
  double tol = kPrimalTol;
  int max_iter = 200;
  /// Start from a randomized interior point instead of the solver's phase-1 point.
  std::optional<std::uint64_t> init_seed;
};

struct PrimalSolution {
  double x = 0.0;
  std::vector<double> q;
  Portfolio portfolio;
  /// W_T = V_T + q.E_T in terminal order.
  std::vector<double> wealth;
  double value = 0.0;
  /// Multipliers of the per-terminal liquidation rows sum_path(buy - sell) = 0.
  std::vector<double> liquidation_duals;
  /// Price interval of q.E_T collapsed to a point (the endowment is replicable).
  bool endowment_replicable = false;
  SolveReport report;
};

/// Maximizes E[U(V_T + q.E_T)] over liquidated self-financing trades.
/// Throws OutsideDomain when (x, q) is not interior to K and SolverFailure on
/// a non-optimal solve.
PrimalSolution primal_solve(const MarketModel& model, const EndowmentSet& endowments, double x,
                            std::span<const double> q, const UtilityFunction& u, const PrimalOptions& opts = {});

struct DualSolution {
  double y = 0.0;
  std::vector<double> r;
  Deflator deflator;
  /// E[U~(Y0_T)].
  double value = 0.0;
  DeflatorResiduals residuals;
  /// max |E[Y0_T E^i] - r_i|.
  double endowment_residual = 0.0;
  /// Value minus the optimum over the whole deflator cone (NaN when that
  /// relaxation has no optimum).
  double transcription_slack = 0.0;
  SolveReport report;
};

/// Deflator with Y0_T = U'(W_T) and Y1_T from the liquidation multipliers,
/// filled backward by conditional expectations.
DualSolution extract_dual_from_primal(const MarketModel& model, const EndowmentSet& endowments,
                                      const UtilityFunction& u, const PrimalSolution& primal);

enum class DualStatus { optimal, infeasible_outside_L, infeasible_transcription, solver_failure };
const char* to_string(DualStatus s);

struct DualSolveResult {
  DualStatus status = DualStatus::solver_failure;
  DualSolution solution;
};

/// Minimizes E[U~(y0_T)] over martingale deflators with y0(root) = y and
/// E[y0_T E^i] = r_i. With endowments a drifting deflator need not bound the
/// wealth of strategies that are solvent only through q.E_T, so the cone
/// optimum is a lower bound and its distance is reported as transcription slack.
DualSolveResult dual_solve(const MarketModel& model, const EndowmentSet& endowments, double y,
                           std::span<const double> r, const UtilityFunction& u, double tol = kPrimalTol);

/// The same program over the whole deflator cone.
DualSolveResult dual_solve_cone(const MarketModel& model, const EndowmentSet& endowments, double y,
                                std::span<const double> r, const UtilityFunction& u, double tol = kPrimalTol);

enum class LMembership { interior, boundary, outside };
const char* to_string(LMembership m);

/// (y, r) against the closed cone over the price set {E^Q[E_T]}; interior
/// when an equivalent CPS prices E_T at r / y.
LMembership check_L(const MarketModel& model, const EndowmentSet& endowments, double y, std::span<const double> r);

/// u(x, q) - (v(y, r) + x y + q.r) per pair and the attainment gap per (x, q).
struct ConjugacyReport {
  struct Pair {
    std::size_t primal_index = 0;
    std::size_t dual_index = 0;
    double excess = 0.0;
  };
  std::vector<Pair> pairs;
  double max_excess = -kInf;
  /// min over the dual grid plus the extracted point of v + x y + q.r - u, per (x, q).
  std::vector<double> attainment_gap;
  std::vector<double> primal_values;
  std::vector<double> dual_values;
};

struct PrimalPoint {
  double x = 0.0;
  std::vector<double> q;
};
struct DualPoint {
  double y = 0.0;
  std::vector<double> r;
};

ConjugacyReport conjugacy_check(const MarketModel& model, const EndowmentSet& endowments, const UtilityFunction& u,
                                std::span<const PrimalPoint> primal_grid, std::span<const DualPoint> dual_grid);

struct SubdifferentialResult {
  double y = 0.0;
  std::vector<double> r;
  LMembership membership = LMembership::outside;
  /// max over probes of u(x', q') - u(x, q) - y (x' - x) - r.(q' - q).
  double worst_violation = -kInf;
  bool certified = false;
  int probes = 0;
};

SubdifferentialResult subdifferential(const MarketModel& model, const EndowmentSet& endowments, double x,
                                      std::span<const double> q, const UtilityFunction& u, double h = 1e-3,
                                      double tol = 1e-6);

/// Membership of g >= 0 in C(x, q) two ways: the largest CPS-vertex excess
/// max_Q E^Q[g - q.E_T] - x, and the superhedging capital of g - q.E_T minus x.
struct BipolarCheck {
  double vertex_excess = 0.0;
  double hedge_excess = 0.0;
  bool member_by_vertices = false;
  bool member_by_hedge = false;
  bool consistent() const noexcept { return member_by_vertices == member_by_hedge; }
};

BipolarCheck bipolar_membership(const MarketModel& model, const EndowmentSet& endowments, double x,
                                std::span<const double> q, std::span<const double> g, double tol = 1e-8);

struct BipolarReport {
  int members = 0;
  int members_passing = 0;
  int non_members = 0;
  int non_members_rejected = 0;
  int inconsistent = 0;
  /// Largest E^Q[g] - x - q.E^Q[E_T] over members and sampled vertices.
  double worst_member_excess = -kInf;
  bool ok() const noexcept {
    return members_passing == members && non_members_rejected == non_members && inconsistent == 0;
  }
};

/// Members from strategies in H(x, q) (scaled down terminal wealth of
/// perturbed optimal trades) and non-members bumped above the optimal wealth
/// at one terminal node.
BipolarReport verify_bipolar(const MarketModel& model, const EndowmentSet& endowments, const UtilityFunction& u,
                             double x, std::span<const double> q, int samples, std::uint64_t seed);

}  // namespace fdual
