#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fdual {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { maximize, minimize };
enum class Relation { le, eq, ge };

struct SparseRow {
  std::vector<std::pair<int, double>> coeffs;
  Relation rel = Relation::le;
  double rhs = 0.0;
};

/// Linear constraints and variable bounds shared by both program kinds.
struct ConstraintSet {
  std::vector<SparseRow> rows;
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t n_vars() const noexcept { return lower.size(); }
  int add_variable(double lo = 0.0, double hi = kInf);
  int add_row(std::vector<std::pair<int, double>> coeffs, Relation rel, double rhs);
  double row_activity(std::size_t i, const std::vector<double>& x) const;
  /// Throws PreconditionError on bad indices, NaN data or lo > hi.
  void validate() const;
};

struct LinearProgram {
  Sense sense = Sense::minimize;
  std::vector<double> objective;
  ConstraintSet cons;

  int add_variable(double cost, double lo = 0.0, double hi = kInf);
  int add_row(std::vector<std::pair<int, double>> coeffs, Relation rel, double rhs) {
    return cons.add_row(std::move(coeffs), rel, rhs);
  }
};

/// weight * f(a.x + offset) with f = log t, t^p/p or t.
struct ConcaveTerm {
  enum class Kind { log, power, linear };
  Kind kind = Kind::log;
  double exponent = 0.0;
  double weight = 1.0;
  std::vector<std::pair<int, double>> coeffs;
  double offset = 0.0;
  /// Argument must stay strictly positive (always true for log and power).
  bool strict = true;
};

/// maximize  sum_k terms_k + linear . x + constant  over cons.
struct SeparableConcaveProgram {
  std::vector<ConcaveTerm> terms;
  std::vector<double> linear;
  double constant = 0.0;
  ConstraintSet cons;

  int add_variable(double lo = -kInf, double hi = kInf, double cost = 0.0);
  double objective(const std::vector<double>& x) const;
  /// Gradient of the objective; requires every strict argument > 0.
  std::vector<double> gradient(const std::vector<double>& x) const;
  double term_argument(std::size_t k, const std::vector<double>& x) const;
  void validate() const;
};

enum class SolveStatus { optimal, infeasible, unbounded, max_iter, empty_interior };
std::string to_string(SolveStatus s);

struct KktResiduals {
  double stationarity = 0.0;
  double primal_feas = 0.0;
  double dual_feas = 0.0;
  double complementarity = 0.0;

  double max() const noexcept;
};

/// Multiplier convention for both solvers: row_duals[i] = d(objective*)/d(rhs_i)
/// in the program's own sense, and bound_duals[j] = gradient_j - (A' row_duals)_j,
/// so that stationarity reads grad f = A' row_duals + bound_duals.
struct SolveReport {
  SolveStatus status = SolveStatus::max_iter;
  std::vector<double> x;
  std::vector<double> row_duals;
  std::vector<double> bound_duals;
  double objective = 0.0;
  double dual_objective = 0.0;
  KktResiduals kkt;
  int iterations = 0;
  /// Farkas ray on rows (infeasible) or recession direction on variables (unbounded).
  std::vector<double> certificate;
  /// Optimal value of the max-min-slack phase-1 problem (concave solver only).
  double phase1_slack = 0.0;
  /// Final centering parameter (average complementarity).
  double barrier_mu = 0.0;
  /// Iterates at which c'x - b'y fell below its residual-corrected lower bound.
  int weak_duality_violations = 0;
};

struct LpOptions {
  double tol = 1e-8;
  int max_iter = 200;
  /// When the iteration stalls before reaching `tol`, the best iterate is
  /// still reported optimal if its relative residuals are below this.
  double acceptable_tol = 0.0;
};

struct ConcaveOptions {
  double tol = 1e-8;
  int max_iter = 200;
  /// Phase-1 optimum below this is an infeasible program.
  double infeasible_threshold = -1e-9;
  /// Phase-1 optimum at or below this (and above infeasible_threshold) has no interior.
  double interior_threshold = 1e-9;
  /// Best iterate reported optimal when the iteration stalls or breaks down
  /// with relative residuals below this.
  double acceptable_tol = 0.0;
  /// Starting point; must be strictly inside every inequality. Equalities may be violated.
  std::optional<std::vector<double>> initial_point;
};

/// Homogeneous self-dual primal-dual interior point with Mehrotra
/// predictor-corrector on the normal equations.
SolveReport solve_lp(const LinearProgram& lp, const LpOptions& opts = {});

/// Inequality rows and finite bounds that hold with equality on the whole
/// feasible set, rewritten as equality rows (bounds become free variables
/// pinned by a row). Returns nullopt when the set is infeasible.
std::optional<ConstraintSet> tighten_implicit_equalities(const ConstraintSet& cons, double tol = 1e-9);

/// Primal-dual interior point on the log-barrier path of a separable concave program.
SolveReport solve_concave(const SeparableConcaveProgram& prog, const ConcaveOptions& opts = {});

/// KKT residuals of a candidate point with row and bound multipliers, in the
/// SolveReport convention. Pass empty bound_duals to infer them from stationarity
/// (the stationarity residual is then measured on free variables only).
KktResiduals check_kkt(const SeparableConcaveProgram& prog, const std::vector<double>& x,
                       const std::vector<double>& row_duals,
                       const std::vector<double>& bound_duals = {});
KktResiduals check_kkt(const LinearProgram& lp, const std::vector<double>& x,
                       const std::vector<double>& row_duals,
                       const std::vector<double>& bound_duals = {});

}  // namespace fdual
