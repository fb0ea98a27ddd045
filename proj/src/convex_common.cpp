#include <algorithm>
#include <cmath>

#include "fdual/convex.hpp"
#include "fdual/market.hpp"

namespace fdual {

int ConstraintSet::add_variable(double lo, double hi) {
  lower.push_back(lo);
  upper.push_back(hi);
  return static_cast<int>(lower.size()) - 1;
}

int ConstraintSet::add_row(std::vector<std::pair<int, double>> coeffs, Relation rel, double rhs) {
  rows.push_back(SparseRow{std::move(coeffs), rel, rhs});
  return static_cast<int>(rows.size()) - 1;
}

double ConstraintSet::row_activity(std::size_t i, const std::vector<double>& x) const {
  double acc = 0.0;
  for (const auto& [j, a] : rows.at(i).coeffs) acc += a * x.at(j);
  return acc;
}

void ConstraintSet::validate() const {
  if (lower.size() != upper.size()) throw PreconditionError("bound vectors differ in length");
  const int n = static_cast<int>(lower.size());
  for (int j = 0; j < n; ++j) {
    if (std::isnan(lower[j]) || std::isnan(upper[j]) || lower[j] > upper[j] ||
        lower[j] == kInf || upper[j] == -kInf)
      throw PreconditionError("invalid bounds on variable " + std::to_string(j));
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!std::isfinite(rows[i].rhs))
      throw PreconditionError("non-finite right-hand side in row " + std::to_string(i));
    for (const auto& [j, a] : rows[i].coeffs) {
      if (j < 0 || j >= n) throw PreconditionError("row " + std::to_string(i) + " references a missing column");
      if (!std::isfinite(a)) throw PreconditionError("non-finite coefficient in row " + std::to_string(i));
    }
  }
}

int LinearProgram::add_variable(double cost, double lo, double hi) {
  objective.push_back(cost);
  return cons.add_variable(lo, hi);
}

int SeparableConcaveProgram::add_variable(double lo, double hi, double cost) {
  linear.push_back(cost);
  return cons.add_variable(lo, hi);
}

double SeparableConcaveProgram::term_argument(std::size_t k, const std::vector<double>& x) const {
  const ConcaveTerm& t = terms.at(k);
  double acc = t.offset;
  for (const auto& [j, a] : t.coeffs) acc += a * x.at(j);
  return acc;
}

namespace {

double term_value(const ConcaveTerm& t, double arg) {
  switch (t.kind) {
    case ConcaveTerm::Kind::log: return std::log(arg);
    case ConcaveTerm::Kind::power: return std::pow(arg, t.exponent) / t.exponent;
    case ConcaveTerm::Kind::linear: return arg;
  }
  return 0.0;
}

double term_deriv(const ConcaveTerm& t, double arg) {
  switch (t.kind) {
    case ConcaveTerm::Kind::log: return 1.0 / arg;
    case ConcaveTerm::Kind::power: return std::pow(arg, t.exponent - 1.0);
    case ConcaveTerm::Kind::linear: return 1.0;
  }
  return 0.0;
}

}  // namespace

double SeparableConcaveProgram::objective(const std::vector<double>& x) const {
  double acc = constant;
  for (std::size_t j = 0; j < linear.size(); ++j) acc += linear[j] * x.at(j);
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const double arg = term_argument(k, x);
    if (terms[k].kind != ConcaveTerm::Kind::linear && !(arg > 0.0)) return -kInf;
    acc += terms[k].weight * term_value(terms[k], arg);
  }
  return acc;
}

std::vector<double> SeparableConcaveProgram::gradient(const std::vector<double>& x) const {
  std::vector<double> g(linear.begin(), linear.end());
  g.resize(cons.n_vars(), 0.0);
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const double arg = term_argument(k, x);
    if (terms[k].kind != ConcaveTerm::Kind::linear && !(arg > 0.0))
      throw PreconditionError("gradient evaluated outside the strict domain");
    const double d = terms[k].weight * term_deriv(terms[k], arg);
    for (const auto& [j, a] : terms[k].coeffs) g[j] += d * a;
  }
  return g;
}

void SeparableConcaveProgram::validate() const {
  cons.validate();
  if (!linear.empty() && linear.size() != cons.n_vars())
    throw PreconditionError("linear objective length differs from variable count");
  const int n = static_cast<int>(cons.n_vars());
  for (const ConcaveTerm& t : terms) {
    if (!(t.weight > 0.0) || !std::isfinite(t.weight)) throw PreconditionError("term weights must be > 0");
    if (t.kind == ConcaveTerm::Kind::power && (!(t.exponent < 1.0) || t.exponent == 0.0))
      throw PreconditionError("power terms need exponent < 1, != 0");
    for (const auto& [j, a] : t.coeffs)
      if (j < 0 || j >= n || !std::isfinite(a)) throw PreconditionError("bad term coefficient");
  }
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::max_iter: return "max-iter";
    case SolveStatus::empty_interior: return "empty-interior";
  }
  return "unknown";
}

double KktResiduals::max() const noexcept {
  return std::max({stationarity, primal_feas, dual_feas, complementarity});
}

namespace {

// Residuals for  grad = A' pi + r  in maximization orientation.
KktResiduals kkt_residuals(const ConstraintSet& cons, Sense sense, std::vector<double> grad,
                           const std::vector<double>& x, std::vector<double> pi,
                           std::vector<double> r) {
  const std::size_t n = cons.n_vars();
  if (x.size() != n || grad.size() != n || pi.size() != cons.rows.size() ||
      (!r.empty() && r.size() != n))
    throw PreconditionError("check_kkt: dimension mismatch");
  if (sense == Sense::minimize) {
    for (double& g : grad) g = -g;
    for (double& p : pi) p = -p;
    for (double& v : r) v = -v;
  }
  KktResiduals out;

  std::vector<double> atpi(n, 0.0);
  for (std::size_t i = 0; i < cons.rows.size(); ++i)
    for (const auto& [j, a] : cons.rows[i].coeffs) atpi[j] += a * pi[i];

  const bool inferred = r.empty();
  if (inferred) {
    r.resize(n);
    for (std::size_t j = 0; j < n; ++j) r[j] = grad[j] - atpi[j];
  }

  for (std::size_t j = 0; j < n; ++j) {
    const double lo = cons.lower[j], hi = cons.upper[j];
    const double resid = grad[j] - atpi[j] - r[j];
    out.stationarity = std::max(out.stationarity, std::abs(resid));
    if (inferred && !std::isfinite(lo) && !std::isfinite(hi))
      out.stationarity = std::max(out.stationarity, std::abs(r[j]));
    const double r_up = std::max(r[j], 0.0), r_lo = std::max(-r[j], 0.0);
    if (!std::isfinite(hi)) out.dual_feas = std::max(out.dual_feas, (inferred && !std::isfinite(lo)) ? 0.0 : r_up);
    if (!std::isfinite(lo)) out.dual_feas = std::max(out.dual_feas, (inferred && !std::isfinite(hi)) ? 0.0 : r_lo);
    if (std::isfinite(lo)) {
      out.primal_feas = std::max(out.primal_feas, lo - x[j]);
      out.complementarity = std::max(out.complementarity, r_lo * std::abs(x[j] - lo));
    }
    if (std::isfinite(hi)) {
      out.primal_feas = std::max(out.primal_feas, x[j] - hi);
      out.complementarity = std::max(out.complementarity, r_up * std::abs(hi - x[j]));
    }
  }
  for (std::size_t i = 0; i < cons.rows.size(); ++i) {
    const SparseRow& row = cons.rows[i];
    const double act = cons.row_activity(i, x);
    const double slack = row.rhs - act;
    switch (row.rel) {
      case Relation::le:
        out.primal_feas = std::max(out.primal_feas, -slack);
        out.dual_feas = std::max(out.dual_feas, -pi[i]);
        out.complementarity = std::max(out.complementarity, std::abs(pi[i] * slack));
        break;
      case Relation::ge:
        out.primal_feas = std::max(out.primal_feas, slack);
        out.dual_feas = std::max(out.dual_feas, pi[i]);
        out.complementarity = std::max(out.complementarity, std::abs(pi[i] * slack));
        break;
      case Relation::eq:
        out.primal_feas = std::max(out.primal_feas, std::abs(slack));
        break;
    }
  }
  out.primal_feas = std::max(out.primal_feas, 0.0);
  return out;
}

}  // namespace

KktResiduals check_kkt(const SeparableConcaveProgram& prog, const std::vector<double>& x,
                       const std::vector<double>& row_duals, const std::vector<double>& bound_duals) {
  if (x.size() != prog.cons.n_vars()) throw PreconditionError("check_kkt: dimension mismatch");
  for (std::size_t k = 0; k < prog.terms.size(); ++k) {
    if (prog.terms[k].kind != ConcaveTerm::Kind::linear && !(prog.term_argument(k, x) > 0.0)) {
      KktResiduals bad;
      bad.stationarity = kInf;
      bad.primal_feas = kInf;
      return bad;
    }
  }
  return kkt_residuals(prog.cons, Sense::maximize, prog.gradient(x), x, row_duals, bound_duals);
}

KktResiduals check_kkt(const LinearProgram& lp, const std::vector<double>& x,
                       const std::vector<double>& row_duals, const std::vector<double>& bound_duals) {
  return kkt_residuals(lp.cons, lp.sense, lp.objective, x, row_duals, bound_duals);
}

}  // namespace fdual
