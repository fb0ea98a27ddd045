// Homogeneous self-dual interior point for
//   min c'x  s.t.  Ax = b, x >= 0
// after reducing a general LinearProgram to standard form. The embedding
// detects infeasibility and unboundedness through tau -> 0 and yields Farkas
// rays in that case.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "fdual/convex.hpp"
#include "fdual/market.hpp"

namespace fdual {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

enum class ColKind { shift_lower, reflect_upper, split, fixed };

struct ColMap {
  ColKind kind = ColKind::shift_lower;
  int pos = -1;        // standard column of p
  int neg = -1;        // standard column of n (split only)
  int upper_row = -1;  // standard row bounding p (shift_lower with finite hi)
  double base = 0.0;   // lo, hi or fixed value
};

struct StandardForm {
  SpMat A;
  VectorXd b;
  VectorXd c;
  double c0 = 0.0;
  std::vector<ColMap> cols;
  int n_orig_rows = 0;
};

StandardForm to_standard(const LinearProgram& lp) {
  const auto& cons = lp.cons;
  const int n = static_cast<int>(cons.n_vars());
  const int m0 = static_cast<int>(cons.rows.size());
  const double sgn = lp.sense == Sense::maximize ? -1.0 : 1.0;

  StandardForm sf;
  sf.n_orig_rows = m0;
  sf.cols.resize(n);
  std::vector<double> cost;
  int n_rows = m0;
  for (int j = 0; j < n; ++j) {
    const double lo = cons.lower[j], hi = cons.upper[j];
    ColMap& cm = sf.cols[j];
    if (std::isfinite(lo) && std::isfinite(hi) && lo == hi) {
      cm.kind = ColKind::fixed;
      cm.base = lo;
    } else if (std::isfinite(lo)) {
      cm.kind = ColKind::shift_lower;
      cm.base = lo;
      cm.pos = static_cast<int>(cost.size());
      cost.push_back(sgn * lp.objective[j]);
      if (std::isfinite(hi)) cm.upper_row = n_rows++;
    } else if (std::isfinite(hi)) {
      cm.kind = ColKind::reflect_upper;
      cm.base = hi;
      cm.pos = static_cast<int>(cost.size());
      cost.push_back(-sgn * lp.objective[j]);
    } else {
      cm.kind = ColKind::split;
      cm.pos = static_cast<int>(cost.size());
      cost.push_back(sgn * lp.objective[j]);
      cm.neg = static_cast<int>(cost.size());
      cost.push_back(-sgn * lp.objective[j]);
    }
    if (cm.kind != ColKind::split) sf.c0 += sgn * lp.objective[j] * cm.base;
  }

  std::vector<Eigen::Triplet<double>> trip;
  sf.b = VectorXd::Zero(n_rows);
  for (int i = 0; i < m0; ++i) {
    const SparseRow& row = cons.rows[i];
    double rhs = row.rhs;
    for (const auto& [j, a] : row.coeffs) {
      const ColMap& cm = sf.cols[j];
      switch (cm.kind) {
        case ColKind::fixed: rhs -= a * cm.base; break;
        case ColKind::shift_lower:
          rhs -= a * cm.base;
          trip.emplace_back(i, cm.pos, a);
          break;
        case ColKind::reflect_upper:
          rhs -= a * cm.base;
          trip.emplace_back(i, cm.pos, -a);
          break;
        case ColKind::split:
          trip.emplace_back(i, cm.pos, a);
          trip.emplace_back(i, cm.neg, -a);
          break;
      }
    }
    if (row.rel != Relation::eq) {
      trip.emplace_back(i, static_cast<int>(cost.size()), row.rel == Relation::le ? 1.0 : -1.0);
      cost.push_back(0.0);
    }
    sf.b[i] = rhs;
  }
  for (int j = 0; j < n; ++j) {
    const ColMap& cm = sf.cols[j];
    if (cm.upper_row < 0) continue;
    trip.emplace_back(cm.upper_row, cm.pos, 1.0);
    trip.emplace_back(cm.upper_row, static_cast<int>(cost.size()), 1.0);
    cost.push_back(0.0);
    sf.b[cm.upper_row] = cons.upper[j] - cons.lower[j];
  }
  sf.A.resize(n_rows, static_cast<int>(cost.size()));
  sf.A.setFromTriplets(trip.begin(), trip.end());
  sf.A.makeCompressed();
  sf.c = Eigen::Map<VectorXd>(cost.data(), static_cast<Eigen::Index>(cost.size()));
  return sf;
}

double max_step(const VectorXd& v, const VectorXd& dv) {
  double alpha = 1e300;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  return alpha;
}

double max_step(double v, double dv) { return dv < 0.0 ? -v / dv : 1e300; }

/// Factorization of A D A' with a small diagonal shift and one refinement step.
class NormalSolver {
 public:
  void factor(const SpMat& A, const VectorXd& d) {
    SpMat ad = A * d.asDiagonal();
    M_ = MatrixXd(ad * A.transpose());
    double scale = 1.0;
    for (Eigen::Index i = 0; i < M_.rows(); ++i) scale = std::max(scale, M_(i, i));
    MatrixXd reg = M_;
    for (Eigen::Index i = 0; i < M_.rows(); ++i) reg(i, i) += 1e-14 * std::max(M_(i, i), 1e-10 * scale);
    ldlt_.compute(reg);
  }

  VectorXd solve(const VectorXd& rhs) const {
    VectorXd z = ldlt_.solve(rhs);
    for (int k = 0; k < 3; ++k) z += ldlt_.solve(rhs - M_ * z);
    return z;
  }

 private:
  MatrixXd M_;
  Eigen::LDLT<MatrixXd> ldlt_;
};

}  // namespace

SolveReport solve_lp(const LinearProgram& lp, const LpOptions& opts) {
  lp.cons.validate();
  if (lp.objective.size() != lp.cons.n_vars())
    throw PreconditionError("objective length differs from variable count");
  for (double c : lp.objective)
    if (!std::isfinite(c)) throw PreconditionError("non-finite objective coefficient");

  const StandardForm sf = to_standard(lp);
  const SpMat& A = sf.A;
  const VectorXd& b = sf.b;
  const VectorXd& c = sf.c;
  const Eigen::Index m = A.rows();
  const Eigen::Index N = A.cols();
  const SpMat At = A.transpose();

  VectorXd x = VectorXd::Ones(N), s = VectorXd::Ones(N), y = VectorXd::Zero(m);
  double tau = 1.0, kappa = 1.0;
  const double bnorm = b.size() ? b.lpNorm<Eigen::Infinity>() : 0.0;
  const double cnorm = c.size() ? c.lpNorm<Eigen::Infinity>() : 0.0;

  SolveReport rep;
  rep.status = SolveStatus::max_iter;
  NormalSolver ns;
  struct Snapshot {
    VectorXd x, y, s;
    double tau = 1.0, kappa = 1.0;
    double merit = std::numeric_limits<double>::infinity();
    int last_gain = 0;
  } best;
  int it = 0;
  for (; it <= opts.max_iter; ++it) {
    const VectorXd rp = A * x - b * tau;
    const VectorXd rd = At * y + s - c * tau;
    const double cx = c.dot(x), by = b.dot(y);
    const double rg = cx - by + kappa;
    const double mu = (x.dot(s) + tau * kappa) / static_cast<double>(N + 1);

    // tau (c'x - b'y) = x's - x'rd + y'rp, so the gap cannot fall below the
    // residual terms; a violation means the iterate arithmetic has broken down.
    const double lower_bound = -std::abs(x.dot(rd)) - std::abs(y.dot(rp));
    if (tau * (cx - by) < lower_bound - 1e-9 * (1.0 + std::abs(cx) + std::abs(by)))
      ++rep.weak_duality_violations;

    const double pres = rp.size() ? rp.lpNorm<Eigen::Infinity>() / tau / (1.0 + bnorm) : 0.0;
    const double dres = rd.size() ? rd.lpNorm<Eigen::Infinity>() / tau / (1.0 + cnorm) : 0.0;
    const double pobj = cx / tau, dobj = by / tau;
    const double gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj));
    if (pres <= opts.tol && dres <= opts.tol && gap <= opts.tol) {
      rep.status = SolveStatus::optimal;
      break;
    }
    // Near the tolerance floor the normal equations lose accuracy and the
    // residuals can jump back up; keep the best iterate and stop on blow-up
    // or stagnation.
    const double merit = std::max({pres, dres, gap});
    if (merit < best.merit) {
      if (merit < 0.5 * best.merit) best.last_gain = it;
      best = Snapshot{x, y, s, tau, kappa, merit, best.last_gain};
    } else if ((merit > 1e3 * best.merit && best.merit <= 1e-6) || it - best.last_gain >= 15) {
      break;
    }
    if (tau < 1e-2 * kappa) {
      const double aty = (At * y + s).lpNorm<Eigen::Infinity>();
      if (by > 0.0 && aty <= opts.tol * by) {
        rep.status = SolveStatus::infeasible;
        break;
      }
      const double ax = (A * x).size() ? (A * x).lpNorm<Eigen::Infinity>() : 0.0;
      if (cx < 0.0 && ax <= opts.tol * (-cx)) {
        rep.status = SolveStatus::unbounded;
        break;
      }
    }
    if (it == opts.max_iter) break;

    const VectorXd d = x.cwiseQuotient(s);
    ns.factor(A, d);
    const VectorXd q = ns.solve(A * d.cwiseProduct(c) + b);
    const VectorXd v = d.cwiseProduct(At * q - c);
    const double denom = c.dot(v) - b.dot(q) - kappa / tau;

    struct Dir {
      VectorXd dx, dy, ds;
      double dtau = 0.0, dkappa = 0.0;
    };
    auto direction = [&](const VectorXd& rxs, double rtk, double eta) {
      const VectorXd t = eta * rd + rxs.cwiseQuotient(x);
      const VectorXd p = ns.solve(-eta * rp - A * d.cwiseProduct(t));
      const VectorXd u = d.cwiseProduct(At * p + t);
      Dir dir;
      dir.dtau = (-eta * rg - c.dot(u) + b.dot(p) - rtk / tau) / denom;
      dir.dy = p + q * dir.dtau;
      dir.dx = u + v * dir.dtau;
      dir.ds = (rxs - s.cwiseProduct(dir.dx)).cwiseQuotient(x);
      dir.dkappa = (rtk - kappa * dir.dtau) / tau;
      return dir;
    };
    auto step_to_boundary = [&](const Dir& dir) {
      return std::min({max_step(x, dir.dx), max_step(s, dir.ds), max_step(tau, dir.dtau),
                       max_step(kappa, dir.dkappa)});
    };

    const Dir aff = direction(-x.cwiseProduct(s), -tau * kappa, 1.0);
    const double a_aff = std::min(1.0, step_to_boundary(aff));
    const double mu_aff = ((x + a_aff * aff.dx).dot(s + a_aff * aff.ds) +
                           (tau + a_aff * aff.dtau) * (kappa + a_aff * aff.dkappa)) /
                          static_cast<double>(N + 1);
    const double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);

    const VectorXd rxs = -x.cwiseProduct(s) - aff.dx.cwiseProduct(aff.ds) +
                         VectorXd::Constant(N, sigma * mu);
    const double rtk = -tau * kappa - aff.dtau * aff.dkappa + sigma * mu;
    const Dir cor = direction(rxs, rtk, 1.0 - sigma);
    const double alpha = std::min(1.0, 0.995 * step_to_boundary(cor));

    x += alpha * cor.dx;
    y += alpha * cor.dy;
    s += alpha * cor.ds;
    tau += alpha * cor.dtau;
    kappa += alpha * cor.dkappa;
  }
  rep.iterations = it;
  if (rep.status == SolveStatus::max_iter && best.merit <= std::max(opts.tol, opts.acceptable_tol)) {
    x = best.x;
    y = best.y;
    s = best.s;
    tau = best.tau;
    kappa = best.kappa;
    rep.status = SolveStatus::optimal;
  }

  const double sgn = lp.sense == Sense::maximize ? -1.0 : 1.0;
  const int n = static_cast<int>(lp.cons.n_vars());
  const int m0 = sf.n_orig_rows;

  if (rep.status == SolveStatus::infeasible) {
    const double by = b.dot(y);
    rep.certificate.resize(m0);
    for (int i = 0; i < m0; ++i) rep.certificate[i] = y[i] / by;
    return rep;
  }
  if (rep.status == SolveStatus::unbounded) {
    const double cx = c.dot(x);
    rep.certificate.assign(n, 0.0);
    for (int j = 0; j < n; ++j) {
      const ColMap& cm = sf.cols[j];
      double dj = 0.0;
      if (cm.kind == ColKind::shift_lower) dj = x[cm.pos];
      else if (cm.kind == ColKind::reflect_upper) dj = -x[cm.pos];
      else if (cm.kind == ColKind::split) dj = x[cm.pos] - x[cm.neg];
      rep.certificate[j] = dj / (-cx);
    }
    return rep;
  }

  x /= tau;
  y /= tau;
  s /= tau;
  rep.barrier_mu = x.dot(s) / static_cast<double>(std::max<Eigen::Index>(N, 1));
  rep.x.assign(n, 0.0);
  rep.bound_duals.assign(n, 0.0);
  VectorXd aty = At * y;
  for (int j = 0; j < n; ++j) {
    const ColMap& cm = sf.cols[j];
    double rmin = 0.0;  // reduced cost in the standard min orientation
    switch (cm.kind) {
      case ColKind::fixed: {
        rep.x[j] = cm.base;
        double acc = 0.0;
        for (std::size_t i = 0; i < lp.cons.rows.size(); ++i)
          for (const auto& [jj, a] : lp.cons.rows[i].coeffs)
            if (jj == j) acc += a * y[static_cast<Eigen::Index>(i)];
        rmin = sgn * lp.objective[j] - acc;
        break;
      }
      case ColKind::shift_lower:
        rep.x[j] = cm.base + x[cm.pos];
        rmin = s[cm.pos] + (cm.upper_row >= 0 ? y[cm.upper_row] : 0.0);
        break;
      case ColKind::reflect_upper:
        rep.x[j] = cm.base - x[cm.pos];
        rmin = -s[cm.pos];
        break;
      case ColKind::split:
        rep.x[j] = x[cm.pos] - x[cm.neg];
        rmin = 0.5 * (s[cm.pos] - s[cm.neg]);
        break;
    }
    rep.bound_duals[j] = sgn * rmin;
  }
  rep.row_duals.resize(m0);
  for (int i = 0; i < m0; ++i) rep.row_duals[i] = sgn * y[i];

  double obj = 0.0;
  for (int j = 0; j < n; ++j) obj += lp.objective[j] * rep.x[j];
  rep.objective = obj;
  rep.dual_objective = sgn * (b.dot(y) + sf.c0);
  rep.kkt = check_kkt(lp, rep.x, rep.row_duals, rep.bound_duals);
  return rep;
}

std::optional<ConstraintSet> tighten_implicit_equalities(const ConstraintSet& cons, double tol) {
  cons.validate();
  const int n = static_cast<int>(cons.n_vars());
  // Candidate slacks: coefficients, constant and sign so that slack = sign (a.x - c) >= 0.
  struct Slack {
    std::vector<std::pair<int, double>> coeffs;
    double rhs;
    int row;
    int var;
    bool at_upper;
  };
  std::vector<Slack> cand;
  for (std::size_t i = 0; i < cons.rows.size(); ++i) {
    const SparseRow& r = cons.rows[i];
    if (r.rel == Relation::eq) continue;
    const double sign = r.rel == Relation::ge ? 1.0 : -1.0;
    std::vector<std::pair<int, double>> c;
    for (const auto& [j, a] : r.coeffs) c.emplace_back(j, sign * a);
    cand.push_back({std::move(c), sign * r.rhs, static_cast<int>(i), -1, false});
  }
  for (int j = 0; j < n; ++j) {
    if (cons.lower[j] == cons.upper[j]) continue;
    if (std::isfinite(cons.lower[j])) cand.push_back({{{j, 1.0}}, cons.lower[j], -1, j, false});
    if (std::isfinite(cons.upper[j])) cand.push_back({{{j, -1.0}}, -cons.upper[j], -1, j, true});
  }

  std::vector<bool> open(cand.size(), true);
  while (true) {
    LinearProgram lp;
    lp.sense = Sense::maximize;
    lp.cons = cons;
    lp.objective.assign(cons.n_vars(), 0.0);
    std::vector<std::pair<std::size_t, int>> probes;
    for (std::size_t k = 0; k < cand.size(); ++k) {
      if (!open[k]) continue;
      const int t = lp.add_variable(1.0, 0.0, 1.0);
      auto c = cand[k].coeffs;
      c.emplace_back(t, -1.0);
      lp.add_row(std::move(c), Relation::ge, cand[k].rhs);
      probes.emplace_back(k, t);
    }
    if (probes.empty()) break;
    LpOptions o;
    o.tol = 1e-11;
    o.acceptable_tol = 1e-9;
    const SolveReport rep = solve_lp(lp, o);
    if (rep.status == SolveStatus::infeasible) return std::nullopt;
    if (rep.status != SolveStatus::optimal) break;
    bool progress = false;
    for (const auto& [k, t] : probes)
      if (rep.x[static_cast<std::size_t>(t)] > tol) {
        open[k] = false;
        progress = true;
      }
    if (!progress) break;
  }

  ConstraintSet out = cons;
  for (std::size_t k = 0; k < cand.size(); ++k) {
    if (!open[k]) continue;
    if (cand[k].row >= 0) {
      out.rows[static_cast<std::size_t>(cand[k].row)].rel = Relation::eq;
    } else {
      const int j = cand[k].var;
      const double v = cand[k].at_upper ? cons.upper[j] : cons.lower[j];
      out.lower[j] = -kInf;
      out.upper[j] = kInf;
      out.add_row({{j, 1.0}}, Relation::eq, v);
    }
  }

  // New equalities often repeat old ones (a single child copies its parent's
  // spread rows); keep a linearly independent subset.
  std::vector<std::size_t> eq_rows;
  for (std::size_t i = 0; i < out.rows.size(); ++i)
    if (out.rows[i].rel == Relation::eq) eq_rows.push_back(i);
  Eigen::MatrixXd At = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(eq_rows.size()));
  for (std::size_t k = 0; k < eq_rows.size(); ++k) {
    const SparseRow& r = out.rows[eq_rows[k]];
    double scale = 0.0;
    for (const auto& [j, a] : r.coeffs) scale = std::max(scale, std::abs(a));
    for (const auto& [j, a] : r.coeffs) At(j, static_cast<Eigen::Index>(k)) += a / std::max(scale, 1e-300);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(At);
  qr.setThreshold(1e-10);
  const Eigen::Index rank = qr.rank();
  std::vector<bool> keep(out.rows.size(), true);
  for (std::size_t k = 0; k < eq_rows.size(); ++k) keep[eq_rows[k]] = false;
  for (Eigen::Index k = 0; k < rank; ++k)
    keep[eq_rows[static_cast<std::size_t>(qr.colsPermutation().indices()[k])]] = true;
  ConstraintSet reduced;
  reduced.lower = out.lower;
  reduced.upper = out.upper;
  for (std::size_t i = 0; i < out.rows.size(); ++i)
    if (keep[i]) reduced.rows.push_back(std::move(out.rows[i]));
  return reduced;
}

}  // namespace fdual
