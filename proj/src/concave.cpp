// Primal-dual interior point for
//   maximize F(x) = sum_k w_k f_k(a_k'x + b_k) + c'x
//   s.t. A x = b, G x <= h
// where G stacks inequality rows, finite bounds and the strict-domain rows
// a_k'x + b_k >= 0. Iterates follow the log-barrier central path
// s_i z_i = mu with a Mehrotra predictor-corrector choice of mu; the start
// comes from a phase-1 LP maximizing the smallest inequality slack.

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "fdual/convex.hpp"
#include "fdual/market.hpp"

namespace fdual {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

enum class IneqKind { row_le, row_ge, lower, upper, domain };

struct IneqOrigin {
  IneqKind kind;
  int index;
};

struct Internal {
  int n = 0;
  SpMat Ae, G;
  VectorXd be, h;
  std::vector<int> eq_rows;
  std::vector<IneqOrigin> origin;
};

Internal lower_program(const SeparableConcaveProgram& prog) {
  Internal in;
  const auto& cons = prog.cons;
  in.n = static_cast<int>(cons.n_vars());
  std::vector<Eigen::Triplet<double>> te, tg;
  std::vector<double> be, h;
  auto add_ineq = [&](const std::vector<std::pair<int, double>>& coeffs, double sign, double rhs,
                      IneqOrigin o) {
    const int r = static_cast<int>(h.size());
    for (const auto& [j, a] : coeffs) tg.emplace_back(r, j, sign * a);
    h.push_back(rhs);
    in.origin.push_back(o);
  };
  for (std::size_t i = 0; i < cons.rows.size(); ++i) {
    const SparseRow& row = cons.rows[i];
    switch (row.rel) {
      case Relation::eq: {
        const int r = static_cast<int>(be.size());
        for (const auto& [j, a] : row.coeffs) te.emplace_back(r, j, a);
        be.push_back(row.rhs);
        in.eq_rows.push_back(static_cast<int>(i));
        break;
      }
      case Relation::le: add_ineq(row.coeffs, 1.0, row.rhs, {IneqKind::row_le, static_cast<int>(i)}); break;
      case Relation::ge: add_ineq(row.coeffs, -1.0, -row.rhs, {IneqKind::row_ge, static_cast<int>(i)}); break;
    }
  }
  for (int j = 0; j < in.n; ++j) {
    if (std::isfinite(cons.lower[j])) add_ineq({{j, 1.0}}, -1.0, -cons.lower[j], {IneqKind::lower, j});
    if (std::isfinite(cons.upper[j])) add_ineq({{j, 1.0}}, 1.0, cons.upper[j], {IneqKind::upper, j});
  }
  for (std::size_t k = 0; k < prog.terms.size(); ++k) {
    const ConcaveTerm& t = prog.terms[k];
    if (t.kind == ConcaveTerm::Kind::linear && !t.strict) continue;
    add_ineq(t.coeffs, -1.0, t.offset, {IneqKind::domain, static_cast<int>(k)});
  }
  in.Ae.resize(static_cast<int>(be.size()), in.n);
  in.Ae.setFromTriplets(te.begin(), te.end());
  in.G.resize(static_cast<int>(h.size()), in.n);
  in.G.setFromTriplets(tg.begin(), tg.end());
  in.be = Eigen::Map<VectorXd>(be.data(), static_cast<Eigen::Index>(be.size()));
  in.h = Eigen::Map<VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));
  return in;
}

double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

double max_step(const VectorXd& v, const VectorXd& dv) {
  double alpha = 1e300;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  return alpha;
}

struct Derivatives {
  VectorXd grad;  // of F
  MatrixXd neg_hess;  // -Hessian of F (positive semidefinite)
};

bool in_domain(const SeparableConcaveProgram& prog, const std::vector<double>& x) {
  for (std::size_t k = 0; k < prog.terms.size(); ++k)
    if (prog.terms[k].kind != ConcaveTerm::Kind::linear && !(prog.term_argument(k, x) > 0.0))
      return false;
  return true;
}

Derivatives derivatives(const SeparableConcaveProgram& prog, const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  Derivatives d;
  d.grad = VectorXd::Zero(n);
  d.neg_hess = MatrixXd::Zero(n, n);
  for (std::size_t j = 0; j < prog.linear.size(); ++j) d.grad[static_cast<Eigen::Index>(j)] += prog.linear[j];
  for (std::size_t k = 0; k < prog.terms.size(); ++k) {
    const ConcaveTerm& t = prog.terms[k];
    const double arg = prog.term_argument(k, x);
    double f1 = 1.0, f2 = 0.0;
    switch (t.kind) {
      case ConcaveTerm::Kind::log:
        f1 = 1.0 / arg;
        f2 = -f1 * f1;
        break;
      case ConcaveTerm::Kind::power:
        f1 = std::pow(arg, t.exponent - 1.0);
        f2 = (t.exponent - 1.0) * f1 / arg;
        break;
      case ConcaveTerm::Kind::linear: break;
    }
    for (const auto& [i, ai] : t.coeffs) {
      d.grad[i] += t.weight * f1 * ai;
      if (f2 != 0.0)
        for (const auto& [j, aj] : t.coeffs) d.neg_hess(i, j) -= t.weight * f2 * ai * aj;
    }
  }
  return d;
}

/// Phase 1: maximize t subject to A x = b and G x + t <= h, t <= 1.
struct PhaseOne {
  SolveStatus status;
  double slack = 0.0;
  std::vector<double> x;
};

PhaseOne phase_one(const Internal& in, double tol) {
  LinearProgram lp;
  lp.sense = Sense::maximize;
  for (int j = 0; j < in.n; ++j) lp.add_variable(0.0, -kInf, kInf);
  const int t = lp.add_variable(1.0, -kInf, 1.0);
  for (Eigen::Index r = 0; r < in.Ae.rows(); ++r) lp.add_row({}, Relation::eq, in.be[r]);
  for (int k = 0; k < in.Ae.outerSize(); ++k)
    for (SpMat::InnerIterator it(in.Ae, k); it; ++it)
      lp.cons.rows[static_cast<std::size_t>(it.row())].coeffs.emplace_back(static_cast<int>(it.col()), it.value());
  const auto first_ineq = lp.cons.rows.size();
  for (Eigen::Index r = 0; r < in.G.rows(); ++r) lp.add_row({{t, 1.0}}, Relation::le, in.h[r]);
  for (int k = 0; k < in.G.outerSize(); ++k)
    for (SpMat::InnerIterator it(in.G, k); it; ++it)
      lp.cons.rows[first_ineq + static_cast<std::size_t>(it.row())].coeffs.emplace_back(
          static_cast<int>(it.col()), it.value());

  LpOptions o;
  o.tol = tol;
  o.acceptable_tol = 1e-8;
  const SolveReport rep = solve_lp(lp, o);
  PhaseOne out{rep.status, 0.0, {}};
  if (rep.status == SolveStatus::optimal) {
    out.slack = rep.x[static_cast<std::size_t>(t)];
    out.x.assign(rep.x.begin(), rep.x.begin() + in.n);
  }
  return out;
}

}  // namespace

SolveReport solve_concave(const SeparableConcaveProgram& prog, const ConcaveOptions& opts) {
  prog.validate();
  const Internal in = lower_program(prog);
  const int n = in.n;
  const Eigen::Index me = in.Ae.rows();
  const Eigen::Index mi = in.G.rows();

  SolveReport rep;
  std::vector<double> x0;
  if (opts.initial_point) {
    x0 = *opts.initial_point;
    if (x0.size() != static_cast<std::size_t>(n)) throw PreconditionError("initial point has wrong dimension");
    const VectorXd s0 = in.h - in.G * Eigen::Map<const VectorXd>(x0.data(), n);
    if ((mi > 0 && s0.minCoeff() <= 0.0) || !in_domain(prog, x0))
      throw PreconditionError("initial point is not strictly inside the inequalities");
    rep.phase1_slack = mi > 0 ? s0.minCoeff() : kInf;
  } else if (mi > 0) {
    const PhaseOne p1 = phase_one(in, 1e-10);
    if (p1.status == SolveStatus::infeasible) {
      rep.status = SolveStatus::infeasible;
      rep.phase1_slack = -kInf;
      return rep;
    }
    if (p1.status != SolveStatus::optimal) {
      rep.status = p1.status == SolveStatus::unbounded ? SolveStatus::unbounded : SolveStatus::max_iter;
      return rep;
    }
    rep.phase1_slack = p1.slack;
    if (p1.slack < opts.infeasible_threshold) {
      rep.status = SolveStatus::infeasible;
      return rep;
    }
    if (p1.slack <= opts.interior_threshold) {
      rep.status = SolveStatus::empty_interior;
      return rep;
    }
    x0 = p1.x;
  } else {
    x0.assign(n, 0.0);
  }

  std::vector<double> xs = x0;
  VectorXd x = Eigen::Map<VectorXd>(xs.data(), n);
  VectorXd s = in.h - in.G * x;
  for (Eigen::Index i = 0; i < mi; ++i) s[i] = std::max(s[i], 1e-12);
  VectorXd z = s.cwiseInverse();
  VectorXd nu = VectorXd::Zero(me);

  const double bnorm = std::max(inf_norm(in.be), inf_norm(in.h));
  rep.status = SolveStatus::max_iter;
  struct Snapshot {
    VectorXd x, s, z, nu;
    double merit = kInf;
    double mu = 0.0;
  } best;
  int it = 0;
  const SpMat Gt = in.G.transpose();
  const SpMat Aet = in.Ae.transpose();
  for (; it <= opts.max_iter; ++it) {
    xs.assign(x.data(), x.data() + n);
    const Derivatives der = derivatives(prog, xs);
    const double fval = prog.objective(xs);
    const VectorXd rd = -der.grad + Aet * nu + Gt * z;
    const VectorXd re = in.Ae * x - in.be;
    const VectorXd ri = in.G * x + s - in.h;
    const double mu = mi > 0 ? s.dot(z) / static_cast<double>(mi) : 0.0;

    const double dres = inf_norm(rd) / (1.0 + inf_norm(der.grad));
    const double pres = std::max(inf_norm(re), inf_norm(ri)) / (1.0 + bnorm);
    const double gap = (mi > 0 ? s.dot(z) : 0.0) / (1.0 + std::abs(fval));
    rep.barrier_mu = mu;
    if (dres <= opts.tol && pres <= opts.tol && gap <= opts.tol) {
      rep.status = SolveStatus::optimal;
      break;
    }
    const double merit = std::max({dres, pres, gap});
    if (!std::isfinite(merit)) break;
    if (merit < best.merit) best = {x, s, z, nu, merit, mu};
    if (it == opts.max_iter) break;

    const VectorXd w = z.cwiseQuotient(s);
    MatrixXd H = der.neg_hess;
    double scale = 1.0;
    for (int j = 0; j < n; ++j) scale = std::max(scale, H(j, j));
    H += MatrixXd(Gt * w.asDiagonal() * in.G);
    MatrixXd K = MatrixXd::Zero(n + me, n + me);
    K.topLeftCorner(n, n) = H;
    if (me > 0) {
      const MatrixXd Ad(in.Ae);
      K.topRightCorner(n, me) = Ad.transpose();
      K.bottomLeftCorner(me, n) = Ad;
    }
    // Degenerate active sets make K numerically singular near the optimum;
    // the diagonal shift grows until the solve is finite.
    double shift = 1e-13;
    MatrixXd Kreg;
    Eigen::PartialPivLU<MatrixXd> lu;
    auto factor = [&] {
      Kreg = K;
      Kreg.topLeftCorner(n, n).diagonal().array() += shift * scale;
      if (me > 0) Kreg.bottomRightCorner(me, me).diagonal().array() = -shift;
      lu.compute(Kreg);
    };
    factor();

    struct Dir {
      VectorXd dx, dnu, ds, dz;
    };
    auto direction = [&](const VectorXd& rc) {
      VectorXd rhs(n + me);
      rhs.head(n) = -rd - Gt * (rc + z.cwiseProduct(ri)).cwiseQuotient(s);
      rhs.tail(me) = -re;
      VectorXd sol = lu.solve(rhs);
      sol += lu.solve(rhs - Kreg * sol);
      for (int tries = 0; !sol.allFinite() && tries < 6; ++tries) {
        shift *= 1e3;
        factor();
        sol = lu.solve(rhs);
        sol += lu.solve(rhs - Kreg * sol);
      }
      Dir d;
      d.dx = sol.head(n);
      d.dnu = sol.tail(me);
      d.ds = -ri - in.G * d.dx;
      d.dz = (rc - z.cwiseProduct(d.ds)).cwiseQuotient(s);
      return d;
    };

    double sigma = 0.0;
    VectorXd rc = -s.cwiseProduct(z);
    Dir dir;
    if (mi > 0) {
      const Dir aff = direction(rc);
      const double a_aff = std::min({1.0, max_step(s, aff.ds), max_step(z, aff.dz)});
      const double mu_aff = (s + a_aff * aff.ds).dot(z + a_aff * aff.dz) / static_cast<double>(mi);
      sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);
      rc += -aff.ds.cwiseProduct(aff.dz) + VectorXd::Constant(mi, sigma * mu);
    }
    dir = direction(rc);

    double alpha = std::min({1.0, 0.99 * max_step(s, dir.ds), 0.99 * max_step(z, dir.dz)});
    for (int bt = 0; bt < 60; ++bt) {
      const VectorXd trial = x + alpha * dir.dx;
      std::vector<double> tv(trial.data(), trial.data() + n);
      if (in_domain(prog, tv)) break;
      alpha *= 0.5;
    }
    x += alpha * dir.dx;
    nu += alpha * dir.dnu;
    s += alpha * dir.ds;
    z += alpha * dir.dz;
  }
  rep.iterations = it;
  if (rep.status == SolveStatus::max_iter && best.merit <= std::max(opts.tol, opts.acceptable_tol)) {
    x = best.x;
    s = best.s;
    z = best.z;
    nu = best.nu;
    rep.barrier_mu = best.mu;
    rep.status = SolveStatus::optimal;
  } else if (rep.status == SolveStatus::max_iter && !x.allFinite()) {
    x = best.x.size() ? best.x : Eigen::Map<VectorXd>(x0.data(), n);
  }

  rep.x.assign(x.data(), x.data() + n);
  rep.objective = prog.objective(rep.x);
  rep.dual_objective = rep.objective + (mi > 0 ? s.dot(z) : 0.0);
  rep.row_duals.assign(prog.cons.rows.size(), 0.0);
  rep.bound_duals.assign(n, 0.0);
  for (Eigen::Index r = 0; r < me; ++r) rep.row_duals[static_cast<std::size_t>(in.eq_rows[r])] = nu[r];
  for (Eigen::Index r = 0; r < mi; ++r) {
    const IneqOrigin& o = in.origin[static_cast<std::size_t>(r)];
    switch (o.kind) {
      case IneqKind::row_le: rep.row_duals[static_cast<std::size_t>(o.index)] = z[r]; break;
      case IneqKind::row_ge: rep.row_duals[static_cast<std::size_t>(o.index)] = -z[r]; break;
      case IneqKind::lower: rep.bound_duals[static_cast<std::size_t>(o.index)] -= z[r]; break;
      case IneqKind::upper: rep.bound_duals[static_cast<std::size_t>(o.index)] += z[r]; break;
      case IneqKind::domain: break;
    }
  }
  rep.kkt = check_kkt(prog, rep.x, rep.row_duals, rep.bound_duals);
  return rep;
}

}  // namespace fdual
