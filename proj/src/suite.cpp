#include "fdual/suite.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <map>
#include <random>

#include "fdual/random.hpp"
#include "fdual/shadow.hpp"

namespace fdual {

namespace {

class Recorder {
 public:
  explicit Recorder(SuiteReport& rep) : rep_(rep) {}

  void declare(const std::string& name, double tol) {
    index_[name] = rep_.invariants.size();
    rep_.invariants.push_back({name, tol, 0, 0, 0.0});
  }

  /// Records residual `value` against the invariant's tolerance.
  bool check(int instance, const std::string& name, double value, const std::string& detail = {}) {
    InvariantStats& s = rep_.invariants[index_.at(name)];
    ++s.checked;
    if (std::isnan(value)) value = kInf;
    s.worst = std::max(s.worst, value);
    if (value <= s.tol) return true;
    ++s.failed;
    rep_.failures.push_back({instance, name, value, detail});
    return false;
  }

 private:
  SuiteReport& rep_;
  std::map<std::string, std::size_t> index_;
};

/// sup_Q E^Q[claim] from the CPS program, optionally with the root's upper
/// spread row flipped.
double lp_superhedge_price(const MarketModel& model, std::span<const double> claim, bool fault) {
  const ScenarioTree& tree = model.tree();
  CpsProgram prog = build_cps_program(model, model.lambda());
  LinearProgram& lp = prog.lp;
  lp.sense = Sense::maximize;
  lp.objective.assign(lp.cons.n_vars(), 0.0);
  for (std::size_t i = 0; i < claim.size(); ++i) lp.objective[prog.mass(tree.terminals()[i])] = claim[i];
  if (fault) lp.cons.rows[static_cast<std::size_t>(prog.first_spread_row)].rel = Relation::ge;
  const SolveReport rep = solve_lp(lp, kEngineLp);
  if (rep.status != SolveStatus::optimal) return std::nan("");
  return rep.objective;
}

}  // namespace

SuiteReport run_suite(const SuiteOptions& opts) {
  if (opts.count < 0) throw PreconditionError("count must be >= 0");
  if (opts.max_depth < 1 || opts.max_branch < 1) throw PreconditionError("max depth and branching must be >= 1");
  SuiteReport rep;
  Recorder rec(rep);
  rec.declare("cps-exists", opts.cps_tol);
  rec.declare("superhedge-duality", opts.superhedge_tol);
  rec.declare("deflator-density", opts.cps_tol);
  rec.declare("duality-gap", opts.gap_tol);
  rec.declare("first-order", opts.identity_tol);
  rec.declare("complementary-slackness", opts.identity_tol);
  rec.declare("dual-attainment", opts.gap_tol);
  rec.declare("price-bracket", opts.identity_tol);
  rec.declare("shadow-classic", opts.shadow_tol);
  rec.declare("trade-location", opts.shadow_tol);
  rec.declare("exception", 0.0);

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < opts.count; ++i) {
    const std::size_t before = rep.failures.size();
    try {
      RandomTreeOptions ro;
      ro.max_depth = opts.max_depth;
      ro.max_branch = opts.max_branch;
      ro.lambda = std::array{0.01, 0.1, 0.3}[static_cast<std::size_t>(i) % 3];
      const Instance inst = random_instance(rng, ro);
      const MarketModel& m = inst.market;
      const ScenarioTree& tree = m.tree();

      const FindCpsResult found = find_cps(m, m.lambda());
      if (!rec.check(i, "cps-exists", found.cps ? 0.0 : kInf, "find_cps returned no CPS")) continue;
      const CpsResiduals cr = check_cps(m, *found.cps);
      rec.check(i, "cps-exists", std::max({cr.spread, cr.martingale, cr.sibling_sum}));
      rec.check(i, "deflator-density", check_deflator(m, density_deflator(m, *found.cps, 1.0)).max());

      const std::vector<double> g = random_claim(rng, tree, -5.0, 5.0);
      const SuperhedgeResult sh = superhedge_price(m, g);
      const double lp_price = lp_superhedge_price(m, g, opts.inject_fault);
      rec.check(i, "superhedge-duality", sh.ok ? std::abs(lp_price - sh.hedge_capital) : kInf,
                "LP price vs minimal hedging capital");

      const std::vector<double> q{-0.5 + 1.5 * unit(rng)};
      const double x = feasible_K(m, inst.endowments, 0.0, q).threshold + 0.5 + 1.5 * unit(rng);
      const PrimalSolution p = primal_solve(m, inst.endowments, x, q, inst.utility);
      const DualSolution d = extract_dual_from_primal(m, inst.endowments, inst.utility, p);
      rec.check(i, "duality-gap", std::abs(p.value - (d.value + x * d.y + q[0] * d.r[0])));
      double foc = 0.0, cs = 0.0;
      for (NodeId w : tree.terminals()) {
        const int k = tree.terminal_index(w);
        foc = std::max(foc, std::abs(d.deflator.y0[w] - inst.utility.deriv(p.wealth[k])));
        cs += tree.prob(w) * d.deflator.y0[w] * p.wealth[k];
      }
      rec.check(i, "first-order", foc);
      rec.check(i, "complementary-slackness", std::abs(cs - (x * d.y + q[0] * d.r[0])));

      const DualSolveResult ds = dual_solve(m, inst.endowments, d.y, d.r, inst.utility);
      rec.check(i, "dual-attainment",
                ds.status == DualStatus::optimal ? std::abs(ds.solution.value - d.value) : kInf,
                std::string("dual status ") + to_string(ds.status));

      const std::vector<double> unit_q{1.0};
      const PriceInterval iv = price_interval(m, inst.endowments, unit_q);
      const double price = d.r[0] / d.y;
      rec.check(i, "price-bracket", std::max({iv.lo - price, price - iv.hi, 0.0}));

      const ShadowVerdict v = shadow_verdict(m, inst.endowments, inst.utility, p, d, opts.shadow_tol);
      rec.check(i, "shadow-classic", v.verdict == Verdict::classic ? 0.0 : std::max(v.classic.max(), v.value_gap),
                std::string("verdict ") + to_string(v.verdict));
      rec.check(i, "trade-location", v.trades.max_deviation);
    } catch (const std::exception& e) {
      rec.check(i, "exception", kInf, e.what());
    }
    ++rep.instances;
    if (rep.failures.size() == before) ++rep.instances_passed;
  }
  return rep;
}

}  // namespace fdual
