#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "fdual/convex.hpp"
#include "fdual/market.hpp"

using namespace fdual;

TEST_CASE("solve_lp: one-variable bound") {
  LinearProgram lp;
  lp.sense = Sense::maximize;
  const int x = lp.add_variable(1.0);
  const int row = lp.add_row({{x, 1.0}}, Relation::le, 3.0);
  const SolveReport r = solve_lp(lp);
  REQUIRE(r.status == SolveStatus::optimal);
  CHECK(r.x[0] == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(r.row_duals[row] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(r.kkt.max() <= 1e-7);
}

TEST_CASE("solve_lp: degenerate optimum face") {
  LinearProgram lp;
  lp.sense = Sense::maximize;
  const int x = lp.add_variable(1.0), y = lp.add_variable(1.0);
  lp.add_row({{x, 1.0}, {y, 1.0}}, Relation::le, 1.0);
  const SolveReport r = solve_lp(lp);
  REQUIRE(r.status == SolveStatus::optimal);
  CHECK(r.objective == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(r.x[0] >= -1e-9);
  CHECK(r.x[1] >= -1e-9);
}

TEST_CASE("solve_lp: minimization with free, upper-bounded and fixed columns") {
  // min x - y + 2z  s.t.  x + y >= 1,  x - z = 0.5,  x free, y <= 2, z in [0, 3], w fixed at 4
  LinearProgram lp;
  lp.sense = Sense::minimize;
  const int x = lp.add_variable(1.0, -kInf, kInf);
  const int y = lp.add_variable(-1.0, -kInf, 2.0);
  const int z = lp.add_variable(2.0, 0.0, 3.0);
  const int w = lp.add_variable(1.0, 4.0, 4.0);
  lp.add_row({{x, 1.0}, {y, 1.0}, {w, 0.0}}, Relation::ge, 1.0);
  lp.add_row({{x, 1.0}, {z, -1.0}}, Relation::eq, 0.5);
  // optimum: y = 2, x = 0.5 + z, x + 2 >= 1 always; objective 0.5 + z - 2 + 2z + 4 minimized at z=0
  const SolveReport r = solve_lp(lp, LpOptions{1e-10, 200});
  REQUIRE(r.status == SolveStatus::optimal);
  CHECK(r.objective == doctest::Approx(2.5).epsilon(1e-9));
  CHECK(r.x[y] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(r.x[z] == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(r.x[w] == 4.0);
  CHECK(r.dual_objective == doctest::Approx(2.5).epsilon(1e-8));
  CHECK(r.kkt.max() <= 1e-7);
}

TEST_CASE("solve_lp: infeasible program carries a Farkas ray") {
  LinearProgram lp;
  lp.sense = Sense::maximize;
  const int x = lp.add_variable(1.0);
  lp.add_row({{x, 1.0}}, Relation::le, 1.0);
  lp.add_row({{x, 1.0}}, Relation::ge, 2.0);
  const SolveReport r = solve_lp(lp);
  REQUIRE(r.status == SolveStatus::infeasible);
  REQUIRE(r.certificate.size() == 2);
  // Standard-form Farkas: y'A <= 0 on x and on both slacks, y'b > 0.
  const double ya = r.certificate[0] + r.certificate[1];
  CHECK(ya <= 1e-7);
  CHECK(r.certificate[0] * 1.0 + r.certificate[1] * 2.0 == doctest::Approx(1.0));
}

TEST_CASE("solve_lp: unbounded program carries a recession ray") {
  LinearProgram lp;
  lp.sense = Sense::maximize;
  const int x = lp.add_variable(1.0), y = lp.add_variable(0.0);
  lp.add_row({{x, 1.0}, {y, -1.0}}, Relation::le, 1.0);
  const SolveReport r = solve_lp(lp);
  REQUIRE(r.status == SolveStatus::unbounded);
  REQUIRE(r.certificate.size() == 2);
  CHECK(r.certificate[0] > 0.0);
  CHECK(r.certificate[0] - r.certificate[1] <= 1e-7);
}

TEST_CASE("solve_lp: random programs with a planted optimal vertex") {
  // Oracle: pick x*, an active row set with multipliers and bound multipliers,
  // then c = A' pi + r satisfies KKT at x*, so c'x* is the optimum.
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.1, 2.0);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 29);
    const int m = 1 + static_cast<int>(rng() % 30);
    std::vector<std::vector<double>> A(m, std::vector<double>(n));
    for (auto& row : A) for (double& a : row) a = u(rng);
    std::vector<double> xs(n), pi(m, 0.0), r(n, 0.0);
    for (int j = 0; j < n; ++j) xs[j] = (rng() % 3 == 0) ? 0.0 : pos(rng);
    for (int j = 0; j < n; ++j) if (xs[j] == 0.0) r[j] = -pos(rng);
    std::vector<bool> active(m);
    for (int i = 0; i < m; ++i) active[i] = rng() % 2 == 0;
    LinearProgram lp;
    lp.sense = Sense::maximize;
    std::vector<double> c(n);
    for (int i = 0; i < m; ++i) if (active[i]) pi[i] = pos(rng);
    for (int j = 0; j < n; ++j) {
      c[j] = r[j];
      for (int i = 0; i < m; ++i) c[j] += A[i][j] * pi[i];
      lp.add_variable(c[j]);
    }
    for (int i = 0; i < m; ++i) {
      double act = 0.0;
      std::vector<std::pair<int, double>> coeffs;
      for (int j = 0; j < n; ++j) { act += A[i][j] * xs[j]; coeffs.emplace_back(j, A[i][j]); }
      lp.add_row(coeffs, Relation::le, active[i] ? act : act + pos(rng));
    }
    const double expected = std::inner_product(c.begin(), c.end(), xs.begin(), 0.0);
    const SolveReport rep = solve_lp(lp, LpOptions{1e-11, 200});
    CAPTURE(trial);
    REQUIRE(rep.status == SolveStatus::optimal);
    CHECK(std::abs(rep.objective - expected) <= 1e-8 * (1.0 + std::abs(expected)));
    CHECK(rep.weak_duality_violations == 0);
  }
}

TEST_CASE("solve_lp is deterministic") {
  LinearProgram lp;
  lp.sense = Sense::minimize;
  for (int j = 0; j < 6; ++j) lp.add_variable(1.0 + 0.1 * j);
  lp.add_row({{0, 1.0}, {1, 2.0}, {2, 1.0}}, Relation::ge, 3.0);
  lp.add_row({{3, 1.0}, {4, 1.0}, {5, 3.0}}, Relation::ge, 2.0);
  const SolveReport a = solve_lp(lp), b = solve_lp(lp);
  CHECK(a.x == b.x);
  CHECK(a.row_duals == b.row_duals);
  CHECK(a.iterations == b.iterations);
}

namespace {

SeparableConcaveProgram two_state_trade() {
  // maximize 1/2 log(1 + 4d) + 1/2 log(1 - 2d), d free
  SeparableConcaveProgram p;
  const int d = p.add_variable();
  p.terms.push_back({ConcaveTerm::Kind::log, 0.0, 0.5, {{d, 4.0}}, 1.0, true});
  p.terms.push_back({ConcaveTerm::Kind::log, 0.0, 0.5, {{d, -2.0}}, 1.0, true});
  return p;
}

}  // namespace

TEST_CASE("solve_concave: two-state log trade") {
  const auto p = two_state_trade();
  const SolveReport r = solve_concave(p);
  REQUIRE(r.status == SolveStatus::optimal);
  CHECK(r.x[0] == doctest::Approx(0.125).epsilon(1e-7));
  CHECK(r.objective == doctest::Approx(0.5 * std::log(9.0 / 8.0)).epsilon(1e-9));
  CHECK(std::abs(r.objective - 0.058891) < 1e-6);
}

TEST_CASE("solve_concave: boundary optimum and its multiplier") {
  SeparableConcaveProgram p;
  const int x = p.add_variable();
  p.terms.push_back({ConcaveTerm::Kind::log, 0.0, 1.0, {{x, 1.0}}, 0.0, true});
  const int row = p.cons.add_row({{x, 1.0}}, Relation::le, 1.0);
  const SolveReport r = solve_concave(p);
  REQUIRE(r.status == SolveStatus::optimal);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(std::abs(r.objective) <= 1e-7);
  CHECK(r.row_duals[row] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.kkt.max() <= 1e-7);
}

TEST_CASE("solve_concave: closed-form budget problems") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(0.2, 3.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 8);
    const bool use_power = trial % 2 == 1;
    const double expo = trial % 4 == 1 ? 0.5 : -1.5;
    SeparableConcaveProgram p;
    std::vector<double> w(n), c(n);
    std::vector<std::pair<int, double>> budget;
    for (int j = 0; j < n; ++j) {
      w[j] = pos(rng);
      c[j] = pos(rng);
      const int v = p.add_variable(0.0, kInf);
      p.terms.push_back({use_power ? ConcaveTerm::Kind::power : ConcaveTerm::Kind::log, expo, w[j],
                         {{v, 1.0}}, 0.0, true});
      budget.emplace_back(v, c[j]);
    }
    const double B = pos(rng);
    p.cons.add_row(budget, use_power ? Relation::eq : Relation::le, B);
    // Analytic optimum from the first-order condition w_j f'(x_j) = theta c_j.
    std::vector<double> xs(n);
    if (!use_power) {
      const double W = std::accumulate(w.begin(), w.end(), 0.0);
      for (int j = 0; j < n; ++j) xs[j] = w[j] * B / (W * c[j]);
    } else {
      const double e = 1.0 / (1.0 - expo);
      double denom = 0.0;
      for (int j = 0; j < n; ++j) denom += c[j] * std::pow(w[j] / c[j], e);
      for (int j = 0; j < n; ++j) xs[j] = B * std::pow(w[j] / c[j], e) / denom;
    }
    const double expected = p.objective(xs);
    const SolveReport r = solve_concave(p);
    CAPTURE(trial);
    REQUIRE(r.status == SolveStatus::optimal);
    CHECK(std::abs(r.objective - expected) <= 1e-7 * (1.0 + std::abs(expected)));
    for (int j = 0; j < n; ++j) CHECK(std::abs(r.x[j] - xs[j]) <= 1e-5 * (1.0 + xs[j]));
    double gscale = 1.0;
    for (double g : p.gradient(r.x)) gscale = std::max(gscale, std::abs(g));
    CHECK(r.kkt.max() <= 1e-7 * gscale);
  }
}

TEST_CASE("solve_concave: infeasible and empty-interior programs") {
  SeparableConcaveProgram p;
  const int x = p.add_variable();
  p.terms.push_back({ConcaveTerm::Kind::log, 0.0, 1.0, {{x, 1.0}}, 0.0, true});
  SUBCASE("infeasible") {
    p.cons.add_row({{x, 1.0}}, Relation::le, -1.0);
    const SolveReport r = solve_concave(p);
    CHECK(r.status == SolveStatus::infeasible);
  }
  SUBCASE("empty interior") {
    p.cons.add_row({{x, 1.0}}, Relation::le, 0.0);
    const SolveReport r = solve_concave(p);
    CHECK(r.status == SolveStatus::empty_interior);
    CHECK(std::abs(r.phase1_slack) <= 1e-9);
  }
}

TEST_CASE("solve_concave honours a strictly feasible initial point") {
  const auto p = two_state_trade();
  ConcaveOptions o;
  o.initial_point = std::vector<double>{-0.1};
  const SolveReport r = solve_concave(p, o);
  REQUIRE(r.status == SolveStatus::optimal);
  CHECK(r.x[0] == doctest::Approx(0.125).epsilon(1e-7));
  o.initial_point = std::vector<double>{0.6};  // 1 - 2d < 0
  CHECK_THROWS_AS(solve_concave(p, o), PreconditionError);
}

TEST_CASE("check_kkt residuals") {
  const auto p = two_state_trade();
  CHECK(check_kkt(p, {0.125}, {}).stationarity <= 1e-9);
  CHECK(check_kkt(p, {0.2}, {}).stationarity > 0.1);

  SeparableConcaveProgram q;
  const int x = q.add_variable();
  q.terms.push_back({ConcaveTerm::Kind::log, 0.0, 1.0, {{x, 1.0}}, 0.0, true});
  q.cons.add_row({{x, 1.0}}, Relation::le, 5.0);
  q.linear = {-1.0};  // optimum x = 1, constraint inactive
  const KktResiduals k = check_kkt(q, {1.0}, {0.0});
  CHECK(k.complementarity == 0.0);
  CHECK(k.stationarity <= 1e-12);
  CHECK(check_kkt(q, {0.5}, {0.0}).stationarity == doctest::Approx(1.0));
}

TEST_CASE("implicit equalities are tightened") {
  ConstraintSet c;
  c.add_variable(0.0);
  c.add_variable(0.0);
  c.add_variable(0.0, 5.0);
  c.add_row({{0, 1.0}, {1, 1.0}}, Relation::le, 1.0);
  c.add_row({{0, 1.0}}, Relation::ge, 1.0);
  c.add_row({{2, 1.0}}, Relation::le, 3.0);
  const auto t = tighten_implicit_equalities(c);
  REQUIRE(t);
  // x1 >= 0 is tight everywhere, x0 >= 0 and the bounds on x2 are not. The
  // three resulting equalities in x0, x1 have rank two, so one is dropped.
  REQUIRE(t->rows.size() == 3);
  int eq = 0;
  for (const auto& r : t->rows) {
    if (r.rel == Relation::eq) {
      ++eq;
      CHECK(r.rhs == doctest::Approx(r.coeffs.front().first == 0 ? r.coeffs.front().second : 0.0));
    } else {
      CHECK(r.coeffs == std::vector<std::pair<int, double>>{{2, 1.0}});
    }
  }
  CHECK(eq == 2);
  CHECK(t->lower[0] == 0.0);
  CHECK(t->lower[1] == -kInf);
  CHECK(t->upper[2] == 5.0);

  c.add_row({{0, 1.0}}, Relation::ge, 2.0);
  CHECK_FALSE(tighten_implicit_equalities(c));
}
