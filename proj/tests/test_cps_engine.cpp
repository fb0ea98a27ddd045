#include <array>
#include <cmath>
#include <random>

#include "doctest.h"
#include "fdual/cps.hpp"
#include "fdual/random.hpp"
#include "fixtures.hpp"

using namespace fdual;
using fdual::testing::instance_a;

namespace {

MarketModel one_period(std::vector<double> child_prices, std::vector<double> probs, double s0, double lambda) {
  std::vector<NodeSpec> specs{{kNoParent, 1.0}};
  std::vector<double> ask{s0};
  for (std::size_t i = 0; i < child_prices.size(); ++i) {
    specs.push_back({0, probs[i]});
    ask.push_back(child_prices[i]);
  }
  return MarketModel(ScenarioTree(std::move(specs)), std::move(ask), lambda);
}

// Q(up) feasible on a one-period binomial iff the root spread meets the image
// of the children's spreads under q; scan q on a fine grid and refine the ends.
std::pair<double, double> binomial_q_range(double s0, double su, double sd, double lam) {
  auto feasible = [&](double q) {
    const double lo = q * (1 - lam) * su + (1 - q) * (1 - lam) * sd;
    const double hi = q * su + (1 - q) * sd;
    return std::max(lo, (1 - lam) * s0) <= std::min(hi, s0);
  };
  double first = -1, last = -1;
  const int n = 100000;
  for (int i = 0; i <= n; ++i) {
    const double q = static_cast<double>(i) / n;
    if (feasible(q)) {
      if (first < 0) first = q;
      last = q;
    }
  }
  REQUIRE(first >= 0);
  auto refine = [&](double in, double out) {
    for (int i = 0; i < 100; ++i) {
      const double mid = 0.5 * (in + out);
      (feasible(mid) ? in : out) = mid;
    }
    return in;
  };
  return {refine(first, std::max(0.0, first - 1.0 / n)), refine(last, std::min(1.0, last + 1.0 / n))};
}

}  // namespace

TEST_CASE("find_cps on Instance A") {
  const auto inst = instance_a();
  const FindCpsResult r = find_cps(inst.market, 0.25);
  REQUIRE(r.cps.has_value());
  CHECK(check_cps(inst.market, *r.cps).ok());
  CHECK(r.min_density_ratio > 1e-9);
  CHECK_THROWS_AS(find_cps(inst.market, 0.3), PreconditionError);
}

TEST_CASE("find_cps detects a missing CPS") {
  const auto m = one_period({5.0}, {1.0}, 1.0, 0.25);
  CHECK_FALSE(find_cps(m, 0.25).cps.has_value());
}

TEST_CASE("find_cps on a constant price returns Q = P") {
  const auto m = one_period({7.0, 7.0, 7.0}, {0.2, 0.3, 0.5}, 7.0, 0.1);
  const FindCpsResult r = find_cps(m, 0.05);
  REQUIRE(r.cps.has_value());
  CHECK(r.cps->q_cond[1] == doctest::Approx(0.2).epsilon(1e-8));
  CHECK(r.cps->q_cond[3] == doctest::Approx(0.5).epsilon(1e-8));
  for (double s : r.cps->s_tilde) CHECK(s >= 0.95 * 7.0 - 1e-12);
  CHECK(check_cps(m, *r.cps, 0.05).ok());
}

TEST_CASE("cps_to_density") {
  const auto inst = instance_a();
  ConsistentPriceSystem cps{{1.0, 1.0 / 3.0, 2.0 / 3.0}, {4.0, 8.0, 2.0}};
  REQUIRE(check_cps(inst.market, cps).ok());
  const DensityPair d = cps_to_density(inst.market, cps);
  CHECK(d.z0[0] == 1.0);
  CHECK(d.z1[0] == 4.0);
  CHECK(d.z0[1] == doctest::Approx(2.0 / 3.0));
  CHECK(d.z0[2] == doctest::Approx(4.0 / 3.0));

  const ConsistentPriceSystem p_cps{{1.0, 0.5, 0.5}, {3.5, 6.5, 1.75}};
  const DensityPair dp = cps_to_density(inst.market, p_cps);
  for (std::size_t v = 0; v < 3; ++v) {
    CHECK(dp.z0[v] == 1.0);
    CHECK(dp.z1[v] == p_cps.s_tilde[v]);
  }
}

TEST_CASE("extremal expectation on Instance A") {
  const auto inst = instance_a();
  const std::vector<double> g{3.0, 0.0};
  const auto hi = extremal_expectation(inst.market, g, Sense::maximize);
  const auto lo = extremal_expectation(inst.market, g, Sense::minimize);
  REQUIRE(hi.feasible);
  REQUIRE(lo.feasible);
  CHECK(std::abs(hi.price - 5.0 / 3.0) <= 1e-9);
  CHECK(std::abs(lo.price - 0.5) <= 1e-9);
  CHECK(hi.cps.q_cond[1] == doctest::Approx(5.0 / 9.0).epsilon(1e-6));
  CHECK(lo.cps.q_cond[1] == doctest::Approx(1.0 / 6.0).epsilon(1e-6));
  CHECK(check_cps(inst.market, hi.cps).ok());
  CHECK(check_cps(inst.market, lo.cps).ok());
  const std::vector<double> c{2.5, 2.5};
  CHECK(extremal_expectation(inst.market, c, Sense::maximize).price == doctest::Approx(2.5).epsilon(1e-10));
  CHECK(extremal_expectation(inst.market, c, Sense::minimize).price == doctest::Approx(2.5).epsilon(1e-10));
}

TEST_CASE("extremal expectation matches a q-scan on random binomials") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const double s0 = 1.0 + 9.0 * u(rng), su = s0 * (1.05 + u(rng)), sd = s0 * (0.95 - 0.5 * u(rng));
    const double lam = 0.01 + 0.4 * u(rng);
    const double p = 0.1 + 0.8 * u(rng);
    const auto m = one_period({su, sd}, {p, 1.0 - p}, s0, lam);
    const std::vector<double> g{10.0 * u(rng) - 5.0, 10.0 * u(rng) - 5.0};
    const auto [qlo, qhi] = binomial_q_range(s0, su, sd, lam);
    const double a = qlo * g[0] + (1 - qlo) * g[1], b = qhi * g[0] + (1 - qhi) * g[1];
    CAPTURE(trial);
    CHECK(std::abs(extremal_expectation(m, g, Sense::maximize).price - std::max(a, b)) <= 1e-9);
    CHECK(std::abs(extremal_expectation(m, g, Sense::minimize).price - std::min(a, b)) <= 1e-9);
  }
}

TEST_CASE("price interval") {
  const auto inst = instance_a();
  const std::vector<double> one{1.0}, zero{0.0}, neg{-1.0};
  const auto I = price_interval(inst.market, inst.endowments, one);
  CHECK(std::abs(I.lo - 0.5) <= 1e-9);
  CHECK(std::abs(I.hi - 5.0 / 3.0) <= 1e-9);
  const auto Z = price_interval(inst.market, inst.endowments, zero);
  CHECK(std::abs(Z.lo) <= 1e-10);
  CHECK(std::abs(Z.hi) <= 1e-10);
  const auto N = price_interval(inst.market, inst.endowments, neg);
  CHECK(std::abs(N.lo + 5.0 / 3.0) <= 1e-9);
  CHECK(std::abs(N.hi + 0.5) <= 1e-9);
}

TEST_CASE("cps_with_price") {
  const auto inst = instance_a();
  const std::vector<double> one{1.0};
  const PricedCps in = cps_with_price(inst.market, inst.endowments, one, 0.6);
  REQUIRE(in.membership == PriceMembership::interior);
  REQUIRE(in.cps.has_value());
  CHECK(in.cps->q_cond[1] == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(check_cps(inst.market, *in.cps).ok());
  CHECK(3.0 * in.cps->q_cond[1] == doctest::Approx(0.6).epsilon(1e-9));

  const PricedCps out = cps_with_price(inst.market, inst.endowments, one, 10.0);
  CHECK(out.membership == PriceMembership::none);
  CHECK_FALSE(out.cps.has_value());

  const PricedCps edge = cps_with_price(inst.market, inst.endowments, one, 0.5);
  CHECK(edge.membership == PriceMembership::boundary);
  REQUIRE(edge.cps.has_value());
  CHECK(check_cps(inst.market, *edge.cps).ok());
}

TEST_CASE("check_replicable") {
  const auto inst = instance_a();
  const std::vector<double> one{1.0}, two{2.0};
  CHECK_FALSE(check_replicable(inst.market, inst.endowments, one));
  CHECK_FALSE(check_replicable(inst.market, inst.endowments, two));
  const auto tiny = instance_a(1e-12);
  CHECK(check_replicable(tiny.market, tiny.endowments, one));
  const auto I = price_interval(tiny.market, tiny.endowments, one);
  CHECK(I.lo == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("CPS properties on random trees") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    RandomTreeOptions opts;
    opts.lambda = std::array{0.01, 0.1, 0.3}[trial % 3];
    const Instance inst = random_instance(rng, opts);
    const MarketModel& m = inst.market;
    CAPTURE(trial);

    const FindCpsResult f = find_cps(m, m.lambda());
    REQUIRE(f.cps.has_value());
    CHECK(check_cps(m, *f.cps).ok());
    const DensityPair d = cps_to_density(m, *f.cps);
    std::vector<double> z0T, z1T;
    for (NodeId w : m.tree().terminals()) {
      z0T.push_back(d.z0[w]);
      z1T.push_back(d.z1[w]);
    }
    const auto c0 = m.tree().conditional_expectation(z0T), c1 = m.tree().conditional_expectation(z1T);
    for (std::size_t v = 0; v < m.tree().size(); ++v) {
      CHECK(std::abs(c0[v] - d.z0[v]) <= 1e-9);
      CHECK(std::abs(c1[v] - d.z1[v]) <= 1e-9 * (1.0 + std::abs(d.z1[v])));
    }

    const auto g = random_claim(rng, m.tree(), -5.0, 5.0);
    auto g2 = g;
    for (double& x : g2) x += std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto hi = extremal_expectation(m, g, Sense::maximize), lo = extremal_expectation(m, g, Sense::minimize);
    CHECK(lo.price <= hi.price + 1e-9);
    CHECK(check_cps(m, hi.cps).ok());
    CHECK(check_cps(m, lo.cps).ok());
    CHECK(extremal_expectation(m, g2, Sense::maximize).price >= hi.price - 1e-9);
    CHECK(extremal_expectation(m, g2, Sense::minimize).price >= lo.price - 1e-9);
    const auto pos = random_claim(rng, m.tree(), 0.0, 2.0);
    CHECK(extremal_expectation(m, pos, Sense::minimize).price >= -1e-10);

    // Minkowski bound for q + q' on a two-claim endowment.
    const auto e1 = random_claim(rng, m.tree(), 0.0, 3.0), e2 = random_claim(rng, m.tree(), 0.0, 3.0);
    const EndowmentSet es({e1, e2}, m.tree().terminals().size());
    std::uniform_real_distribution<double> qd(-2.0, 2.0);
    const std::vector<double> q{qd(rng), qd(rng)}, qq{qd(rng), qd(rng)}, sum{q[0] + qq[0], q[1] + qq[1]};
    const auto Ia = price_interval(m, es, q), Ib = price_interval(m, es, qq), Is = price_interval(m, es, sum);
    CHECK(Is.lo >= Ia.lo + Ib.lo - 1e-9);
    CHECK(Is.hi <= Ia.hi + Ib.hi + 1e-9);
  }
}
