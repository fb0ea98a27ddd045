#include <array>
#include <cmath>
#include <random>

#include "doctest.h"
#include "fdual/portfolio.hpp"
#include "fdual/random.hpp"
#include "fixtures.hpp"

using namespace fdual;
using fdual::testing::instance_a;

namespace {

std::vector<NodeTrade> root_trade(const MarketModel& m, double buy, double sell) {
  std::vector<NodeTrade> t(m.tree().size());
  t[0] = {buy, sell};
  return t;
}

}  // namespace

TEST_CASE("make_portfolio examples") {
  const auto inst = instance_a();
  const MarketModel& m = inst.market;

  const Portfolio idle = make_portfolio(m, 1.0, root_trade(m, 0, 0));
  for (std::size_t v = 0; v < 3; ++v) {
    CHECK(idle.bond[v] == 1.0);
    CHECK(idle.shares[v] == 0.0);
  }
  CHECK(terminal_values(m, idle) == std::vector<double>{1.0, 1.0});

  const Portfolio buy = make_portfolio(m, 1.0, root_trade(m, 1, 0));
  CHECK(buy.bond[0] == -3.0);
  CHECK(buy.shares[0] == 1.0);
  const auto vb = terminal_values(m, buy);
  CHECK(vb[0] == doctest::Approx(3.0));
  CHECK(vb[1] == doctest::Approx(-1.5));
  CHECK(buy.trades[1].sell == 1.0);
  CHECK(self_financing_residual(m, buy) == 0.0);

  const Portfolio sell = make_portfolio(m, 1.0, root_trade(m, 0, 1));
  CHECK(sell.bond[0] == 4.0);
  const auto vs = terminal_values(m, sell);
  CHECK(vs[0] == doctest::Approx(-4.0));
  CHECK(vs[1] == doctest::Approx(2.0));

  const Portfolio open = make_portfolio(m, 1.0, root_trade(m, 1, 0), false);
  CHECK(open.shares[1] == 1.0);
  CHECK(terminal_values(m, open)[0] == doctest::Approx(3.0));
  CHECK_THROWS_AS(make_portfolio(m, 1.0, std::vector<NodeTrade>(2)), PreconditionError);
}

TEST_CASE("check_acceptable") {
  const auto inst = instance_a();
  const MarketModel& m = inst.market;
  const Portfolio idle = make_portfolio(m, 1.0, root_trade(m, 0, 0));
  const auto ok = check_acceptable(m, idle, 0.0);
  CHECK(ok.acceptable);
  CHECK(std::abs(ok.required) <= 1e-10);

  // Loss (-V_T)^+ = (0, 1.5); E^Q is 1.5 (1 - Q(up)), largest at the smallest Q(up).
  double oracle = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double q = 1.0 / 6.0 + (5.0 / 9.0 - 1.0 / 6.0) * i / 1000.0;
    oracle = std::max(oracle, 1.5 * (1.0 - q));
  }
  const Portfolio buy = make_portfolio(m, 1.0, root_trade(m, 1, 0));
  const auto acc = check_acceptable(m, buy, 1.25);
  CHECK(acc.acceptable);
  CHECK(acc.required == doctest::Approx(oracle).epsilon(1e-9));
  CHECK(acc.required == doctest::Approx(1.25).epsilon(1e-9));
  REQUIRE(acc.witness.size() == 3);
  CHECK(acc.witness[0] == doctest::Approx(1.25).epsilon(1e-9));
  const auto vt = terminal_values(m, buy);
  CHECK(acc.witness[1] >= -vt[0] - 1e-12);
  CHECK(acc.witness[2] >= -vt[1] - 1e-12);
  CHECK(acc.witness[1] >= 0.0);
  CHECK_FALSE(check_acceptable(m, buy, 1.2).acceptable);
}

TEST_CASE("superhedging on Instance A") {
  const auto inst = instance_a();
  const std::vector<double> g{3.0, 0.0};
  const SuperhedgeResult r = superhedge_price(inst.market, g);
  REQUIRE(r.ok);
  CHECK(std::abs(r.price - 5.0 / 3.0) <= 1e-9);
  CHECK(std::abs(r.price - r.hedge_capital) <= 1e-7);
  CHECK(r.min_excess >= -1e-8);
  CHECK(self_financing_residual(inst.market, r.hedge) <= 1e-12);
  CHECK(subhedge_price(inst.market, g) == doctest::Approx(0.5).epsilon(1e-9));

  const std::vector<double> zero{0.0, 0.0};
  const SuperhedgeResult z = superhedge_price(inst.market, zero);
  REQUIRE(z.ok);
  CHECK(std::abs(z.price) <= 1e-10);
  CHECK(std::abs(z.hedge_capital) <= 1e-9);
  for (const NodeTrade& t : z.hedge.trades) {
    CHECK(t.buy <= 1e-9);
    CHECK(t.sell <= 1e-9);
  }
}

TEST_CASE("superhedging without frictions replicates") {
  const auto inst = instance_a(1e-12);
  const std::vector<double> g{3.0, 0.0};
  const SuperhedgeResult r = superhedge_price(inst.market, g);
  REQUIRE(r.ok);
  CHECK(r.price == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.hedge_capital == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(r.hedge.shares[0] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(r.hedge.bond[0] == doctest::Approx(-1.0).epsilon(1e-7));
}

TEST_CASE("feasible_K on Instance A") {
  const auto inst = instance_a();
  const std::vector<double> one{1.0};
  const KCheck in = feasible_K(inst.market, inst.endowments, 1.0, one);
  CHECK(in.membership == KMembership::interior);
  CHECK(in.threshold == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(feasible_K(inst.market, inst.endowments, -0.5, one).membership == KMembership::boundary);
  CHECK(feasible_K(inst.market, inst.endowments, -1.0, one).membership == KMembership::outside);
}

TEST_CASE("superhedging duality and bounds on random trees") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    RandomTreeOptions opts;
    opts.lambda = std::array{0.01, 0.1, 0.3}[trial % 3];
    const Instance inst = random_instance(rng, opts);
    const MarketModel& m = inst.market;
    CAPTURE(trial);
    const auto g = random_claim(rng, m.tree(), -5.0, 5.0);
    const SuperhedgeResult r = superhedge_price(m, g);
    REQUIRE(r.ok);
    CHECK(std::abs(r.price - r.hedge_capital) <= 1e-7);
    CHECK(r.min_excess >= -1e-8);

    // Cash additivity, monotonicity and subadditivity.
    auto shifted = g;
    for (double& v : shifted) v += 1.5;
    CHECK(superhedge_price(m, shifted).price == doctest::Approx(r.price + 1.5).epsilon(1e-9));
    auto bigger = g;
    for (double& v : bigger) v += std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    CHECK(superhedge_price(m, bigger).price >= r.price - 1e-9);
    const auto h = random_claim(rng, m.tree(), -5.0, 5.0);
    auto sum = g;
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += h[i];
    CHECK(superhedge_price(m, sum).price <= r.price + superhedge_price(m, h).price + 1e-9);

    // Every self-financing strategy from x has E^Q[V_T] <= x at every CPS vertex.
    const auto vertices = random_cps_vertices(rng, m, 4);
    for (int k = 0; k < 3; ++k) {
      const double x = std::uniform_real_distribution<double>(-2.0, 5.0)(rng);
      const Portfolio pf = random_portfolio(rng, m, x, 2.0);
      const auto vt = terminal_values(m, pf);
      for (const auto& v : vertices) CHECK(expectation(m, v.cps, vt) <= x + 1e-8);
    }
  }
}

TEST_CASE("terminal dominance carries to the nodes in the S~-valued form") {
  std::mt19937_64 rng(29);
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    RandomTreeOptions opts;
    opts.lambda = std::array{0.01, 0.1, 0.3}[trial % 3];
    const Instance inst = random_instance(rng, opts);
    const MarketModel& m = inst.market;
    const auto vertices = random_cps_vertices(rng, m, 4);
    for (int k = 0; k < 3; ++k) {
      const Portfolio pf = random_portfolio(rng, m, std::uniform_real_distribution<double>(-5.0, 5.0)(rng), 2.0);
      const auto vt = terminal_values(m, pf);
      std::vector<double> loss(vt.size());
      for (std::size_t i = 0; i < vt.size(); ++i) loss[i] = std::max(-vt[i], 0.0);
      for (const auto& v : vertices) {
        const DominanceCheck d = check_dominance(m, pf, v.cps, loss);
        CHECK(d.terminal_margin >= -1e-12);
        CHECK(d.frictionless_margin >= -1e-9);
        ++checked;
      }
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("liquidation value can fall below -X where the CPS range misses the ask") {
  // S: 10 -> 10 -> {9.5, 8.5}, lambda = 0.3. At the middle node every CPS has
  // S~ <= 9.5, so a short position is worth more under S~ than at the ask.
  const MarketModel m(ScenarioTree({{kNoParent, 1.0}, {0, 1.0}, {1, 0.5}, {1, 0.5}}), {10.0, 10.0, 9.5, 8.5}, 0.3);
  std::vector<NodeTrade> t(4);
  t[0].sell = 1.0;
  const Portfolio pf = make_portfolio(m, 2.0, t);
  const auto vt = terminal_values(m, pf);
  CHECK(vt[0] == doctest::Approx(-0.5));
  CHECK(vt[1] == doctest::Approx(0.5));
  std::vector<double> loss{0.5, 0.0};
  const double a = extremal_expectation(m, loss, Sense::maximize).price;
  CHECK(a == doctest::Approx(0.5).epsilon(1e-8));
  // X = a at every node closes X_T = a >= -V_T, yet the middle node has V = -1 < -a.
  CHECK(node_values(m, pf)[1] == doctest::Approx(-1.0));
  const auto any = find_cps(m, 0.3);
  REQUIRE(any.cps);
  const std::vector<double> flat{a, a};
  const DominanceCheck d = check_dominance(m, pf, *any.cps, flat);
  CHECK(d.terminal_margin >= -1e-9);
  CHECK(d.node_margin == doctest::Approx(-0.5).epsilon(1e-8));
  CHECK(d.frictionless_margin >= -1e-9);
}
