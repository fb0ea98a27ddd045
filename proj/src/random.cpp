#include "fdual/random.hpp"

#include <algorithm>

namespace fdual {

Instance random_instance(std::mt19937_64& rng, const RandomTreeOptions& opts) {
  std::uniform_int_distribution<int> depth_dist(1, std::max(1, opts.max_depth));
  std::uniform_int_distribution<int> branch_dist(1, std::max(1, opts.max_branch));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int depth = depth_dist(rng);

  std::vector<NodeSpec> specs{{kNoParent, 1.0}};
  std::vector<double> ask{std::uniform_real_distribution<double>(1.0, 10.0)(rng)};
  std::vector<NodeId> frontier{0};
  for (int t = 0; t < depth; ++t) {
    std::vector<NodeId> next;
    for (NodeId v : frontier) {
      const int k = branch_dist(rng);
      std::vector<double> w(k);
      for (double& x : w) x = 0.2 + unit(rng);
      double total = 0.0;
      for (double x : w) total += x;
      for (int c = 0; c < k; ++c) {
        // Child 0 moves up, child 1 moves down, the rest anywhere in between.
        double factor = 1.0;
        if (k > 1) {
          if (c == 0) factor = 1.05 + 0.6 * unit(rng);
          else if (c == 1) factor = 0.95 - 0.5 * unit(rng);
          else factor = 0.6 + 0.9 * unit(rng);
        }
        specs.push_back({v, c + 1 == k ? 0.0 : w[c] / total});
        ask.push_back(ask[v] * factor);
        next.push_back(static_cast<NodeId>(specs.size()) - 1);
      }
      // Last sibling takes the remainder so the probabilities sum to one exactly.
      double rest = 1.0;
      for (int c = 0; c + 1 < k; ++c) rest -= specs[specs.size() - k + c].cond_prob;
      specs.back().cond_prob = rest;
    }
    frontier = std::move(next);
  }
  ScenarioTree tree(std::move(specs));
  const std::size_t nt = tree.terminals().size();
  std::vector<std::vector<double>> payoff(opts.n_claims, std::vector<double>(nt));
  std::uniform_real_distribution<double> pay(0.0, opts.max_payoff);
  for (auto& row : payoff)
    for (double& x : row) x = pay(rng);
  EndowmentSet endowments(std::move(payoff), nt);
  return Instance{MarketModel(std::move(tree), std::move(ask), opts.lambda), std::move(endowments),
                  UtilityFunction::log_utility()};
}

std::vector<double> random_claim(std::mt19937_64& rng, const ScenarioTree& tree, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> g(tree.terminals().size());
  for (double& x : g) x = d(rng);
  return g;
}

Portfolio random_portfolio(std::mt19937_64& rng, const MarketModel& model, double x, double max_trade) {
  std::uniform_real_distribution<double> amt(0.0, max_trade);
  std::bernoulli_distribution coin(0.5);
  std::vector<NodeTrade> trades(model.tree().size());
  for (NodeTrade& t : trades) {
    if (coin(rng)) t.buy = amt(rng);
    if (coin(rng)) t.sell = amt(rng);
  }
  return make_portfolio(model, x, std::move(trades), true);
}

Portfolio random_long_only_portfolio(std::mt19937_64& rng, const MarketModel& model, double x) {
  const ScenarioTree& tree = model.tree();
  std::uniform_real_distribution<double> frac(0.0, 1.0);
  std::vector<NodeTrade> trades(tree.size());
  std::vector<double> bond(tree.size()), shares(tree.size());
  for (NodeId v = 0; v < static_cast<NodeId>(tree.size()); ++v) {
    const double b0 = v == tree.root() ? x : bond[tree.parent(v)];
    const double s0 = v == tree.root() ? 0.0 : shares[tree.parent(v)];
    NodeTrade& t = trades[v];
    if (!tree.is_terminal(v)) {
      if (frac(rng) < 0.5) t.buy = frac(rng) * std::max(b0, 0.0) / model.ask(v);
      else t.sell = frac(rng) * std::max(s0, 0.0);
    }
    bond[v] = b0 - model.ask(v) * t.buy + model.bid(v) * t.sell;
    shares[v] = s0 + t.net();
  }
  return make_portfolio(model, x, std::move(trades), true);
}

Portfolio random_admissible_portfolio(std::mt19937_64& rng, const MarketModel& model, double x, double max_trade) {
  if (!(x > 0.0)) throw PreconditionError("admissible strategies need positive initial capital");
  const Portfolio raw = random_portfolio(rng, model, x, max_trade);
  auto scaled = [&](double s) {
    std::vector<NodeTrade> t(raw.trades.size());
    for (std::size_t v = 0; v < t.size(); ++v) t[v] = {s * raw.trades[v].buy, s * raw.trades[v].sell};
    return make_portfolio(model, x, std::move(t), true);
  };
  auto admissible = [&](const Portfolio& pf) {
    const auto values = node_values(model, pf);
    return std::all_of(values.begin(), values.end(), [](double v) { return v >= 0.0; });
  };
  // Liquidation values are concave in the trade scale and equal x > 0 at
  // zero, so the admissible scales form an interval [0, s*].
  double lo = 0.0, hi = 1.0;
  if (!admissible(scaled(1.0))) {
    for (int i = 0; i < 60; ++i) {
      const double mid = 0.5 * (lo + hi);
      (admissible(scaled(mid)) ? lo : hi) = mid;
    }
  } else {
    lo = 1.0;
  }
  return scaled(std::uniform_real_distribution<double>(0.0, 1.0)(rng) * lo);
}

Deflator random_deflator(std::mt19937_64& rng, const MarketModel& model) {
  const ScenarioTree& tree = model.tree();
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto discounted_density = [&] {
    const auto vertices = random_cps_vertices(rng, model, 2);
    if (vertices.empty()) throw PreconditionError("the model admits no consistent price system");
    Deflator d = density_deflator(model, vertices[0].cps, 1.0);
    if (vertices.size() > 1) {
      const Deflator e = density_deflator(model, vertices[1].cps, 1.0);
      const double t = unit(rng);
      for (std::size_t v = 0; v < tree.size(); ++v) {
        d.y0[v] = t * d.y0[v] + (1.0 - t) * e.y0[v];
        d.y1[v] = t * d.y1[v] + (1.0 - t) * e.y1[v];
      }
    }
    // A common factor per sibling set keeps the drift inside the polar cone.
    std::vector<double> factor(tree.size(), 1.0);
    for (NodeId v : tree.internal_nodes()) {
      const double f = unit(rng) < 0.3 ? 1.0 : 0.6 + 0.4 * unit(rng);
      for (NodeId c : tree.children(v)) factor[c] = factor[v] * f;
    }
    for (std::size_t v = 0; v < tree.size(); ++v) {
      d.y0[v] *= factor[v];
      d.y1[v] *= factor[v];
    }
    return d;
  };

  auto cone_vertex = [&] {
    LinearProgram lp;
    lp.sense = Sense::maximize;
    lp.cons = deflator_cone(model);
    for (std::size_t j = 0; j < lp.cons.n_vars(); ++j) lp.cons.upper[j] = j % 2 ? 5.0 * model.ask(static_cast<NodeId>(j / 2)) : 5.0;
    std::normal_distribution<double> g(0.0, 1.0);
    lp.objective.resize(lp.cons.n_vars());
    for (double& c : lp.objective) c = g(rng);
    lp.add_row({{0, 1.0}}, Relation::eq, 1.0);
    const SolveReport rep = solve_lp(lp, kEngineLp);
    if (rep.status != SolveStatus::optimal) throw SolverFailure("deflator cone LP failed", rep);
    Deflator d{std::vector<double>(tree.size()), std::vector<double>(tree.size())};
    // Solver noise at zero nodes would make Y1 / Y0 meaningless: zero them and
    // clamp the ratio into the spread elsewhere.
    for (std::size_t v = 0; v < tree.size(); ++v) {
      const NodeId n = static_cast<NodeId>(v);
      const double y0 = rep.x[2 * v] > 1e-9 ? rep.x[2 * v] : 0.0;
      d.y0[v] = y0;
      d.y1[v] = std::clamp(rep.x[2 * v + 1], model.bid(n) * y0, model.ask(n) * y0);
    }
    return d;
  };

  switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
    case 0: return discounted_density();
    case 1: return cone_vertex();
    default: {
      Deflator a = discounted_density();
      const Deflator b = cone_vertex();
      const double t = unit(rng);
      for (std::size_t v = 0; v < tree.size(); ++v) {
        a.y0[v] = t * a.y0[v] + (1.0 - t) * b.y0[v];
        a.y1[v] = t * a.y1[v] + (1.0 - t) * b.y1[v];
      }
      return a;
    }
  }
}

std::vector<ExtremalResult> random_cps_vertices(std::mt19937_64& rng, const MarketModel& model, int count) {
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t n = model.tree().size();
  std::vector<ExtremalResult> out;
  for (int k = 0; k < count; ++k) {
    std::vector<double> mc(n), vc(n);
    for (double& c : mc) c = g(rng);
    for (double& c : vc) c = g(rng);
    ExtremalResult r = extremal_cps(model, mc, vc, k % 2 ? Sense::maximize : Sense::minimize);
    if (r.feasible) out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fdual
