#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fdual {

/// Raised when an instance document or a programmatic model violates the
/// schema or a model invariant. `where()` names the offending field or node.
class InvalidInstance : public std::runtime_error {
 public:
  InvalidInstance(std::string where, const std::string& what)
      : std::runtime_error(what), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// Violated operation precondition (domain errors, dimension mismatches).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using NodeId = int;
inline constexpr NodeId kNoParent = -1;

struct NodeSpec {
  NodeId parent = kNoParent;
  double cond_prob = 1.0;
};

/// Finite event tree. Node ids are dense 0..n-1 with parents before children;
/// probabilities are stored per edge and multiplied out on construction.
class ScenarioTree {
 public:
  static constexpr double kProbTolerance = 1e-12;

  ScenarioTree() = default;
  /// Validates and builds the tree; throws InvalidInstance naming the node.
  explicit ScenarioTree(std::vector<NodeSpec> nodes);

  std::size_t size() const noexcept { return parent_.size(); }
  int horizon() const noexcept { return horizon_; }
  NodeId root() const noexcept { return 0; }

  NodeId parent(NodeId v) const { return parent_.at(v); }
  int time(NodeId v) const { return time_.at(v); }
  double cond_prob(NodeId v) const { return cond_prob_.at(v); }
  double prob(NodeId v) const { return prob_.at(v); }
  bool is_terminal(NodeId v) const { return children_.at(v).empty(); }
  std::span<const NodeId> children(NodeId v) const { return children_.at(v); }

  /// Terminal nodes in increasing id order; endowment payoffs follow this order.
  std::span<const NodeId> terminals() const noexcept { return terminals_; }
  /// Position of a terminal node in terminals(), -1 for non-terminal nodes.
  int terminal_index(NodeId v) const { return terminal_index_.at(v); }
  /// Non-terminal nodes in increasing id order.
  std::span<const NodeId> internal_nodes() const noexcept { return internal_; }

  /// Nodes on the path root..v inclusive, root first.
  std::vector<NodeId> path_to(NodeId v) const;
  /// True when `ancestor` lies on the path root..v (a node is its own ancestor).
  bool is_ancestor(NodeId ancestor, NodeId v) const;

  /// Conditional expectation under P of a per-terminal value, returned per node.
  std::vector<double> conditional_expectation(std::span<const double> terminal_values) const;

 private:
  std::vector<NodeId> parent_;
  std::vector<int> time_;
  std::vector<double> cond_prob_;
  std::vector<double> prob_;
  std::vector<std::vector<NodeId>> children_;
  std::vector<NodeId> terminals_;
  std::vector<NodeId> internal_;
  std::vector<int> terminal_index_;
  int horizon_ = 0;
};

/// One stock quoted at ask S and bid (1-lambda)S, plus a riskless bond with
/// zero interest. Immutable after construction.
class MarketModel {
 public:
  MarketModel(ScenarioTree tree, std::vector<double> ask, double lambda);

  const ScenarioTree& tree() const noexcept { return tree_; }
  double lambda() const noexcept { return lambda_; }
  double ask(NodeId v) const { return ask_.at(v); }
  double bid(NodeId v) const { return (1.0 - lambda_) * ask_.at(v); }
  std::span<const double> ask_prices() const noexcept { return ask_; }

  /// Same tree and prices with a different cost level.
  MarketModel with_lambda(double lambda) const;

 private:
  ScenarioTree tree_;
  std::vector<double> ask_;
  double lambda_;
};

/// Terminal payoffs of N claims, one row per claim in terminal-node order.
class EndowmentSet {
 public:
  EndowmentSet() = default;
  EndowmentSet(std::vector<std::vector<double>> payoff, std::size_t n_terminals);

  std::size_t n_claims() const noexcept { return payoff_.size(); }
  std::span<const double> claim(std::size_t i) const { return payoff_.at(i); }
  /// q . E_T per terminal node.
  std::vector<double> combination(std::span<const double> q) const;

 private:
  std::vector<std::vector<double>> payoff_;
  std::size_t n_terminals_ = 0;
};

/// Log or power utility, U(x) = log x or x^p/p with p < 1, p != 0.
class UtilityFunction {
 public:
  enum class Kind { log, power };

  static UtilityFunction log_utility() { return UtilityFunction(Kind::log, 0.0); }
  static UtilityFunction power(double p);

  Kind kind() const noexcept { return kind_; }
  double exponent() const noexcept { return p_; }

  double value(double x) const;
  double deriv(double x) const;
  double second_deriv(double x) const;
  /// (U')^{-1}(y).
  double inverse_deriv(double y) const;
  /// sup_{x>0} U(x) - xy in closed form.
  double conjugate(double y) const;
  /// lim sup x U'(x)/U(x): 0 for log, p for power.
  double asymptotic_elasticity() const noexcept;

  std::string describe() const;

 private:
  UtilityFunction(Kind k, double p) : kind_(k), p_(p) {}
  Kind kind_;
  double p_;
};

/// Liquidation value of holdings (bond, shares) at node v:
/// bond + shares^+ (1-lambda) S - shares^- S.
double liquidation_value(const MarketModel& model, double bond, double shares, NodeId v);

struct Instance {
  MarketModel market;
  EndowmentSet endowments;
  UtilityFunction utility;
};

/// Parses and validates an instance document (JSON text).
Instance build_model(const std::string& json_text);

}  // namespace fdual
