#include "fdual/market.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace fdual {

namespace {

std::string node_name(NodeId v) { return "node " + std::to_string(v); }

}  // namespace

ScenarioTree::ScenarioTree(std::vector<NodeSpec> nodes) {
  const auto n = nodes.size();
  if (n == 0) throw InvalidInstance("tree", "tree has no nodes");
  parent_.resize(n);
  time_.resize(n);
  cond_prob_.resize(n);
  prob_.resize(n);
  children_.assign(n, {});
  terminal_index_.assign(n, -1);

  for (std::size_t i = 0; i < n; ++i) {
    const auto v = static_cast<NodeId>(i);
    const NodeSpec& spec = nodes[i];
    if (!std::isfinite(spec.cond_prob))
      throw InvalidInstance(node_name(v), "cond_prob is not finite at " + node_name(v));
    if (i == 0) {
      if (spec.parent != kNoParent)
        throw InvalidInstance(node_name(0), "node 0 must be the root (parent null)");
      if (std::abs(spec.cond_prob - 1.0) > kProbTolerance)
        throw InvalidInstance(node_name(0), "root cond_prob must be 1");
      parent_[0] = kNoParent;
      time_[0] = 0;
      cond_prob_[0] = 1.0;
      prob_[0] = 1.0;
      continue;
    }
    if (spec.parent == kNoParent)
      throw InvalidInstance(node_name(v), "more than one root: " + node_name(v));
    if (spec.parent < 0 || spec.parent >= v)
      throw InvalidInstance(node_name(v), "parent of " + node_name(v) +
                                              " must be an earlier node id (got " +
                                              std::to_string(spec.parent) + ")");
    if (!(spec.cond_prob > 0.0))
      throw InvalidInstance(node_name(v), "cond_prob must be > 0 at " + node_name(v));
    parent_[i] = spec.parent;
    time_[i] = time_[spec.parent] + 1;
    cond_prob_[i] = spec.cond_prob;
    prob_[i] = prob_[spec.parent] * spec.cond_prob;
    children_[spec.parent].push_back(v);
  }

  horizon_ = *std::max_element(time_.begin(), time_.end());
  if (horizon_ < 1) throw InvalidInstance("tree", "horizon must be >= 1");

  for (std::size_t i = 0; i < n; ++i) {
    const auto v = static_cast<NodeId>(i);
    if (children_[i].empty()) {
      if (time_[i] != horizon_)
        throw InvalidInstance(node_name(v), "terminal " + node_name(v) + " has time " +
                                                std::to_string(time_[i]) + " != horizon " +
                                                std::to_string(horizon_));
      terminal_index_[i] = static_cast<int>(terminals_.size());
      terminals_.push_back(v);
    } else {
      double sum = 0.0;
      for (NodeId c : children_[i]) sum += cond_prob_[c];
      if (std::abs(sum - 1.0) > kProbTolerance) {
        std::ostringstream os;
        os << "cond_prob sum != 1 at " << node_name(v) << " (sum " << sum << ")";
        throw InvalidInstance(node_name(v), os.str());
      }
      internal_.push_back(v);
    }
  }
}

std::vector<NodeId> ScenarioTree::path_to(NodeId v) const {
  std::vector<NodeId> path;
  for (NodeId u = v; u != kNoParent; u = parent_.at(u)) path.push_back(u);
  std::reverse(path.begin(), path.end());
  return path;
}

bool ScenarioTree::is_ancestor(NodeId ancestor, NodeId v) const {
  for (NodeId u = v; u != kNoParent; u = parent_.at(u))
    if (u == ancestor) return true;
  return false;
}

std::vector<double> ScenarioTree::conditional_expectation(
    std::span<const double> terminal_values) const {
  if (terminal_values.size() != terminals_.size())
    throw PreconditionError("conditional_expectation: need one value per terminal node");
  std::vector<double> out(size(), 0.0);
  for (std::size_t k = 0; k < terminals_.size(); ++k) out[terminals_[k]] = terminal_values[k];
  // Children have larger ids than parents, so a reverse sweep sees every child first.
  for (auto it = internal_.rbegin(); it != internal_.rend(); ++it) {
    double acc = 0.0;
    for (NodeId c : children_[*it]) acc += cond_prob_[c] * out[c];
    out[*it] = acc;
  }
  return out;
}

MarketModel::MarketModel(ScenarioTree tree, std::vector<double> ask, double lambda)
    : tree_(std::move(tree)), ask_(std::move(ask)), lambda_(lambda) {
  if (!(lambda_ > 0.0 && lambda_ < 1.0))
    throw InvalidInstance("lambda", "lambda out of (0,1)");
  if (ask_.size() != tree_.size())
    throw InvalidInstance("tree", "ask price count does not match node count");
  for (std::size_t i = 0; i < ask_.size(); ++i) {
    if (!(ask_[i] > 0.0) || !std::isfinite(ask_[i]))
      throw InvalidInstance(node_name(static_cast<NodeId>(i)),
                            "ask price must be positive and finite at " +
                                node_name(static_cast<NodeId>(i)));
  }
}

MarketModel MarketModel::with_lambda(double lambda) const {
  return MarketModel(tree_, ask_, lambda);
}

EndowmentSet::EndowmentSet(std::vector<std::vector<double>> payoff, std::size_t n_terminals)
    : payoff_(std::move(payoff)), n_terminals_(n_terminals) {
  for (std::size_t i = 0; i < payoff_.size(); ++i) {
    const std::string field = "endowments[" + std::to_string(i) + "]";
    if (payoff_[i].size() != n_terminals_)
      throw InvalidInstance(field, field + " must have one entry per terminal node (" +
                                       std::to_string(n_terminals_) + ")");
    for (double e : payoff_[i])
      if (!(e >= 0.0) || !std::isfinite(e))
        throw InvalidInstance(field, field + " payoffs must be finite and >= 0");
  }
}

std::vector<double> EndowmentSet::combination(std::span<const double> q) const {
  if (q.size() != payoff_.size())
    throw PreconditionError("claim combination has " + std::to_string(q.size()) +
                            " weights for " + std::to_string(payoff_.size()) + " claims");
  std::vector<double> out(n_terminals_, 0.0);
  for (std::size_t i = 0; i < payoff_.size(); ++i)
    for (std::size_t k = 0; k < n_terminals_; ++k) out[k] += q[i] * payoff_[i][k];
  return out;
}

UtilityFunction UtilityFunction::power(double p) {
  if (!(p < 1.0) || p == 0.0 || !std::isfinite(p))
    throw InvalidInstance("utility.p", "power utility needs p < 1 and p != 0");
  return UtilityFunction(Kind::power, p);
}

double UtilityFunction::value(double x) const {
  if (!(x > 0.0)) throw PreconditionError("utility evaluated at x <= 0");
  return kind_ == Kind::log ? std::log(x) : std::pow(x, p_) / p_;
}

double UtilityFunction::deriv(double x) const {
  if (!(x > 0.0)) throw PreconditionError("utility derivative evaluated at x <= 0");
  return kind_ == Kind::log ? 1.0 / x : std::pow(x, p_ - 1.0);
}

double UtilityFunction::second_deriv(double x) const {
  if (!(x > 0.0)) throw PreconditionError("utility second derivative evaluated at x <= 0");
  return kind_ == Kind::log ? -1.0 / (x * x) : (p_ - 1.0) * std::pow(x, p_ - 2.0);
}

double UtilityFunction::inverse_deriv(double y) const {
  if (!(y > 0.0)) throw PreconditionError("inverse marginal utility evaluated at y <= 0");
  return kind_ == Kind::log ? 1.0 / y : std::pow(y, 1.0 / (p_ - 1.0));
}

double UtilityFunction::conjugate(double y) const {
  if (!(y > 0.0)) throw PreconditionError("conjugate utility evaluated at y <= 0");
  if (kind_ == Kind::log) return -std::log(y) - 1.0;
  const double q = p_ / (p_ - 1.0);
  return (1.0 - p_) / p_ * std::pow(y, q);
}

double UtilityFunction::asymptotic_elasticity() const noexcept {
  return kind_ == Kind::log ? 0.0 : p_;
}

std::string UtilityFunction::describe() const {
  if (kind_ == Kind::log) return "log";
  std::ostringstream os;
  os << "power(" << p_ << ")";
  return os.str();
}

double liquidation_value(const MarketModel& model, double bond, double shares, NodeId v) {
  if (v < 0 || static_cast<std::size_t>(v) >= model.tree().size())
    throw PreconditionError("liquidation_value: node index out of range");
  if (shares >= 0.0) return bond + shares * model.bid(v);
  return bond + shares * model.ask(v);
}

namespace {

using nlohmann::json;

const json& require(const json& obj, const char* key, const std::string& ctx) {
  auto it = obj.find(key);
  if (it == obj.end()) throw InvalidInstance(ctx + key, "missing field '" + ctx + key + "'");
  return *it;
}

double require_number(const json& obj, const char* key, const std::string& ctx) {
  const json& v = require(obj, key, ctx);
  if (!v.is_number())
    throw InvalidInstance(ctx + key, "field '" + ctx + key + "' must be a number");
  return v.get<double>();
}

}  // namespace

Instance build_model(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InvalidInstance("document", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw InvalidInstance("document", "instance must be a JSON object");

  const json& tree_doc = require(doc, "tree", "");
  if (!tree_doc.is_array() || tree_doc.empty())
    throw InvalidInstance("tree", "field 'tree' must be a non-empty list");

  std::vector<NodeSpec> specs;
  std::vector<double> ask;
  specs.reserve(tree_doc.size());
  for (std::size_t i = 0; i < tree_doc.size(); ++i) {
    const std::string ctx = "tree[" + std::to_string(i) + "].";
    const json& rec = tree_doc[i];
    if (!rec.is_object()) throw InvalidInstance("tree[" + std::to_string(i) + "]", "node record must be an object");
    const json& id = require(rec, "id", ctx);
    if (!id.is_number_integer() || id.get<long long>() != static_cast<long long>(i))
      throw InvalidInstance(ctx + "id", "node ids must be 0..n-1 in order (field '" + ctx + "id')");
    const json& parent = require(rec, "parent", ctx);
    NodeSpec spec;
    if (parent.is_null()) {
      spec.parent = kNoParent;
    } else if (parent.is_number_integer()) {
      const auto p = parent.get<long long>();
      if (p < 0 || p >= static_cast<long long>(i))
        throw InvalidInstance(ctx + "parent", "dangling or forward parent id " + std::to_string(p) +
                                                  " in field '" + ctx + "parent'");
      spec.parent = static_cast<NodeId>(p);
    } else {
      throw InvalidInstance(ctx + "parent", "field '" + ctx + "parent' must be an integer or null");
    }
    spec.cond_prob = require_number(rec, "p", ctx);
    specs.push_back(spec);
    ask.push_back(require_number(rec, "S", ctx));
  }

  ScenarioTree tree(std::move(specs));
  const double lambda = require_number(doc, "lambda", "");
  MarketModel market(std::move(tree), std::move(ask), lambda);

  std::vector<std::vector<double>> payoffs;
  if (auto it = doc.find("endowments"); it != doc.end()) {
    if (!it->is_array()) throw InvalidInstance("endowments", "field 'endowments' must be a list of lists");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& row = (*it)[i];
      const std::string field = "endowments[" + std::to_string(i) + "]";
      if (!row.is_array()) throw InvalidInstance(field, "field '" + field + "' must be a list");
      std::vector<double> claim;
      for (const json& e : row) {
        if (!e.is_number()) throw InvalidInstance(field, "field '" + field + "' must hold numbers");
        claim.push_back(e.get<double>());
      }
      payoffs.push_back(std::move(claim));
    }
  }
  EndowmentSet endowments(std::move(payoffs), market.tree().terminals().size());

  const json& u = require(doc, "utility", "");
  if (!u.is_object()) throw InvalidInstance("utility", "field 'utility' must be an object");
  const json& kind = require(u, "kind", "utility.");
  if (!kind.is_string()) throw InvalidInstance("utility.kind", "field 'utility.kind' must be a string");
  const auto k = kind.get<std::string>();
  UtilityFunction utility = UtilityFunction::log_utility();
  if (k == "power") {
    utility = UtilityFunction::power(require_number(u, "p", "utility."));
  } else if (k != "log") {
    throw InvalidInstance("utility.kind", "unknown utility kind '" + k + "'");
  }

  return Instance{std::move(market), std::move(endowments), utility};
}

}  // namespace fdual
