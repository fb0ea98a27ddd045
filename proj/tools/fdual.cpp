#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fdual/shadow.hpp"
#include "fdual/suite.hpp"
#include "json.hpp"

using namespace fdual;
using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kSchemaVersion = "1";

enum Exit : int {
  kOk = 0,
  kSuiteFailure = 1,
  kInvalid = 2,
  kNoCps = 3,
  kSolverFailure = 4,
  kOutsideK = 5,
};

// Reported accuracy of each kind of result.
constexpr double kPriceTol = 1e-9;
constexpr double kValueTol = 1e-6;
constexpr double kWealthTol = 1e-5;
constexpr double kDualTol = 1e-6;
constexpr double kGapTol = 1e-5;
constexpr double kResidualTol = 1e-6;
constexpr double kAgreementTol = 1e-7;

/// Failure that maps onto an exit code and an error block in the report.
struct CliError {
  int code;
  std::string kind;
  std::string message;
  std::string where;
};

Json number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

Json num(double v, double tol) { return Json{{"value", number(v)}, {"tol", tol}}; }

Json vec(std::span<const double> xs, double tol) {
  Json a = Json::array();
  for (double x : xs) a.push_back(number(x));
  return Json{{"value", a}, {"tol", tol}};
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return out.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError{kInvalid, "io", "cannot read " + path, "file"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Instance parse_instance(const std::string& text) {
  try {
    return build_model(text);
  } catch (const InvalidInstance& e) {
    throw CliError{kInvalid, "invalid-instance", e.what(), e.where()};
  }
}

Json cps_json(const ConsistentPriceSystem& cps) {
  return Json{{"q_cond", vec(cps.q_cond, kPriceTol)},
              {"s_tilde", vec(cps.s_tilde, kPriceTol)},
              {"min_q", num(*std::min_element(cps.q_cond.begin(), cps.q_cond.end()), kPriceTol)},
              {"boundary", cps.boundary}};
}

Json cps_residuals_json(const CpsResiduals& r) {
  return Json{{"sibling_sum", num(r.sibling_sum, kPriceTol)},
              {"spread", num(r.spread, kPriceTol)},
              {"martingale", num(r.martingale, kPriceTol)}};
}

Json trades_json(const Portfolio& pf, double tol) {
  Json a = Json::array();
  for (std::size_t v = 0; v < pf.trades.size(); ++v)
    a.push_back(Json{{"node", v}, {"buy", number(pf.trades[v].buy)}, {"sell", number(pf.trades[v].sell)}});
  return Json{{"value", a}, {"tol", tol}};
}

void require_cps(const MarketModel& m) {
  if (!find_cps(m, m.lambda()).cps)
    throw CliError{kNoCps, "no-cps", "the model admits no consistent price system", "lambda"};
}

struct Outcome {
  Json results;
  Json residuals = Json::object();
  int code = kOk;
};

Outcome cmd_validate(const Instance& inst) {
  const ScenarioTree& t = inst.market.tree();
  Outcome o;
  o.results = Json{{"valid", true},
                   {"nodes", t.size()},
                   {"terminals", t.terminals().size()},
                   {"horizon", t.horizon()},
                   {"lambda", num(inst.market.lambda(), 0.0)},
                   {"claims", inst.endowments.n_claims()},
                   {"utility", inst.utility.describe()}};
  return o;
}

std::size_t claim_index(const Instance& inst, double raw, const std::string& where) {
  if (raw < 0 || raw != std::floor(raw) || raw >= static_cast<double>(inst.endowments.n_claims()))
    throw CliError{kInvalid, "usage", "claim index out of range", where};
  return static_cast<std::size_t>(raw);
}

Outcome cmd_cps(const Instance& inst, std::optional<double> lambda_prime, const std::vector<double>& price_of) {
  const double lp = lambda_prime.value_or(inst.market.lambda());
  if (!(lp > 0.0 && lp < 1.0)) throw CliError{kInvalid, "usage", "lambda-prime must lie in (0, 1)", "--lambda-prime"};
  Outcome o;
  o.results["lambda_prime"] = num(lp, 0.0);
  if (price_of.empty()) {
    const FindCpsResult r = find_cps(inst.market, lp);
    if (!r.cps) throw CliError{kNoCps, "no-cps", "no consistent price system for lambda-prime", "--lambda-prime"};
    o.results["cps"] = cps_json(*r.cps);
    o.results["min_density_ratio"] = num(r.min_density_ratio, kPriceTol);
    o.residuals = cps_residuals_json(check_cps(inst.market, *r.cps, lp));
    return o;
  }
  const std::size_t i = claim_index(inst, price_of[0], "--price-of");
  const MarketModel m = lambda_prime ? inst.market.with_lambda(lp) : inst.market;
  std::vector<double> unit(inst.endowments.n_claims(), 0.0);
  unit[i] = 1.0;
  const PricedCps p = cps_with_price(m, inst.endowments, unit, price_of[1]);
  o.results["claim"] = i;
  o.results["price"] = num(price_of[1], 0.0);
  o.results["interval"] = Json{{"lo", num(p.interval.lo, kPriceTol)}, {"hi", num(p.interval.hi, kPriceTol)}};
  o.results["membership"] = to_string(p.membership);
  if (!p.cps) {
    o.code = kNoCps;
    return o;
  }
  o.results["cps"] = cps_json(*p.cps);
  o.results["terminal_measure"] = vec(terminal_measure(m, *p.cps), kPriceTol);
  o.residuals = cps_residuals_json(check_cps(m, *p.cps));
  o.residuals["price"] = num(std::abs(expectation(m, *p.cps, inst.endowments.claim(i)) - price_of[1]), kPriceTol);
  return o;
}

std::vector<double> parse_claim(const Instance& inst, const std::string& spec) {
  std::string s = spec;
  for (char& c : s)
    if (c == '[' || c == ']' || c == ',') c = ' ';
  std::istringstream in(s);
  std::vector<double> xs;
  double x;
  while (in >> x) xs.push_back(x);
  if (!in.eof() || xs.empty()) throw CliError{kInvalid, "usage", "claim must be an index or a vector", "--claim"};
  if (xs.size() == 1 && spec.find_first_of(",[") == std::string::npos) {
    const std::size_t i = claim_index(inst, xs[0], "--claim");
    const auto c = inst.endowments.claim(i);
    return {c.begin(), c.end()};
  }
  if (xs.size() != inst.market.tree().terminals().size())
    throw CliError{kInvalid, "usage", "claim needs one value per terminal node", "--claim"};
  return xs;
}

Outcome cmd_superhedge(const Instance& inst, const std::string& claim_spec, const std::string& side) {
  std::vector<double> g = parse_claim(inst, claim_spec);
  require_cps(inst.market);
  const bool lower = side == "lower";
  if (lower)
    for (double& v : g) v = -v;
  const SuperhedgeResult sh = superhedge_price(inst.market, g);
  if (!sh.ok) throw CliError{kSolverFailure, "solver-failure", "superhedging LP did not solve", "superhedge"};
  const double sign = lower ? -1.0 : 1.0;
  Outcome o;
  o.results["side"] = side;
  o.results["price"] = num(sign * sh.price, kPriceTol);
  o.results["hedge_capital"] = num(sign * sh.hedge_capital, kPriceTol);
  o.results["hedged_claim"] = lower ? "negated" : "claim";
  o.results["attaining_cps"] = cps_json(sh.attaining);
  o.results["hedge_trades"] = trades_json(sh.hedge, kPriceTol);
  const double agreement = std::abs(sh.price - sh.hedge_capital);
  o.residuals["lp_hedge_agreement"] = num(agreement, kAgreementTol);
  o.residuals["min_excess"] = num(sh.min_excess, kPriceTol);
  o.residuals["self_financing"] = num(self_financing_residual(inst.market, sh.hedge), kPriceTol);
  if (!(agreement <= kAgreementTol)) o.code = kSolverFailure;
  return o;
}

struct SolveFlags {
  double x = 0.0;
  std::vector<double> q;
  bool dual = false;
  bool shadow = false;
  double tol = kPrimalTol;
  int max_iter = 200;
};

Outcome cmd_solve(const Instance& inst, SolveFlags f) {
  const MarketModel& m = inst.market;
  const ScenarioTree& tree = m.tree();
  if (f.q.empty()) f.q.assign(inst.endowments.n_claims(), 0.0);
  if (f.q.size() != inst.endowments.n_claims())
    throw CliError{kInvalid, "usage", "q needs one entry per claim", "--q"};
  if (!(f.tol > 0.0)) throw CliError{kInvalid, "usage", "tol must be positive", "--tol"};
  if (f.max_iter < 1) throw CliError{kInvalid, "usage", "max-iter must be positive", "--max-iter"};
  require_cps(m);

  const KCheck k = feasible_K(m, inst.endowments, f.x, f.q);
  Outcome o;
  o.results["x"] = num(f.x, 0.0);
  o.results["q"] = vec(f.q, 0.0);
  o.results["K"] = Json{{"membership", to_string(k.membership)}, {"threshold", num(k.threshold, kPriceTol)}};
  if (k.membership != KMembership::interior) {
    o.code = kOutsideK;
    return o;
  }

  PrimalOptions po;
  po.tol = f.tol;
  po.max_iter = f.max_iter;
  const PrimalSolution p = primal_solve(m, inst.endowments, f.x, f.q, inst.utility, po);
  o.results["primal"] = Json{{"value", num(p.value, kValueTol)},
                             {"terminal_wealth", vec(p.wealth, kWealthTol)},
                             {"trades", trades_json(p.portfolio, kWealthTol)},
                             {"endowment_replicable", p.endowment_replicable},
                             {"iterations", p.report.iterations}};
  o.residuals["self_financing"] = num(self_financing_residual(m, p.portfolio), kResidualTol);
  if (!f.dual && !f.shadow) return o;

  const DualSolution d = extract_dual_from_primal(m, inst.endowments, inst.utility, p);
  double xq = f.x * d.y;
  for (std::size_t i = 0; i < f.q.size(); ++i) xq += f.q[i] * d.r[i];
  double foc = 0.0, cs = 0.0;
  for (NodeId w : tree.terminals()) {
    const int i = tree.terminal_index(w);
    foc = std::max(foc, std::abs(d.deflator.y0[w] - inst.utility.deriv(p.wealth[i])));
    cs += tree.prob(w) * d.deflator.y0[w] * p.wealth[i];
  }
  const DualSolveResult ds = dual_solve(m, inst.endowments, d.y, d.r, inst.utility, f.tol);
  o.results["dual"] = Json{{"y", num(d.y, kDualTol)},
                           {"r", vec(d.r, kDualTol)},
                           {"value", num(d.value, kValueTol)},
                           {"y0", vec(d.deflator.y0, kDualTol)},
                           {"y1", vec(d.deflator.y1, kDualTol)},
                           {"L", to_string(check_L(m, inst.endowments, d.y, d.r))},
                           {"dual_solve_status", to_string(ds.status)}};
  if (ds.status == DualStatus::optimal) {
    o.results["dual"]["dual_solve_value"] = num(ds.solution.value, kValueTol);
    o.residuals["dual_attainment"] = num(std::abs(ds.solution.value - d.value), kGapTol);
  }
  o.residuals["duality_gap"] = num(std::abs(p.value - (d.value + xq)), kGapTol);
  o.residuals["first_order"] = num(foc, kResidualTol);
  o.residuals["complementary_slackness"] = num(std::abs(cs - xq), kResidualTol);
  o.residuals["deflator"] = num(d.residuals.max(), kResidualTol);
  o.residuals["endowment_pricing"] = num(d.endowment_residual, kResidualTol);
  if (!f.shadow) return o;

  const ShadowVerdict v = shadow_verdict(m, inst.endowments, inst.utility, p, d, kShadowTol);
  Json violations = Json::array();
  for (const auto& n : v.trades.violations) violations.push_back(n.node);
  o.results["shadow"] = Json{{"method", "discrete-collapse verification"},
                             {"candidate", vec(v.candidate.s_hat, kResidualTol)},
                             {"well_defined", v.candidate.all_well_defined()},
                             {"frictionless_value", num(v.shadow_value, kValueTol)},
                             {"trade_violations", violations},
                             {"verdict", to_string(v.verdict)}};
  o.residuals["shadow_value_gap"] = num(v.value_gap, kShadowTol);
  o.residuals["trade_location"] = num(v.trades.max_deviation, kShadowTol);
  o.residuals["y0_martingale"] = num(v.classic.y0_martingale_residual, kShadowTol);
  o.residuals["y1_martingale"] = num(v.classic.y1_martingale_residual, kShadowTol);
  o.residuals["price_match"] = num(v.classic.price_match_residual, kShadowTol);
  return o;
}

Outcome cmd_suite(const SuiteOptions& opts) {
  const SuiteReport r = run_suite(opts);
  Outcome o;
  Json inv = Json::array();
  for (const auto& s : r.invariants)
    inv.push_back(Json{{"name", s.name}, {"checked", s.checked}, {"failed", s.failed}, {"worst", num(s.worst, s.tol)}});
  Json fails = Json::array();
  for (const auto& f : r.failures) {
    const auto it = std::find_if(r.invariants.begin(), r.invariants.end(),
                                 [&](const InvariantStats& s) { return s.name == f.invariant; });
    fails.push_back(Json{{"instance", f.instance},
                         {"invariant", f.invariant},
                         {"residual", num(f.value, it->tol)},
                         {"detail", f.detail}});
  }
  o.results = Json{{"seed", opts.seed},
                   {"count", opts.count},
                   {"max_depth", opts.max_depth},
                   {"max_branch", opts.max_branch},
                   {"inject_fault", opts.inject_fault},
                   {"instances", r.instances},
                   {"instances_passed", r.instances_passed},
                   {"invariants", inv},
                   {"failures", fails}};
  o.code = r.ok() ? kOk : kSuiteFailure;
  return o;
}

void print_text(const Json& j, const std::string& prefix, std::ostream& out) {
  if (j.is_object()) {
    if (j.size() == 2 && j.contains("value") && j.contains("tol")) {
      out << prefix << " = " << j["value"].dump() << "  (tol " << j["tol"].dump() << ")\n";
      return;
    }
    for (const auto& [k, v] : j.items()) print_text(v, prefix.empty() ? k : prefix + "." + k, out);
  } else {
    out << prefix << " = " << j.dump() << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transaction-cost duality on finite scenario trees"};
  app.require_subcommand(1);
  std::string file;
  std::string format = "json";
  bool no_timing = false;

  auto add_common = [&](CLI::App* sub, bool file_required) {
    auto* opt = sub->add_option("file", file, "Instance JSON file");
    if (file_required) opt->required();
    sub->add_option("--report", format, "Report format")->check(CLI::IsMember({"json", "text"}));
    sub->add_flag("--no-timing", no_timing, "Report wall_time_ms as null");
  };

  auto* validate = app.add_subcommand("validate", "Check an instance file");
  add_common(validate, true);

  auto* cps = app.add_subcommand("cps", "Consistent price system witness");
  add_common(cps, true);
  std::optional<double> lambda_prime;
  std::vector<double> price_of;
  cps->add_option("--lambda-prime", lambda_prime, "Spread of the witness");
  cps->add_option("--price-of", price_of, "Claim index and price")->expected(2);

  auto* superhedge = app.add_subcommand("superhedge", "Superhedging price and hedge");
  add_common(superhedge, true);
  std::string claim = "0";
  std::string side = "upper";
  superhedge->add_option("--claim", claim, "Claim index or terminal payoff vector");
  superhedge->add_option("--side", side, "upper or lower")->check(CLI::IsMember({"upper", "lower"}));

  auto* solve = app.add_subcommand("solve", "Utility maximization with endowments");
  add_common(solve, true);
  SolveFlags sf;
  solve->add_option("--x", sf.x, "Initial cash")->required();
  solve->add_option("--q", sf.q, "Claim quantities")->delimiter(',');
  solve->add_flag("--dual", sf.dual, "Extract and check the dual solution");
  solve->add_flag("--shadow", sf.shadow, "Shadow price discrete-collapse verification");
  solve->add_option("--tol", sf.tol, "Primal solver tolerance");
  solve->add_option("--max-iter", sf.max_iter, "Primal solver iteration limit");

  auto* suite = app.add_subcommand("suite", "Random property suite");
  add_common(suite, false);
  SuiteOptions so;
  suite->add_option("--seed", so.seed, "Generator seed");
  suite->add_option("--count", so.count, "Number of instances");
  suite->add_option("--max-depth", so.max_depth, "Maximum tree depth");
  suite->add_option("--max-branch", so.max_branch, "Maximum branching");
  suite->add_flag("--inject-fault", so.inject_fault, "Corrupt the superhedging LP");
  suite->add_option("--superhedge-tol", so.superhedge_tol, "Superhedging duality tolerance");
  suite->add_option("--cps-tol", so.cps_tol, "CPS residual tolerance");
  suite->add_option("--gap-tol", so.gap_tol, "Duality gap tolerance");
  suite->add_option("--identity-tol", so.identity_tol, "First-order and slackness tolerance");
  suite->add_option("--shadow-tol", so.shadow_tol, "Shadow verification tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  const auto start = std::chrono::steady_clock::now();
  Json report;
  report["schema_version"] = kSchemaVersion;
  report["command"] = Json{{"name", command}, {"argv", std::vector<std::string>(argv + 1, argv + argc)}};
  report["instance_digest"] = nullptr;
  report["results"] = nullptr;
  report["residuals"] = nullptr;
  int code = kOk;
  try {
    std::optional<Instance> inst;
    if (!file.empty()) {
      const std::string text = read_file(file);
      report["instance_digest"] = "sha256:" + sha256_hex(text);
      if (command != "suite") inst = parse_instance(text);
    }
    Outcome o;
    if (command == "validate")
      o = cmd_validate(*inst);
    else if (command == "cps")
      o = cmd_cps(*inst, lambda_prime, price_of);
    else if (command == "superhedge")
      o = cmd_superhedge(*inst, claim, side);
    else if (command == "solve")
      o = cmd_solve(*inst, sf);
    else
      o = cmd_suite(so);
    report["results"] = std::move(o.results);
    report["residuals"] = std::move(o.residuals);
    code = o.code;
  } catch (const CliError& e) {
    code = e.code;
    report["error"] = Json{{"kind", e.kind}, {"message", e.message}, {"where", e.where}};
  } catch (const OutsideDomain& e) {
    code = kOutsideK;
    report["error"] = Json{{"kind", "outside-K"}, {"message", e.what()}, {"where", "--x"}};
  } catch (const SolverFailure& e) {
    code = kSolverFailure;
    report["error"] = Json{{"kind", "solver-failure"}, {"message", e.what()}, {"where", command}};
  } catch (const PreconditionError& e) {
    code = kInvalid;
    report["error"] = Json{{"kind", "precondition"}, {"message", e.what()}, {"where", command}};
  } catch (const std::exception& e) {
    code = kSolverFailure;
    report["error"] = Json{{"kind", "internal"}, {"message", e.what()}, {"where", command}};
  }
  if (command == "validate" && report.contains("error") && code == kInvalid)
    report["results"] = Json{{"valid", false}, {"field", report["error"]["where"]}};
  report["exit_code"] = code;
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  report["wall_time_ms"] = no_timing ? Json(nullptr) : Json(ms);

  if (format == "text") {
    print_text(report, "", std::cout);
  } else {
    std::cout << report.dump(2) << "\n";
  }
  return code;
}
