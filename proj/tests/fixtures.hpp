#pragma once

#include <sstream>
#include <string>

#include "fdual/market.hpp"

namespace fdual::testing {

/// Binomial S0=4, up 8, down 2 with p = 1/2, one claim E = (3, 0).
inline std::string instance_a_json(double lambda = 0.25, const std::string& utility = R"({"kind":"log"})") {
  std::ostringstream lam;
  lam.precision(17);
  lam << lambda;
  return R"({"tree":[{"id":0,"parent":null,"p":1.0,"S":4.0},)"
         R"({"id":1,"parent":0,"p":0.5,"S":8.0},{"id":2,"parent":0,"p":0.5,"S":2.0}],)"
         R"("lambda":)" + lam.str() +
         R"(,"endowments":[[3.0,0.0]],"utility":)" + utility + "}";
}

inline Instance instance_a(double lambda = 0.25) {
  Instance inst = build_model(instance_a_json());
  if (lambda == 0.25) return inst;
  return Instance{inst.market.with_lambda(lambda), inst.endowments, inst.utility};
}

}  // namespace fdual::testing
