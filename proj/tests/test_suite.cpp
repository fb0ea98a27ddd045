#include <doctest.h>

#include <algorithm>

#include "fdual/suite.hpp"

using namespace fdual;

TEST_CASE("default suite passes every invariant") {
  const SuiteReport r = run_suite({});
  CHECK(r.instances == 20);
  CHECK(r.instances_passed == 20);
  CHECK(r.ok());
  for (const auto& s : r.invariants) {
    CHECK(s.failed == 0);
    CHECK(s.worst <= s.tol);
  }
}

TEST_CASE("injected fault is detected by superhedging duality only") {
  SuiteOptions o;
  o.inject_fault = true;
  const SuiteReport r = run_suite(o);
  REQUIRE_FALSE(r.ok());
  CHECK(std::all_of(r.failures.begin(), r.failures.end(),
                    [](const SuiteFailure& f) { return f.invariant == "superhedge-duality"; }));
}

TEST_CASE("empty suite is ok and rejects bad options") {
  SuiteOptions o;
  o.count = 0;
  const SuiteReport r = run_suite(o);
  CHECK(r.ok());
  CHECK(r.instances == 0);
  o.count = -1;
  CHECK_THROWS(run_suite(o));
  o.count = 1;
  o.max_depth = 0;
  CHECK_THROWS(run_suite(o));
}

TEST_CASE("suite is deterministic in the seed") {
  SuiteOptions o;
  o.seed = 123;
  o.count = 6;
  const SuiteReport a = run_suite(o);
  const SuiteReport b = run_suite(o);
  REQUIRE(a.invariants.size() == b.invariants.size());
  for (std::size_t i = 0; i < a.invariants.size(); ++i) CHECK(a.invariants[i].worst == b.invariants[i].worst);
  CHECK(a.ok());
}
