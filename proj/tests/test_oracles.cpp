#include "deqbl/oracles.hpp"

#include <gtest/gtest.h>

using namespace deqbl;

TEST(OracleSuite, AllChecksPass) {
  for (const auto& r : oracles::run_all()) {
    EXPECT_TRUE(r.pass) << r.name << " measured " << r.measured << " tol " << r.tolerance << " " << r.detail;
    EXPECT_TRUE(std::isfinite(r.measured)) << r.name;
  }
}

TEST(OracleSuite, AdjointnessCoversAtLeastHundredInstances) {
  const auto r = oracles::check_adjointness(25);
  EXPECT_EQ(r.detail, "125 instances");
}
