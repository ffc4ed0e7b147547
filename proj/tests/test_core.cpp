#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "oem/core.hpp"

using namespace oem;

TEST_CASE("step schedule values") {
  CHECK(StepSchedule(1.0, 1.0).gamma(10) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(StepSchedule(1.0, 0.6).gamma(1) == 1.0);
  CHECK(StepSchedule(0.5, 0.6).gamma(1) == 0.5);
  CHECK(StepSchedule(1.0, 0.6).gamma(32) ==
        doctest::Approx(std::pow(32.0, -0.6)).epsilon(1e-15));
  CHECK(schedule_gamma(StepSchedule(1.0, 1.0), 4) == 0.25);
}

TEST_CASE("step schedule is decreasing with divergent sum") {
  StepSchedule s(1.0, 0.6);
  double sum = 0.0, sum_sq = 0.0, prev = 2.0;
  for (std::size_t n = 1; n <= 100000; ++n) {
    const double g = s.gamma(n);
    CHECK(g < prev);
    prev = g;
    sum += g;
    sum_sq += g * g;
  }
  // sum grows like n^0.4 / 0.4, sum of squares stays bounded
  CHECK(sum > 240.0);
  CHECK(sum_sq < 6.0);
}

TEST_CASE("step schedule rejects bad arguments") {
  CHECK_THROWS_AS(StepSchedule(0.0, 0.6), std::invalid_argument);
  CHECK_THROWS_AS(StepSchedule(1.2, 0.6), std::invalid_argument);
  CHECK_THROWS_AS(StepSchedule(1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(StepSchedule(1.0, 1.1), std::invalid_argument);
  CHECK_THROWS_AS(StepSchedule(1.0, 0.6).gamma(0), RangeError);
}

TEST_CASE("layout labels and blocks") {
  auto layout = Layout::sequential({{"omega", 2}, {"scale", 1}});
  CHECK(layout->size() == 3);
  CHECK(layout->labels() == std::vector<std::string>{"omega[0]", "omega[1]", "scale"});
  CHECK(layout->block("scale").offset == 2);
  CHECK_THROWS_AS(layout->block("nope"), DimensionError);
  CHECK(*layout == *Layout::sequential({{"omega", 2}, {"scale", 1}}));
  CHECK_FALSE(*layout == *Layout::sequential({{"omega", 3}}));
}

TEST_CASE("labelled vectors check length and finiteness") {
  auto layout = Layout::sequential({{"a", 2}});
  CHECK_THROWS_AS(StatVector(layout, Eigen::VectorXd::Zero(3)), DimensionError);
  Eigen::VectorXd bad(2);
  bad << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ParamVector(layout, bad), DomainError);
  ParamVector p(layout, Eigen::Vector2d(1.0, 2.0));
  CHECK(p.block("a")[1] == 2.0);
  CHECK(p == ParamVector(layout, Eigen::Vector2d(1.0, 2.0)));
}

TEST_CASE("blend_stats") {
  auto layout = Layout::sequential({{"s", 2}});
  StatVector s(layout, Eigen::Vector2d(1.0, 3.0));
  StatVector sbar(layout, Eigen::Vector2d(3.0, 1.0));

  SUBCASE("gamma = 1 returns the new statistic exactly") {
    CHECK(blend_stats(s, sbar, 1.0).values() == sbar.values());
  }
  SUBCASE("convex combination") {
    auto out = blend_stats(s, sbar, 0.25);
    CHECK(out[0] == doctest::Approx(1.5));
    CHECK(out[1] == doctest::Approx(2.5));
  }
  SUBCASE("layouts equal by value are accepted") {
    StatVector other(Layout::sequential({{"s", 2}}), Eigen::Vector2d(0.0, 0.0));
    CHECK_NOTHROW(blend_stats(s, other, 0.5));
  }
  SUBCASE("mismatched layouts rejected") {
    StatVector other(Layout::sequential({{"t", 2}}), Eigen::Vector2d(0.0, 0.0));
    CHECK_THROWS_AS(blend_stats(s, other, 0.5), DimensionError);
  }
  SUBCASE("gamma outside [0,1]") {
    CHECK_THROWS(blend_stats(s, sbar, 1.5));
  }
}
