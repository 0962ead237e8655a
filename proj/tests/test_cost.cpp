#include "doctest.h"
#include "lago/cost.hpp"
#include "lago/errors.hpp"

using namespace lago;

namespace {

CostFunction betterbirth_cost() {
  return CostFunction(2, {{0, 1, 380}, {0, 2, -24}, {0, 3, 0.6}, {1, 1, 1700}, {1, 2, -950}, {1, 3, 220}});
}

CostFunction scenario_cubic() {
  return CostFunction(2, {{0, 0, 10}, {0, 1, 10}, {0, 2, -1.19}, {0, 3, 2}, {1, 1, 2}, {1, 2, -0.2}, {1, 3, 0.1}});
}

}  // namespace

TEST_CASE("cost evaluates the separable polynomial") {
  CHECK(betterbirth_cost().evaluate(Eigen::Vector2d(27, 1)) == doctest::Approx(5543.8).epsilon(1e-12));
  CHECK(scenario_cubic().evaluate(Eigen::Vector2d(0.5, 4)) == doctest::Approx(26.1525).epsilon(1e-12));
  CHECK(scenario_cubic().evaluate(Eigen::Vector2d(0, 0)) == 10.0);
}

TEST_CASE("marginal and curvature are the polynomial derivatives") {
  CostFunction c = scenario_cubic();
  for (double x : {0.0, 0.3, 1.7}) {
    CHECK(c.marginal_at(0, x) == doctest::Approx(10 - 2.38 * x + 6 * x * x));
    CHECK(c.curvature_at(1, x) == doctest::Approx(-0.4 + 0.6 * x));
    const double h = 1e-6;
    double fd = (c.component_cost(1, x + h) - c.component_cost(1, x - h)) / (2 * h);
    CHECK(c.marginal_at(1, x) == doctest::Approx(fd).epsilon(1e-8));
  }
  CHECK(c.marginal(Eigen::Vector2d(1, 2), 1) == doctest::Approx(2 - 0.8 + 1.2));
  CHECK_THROWS_AS(c.marginal(Eigen::Vector2d(1, 2), 2), ValidationError);
}

TEST_CASE("terms round-trip through the constructor") {
  CostFunction c = scenario_cubic();
  CostFunction back(2, c.terms());
  CHECK(back.offset() == c.offset());
  CHECK(back.coefficients() == c.coefficients());
  CHECK(c.terms().size() == 7);
}

TEST_CASE("degree-zero terms collapse into the constant and duplicates add") {
  CostFunction c(2, {{1, 0, 3}, {0, 0, 4}, {0, 1, 1}, {0, 1, 2}});
  CHECK(c.offset() == 7);
  CHECK(c.coefficients()(0, 0) == 3);
  CHECK(c.is_linear());
  CHECK_FALSE(scenario_cubic().is_linear());
  CHECK(c.linear_coefficients()(1) == 0);
}

TEST_CASE("cost construction rejects bad terms") {
  CHECK_THROWS_AS(CostFunction(0, {}), ValidationError);
  CHECK_THROWS_AS(CostFunction(2, {{0, 4, 1}}), ValidationError);
  CHECK_THROWS_AS(CostFunction(2, {{2, 1, 1}}), ValidationError);
  CHECK_THROWS_AS(CostFunction(2, {{0, 1, std::nan("")}}), ValidationError);
  CHECK_THROWS_AS(CostFunction::from_coefficients(Mat::Zero(2, 2), 0), ValidationError);
  CHECK_THROWS_AS(scenario_cubic().evaluate(Eigen::Vector3d(1, 1, 1)), ValidationError);
}
