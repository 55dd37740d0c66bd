#include <catch2/catch_amalgamated.hpp>

#include "hmclab/potential.hpp"

using namespace hmclab;

namespace {
Vec vec1(double x) { return Vec::Constant(1, x); }
}  // namespace

TEST_CASE("eval_bundle on builtins") {
  SECTION("zero potential") {
    auto p = zero_potential(2);
    Vec x(2);
    x << 1, 2;
    auto b = eval_bundle(p, x);
    REQUIRE(b.value == 0.0);
    REQUIRE(b.gradient.norm() == 0.0);
    REQUIRE(b.hessian->norm() == 0.0);
  }
  SECTION("quadratic, identity form") {
    auto p = quadratic_potential(Mat::Identity(1, 1));
    auto b = eval_bundle(p, vec1(3.0));
    REQUIRE(b.value == Catch::Approx(4.5));
    REQUIRE(b.gradient[0] == Catch::Approx(3.0));
    REQUIRE((*b.hessian)(0, 0) == Catch::Approx(1.0));
  }
  SECTION("double well at the barrier top") {
    auto p = double_well_1d(1.0);
    auto b = eval_bundle(p, vec1(0.0));
    REQUIRE(b.value == Catch::Approx(1.0));
    REQUIRE(b.gradient[0] == Catch::Approx(0.0));
    REQUIRE((*b.hessian)(0, 0) == Catch::Approx(-4.0));
  }
}

TEST_CASE("dimension mismatch is rejected") {
  auto p = quadratic_potential(Mat::Identity(2, 2));
  REQUIRE_THROWS_AS(p.value(vec1(1.0)), std::invalid_argument);
  REQUIRE_THROWS_AS(eval_bundle(p, Vec::Zero(3)), std::invalid_argument);
}

TEST_CASE("gradient matches finite differences on every builtin") {
  RngStream rng(11);
  std::vector<Potential> ps{zero_potential(2), double_well_1d(0.5), mexican_hat_2d(0.8)};
  Mat P(2, 2);
  P << 2.0, 0.3, 0.3, 1.0;
  ps.push_back(quadratic_potential(P));
  for (const auto& p : ps) {
    for (int i = 0; i < 25; ++i) {
      Vec x = 1.5 * rng.normal_vector(p.dim());
      if (p.box() && !p.box()->contains(x)) continue;
      Vec g = p.gradient(x);
      Vec gfd = fd_gradient(p, x);
      REQUIRE((g - gfd).norm() <= 1e-5 * std::max(1.0, g.norm()));
    }
  }
}

TEST_CASE("quadratic reports its largest eigenvalue as the Hessian bound") {
  Mat P(2, 2);
  P << 3.0, 1.0, 1.0, 2.0;
  auto p = quadratic_potential(P);
  Eigen::SelfAdjointEigenSolver<Mat> es(P);
  REQUIRE(p.hessian_bound() == Catch::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-10));
  REQUIRE(p.hessian_lipschitz() == 0.0);
  REQUIRE(p.lsi_constant().has_value());
  REQUIRE(*p.lsi_constant() == Catch::Approx(1.0 / es.eigenvalues().minCoeff()));
}

TEST_CASE("smoothness validation") {
  SECTION("constant Hessian has zero Lipschitz ratio") {
    auto p = quadratic_potential(Mat::Identity(2, 2) * 1.5);
    Box box(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0));
    auto rep = validate_smoothness(p, box, 100, RngStream(3));
    REQUIRE(rep.worst_lipschitz_ratio == 0.0);
    REQUIRE(rep.worst_hessian_ratio <= 1.0);
  }
  SECTION("double well on its box stays within declared bounds") {
    auto p = double_well_1d(1.0);
    auto rep = validate_smoothness(p, *p.box(), 100, RngStream(4));
    REQUIRE(rep.ok());
    REQUIRE(rep.worst_hessian_ratio > 0.3);  // the bound is attained near the edges
  }
  SECTION("mexican hat on its box stays within declared bounds") {
    auto p = mexican_hat_2d(1.0);
    auto rep = validate_smoothness(p, *p.box(), 200, RngStream(5));
    REQUIRE(rep.ok());
  }
  SECTION("a too-small declared bound is flagged") {
    auto honest = double_well_1d(1.0);
    Potential lying("lying_double_well", 1, [&](const Vec& x) { return honest.value(x); },
                    [&](const Vec& x) { return honest.gradient(x); },
                    [&](const Vec& x) { return honest.hessian(x); }, 1.0, 48.0, std::nullopt,
                    honest.box());
    auto rep = validate_smoothness(lying, *honest.box(), 100, RngStream(6));
    REQUIRE(rep.worst_hessian_ratio > 1.0);
    REQUIRE_FALSE(rep.ok());
  }
}

TEST_CASE("scaled potential multiplies everything") {
  auto p = double_well_1d(1.0);
  auto q = scaled_potential(p, 2.5);
  REQUIRE(q.value(vec1(0.3)) == Catch::Approx(2.5 * p.value(vec1(0.3))));
  REQUIRE(q.gradient(vec1(0.3))[0] == Catch::Approx(2.5 * p.gradient(vec1(0.3))[0]));
  REQUIRE(q.hessian_bound() == Catch::Approx(2.5 * p.hessian_bound()));
}
