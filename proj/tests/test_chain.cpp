#include <catch2/catch_amalgamated.hpp>

#include "hmclab/chain.hpp"
#include "hmclab/gaussian_lab.hpp"

using namespace hmclab;

namespace {
Vec vec1(double x) { return Vec::Constant(1, x); }
PhaseState state1(double x, double v) { return PhaseState(vec1(x), vec1(v)); }
}  // namespace

TEST_CASE("refresh") {
  SECTION("eta = 0 replaces the velocity") {
    Vec g(2);
    g << 0.3, -0.7;
    auto z = refresh(PhaseState(Vec::Zero(2), Vec::Ones(2)), 0.0, g);
    REQUIRE((z.v - g).norm() == 0.0);
  }
  SECTION("deterministic part") {
    auto z = refresh(state1(0.0, 1.0), 0.6, vec1(0.0));
    REQUIRE(z.v[0] == Catch::Approx(0.6));
    REQUIRE(z.x[0] == 0.0);
  }
  SECTION("stationarity: N(0,I) is preserved at Monte Carlo scale") {
    RngStream rng(8);
    const int n = 100000;
    double mean = 0, var = 0;
    for (int i = 0; i < n; ++i) {
      const double v = rng.normal();
      const double vp = refresh(state1(0, v), 0.6, vec1(rng.normal())).v[0];
      mean += vp;
      var += vp * vp;
    }
    mean /= n;
    var /= n;
    REQUIRE(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
    REQUIRE(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));
  }
  SECTION("variance weight survives eta near one") {
    const double eta = 1.0 - 1e-14;
    auto z = refresh(state1(0.0, 0.0), eta, vec1(1.0));
    REQUIRE(z.v[0] == Catch::Approx(std::sqrt((1 - eta) * (1 + eta))).epsilon(1e-12));
    REQUIRE(z.v[0] > 0.0);
  }
}

TEST_CASE("transition with full refresh and free flight") {
  auto p = zero_potential(1);
  ChainParams params;
  params.t = 0.5;
  params.eta = 0.0;
  std::vector<Vec> gs{vec1(1.0)};
  auto z = transition_given(p, params, state1(0.0, 5.0), params.t, gs);
  REQUIRE(z.x[0] == Catch::Approx(0.5));
  REQUIRE(z.v[0] == Catch::Approx(1.0));
}

TEST_CASE("Gaussian draw accounting per transition") {
  auto p = quadratic_potential(Mat::Identity(2, 2) * 0.5);
  ChainParams params;
  params.t = 0.2;
  RngStream rng(3);
  auto z0 = PhaseState(Vec::Ones(2), Vec::Zero(2));
  transition(p, params, z0, rng);
  REQUIRE(rng.normals_drawn() == 2);
  params.placement = RefreshPlacement::refresh_flow_refresh;
  transition(p, params, z0, rng);
  REQUIRE(rng.normals_drawn() == 6);
}

TEST_CASE("step-size guard") {
  auto p = quadratic_potential(Mat::Identity(1, 1) * 4.0);  // L = 4, so t <= 1/8
  ChainParams params;
  params.t = 0.2;
  RngStream rng(5);
  REQUIRE_THROWS_AS(transition(p, params, state1(1, 0), rng), std::invalid_argument);
  params.allow_large_t = true;
  REQUIRE_NOTHROW(transition(p, params, state1(1, 0), rng));
}

TEST_CASE("random integration times") {
  auto p = quadratic_potential(Mat::Identity(1, 1));
  SECTION("fixed law reduces exactly to the plain transition") {
    ChainParams fixed_t;
    fixed_t.t = 0.2;
    ChainParams law = fixed_t;
    law.step_law = StepLaw::fixed(0.2);
    RngStream r1(11), r2(11);
    auto a = transition(p, fixed_t, state1(1.0, 0.5), r1);
    auto b = transition_random_time(p, law, state1(1.0, 0.5), r2);
    REQUIRE(phase_distance(a, b) == 0.0);
    REQUIRE(r1.words_used() == r2.words_used());
  }
  SECTION("uniform law support and distribution") {
    StepLaw law = StepLaw::uniform(0.1, 0.2);
    RngStream rng(13);
    const int n = 100000;
    std::vector<double> draws(n);
    for (int i = 0; i < n; ++i) {
      draws[i] = law.draw(rng);
      REQUIRE(draws[i] >= 0.1);
      REQUIRE(draws[i] <= 0.2);
    }
    // Kolmogorov-Smirnov against uniform(0.1, 0.2) at the 1% level
    std::sort(draws.begin(), draws.end());
    double d_stat = 0;
    for (int i = 0; i < n; ++i) {
      const double f = (draws[i] - 0.1) / 0.1;
      d_stat = std::max(d_stat, std::abs(f - (i + 1.0) / n));
      d_stat = std::max(d_stat, std::abs(f - static_cast<double>(i) / n));
    }
    REQUIRE(d_stat < 1.628 / std::sqrt(static_cast<double>(n)));
  }
  SECTION("discrete law draws only its atoms with the declared frequencies") {
    StepLaw law = StepLaw::discrete({0.05, 0.1}, {0.25, 0.75});
    RngStream rng(17);
    int hits = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double t = law.draw(rng);
      REQUIRE((t == 0.05 || t == 0.1));
      hits += t == 0.05;
    }
    REQUIRE(std::abs(hits / static_cast<double>(n) - 0.25) < 3.0 * std::sqrt(0.25 * 0.75 / n));
  }
  SECTION("support outside the step guard is rejected") {
    auto p4 = quadratic_potential(Mat::Identity(1, 1) * 4.0);
    ChainParams params;
    params.t = 0.1;
    params.step_law = StepLaw::uniform(0.05, 0.2);  // 0.2 * sqrt(4) > 1/4
    RngStream rng(19);
    REQUIRE_THROWS_AS(transition_random_time(p4, params, state1(1, 0), rng), std::invalid_argument);
  }
}

TEST_CASE("trajectories") {
  auto p = quadratic_potential(Mat::Identity(1, 1));
  ChainParams params;
  params.t = 0.2;
  params.eta = 0.5;
  SECTION("zero steps records only the start") {
    RngStream rng(23);
    auto tr = run_trajectory(p, params, state1(2.0, 0.0), 0, rng);
    REQUIRE(tr.size() == 1);
    REQUIRE(tr[0].potential == Catch::Approx(2.0));
    REQUIRE(tr[0].x_squared == Catch::Approx(4.0));
  }
  SECTION("same seed, same series") {
    RngStream r1(29), r2(29);
    auto a = run_trajectory(p, params, state1(1.0, 0.0), 50, r1);
    auto b = run_trajectory(p, params, state1(1.0, 0.0), 50, r2);
    for (size_t i = 0; i < a.size(); ++i)
      REQUIRE(phase_distance(a[i].state, b[i].state) == 0.0);
  }
  SECTION("long-run position variance matches the target within batch bands") {
    RngStream rng(31);
    const int n = 100000;
    auto tr = run_trajectory(p, params, state1(0.0, 0.0), n, rng);
    const int batch = 1000, nb = n / batch;
    std::vector<double> batch_means(nb, 0.0);
    double var = 0;
    for (int b = 0; b < nb; ++b) {
      double acc = 0;
      for (int i = 0; i < batch; ++i) acc += tr[1 + b * batch + i].x_squared;
      batch_means[b] = acc / batch;
      var += acc / batch;
    }
    var /= nb;
    double se = 0;
    for (double m : batch_means) se += (m - var) * (m - var);
    se = std::sqrt(se / (nb - 1.0) / nb);
    REQUIRE(std::abs(var - 1.0) <= 3.0 * se);
  }
}

TEST_CASE("parallel coupling") {
  SECTION("equal starts stay equal") {
    auto p = quadratic_potential(Mat::Identity(1, 1));
    ChainParams params;
    params.t = 0.2;
    params.eta = 0.3;
    RngStream rng(37);
    auto s = parallel_coupling(p, params, state1(1, 1), state1(1, 1), 50, rng);
    for (double d : s.z_distance) REQUIRE(d == 0.0);
  }
  SECTION("full-refresh contraction at the documented quadratic rate") {
    Mat P(2, 2);
    P << 0.5, 0.0, 0.0, 1.0;
    auto p = quadratic_potential(P);
    ChainParams params;
    params.t = 0.4;
    params.eta = 0.0;
    params.allow_large_t = true;  // t <= 1/2 regime of the full-refresh bound
    const double m = 0.5;
    const double rate = 1.0 - m * params.t * params.t / 4.0;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
      RngStream rng(seed);
      PhaseState a(Vec::Ones(2), Vec::Zero(2));
      PhaseState b(-Vec::Ones(2), Vec::Ones(2));
      auto s = parallel_coupling(p, params, a, b, 100, rng);
      for (size_t k = 0; k < s.x_distance.size(); ++k)
        REQUIRE(s.x_distance[k] <= std::pow(rate, static_cast<double>(k)) * s.x_distance[0] * (1 + 1e-9));
    }
  }
  SECTION("inertial contraction at the documented phase-space rate") {
    Mat P(2, 2);
    P << 0.5, 0.0, 0.0, 1.0;
    auto p = quadratic_potential(P);
    const double m = 0.5, gbar = 2.0;
    const double t = m / (24.0 * gbar * (2.0 + gbar * gbar));
    ChainParams params;
    params.t = t;
    params.eta = 1.0 - gbar * t;
    const double rate = 1.0 - m * t / (12.0 * gbar);
    RngStream rng(41);
    PhaseState a(Vec::Ones(2), Vec::Zero(2));
    PhaseState b(Vec::Zero(2), -Vec::Ones(2));
    auto s = parallel_coupling(p, params, a, b, 200, rng);
    for (size_t k = 0; k < s.z_distance.size(); ++k)
      REQUIRE(s.z_distance[k] <= 3.0 * std::pow(rate, static_cast<double>(k)) * s.z_distance[0] * (1 + 1e-9));
  }
}

TEST_CASE("law identities checked exactly on Gaussian kernels") {
  Mat P = Mat::Identity(1, 1);
  SECTION("doubly-refreshed transition at eta=0 equals transition then refresh") {
    ChainParams q;
    q.t = 0.2;
    q.eta = 0.0;
    q.placement = RefreshPlacement::refresh_flow_refresh;
    auto qk = gauss::kernel_of_transition(P, q);
    ChainParams pp = q;
    pp.placement = RefreshPlacement::refresh_then_flow;
    auto pk = gauss::kernel_of_transition(P, pp);
    auto composed = pk.then(gauss::refresh_kernel(1, 0.0));
    REQUIRE((qk.map - composed.map).norm() < 1e-14);
    REQUIRE((qk.noise_cov - composed.noise_cov).norm() < 1e-14);
  }
  SECTION("refresh_then_flow followed by refresh equals refresh_flow_refresh in law") {
    for (double eta : {0.0, 0.4, 0.9}) {
      ChainParams base;
      base.t = 0.15;
      base.eta = eta;
      auto pk = gauss::kernel_of_transition(P, base);
      ChainParams q = base;
      q.placement = RefreshPlacement::refresh_flow_refresh;
      auto qk = gauss::kernel_of_transition(P, q);
      auto composed = pk.then(gauss::refresh_kernel(1, eta));
      REQUIRE((qk.map - composed.map).norm() < 1e-14);
      REQUIRE((qk.noise_cov - composed.noise_cov).norm() < 1e-14);
    }
  }
}
