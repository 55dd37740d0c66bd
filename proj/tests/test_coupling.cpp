#include <catch2/catch_amalgamated.hpp>

#include "hmclab/certify.hpp"
#include "hmclab/coupling.hpp"

using namespace hmclab;
using namespace hmclab::coupling;

namespace {
Vec vec1(double x) { return Vec::Constant(1, x); }
PhaseState state1(double x, double v) { return PhaseState(vec1(x), vec1(v)); }
Potential unit_double_well() { return double_well_1d(1.0 / 44.0); }

ChainParams q_params(double t, double eta) {
  ChainParams params;
  params.t = t;
  params.eta = eta;
  params.placement = RefreshPlacement::refresh_flow_refresh;
  return params;
}
}  // namespace

TEST_CASE("one-step coupling") {
  SECTION("equal starts keep the draws unchanged") {
    auto p = unit_double_well();
    auto params = q_params(0.1, 0.4);
    PhaseState z = state1(0.5, -0.2);
    auto c = one_step_coupling(p, params, z, z, vec1(0.7), vec1(-1.1));
    REQUIRE((c.W - vec1(0.7)).norm() < 1e-10);
    REQUIRE((c.Wp - vec1(-1.1)).norm() < 1e-10);
    REQUIRE(c.residual < 1e-10);
  }
  SECTION("free flight closed form") {
    auto p = zero_potential(1);
    auto params = q_params(0.2, 0.5);
    PhaseState z = state1(0.0, 0.3), zp = state1(1.0, -0.4);
    auto c = one_step_coupling(p, params, z, zp, vec1(0.9), vec1(0.1));
    // reconnecting velocity in free flight: K = arg + (x - x') / t, so
    // W = (arg + (x - x')/t - eta v') / sqrt(1 - eta^2)
    const double se = std::sqrt(1.0 - 0.25);
    const double arg = 0.5 * 0.3 + se * 0.9;
    const double expect = (arg + (0.0 - 1.0) / 0.2 - 0.5 * (-0.4)) / se;
    REQUIRE(c.W[0] == Catch::Approx(expect).epsilon(1e-10));
    REQUIRE(c.residual < 1e-10);
  }
  SECTION("full refresh removes the velocity dependence in free flight") {
    auto p = zero_potential(1);
    auto params = q_params(0.2, 0.0);
    auto a = one_step_coupling(p, params, state1(0.0, 5.0), state1(1.0, -7.0), vec1(0.3), vec1(0.4));
    auto b = one_step_coupling(p, params, state1(0.0, -2.0), state1(1.0, 9.0), vec1(0.3), vec1(0.4));
    REQUIRE((a.W - b.W).norm() < 1e-12);
    REQUIRE((a.Wp - b.Wp).norm() < 1e-12);
  }
  SECTION("re-simulation residual on 100 random double-well pairs") {
    auto p = unit_double_well();
    auto params = q_params(0.12, 0.6);
    RngStream rng(61);
    int tested = 0;
    while (tested < 100) {
      PhaseState z(1.2 * rng.normal_vector(1), rng.normal_vector(1));
      PhaseState zp(1.2 * rng.normal_vector(1), rng.normal_vector(1));
      if (!p.box()->contains(z.x) || !p.box()->contains(zp.x)) continue;
      auto c = one_step_coupling(p, params, z, zp, rng.normal_vector(1), rng.normal_vector(1));
      REQUIRE(c.residual <= 1e-8);
      ++tested;
    }
  }
}

TEST_CASE("merge schedule") {
  SECTION("endpoints and the telescoping identities") {
    PhaseState z(Vec::Zero(2), Vec::Zero(2));
    Vec dx(2), dv(2);
    dx << 1.0, -0.5;
    dv << 0.2, 0.8;
    PhaseState zp(dx, dv);
    const double eta = 0.7, t = 0.1;
    auto ms = merge_schedule(z, zp, 4, eta, t);
    REQUIRE(ms.n == 2);  // capped at floor(1/(4*0.1)) = 2
    REQUIRE((ms.u[0] - dx).norm() < 1e-14);
    REQUIRE((ms.w[0] - dv).norm() < 1e-14);
    REQUIRE(ms.u[ms.n].norm() < 1e-12);
    REQUIRE(ms.w[ms.n].norm() < 1e-12);
    for (int k = 0; k < ms.n; ++k)
      REQUIRE((ms.u[k + 1] - ms.u[k] - eta * t * ms.w[k]).norm() < 1e-13);
    Vec wsum = Vec::Zero(2);
    for (const auto& w : ms.w) wsum += w;
    REQUIRE((eta * t * wsum + dx).norm() < 1e-12);
  }
  SECTION("frozen value: n=2, unit position gap") {
    auto ms = merge_schedule(state1(0, 0), state1(1, 0), 2, 0.5, 0.1);
    REQUIRE(ms.w[1][0] == Catch::Approx(-20.0).epsilon(1e-12));
  }
  SECTION("offset magnitude bound") {
    RngStream rng(67);
    for (int trial = 0; trial < 20; ++trial) {
      PhaseState z(rng.normal_vector(1), rng.normal_vector(1));
      PhaseState zp(rng.normal_vector(1), rng.normal_vector(1));
      const double t = 0.02 + 0.1 * rng.uniform();
      const double eta = 0.3 + 0.6 * rng.uniform();
      const int n_req = 2 + static_cast<int>(rng.uniform() * 8);
      auto ms = merge_schedule(z, zp, n_req, eta, t);
      const double dxn = (zp.x - z.x).norm(), dvn = (zp.v - z.v).norm();
      for (const auto& w : ms.w)
        REQUIRE(w.norm() <= dvn + 3.0 * dxn / (eta * ms.n * t) + 1e-12);
    }
  }
  SECTION("preconditions") {
    REQUIRE_THROWS(merge_schedule(state1(0, 0), state1(1, 0), 1, 0.5, 0.1));
    REQUIRE_THROWS(merge_schedule(state1(0, 0), state1(1, 0), 3, 0.0, 0.1));
    REQUIRE_THROWS(merge_schedule(state1(0, 0), state1(1, 0), 3, 0.5, 0.2));
  }
}

TEST_CASE("n-step merge coupling") {
  auto p = unit_double_well();
  const double t = 0.05;
  const double eta = 1.0 - 2.0 * t;
  auto params = q_params(t, eta);

  SECTION("equal starts reproduce the draws") {
    RngStream rng(71);
    PhaseState z = state1(0.4, -0.1);
    auto nc = n_step_coupling(p, params, z, z, 5, rng);
    for (int k = 0; k < nc.schedule.n; ++k) {
      REQUIRE((nc.W[k] - nc.G[k]).norm() < 1e-9);
      REQUIRE((nc.Wp[k] - nc.Gp[k]).norm() < 1e-9);
    }
    REQUIRE(nc.half_sq_displacement < 1e-16);
    REQUIRE(nc.merge_residual < 1e-9);
  }
  SECTION("merge and tracking on random pairs") {
    RngStream rng(73);
    int tested = 0;
    while (tested < 10) {
      PhaseState z(1.3 * rng.normal_vector(1), rng.normal_vector(1));
      PhaseState zp(1.3 * rng.normal_vector(1), rng.normal_vector(1));
      if (!p.box()->contains(z.x) || !p.box()->contains(zp.x)) continue;
      auto nc = n_step_coupling(p, params, z, zp, 5, rng);
      REQUIRE(nc.schedule.n == 5);
      for (double r : nc.track_residual) REQUIRE(r <= 1e-7);
      REQUIRE(nc.merge_residual <= 1e-7);
      ++tested;
    }
  }
  SECTION("displacement bound from the certified density constant") {
    RngStream rng(79);
    const auto rc = certify::n_step_regularization(t, eta, p.hessian_lipschitz(), 5);
    int tested = 0;
    while (tested < 25) {
      PhaseState z(1.2 * rng.normal_vector(1), rng.normal_vector(1));
      PhaseState zp(1.2 * rng.normal_vector(1), rng.normal_vector(1));
      if (!p.box()->contains(z.x) || !p.box()->contains(zp.x)) continue;
      auto nc = n_step_coupling(p, params, z, zp, 5, rng);
      const double rhs = rc.density_constant *
                         ((zp.x - z.x).squaredNorm() +
                          rc.velocity_weight * rc.velocity_weight * (zp.v - z.v).squaredNorm());
      REQUIRE(nc.half_sq_displacement <= rhs);
      ++tested;
    }
  }
  SECTION("draw-map Jacobian stays close to the identity") {
    RngStream rng(83);
    PhaseState z = state1(0.6, 0.2), zp = state1(-0.5, -0.3);
    auto nc = n_step_coupling(p, params, z, zp, 5, rng);
    auto est = coupling_jacobian_fd(p, params, z, zp, nc);
    REQUIRE(est.op_norm_minus_identity <= 0.5);
  }
}
