#pragma once

#include <cmath>
#include <vector>

#include "hmclab/chain.hpp"
#include "hmclab/flow.hpp"
#include "hmclab/rng.hpp"

namespace hmclab {
namespace coupling {

/// State of a doubly-randomized transition driven by explicit noise (G, G'):
/// refresh with G, flow for time t, refresh with G'.
inline PhaseState double_refresh_transition(const Potential& p, double t, double eta,
                                            const IntegratorConfig& cfg, const PhaseState& z,
                                            const Vec& g, const Vec& gp) {
  return refresh(flow_state(p, refresh(z, eta, g), t, cfg), eta, gp);
}

struct OneStepCoupling {
  Vec W, Wp;          // transformed pair replacing (G, G') for the second chain
  double residual;    // re-simulation mismatch of the two endpoints
};

/// Transforms the Gaussian pair of a chain started at z into the pair that
/// drives a chain started at zp to the exact same endpoint after one
/// doubly-randomized transition. Exactness is checked by re-simulation.
inline OneStepCoupling one_step_coupling(const Potential& p, const ChainParams& params,
                                         const PhaseState& z, const PhaseState& zp, const Vec& G,
                                         const Vec& Gp, double solver_tol = 1e-10) {
  params.validate(p);
  const double t = params.t, eta = params.eta;
  const double se = std::sqrt((1.0 - eta) * (1.0 + eta));
  const IntegratorConfig& cfg = params.integrator;

  Vec arg = eta * z.v + se * G;                     // refreshed velocity of the first chain
  Vec u0 = zp.x - z.x;
  InverseMapSolution K =
      reconnect_velocity(p, u0, Vec::Zero(u0.size()), z.x, arg, t, cfg, solver_tol);
  Vec W = (K.v - eta * zp.v) / se;
  Vec phi2 = flow_state(p, PhaseState(z.x, arg), t, cfg).v;
  Vec phi2p = flow_state(p, PhaseState(zp.x, eta * zp.v + se * W), t, cfg).v;
  Vec Wp = Gp + (eta / se) * (phi2 - phi2p);

  PhaseState from_z = double_refresh_transition(p, t, eta, cfg, z, G, Gp);
  PhaseState from_zp = double_refresh_transition(p, t, eta, cfg, zp, W, Wp);
  return {std::move(W), std::move(Wp), phase_distance(from_z, from_zp)};
}

// ---------------------------------------------------------------------------
// Interpolation schedule for the n-step merge
// ---------------------------------------------------------------------------

struct MergeSchedule {
  int n;                     // steps after capping
  int requested_n;
  std::vector<Vec> u;        // position offsets, u[0] = x'-x, u[n] = 0
  std::vector<Vec> w;        // velocity offsets, w[0] = v'-v, w[n] = 0
};

/// The polynomial interpolation driving two chains together in n steps. n is
/// capped at floor(1/(4t)); requires n >= 2, eta > 0 and t <= 1/8.
inline MergeSchedule merge_schedule(const PhaseState& z, const PhaseState& zp, int n, double eta,
                                    double t) {
  if (n < 2) throw std::invalid_argument("merge_schedule: n >= 2");
  if (eta <= 0.0) throw std::runtime_error("merge_schedule: requires eta > 0");
  if (t <= 0 || t > 0.125 + 1e-12) throw std::runtime_error("merge_schedule: requires 0 < t <= 1/8");
  MergeSchedule ms;
  ms.requested_n = n;
  const int cap = static_cast<int>(std::floor(1.0 / (4.0 * t)));
  ms.n = std::min(n, cap);
  const int m = ms.n;
  const Vec dx = zp.x - z.x;
  const Vec dv = zp.v - z.v;
  ms.w.resize(m + 1);
  ms.u.resize(m + 1);
  const double n3 = static_cast<double>(m) * m * m - m;
  const double n2 = static_cast<double>(m) * m - m;
  for (int k = 0; k <= m; ++k) {
    const double kk = k;
    ms.w[k] = (1.0 - kk / m - 3.0 * kk * (m - kk) / n2) * dv -
              (6.0 * kk * (m - kk) / (n3 * eta * t)) * dx;
  }
  ms.u[0] = dx;
  for (int k = 0; k < m; ++k) ms.u[k + 1] = ms.u[k] + eta * t * ms.w[k];
  return ms;
}

struct NStepCoupling {
  MergeSchedule schedule;
  std::vector<Vec> G, Gp;           // drawn pairs for the first chain
  std::vector<Vec> W, Wp;           // constructed pairs for the second chain
  std::vector<double> track_residual;  // |z_k' - z_k - y_k| after each step
  double merge_residual;               // |z_n' - z_n|
  double half_sq_displacement;         // (1/2) |W - G|^2 over all coordinates
  PhaseState end_a, end_b;
};

/// Builds the coupled draws step by step: each W_{k+1} comes from an
/// inverse-position solve targeting the scheduled offset, each W'_{k+1}
/// matches the scheduled velocity offset. The construction is verified by
/// re-simulation at every step.
inline NStepCoupling n_step_coupling(const Potential& p, const ChainParams& params,
                                     const PhaseState& z, const PhaseState& zp, int n,
                                     RngStream& rng, double solver_tol = 1e-10) {
  params.validate(p);
  const double t = params.t, eta = params.eta;
  const double se = std::sqrt((1.0 - eta) * (1.0 + eta));
  const IntegratorConfig& cfg = params.integrator;
  NStepCoupling nc;
  nc.schedule = merge_schedule(z, zp, n, eta, t);
  const int m = nc.schedule.n;
  const auto d = z.dim();

  PhaseState a = z, b = zp;
  nc.half_sq_displacement = 0.0;
  for (int k = 0; k < m; ++k) {
    Vec G = rng.normal_vector(d);
    Vec Gp = rng.normal_vector(d);
    Vec arg = eta * a.v + se * G;
    InverseMapSolution K = reconnect_velocity(p, nc.schedule.u[k], nc.schedule.u[k + 1], a.x, arg,
                                              t, cfg, solver_tol);
    Vec W = (K.v - eta * b.v) / se;
    Vec phi2 = flow_state(p, PhaseState(a.x, arg), t, cfg).v;
    Vec phi2p = flow_state(p, PhaseState(b.x, eta * b.v + se * W), t, cfg).v;
    Vec Wp = Gp + (nc.schedule.w[k + 1] + eta * phi2 - eta * phi2p) / se;

    nc.half_sq_displacement += 0.5 * ((W - G).squaredNorm() + (Wp - Gp).squaredNorm());
    a = double_refresh_transition(p, t, eta, cfg, a, G, Gp);
    b = double_refresh_transition(p, t, eta, cfg, b, W, Wp);
    Vec diff(2 * d);
    diff << b.x - a.x - nc.schedule.u[k + 1], b.v - a.v - nc.schedule.w[k + 1];
    nc.track_residual.push_back(diff.norm());
    nc.G.push_back(std::move(G));
    nc.Gp.push_back(std::move(Gp));
    nc.W.push_back(std::move(W));
    nc.Wp.push_back(std::move(Wp));
  }
  nc.merge_residual = phase_distance(a, b);
  nc.end_a = a;
  nc.end_b = b;
  return nc;
}

struct CouplingJacobianEstimate {
  double op_norm_minus_identity;
  double frobenius_sq_minus_identity;
};

/// Central finite differences of the full draw map (G_1..G_n) -> (W_1..W_n),
/// replaying the construction with perturbed inputs.
inline CouplingJacobianEstimate coupling_jacobian_fd(const Potential& p, const ChainParams& params,
                                                     const PhaseState& z, const PhaseState& zp,
                                                     const NStepCoupling& base, double fd_step = 1e-5,
                                                     double solver_tol = 1e-10) {
  const double t = params.t, eta = params.eta;
  const double se = std::sqrt((1.0 - eta) * (1.0 + eta));
  const IntegratorConfig& cfg = params.integrator;
  const int m = base.schedule.n;
  const auto d = z.dim();
  const int total = 2 * static_cast<int>(d) * m;

  auto replay = [&](const std::vector<Vec>& G, const std::vector<Vec>& Gp) {
    Vec out(total);
    PhaseState a = z, b = zp;
    int at = 0;
    for (int k = 0; k < m; ++k) {
      Vec arg = eta * a.v + se * G[k];
      InverseMapSolution K = reconnect_velocity(p, base.schedule.u[k], base.schedule.u[k + 1], a.x,
                                                arg, t, cfg, solver_tol);
      Vec W = (K.v - eta * b.v) / se;
      Vec phi2 = flow_state(p, PhaseState(a.x, arg), t, cfg).v;
      Vec phi2p = flow_state(p, PhaseState(b.x, eta * b.v + se * W), t, cfg).v;
      Vec Wp = Gp[k] + (base.schedule.w[k + 1] + eta * phi2 - eta * phi2p) / se;
      out.segment(at, d) = W;
      out.segment(at + d, d) = Wp;
      at += 2 * d;
      a = double_refresh_transition(p, t, eta, cfg, a, G[k], Gp[k]);
      b = double_refresh_transition(p, t, eta, cfg, b, W, Wp);
    }
    return out;
  };

  Mat J(total, total);
  for (int j = 0; j < total; ++j) {
    std::vector<Vec> Gp1 = base.G, Gpp1 = base.Gp, Gm1 = base.G, Gpm1 = base.Gp;
    const int step_idx = j / (2 * d);
    const int within = j % (2 * d);
    if (within < d) {
      Gp1[step_idx][within] += fd_step;
      Gm1[step_idx][within] -= fd_step;
    } else {
      Gpp1[step_idx][within - d] += fd_step;
      Gpm1[step_idx][within - d] -= fd_step;
    }
    J.col(j) = (replay(Gp1, Gpp1) - replay(Gm1, Gpm1)) / (2 * fd_step);
  }
  // rows of the standard Jacobian are outputs; norms are what we report, so
  // the convention does not matter here
  Mat diff = J - Mat::Identity(total, total);
  CouplingJacobianEstimate est;
  est.op_norm_minus_identity = diff.jacobiSvd().singularValues()(0);
  est.frobenius_sq_minus_identity = diff.squaredNorm();
  return est;
}

}  // namespace coupling
}  // namespace hmclab
