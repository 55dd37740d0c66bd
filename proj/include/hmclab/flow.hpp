#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "hmclab/potential.hpp"
#include "hmclab/types.hpp"

namespace hmclab {

enum class IntegratorMethod { reference, verlet };

/// `reference` is the idealized flow: fixed-step RK4 with step doubling until
/// the relative change is below `tolerance` (or the substep budget is hit).
/// `verlet` applies the kick-drift-kick map with verlet_steps substeps, so the
/// emulated duration t always satisfies step*count = t.
struct IntegratorConfig {
  IntegratorMethod method = IntegratorMethod::reference;
  double tolerance = 1e-10;
  int min_substeps = 4;
  int max_substeps = 1 << 20;
  int verlet_steps = 16;
};

struct FlowResult {
  PhaseState state;
  std::optional<Mat> jacobian;  // rows indexed by input coordinates
  std::optional<Mat> e_t;       // quadrature comparison matrix, same indexing
  double energy_before = 0.0;
  double energy_after = 0.0;
  int substeps_used = 0;
};

inline double hamiltonian(const Potential& p, const PhaseState& z) {
  return p.value(z.x) + 0.5 * z.v.squaredNorm();
}

namespace detail {

struct OdeState {
  Vec x, v;
  Mat jac;  // 2d x 2d, empty when not tracked
};

/// One RK4 pass with n substeps. The Jacobian rides along through its linear
/// variational equation; Hessian moment integrals (for the comparison matrix)
/// accumulate with composite Simpson on the same grid, so n must be even when
/// moments are requested.
struct GridPass {
  OdeState s;
  Mat moment0;  // int_0^t hess(x_s) ds
  Mat moment1;  // int_0^t s hess(x_s) ds
};

inline void rk4_derivative(const Potential& p, const OdeState& s, bool with_jac, OdeState& out) {
  out.x = s.v;
  out.v = -p.gradient(s.x);
  if (with_jac) {
    const auto d = s.x.size();
    Mat H = p.hessian(s.x);
    // d/dt J = J * [[0, -H], [I, 0]] in the input-indexed convention
    out.jac.resize(2 * d, 2 * d);
    out.jac.block(0, 0, 2 * d, d) = s.jac.block(0, d, 2 * d, d);
    out.jac.block(0, d, 2 * d, d) = -s.jac.block(0, 0, 2 * d, d) * H;
  }
}

inline GridPass integrate_grid(const Potential& p, const PhaseState& z0, double t, int n,
                               bool with_jac, bool with_moments) {
  const auto d = z0.dim();
  GridPass g;
  g.s.x = z0.x;
  g.s.v = z0.v;
  if (with_jac) g.s.jac = Mat::Identity(2 * d, 2 * d);
  if (with_moments) {
    g.moment0 = Mat::Zero(d, d);
    g.moment1 = Mat::Zero(d, d);
  }
  const double h = t / n;
  OdeState k1, k2, k3, k4, tmp;
  auto step_weights = [&](int i) {
    // composite Simpson weights on nodes 0..n
    if (i == 0 || i == n) return 1.0;
    return (i % 2 == 1) ? 4.0 : 2.0;
  };
  if (with_moments) {
    Mat H = p.hessian(g.s.x);
    g.moment0 += step_weights(0) * H;
    // moment1 weight is s=0 at the first node
  }
  for (int i = 0; i < n; ++i) {
    rk4_derivative(p, g.s, with_jac, k1);
    tmp.x = g.s.x + 0.5 * h * k1.x;
    tmp.v = g.s.v + 0.5 * h * k1.v;
    if (with_jac) tmp.jac = g.s.jac + 0.5 * h * k1.jac;
    rk4_derivative(p, tmp, with_jac, k2);
    tmp.x = g.s.x + 0.5 * h * k2.x;
    tmp.v = g.s.v + 0.5 * h * k2.v;
    if (with_jac) tmp.jac = g.s.jac + 0.5 * h * k2.jac;
    rk4_derivative(p, tmp, with_jac, k3);
    tmp.x = g.s.x + h * k3.x;
    tmp.v = g.s.v + h * k3.v;
    if (with_jac) tmp.jac = g.s.jac + h * k3.jac;
    rk4_derivative(p, tmp, with_jac, k4);
    g.s.x += (h / 6.0) * (k1.x + 2 * k2.x + 2 * k3.x + k4.x);
    g.s.v += (h / 6.0) * (k1.v + 2 * k2.v + 2 * k3.v + k4.v);
    if (with_jac) g.s.jac += (h / 6.0) * (k1.jac + 2 * k2.jac + 2 * k3.jac + k4.jac);
    if (with_moments) {
      const double s_node = (i + 1) * h;
      Mat H = p.hessian(g.s.x);
      g.moment0 += step_weights(i + 1) * H;
      g.moment1 += step_weights(i + 1) * s_node * H;
    }
  }
  if (with_moments) {
    g.moment0 *= h / 3.0;
    g.moment1 *= h / 3.0;
  }
  return g;
}

inline double pass_difference(const GridPass& a, const GridPass& b, bool with_jac) {
  double scale = std::max(1.0, std::max(b.s.x.cwiseAbs().maxCoeff(), b.s.v.cwiseAbs().maxCoeff()));
  double err = std::max((a.s.x - b.s.x).cwiseAbs().maxCoeff(), (a.s.v - b.s.v).cwiseAbs().maxCoeff()) / scale;
  if (with_jac) {
    double js = std::max(1.0, b.s.jac.cwiseAbs().maxCoeff());
    err = std::max(err, (a.s.jac - b.s.jac).cwiseAbs().maxCoeff() / js);
  }
  return err;
}

}  // namespace detail

/// One kick-drift-kick step. Exactly two gradient evaluations; callers that
/// loop over steps can pass the trailing gradient back in via `grad_start`
/// so a K-step trajectory costs K+1 evaluations.
inline PhaseState verlet_step(const Potential& p, const PhaseState& z, double delta,
                              const Vec* grad_start = nullptr, Vec* grad_end = nullptr) {
  if (delta <= 0) throw std::invalid_argument("verlet_step: delta must be > 0");
  require_dim(z.x, p.dim(), "verlet_step");
  Vec g0 = grad_start ? *grad_start : p.gradient(z.x);
  Vec v_half = z.v - 0.5 * delta * g0;
  Vec x1 = z.x + delta * v_half;
  Vec g1 = p.gradient(x1);
  Vec v1 = v_half - 0.5 * delta * g1;
  if (grad_end) *grad_end = g1;
  return PhaseState(std::move(x1), std::move(v1));
}

inline PhaseState verlet_flow(const Potential& p, const PhaseState& z, double delta, int count) {
  PhaseState cur = z;
  Vec g = p.gradient(cur.x);
  for (int k = 0; k < count; ++k) {
    Vec g_next;
    cur = verlet_step(p, cur, delta, &g, &g_next);
    g = std::move(g_next);
  }
  return cur;
}

/// Integrates the Hamiltonian dynamics for duration t. With `want_jacobian`
/// the variational equation runs alongside; with `want_comparison` the
/// quadrature comparison matrix is assembled from the same trajectory.
inline FlowResult flow(const Potential& p, const PhaseState& z, double t,
                       const IntegratorConfig& cfg = {}, bool want_jacobian = false,
                       bool want_comparison = false) {
  require_dim(z.x, p.dim(), "flow");
  if (t < 0) throw std::invalid_argument("flow: t must be >= 0");
  FlowResult out;
  out.energy_before = hamiltonian(p, z);
  const auto d = z.dim();
  if ((want_jacobian || want_comparison) && !p.has_hessian())
    throw std::runtime_error("flow: Jacobian/comparison requested but potential has no Hessian");

  if (t == 0) {
    out.state = z;
    if (want_jacobian) out.jacobian = Mat::Identity(2 * d, 2 * d);
    if (want_comparison) {
      Mat e = Mat::Identity(2 * d, 2 * d);
      out.e_t = e;
    }
    out.energy_after = out.energy_before;
    return out;
  }

  if (cfg.method == IntegratorMethod::verlet) {
    if (want_jacobian || want_comparison)
      throw std::invalid_argument("flow: Jacobian/comparison only available with the reference integrator");
    const int K = cfg.verlet_steps;
    out.state = verlet_flow(p, z, t / K, K);
    out.substeps_used = K;
    out.energy_after = hamiltonian(p, out.state);
    return out;
  }

  int n = std::max(4, cfg.min_substeps);
  if (n % 2) ++n;
  detail::GridPass coarse = detail::integrate_grid(p, z, t, n, want_jacobian, want_comparison);
  for (;;) {
    detail::GridPass fine = detail::integrate_grid(p, z, t, 2 * n, want_jacobian, want_comparison);
    const double err = detail::pass_difference(coarse, fine, want_jacobian);
    if (err <= cfg.tolerance || 2 * n >= cfg.max_substeps) {
      if (err > cfg.tolerance)
        throw std::runtime_error("flow: tolerance not reached within substep budget");
      out.state = PhaseState(fine.s.x, fine.s.v);
      out.substeps_used = 2 * n;
      if (want_jacobian) out.jacobian = fine.s.jac;
      if (want_comparison) {
        Mat e(2 * d, 2 * d);
        e.block(0, 0, d, d) = Mat::Identity(d, d) - (t * fine.moment0 - fine.moment1);
        e.block(0, d, d, d) = -fine.moment0;
        e.block(d, 0, d, d) = t * Mat::Identity(d, d);
        e.block(d, d, d, d) = Mat::Identity(d, d) - fine.moment1;
        out.e_t = e;
      }
      out.energy_after = hamiltonian(p, out.state);
      return out;
    }
    n *= 2;
    coarse = std::move(fine);
  }
}

/// Convenience wrapper returning only the endpoint.
inline PhaseState flow_state(const Potential& p, const PhaseState& z, double t,
                             const IntegratorConfig& cfg = {}) {
  if (cfg.method == IntegratorMethod::verlet) return verlet_flow(p, z, t / cfg.verlet_steps, cfg.verlet_steps);
  return flow(p, z, t, cfg).state;
}

/// E_t assembled from quadrature of the Hessian along the trajectory.
inline Mat comparison_matrix(const Potential& p, const PhaseState& z, double t,
                             const IntegratorConfig& cfg = {}) {
  return *flow(p, z, t, cfg, false, true).e_t;
}

/// Residual of the certified Jacobian comparison, stated at unit Hessian bound:
/// after conjugating by diag(sqrt(L) I, I) the difference must stay below
/// tau^3 e^tau / 6 with tau = t sqrt(L).
struct JacobianComparison {
  double residual;  // operator norm of the conjugated difference
  double bound;     // tau^3 e^tau / 6
  bool ok() const { return residual <= bound * (1.0 + 1e-9); }
};

inline JacobianComparison jacobian_comparison(const Potential& p, const PhaseState& z, double t,
                                              const IntegratorConfig& cfg = {}) {
  FlowResult fr = flow(p, z, t, cfg, true, true);
  const auto d = z.dim();
  const double L = std::max(p.hessian_bound(), 1e-300);
  const double s = std::sqrt(L);
  Mat diff = *fr.jacobian - *fr.e_t;
  // rescale to unit Hessian bound: conjugate by diag(s I, I)
  diff.block(0, d, d, d) /= s;
  diff.block(d, 0, d, d) *= s;
  const double tau = t * s;
  JacobianComparison jc;
  jc.residual = diff.jacobiSvd().singularValues()(0);
  jc.bound = tau * tau * tau * std::exp(tau) / 6.0;
  return jc;
}

// ---------------------------------------------------------------------------
// Inverse-position problem: find v with Phi_t^1(x, v) = x_target.
// ---------------------------------------------------------------------------

struct InverseMapSolution {
  Vec v;
  double residual = 0.0;
  int iterations = 0;
};

inline InverseMapSolution inverse_position_map(const Potential& p, const Vec& x,
                                               const Vec& x_target, double t,
                                               const IntegratorConfig& cfg = {},
                                               double tol = 1e-10, int max_iter = 50) {
  require_dim(x, p.dim(), "inverse_position_map");
  require_dim(x_target, p.dim(), "inverse_position_map");
  if (t <= 0) throw std::invalid_argument("inverse_position_map: t must be > 0");
  const auto d = x.size();
  // integrate well below the solver tolerance so the line search is not
  // chasing integrator noise
  IntegratorConfig inner = cfg;
  inner.tolerance = std::min(cfg.tolerance, 0.01 * tol);
  Vec v = (x_target - x) / t;
  double res = (flow_state(p, PhaseState(x, v), t, inner).x - x_target).norm();
  for (int it = 0; it < max_iter; ++it) {
    if (res <= tol) return {v, res, it};
    FlowResult fr = flow(p, PhaseState(x, v), t, inner, true);
    Vec r = fr.state.x - x_target;
    // standard output-indexed Jacobian of v -> Phi^1 is the transpose of the
    // (v-rows, position-columns) block
    Mat J = fr.jacobian->block(d, 0, d, d).transpose();
    Vec step = J.partialPivLu().solve(-r);
    double alpha = 1.0;
    bool moved = false;
    for (int back = 0; back < 30; ++back) {
      Vec v_try = v + alpha * step;
      const double res_try = (flow_state(p, PhaseState(x, v_try), t, inner).x - x_target).norm();
      if (res_try < res || res_try <= tol) {
        v = v_try;
        res = res_try;
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) break;  // stalled at the attainable accuracy
  }
  if (res <= tol) return {v, res, max_iter};
  throw std::runtime_error("inverse_position_map: no convergence (preconditions violated?)");
}

/// Velocity v' with Phi_t^1(x + shift_start, v') = Phi_t^1(x, v) + shift_end,
/// i.e. the reconnecting velocity for a perturbed start/end pair.
inline InverseMapSolution reconnect_velocity(const Potential& p, const Vec& shift_start,
                                             const Vec& shift_end, const Vec& x, const Vec& v,
                                             double t, const IntegratorConfig& cfg = {},
                                             double tol = 1e-10) {
  Vec x1 = flow_state(p, PhaseState(x, v), t, cfg).x;
  return inverse_position_map(p, x + shift_start, x1 + shift_end, t, cfg, tol);
}

struct InverseMapDerivatives {
  Vec value;  // the reconnecting velocity
  Mat dx;     // input-indexed gradient wrt x
  Mat dv;     // input-indexed gradient wrt v
};

/// Derivatives of the reconnecting velocity by implicit differentiation of the
/// position equation through the flow Jacobians.
inline InverseMapDerivatives inverse_map_derivatives(const Potential& p, const Vec& shift_start,
                                                     const Vec& shift_end, const Vec& x,
                                                     const Vec& v, double t,
                                                     const IntegratorConfig& cfg = {},
                                                     double tol = 1e-10) {
  const auto d = x.size();
  InverseMapSolution sol = reconnect_velocity(p, shift_start, shift_end, x, v, t, cfg, tol);
  Mat J_here = *flow(p, PhaseState(x, v), t, cfg, true).jacobian;
  Mat J_there = *flow(p, PhaseState(x + shift_start, sol.v), t, cfg, true).jacobian;
  // output-indexed blocks of Phi^1
  Mat C = J_here.block(0, 0, d, d).transpose();   // d Phi^1 / d x   at (x, v)
  Mat D = J_here.block(d, 0, d, d).transpose();   // d Phi^1 / d v   at (x, v)
  Mat B = J_there.block(0, 0, d, d).transpose();  // d Phi^1 / d x   at (x+u0, v')
  Mat A = J_there.block(d, 0, d, d).transpose();  // d Phi^1 / d v'  at (x+u0, v')
  auto lu = A.partialPivLu();
  Mat dvdx_std = lu.solve(C - B);
  Mat dvdv_std = lu.solve(D);
  return {sol.v, dvdx_std.transpose(), dvdv_std.transpose()};
}

}  // namespace hmclab
