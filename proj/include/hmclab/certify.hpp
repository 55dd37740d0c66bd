#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

namespace hmclab {
namespace certify {

/// Inputs of the dissipation certificate. All formulas are stated at unit
/// Hessian bound; call `rescale_to_unit` first when hessian_bound != 1.
struct RateInputs {
  double t = 0.1;                 // integration time
  double eta = 0.0;               // damping in [0, 1)
  double fisher_weight = 0.01;    // weight of the mixed-gradient term
  double c_ls = 1.0;              // log-Sobolev constant of the target
  double hessian_bound = 1.0;     // L
  double hessian_lipschitz = 0.0; // L_H

  double friction() const { return (1.0 - eta) / t; }
  bool step_condition_ok() const { return t * std::sqrt(hessian_bound) <= 0.25 + 1e-12; }
};

struct RescaleReport {
  double factor_t;          // t -> t*sqrt(L)
  double factor_c_ls;       // C_LS -> L*C_LS
  double factor_friction;   // friction -> friction/sqrt(L)
  double factor_hessian_lipschitz;  // L_H -> L_H / L^{3/2}
  double wasserstein_conversion;    // plain W2 = L * rescaled W2
  double fisher_conversion;         // plain Fisher = L * rescaled Fisher
};

/// Moves general-L inputs to the unit-Hessian normalization in which all
/// certificate formulas are stated.
inline RateInputs rescale_to_unit(const RateInputs& in, RescaleReport* report = nullptr) {
  if (in.hessian_bound <= 0) throw std::invalid_argument("rescale_to_unit: L must be > 0");
  const double L = in.hessian_bound;
  const double s = std::sqrt(L);
  RateInputs out = in;
  out.t = in.t * s;
  out.c_ls = in.c_ls * L;
  out.hessian_lipschitz = in.hessian_lipschitz / (L * s);
  out.hessian_bound = 1.0;
  if (report) *report = {s, L, 1.0 / s, 1.0 / (L * s), L, L};
  return out;
}

/// Rough admissible choice of the mixed-Fisher weight in terms of the friction.
inline double fisher_weight_rule(double friction) {
  if (friction <= 0) throw std::invalid_argument("fisher_weight_rule: friction must be > 0");
  return friction / (14.0 + 8.0 * (friction + 3.0) * (friction + 3.0));
}

struct Certificate {
  // coefficients of the dissipation quadratic form
  double gain_position;   // 2t - 21/10 t^2
  double coupling;        // 1 + eta(-1 + 2t + 13/5 t^2)
  double gain_velocity;   // 1 - eta^2(1 + 2t + 31/10 t^2) + (1-eta^2)/(2a)
  double rate;            // the dissipation rate; positive iff the form is definite
  double contraction_factor;  // per-step upper bound on L(nu P)/L(nu)
  bool valid;                 // gain_position*gain_velocity > coupling^2
  bool step_condition_ok;     // t <= 1/4 at unit Hessian bound
  double fisher_weight;
  double fisher_weight_rule_value;  // the rough rule evaluated at (1-eta)/t
  bool meets_rule_guarantee;        // rate >= 3t/8
  double eta0_formula_gap;          // |limit formula - printed eta=0 formula|, eta=0 only
};

namespace detail {
struct FormCoeffs {
  double m1, m2, m3;
};

inline FormCoeffs form_coeffs(double t, double eta, double a) {
  FormCoeffs c;
  c.m1 = 2.0 * t - 2.1 * t * t;
  c.m2 = 1.0 + eta * (-1.0 + 2.0 * t + 2.6 * t * t);
  c.m3 = 1.0 - eta * eta * (1.0 + 2.0 * t + 3.1 * t * t) + (1.0 - eta * eta) / (2.0 * a);
  return c;
}

/// rate/(1-3t) written as (m1 m3 - m2^2) / (eta^2 [(m1+M)/2 + sqrt(...)]),
/// which avoids the cancellation of the printed form as eta -> 0 and reduces
/// exactly to the printed eta = 0 limit.
inline double balanced_root(double t, double eta, double a) {
  const FormCoeffs c = form_coeffs(t, eta, a);
  if (eta == 0.0) return c.m1 - 2.0 * a / (2.0 * a + 1.0);
  const double M = c.m3 / (eta * eta);
  const double cross = (c.m2 / eta) * (c.m2 / eta);
  const double num = (c.m1 * c.m3 - c.m2 * c.m2) / (eta * eta);
  const double den = 0.5 * (c.m1 + M) + std::sqrt(cross + 0.25 * (M - c.m1) * (M - c.m1));
  return num / den;
}
}  // namespace detail

/// Evaluates the dissipation certificate at unit Hessian bound.
inline Certificate dissipation_rate(const RateInputs& in) {
  if (in.fisher_weight <= 0) throw std::invalid_argument("dissipation_rate: fisher_weight must be > 0");
  if (in.eta < 0 || in.eta >= 1) throw std::invalid_argument("dissipation_rate: eta must be in [0, 1)");
  if (in.t <= 0) throw std::invalid_argument("dissipation_rate: t must be > 0");
  const double t = in.t, eta = in.eta, a = in.fisher_weight;
  const auto c = detail::form_coeffs(t, eta, a);
  Certificate cert{};
  cert.gain_position = c.m1;
  cert.coupling = c.m2;
  cert.gain_velocity = c.m3;
  cert.fisher_weight = a;
  cert.fisher_weight_rule_value = fisher_weight_rule(in.friction());
  cert.step_condition_ok = in.step_condition_ok();
  cert.valid = c.m1 * c.m3 > c.m2 * c.m2;
  cert.rate = (1.0 - 3.0 * t) * detail::balanced_root(t, eta, a);
  cert.eta0_formula_gap = 0.0;
  if (eta == 0.0) {
    // the printed eta = 0 expression and the limit of the eta > 0 formula
    const double printed = (1.0 - 3.0 * t) * (c.m1 - 2.0 * a / (2.0 * a + 1.0));
    const double limit = (1.0 - 3.0 * t) * detail::balanced_root(t, 1e-8, a);
    cert.eta0_formula_gap = std::abs(printed - limit);
  }
  cert.contraction_factor =
      cert.valid ? 1.0 / (1.0 + cert.rate / (std::max(in.c_ls, 1.0) / a + 2.0)) : 1.0;
  cert.meets_rule_guarantee = cert.valid && cert.rate >= 3.0 * t / 8.0 - 1e-15;
  return cert;
}

/// Maximizes the rate over the fisher weight by golden-section search on
/// (0, a_max]; ties break toward smaller weights.
inline double optimize_fisher_weight(double t, double eta, double a_max = 1.0) {
  auto rate_at = [&](double a) {
    RateInputs in;
    in.t = t;
    in.eta = eta;
    in.fisher_weight = a;
    return dissipation_rate(in).rate;
  };
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 1e-12, hi = a_max;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = rate_at(x1), f2 = rate_at(x2);
  for (int it = 0; it < 200; ++it) {
    if (f1 >= f2) {  // prefer the smaller-a side on ties
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = rate_at(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = rate_at(x2);
    }
    if (hi - lo < 1e-14 * a_max) break;
  }
  return f1 >= f2 ? x1 : x2;
}

// ---------------------------------------------------------------------------
// Regularization constants
// ---------------------------------------------------------------------------

struct RegularizationConstants {
  double constant;           // multiplies W2^2(nu, mu)
  double density_constant;   // the split form: multiplies |x-x'|^2
  double velocity_weight;    // ... and (velocity_weight)^2 |v-v'|^2 via this factor
  int effective_steps;       // min(n, floor(1/(4t)))
};

/// One-transition constant: max(1, eta^2 t^2) (13 / (2 t^2 (1-eta^2)) + 5 L_H^2 t^4).
inline RegularizationConstants one_step_regularization(double t, double eta,
                                                       double hessian_lipschitz) {
  if (eta < 0 || eta >= 1) throw std::invalid_argument("one_step_regularization: eta in [0,1)");
  if (t <= 0) throw std::invalid_argument("one_step_regularization: t > 0");
  const double lh = hessian_lipschitz;
  const double hat = 13.0 / (2.0 * t * t * (1.0 - eta * eta)) + 5.0 * lh * lh * t * t * t * t;
  RegularizationConstants rc;
  rc.density_constant = hat;
  rc.velocity_weight = eta * t;
  rc.constant = std::max(1.0, eta * eta * t * t) * hat;
  rc.effective_steps = 1;
  return rc;
}

/// n-transition constant, evaluated at s = t*min(n, floor(1/(4t))). Requires
/// eta > 0 and t <= 1/8 for n >= 2.
inline RegularizationConstants n_step_regularization(double t, double eta,
                                                     double hessian_lipschitz, int n) {
  if (n < 1) throw std::invalid_argument("n_step_regularization: n >= 1");
  if (n == 1) return one_step_regularization(t, eta, hessian_lipschitz);
  if (eta <= 0.0) throw std::runtime_error("n_step_regularization: n >= 2 requires eta > 0");
  if (t > 0.125 + 1e-12) throw std::runtime_error("n_step_regularization: n >= 2 requires t <= 1/8");
  const int cap = static_cast<int>(std::floor(1.0 / (4.0 * t)));
  const int ne = std::min(n, cap);
  const double s = t * ne;
  const double gamma = (1.0 - eta) / t;
  const double lh = hessian_lipschitz;
  const double poly = 12.0 / (eta * s * s) + 6.0 * gamma / (eta * s) + 4.0;
  const double hat = (s / gamma) * poly * poly + 132.0 * (lh * s) * (lh * s);
  RegularizationConstants rc;
  rc.density_constant = hat;
  rc.velocity_weight = eta * ne * t;
  rc.constant = std::max(1.0, eta * eta * s * s) *
                ((s / gamma) * poly * poly + 132.0 * std::exp(4.0 * s / 3.0) * (lh * s) * (lh * s));
  rc.effective_steps = ne;
  return rc;
}

// ---------------------------------------------------------------------------
// Classical inequalities and auxiliary bounds
// ---------------------------------------------------------------------------

struct DistanceBounds {
  double tv_bound;  // sqrt(2 * ent)
  double w2_bound;  // sqrt(c_ls * ent)
};

inline DistanceBounds pinsker_talagrand(double ent, double c_ls) {
  if (ent < 0) throw std::invalid_argument("pinsker_talagrand: ent >= 0");
  return {std::sqrt(2.0 * ent), std::sqrt(c_ls * ent)};
}

/// Log-Sobolev constant from a Poincare constant plus a Lyapunov condition
/// -grad U . grad W + lap W <= (-lambda |x|^2 + b) W with hess U >= -K.
inline double lsi_from_lyapunov(double c_p, double K, double lambda, double b, double m2) {
  if (lambda <= 0) throw std::invalid_argument("lsi_from_lyapunov: lambda must be > 0");
  if (c_p < 0 || K < 0 || b < 0 || m2 < 0)
    throw std::invalid_argument("lsi_from_lyapunov: inputs must be nonnegative");
  const double q = c_p * (b + lambda * m2);
  return 2.0 * std::sqrt((0.5 + q) / lambda) + (K * (1.0 + 2.0 * q) + 4.0 * lambda * c_p) / (2.0 * lambda);
}

/// Lyapunov pair for potentials with grad U(x).x >= rho |x|^2 - R, using the
/// exponential-quadratic Lyapunov function at its half-rate tuning.
inline std::pair<double, double> quadratic_tail_lyapunov(double rho, double R, int dim) {
  if (rho <= 0) throw std::invalid_argument("quadratic_tail_lyapunov: rho > 0");
  return {0.75 * rho * rho, 0.5 * rho * (R + dim)};
}

struct ComplexityInputs {
  double delta;          // integrator step size
  int n;                 // chain transitions
  double t;              // integration time per transition (K*delta = t)
  int dim;
  double c_ls;
  double mod_entropy0;   // modified entropy of the initial law
  double c_prime;        // empirical/user-supplied scheme constant
  int p = 2;             // Wasserstein order, 1 or 2
  double eta = 0.0;      // used for the friction entering the weight rule
};

/// Two-term distance bound: discretization term plus certified contraction of
/// the initial modified entropy, with the rough weight rule plugged in.
inline double complexity_bound(const ComplexityInputs& in) {
  if (in.p != 1 && in.p != 2) throw std::invalid_argument("complexity_bound: p in {1, 2}");
  if (in.delta < 0 || in.n < 0) throw std::invalid_argument("complexity_bound: bad inputs");
  const double nt = in.n * in.t;
  const double disc = in.c_prime * std::pow(in.delta, in.p) * nt * std::exp(in.c_prime * nt) *
                      std::pow(static_cast<double>(in.dim), in.p / 2.0);
  const double a = fisher_weight_rule((1.0 - in.eta) / in.t);
  const double factor = 1.0 + 3.0 * in.t / (8.0 * std::max(in.c_ls, 1.0) / a + 16.0);
  const double contraction = std::pow(factor, -0.5 * in.n) * std::sqrt(in.c_ls * in.mod_entropy0);
  return disc + contraction;
}

struct ComplexitySearchResult {
  long gradient_evaluations;  // K * n
  int n;
  double delta;
  double bound;
};

/// Smallest gradient budget K*n with the two-term bound below
/// epsilon * w2_scale, scanning n and per-n the coarsest admissible delta.
inline ComplexitySearchResult complexity_search(double epsilon, double w2_scale,
                                                ComplexityInputs base, int n_max = 200000) {
  const double target = epsilon * w2_scale;
  ComplexitySearchResult best{-1, 0, 0.0, 0.0};
  for (int n = 1; n <= n_max; n = (n < 32 ? n + 1 : n + std::max(1, n / 16))) {
    ComplexityInputs in = base;
    in.n = n;
    in.delta = 0.0;
    if (complexity_bound(in) > target) continue;  // contraction term alone too big
    // largest K such that the full bound fits; delta = t/K
    for (long K = 1; K <= (1L << 24); K *= 2) {
      in.delta = in.t / static_cast<double>(K);
      if (complexity_bound(in) <= target) {
        // refine downward between K/2 and K
        long lo = std::max(1L, K / 2), hi = K;
        while (lo < hi) {
          long mid = (lo + hi) / 2;
          in.delta = in.t / static_cast<double>(mid);
          if (complexity_bound(in) <= target)
            hi = mid;
          else
            lo = mid + 1;
        }
        in.delta = in.t / static_cast<double>(lo);
        if (best.gradient_evaluations < 0 || lo * static_cast<long>(n) < best.gradient_evaluations)
          best = {lo * static_cast<long>(n), n, in.delta, complexity_bound(in)};
        break;
      }
    }
  }
  if (best.gradient_evaluations < 0)
    throw std::runtime_error("complexity_search: target accuracy infeasible within scan budget");
  return best;
}

}  // namespace certify
}  // namespace hmclab
