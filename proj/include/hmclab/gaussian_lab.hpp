#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "hmclab/certify.hpp"
#include "hmclab/chain.hpp"
#include "hmclab/types.hpp"

namespace hmclab {
namespace gauss {

struct GaussianLaw {
  Vec mean;
  Mat cov;

  GaussianLaw() = default;
  GaussianLaw(Vec m, Mat c) : mean(std::move(m)), cov(std::move(c)) { validate(); }

  void validate() const {
    if (cov.rows() != cov.cols() || cov.rows() != mean.size())
      throw std::invalid_argument("GaussianLaw: shape mismatch");
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw std::invalid_argument("GaussianLaw: covariance not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    if (es.eigenvalues().minCoeff() < -1e-12 * scale)
      throw std::invalid_argument("GaussianLaw: covariance not positive semidefinite");
  }

  Eigen::Index dim() const { return mean.size(); }
};

/// z' = map * z + noise, noise ~ N(0, noise_cov). Kernels compose in
/// application order: apply(k1 then k2) has map M2 M1 and noise M2 N1 M2^T + N2.
struct AffineKernel {
  Mat map;
  Mat noise_cov;

  GaussianLaw apply(const GaussianLaw& law) const {
    return GaussianLaw(map * law.mean, map * law.cov * map.transpose() + noise_cov);
  }

  AffineKernel then(const AffineKernel& second) const {
    return {second.map * map, second.map * noise_cov * second.map.transpose() + second.noise_cov};
  }

  static AffineKernel identity(Eigen::Index n) {
    return {Mat::Identity(n, n), Mat::Zero(n, n)};
  }
};

namespace detail {

inline void check_spd_input(const Mat& P) {
  if (P.rows() != P.cols()) throw std::invalid_argument("gaussian_lab: P not square");
  const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("gaussian_lab: P not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(P);
  if (es.eigenvalues().minCoeff() < -1e-12 * scale)
    throw std::invalid_argument("gaussian_lab: P not positive semidefinite");
}

inline Mat psd_sqrt(const Mat& S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  Vec lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Exact flow kernel for a quadratic target: decoupled harmonic oscillators in
/// the eigenbasis of P, free flight along null directions.
inline AffineKernel flow_kernel(const Mat& P, double t) {
  detail::check_spd_input(P);
  const auto d = P.rows();
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (P + P.transpose()));
  Vec lam = es.eigenvalues().cwiseMax(0.0);
  const Mat& Q = es.eigenvectors();
  Vec c(d), s_over_w(d), neg_w_s(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double w = std::sqrt(lam[i]);
    if (w * t < 1e-150) {
      c[i] = 1.0;
      s_over_w[i] = t;
      neg_w_s[i] = -w * w * t;  // first-order in lam, exact at lam = 0
    } else {
      c[i] = std::cos(w * t);
      s_over_w[i] = std::sin(w * t) / w;
      neg_w_s[i] = -w * std::sin(w * t);
    }
  }
  Mat F(2 * d, 2 * d);  // output-indexed: x' = F_xx x + F_xv v, etc.
  F.block(0, 0, d, d) = Q * c.asDiagonal() * Q.transpose();
  F.block(0, d, d, d) = Q * s_over_w.asDiagonal() * Q.transpose();
  F.block(d, 0, d, d) = Q * neg_w_s.asDiagonal() * Q.transpose();
  F.block(d, d, d, d) = Q * c.asDiagonal() * Q.transpose();
  return {F, Mat::Zero(2 * d, 2 * d)};
}

inline AffineKernel refresh_kernel(Eigen::Index d, double eta) {
  Mat M = Mat::Identity(2 * d, 2 * d);
  M.block(d, d, d, d) *= eta;
  Mat N = Mat::Zero(2 * d, 2 * d);
  N.block(d, d, d, d) = (1.0 - eta * eta) * Mat::Identity(d, d);
  return {M, N};
}

/// Exact affine representation of one chain transition on Gaussian laws.
inline AffineKernel kernel_of_transition(const Mat& P, const ChainParams& params) {
  const auto d = P.rows();
  AffineKernel H = flow_kernel(P, params.t);
  AffineKernel D = refresh_kernel(d, params.eta);
  switch (params.placement) {
    case RefreshPlacement::refresh_then_flow: return D.then(H);
    case RefreshPlacement::flow_then_refresh: return H.then(D);
    case RefreshPlacement::refresh_flow_refresh: return D.then(H).then(D);
  }
  throw std::logic_error("kernel_of_transition: bad placement");
}

/// The invariant law pi (x) N(0, I): requires P positive definite.
inline GaussianLaw stationary_law(const Mat& P) {
  detail::check_spd_input(P);
  const auto d = P.rows();
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (P + P.transpose()));
  if (es.eigenvalues().minCoeff() <= 0)
    throw std::invalid_argument("stationary_law: P must be positive definite");
  Mat cov = Mat::Zero(2 * d, 2 * d);
  cov.block(0, 0, d, d) =
      es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  cov.block(d, d, d, d) = Mat::Identity(d, d);
  return GaussianLaw(Vec::Zero(2 * d), cov);
}

inline GaussianLaw propagate(const GaussianLaw& law, const AffineKernel& k, int n) {
  if (n < 0) throw std::invalid_argument("propagate: n >= 0");
  GaussianLaw out = law;
  for (int i = 0; i < n; ++i) out = k.apply(out);
  return out;
}

// ---------------------------------------------------------------------------
// Closed-form divergences
// ---------------------------------------------------------------------------

struct DivergenceReport {
  double kl;
  double chi2;           // +infinity when the integrability condition fails
  double fisher;
  double mixed_fisher;   // gradient contracted by the mixed matrix
  double w2;             // Bures-Wasserstein distance (not squared)
  double modified_entropy;  // kl + weight * mixed_fisher
};

namespace detail {

/// KL through generalized eigenvalues; the map u -> u - log1p(u) keeps the
/// result accurate when the laws nearly coincide.
inline double kl_stable(const GaussianLaw& nu, const GaussianLaw& mu) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(nu.cov, mu.cov);
  const Vec lam = ges.eigenvalues();
  if (lam.minCoeff() <= 0) return std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    const double u = lam[i] - 1.0;
    acc += u - std::log1p(u);
  }
  Vec dm = nu.mean - mu.mean;
  return 0.5 * acc + 0.5 * dm.dot(mu.cov.ldlt().solve(dm));
}

inline double chi_square(const GaussianLaw& nu, const GaussianLaw& mu) {
  const auto k = nu.dim();
  Mat S1i = nu.cov.inverse();
  Mat S2i = mu.cov.inverse();
  Mat A = 2.0 * S1i - S2i;
  Eigen::LLT<Mat> llt(A);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  Vec b = 2.0 * (S1i * nu.mean) - S2i * mu.mean;
  const double c = -nu.mean.dot(S1i * nu.mean) + 0.5 * mu.mean.dot(S2i * mu.mean);
  const double logdet_S1 = Eigen::SelfAdjointEigenSolver<Mat>(nu.cov).eigenvalues().array().log().sum();
  const double logdet_S2 = Eigen::SelfAdjointEigenSolver<Mat>(mu.cov).eigenvalues().array().log().sum();
  double logdet_A = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) logdet_A += 2.0 * std::log(llt.matrixL()(i, i));
  const double log_integral =
      0.5 * logdet_S2 - logdet_S1 - 0.5 * logdet_A + 0.5 * b.dot(llt.solve(b)) + c;
  return std::expm1(log_integral);  // integral of h^2 dmu minus one
}

inline double fisher_quadratic(const GaussianLaw& nu, const GaussianLaw& mu, const Mat& A) {
  Mat S1i = nu.cov.inverse();
  Mat S2i = mu.cov.inverse();
  Mat D = S2i - S1i;
  Vec b = S2i * (nu.mean - mu.mean);
  Mat AD = A * D;
  return (AD * nu.cov * AD.transpose()).trace() + (A * b).squaredNorm();
}

}  // namespace detail

inline double w2_distance(const GaussianLaw& nu, const GaussianLaw& mu) {
  Mat r = detail::psd_sqrt(mu.cov);
  Mat cross = detail::psd_sqrt(r * nu.cov * r);
  const double sq = (nu.mean - mu.mean).squaredNorm() + nu.cov.trace() + mu.cov.trace() -
                    2.0 * cross.trace();
  return std::sqrt(std::max(0.0, sq));
}

/// `mix` defaults to [I | I] on position/velocity blocks, the unit-Hessian
/// mixed-gradient direction; pass [sqrt(L) I | I] for general normalization.
inline DivergenceReport divergences(const GaussianLaw& nu, const GaussianLaw& mu,
                                    double modified_weight = 0.0,
                                    const std::optional<Mat>& mix = std::nullopt) {
  if (nu.dim() != mu.dim()) throw std::invalid_argument("divergences: dimension mismatch");
  if (nu.dim() % 2 != 0) throw std::invalid_argument("divergences: expected phase-space laws");
  const auto d = nu.dim() / 2;
  const double mu_min = Eigen::SelfAdjointEigenSolver<Mat>(mu.cov).eigenvalues().minCoeff();
  const double nu_min = Eigen::SelfAdjointEigenSolver<Mat>(nu.cov).eigenvalues().minCoeff();
  if (mu_min <= 0 || nu_min <= 0)
    throw std::invalid_argument("divergences: covariances must be positive definite");
  Mat A_mixed;
  if (mix) {
    A_mixed = *mix;
  } else {
    A_mixed = Mat::Zero(d, 2 * d);
    A_mixed.block(0, 0, d, d) = Mat::Identity(d, d);
    A_mixed.block(0, d, d, d) = Mat::Identity(d, d);
  }
  DivergenceReport r{};
  r.kl = detail::kl_stable(nu, mu);
  r.chi2 = detail::chi_square(nu, mu);
  r.fisher = detail::fisher_quadratic(nu, mu, Mat::Identity(2 * d, 2 * d));
  r.mixed_fisher = detail::fisher_quadratic(nu, mu, A_mixed);
  r.w2 = w2_distance(nu, mu);
  r.modified_entropy = r.kl + modified_weight * r.mixed_fisher;
  return r;
}

// ---------------------------------------------------------------------------
// Bound verification against exact propagation
// ---------------------------------------------------------------------------

struct DissipationStep {
  int k;
  double modified_entropy;
  double ratio;  // L(nu_{k+1}) / L(nu_k)
};

struct DissipationReport {
  certify::Certificate certificate;
  std::vector<DissipationStep> steps;
  double max_ratio = 0.0;          // worst observed per-step ratio
  double certified_factor = 1.0;
  bool all_steps_within_bound = true;
};

namespace detail {

struct RescaledSetting {
  Mat P;          // unit-Hessian-bound quadratic form
  double t;       // rescaled time
  double c_ls;    // rescaled log-Sobolev constant
  Mat transform;  // (x, v) -> (sqrt(L) x, v)
};

inline RescaledSetting rescale_quadratic(const Mat& P, double t) {
  check_spd_input(P);
  Eigen::SelfAdjointEigenSolver<Mat> es(P);
  const double L = es.eigenvalues().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  if (L <= 0 || lmin <= 0)
    throw std::invalid_argument("gaussian_lab: quadratic verification needs P positive definite");
  const auto d = P.rows();
  RescaledSetting rs;
  rs.P = P / L;
  rs.t = t * std::sqrt(L);
  rs.c_ls = L / lmin;  // rescaled constant: L * (1/lambda_min)
  rs.transform = Mat::Identity(2 * d, 2 * d);
  rs.transform.block(0, 0, d, d) *= std::sqrt(L);
  return rs;
}

inline GaussianLaw push_linear(const GaussianLaw& law, const Mat& T) {
  return GaussianLaw(T * law.mean, T * law.cov * T.transpose());
}

}  // namespace detail

/// Propagates nu exactly and checks the certified per-step contraction of the
/// modified entropy. Works in the unit-Hessian normalization internally.
inline DissipationReport verify_dissipation(const Mat& P, const ChainParams& params,
                                            const GaussianLaw& nu0, int n_max,
                                            std::optional<double> fisher_weight = std::nullopt) {
  auto rs = detail::rescale_quadratic(P, params.t);
  ChainParams rp = params;
  rp.t = rs.t;
  certify::RateInputs in;
  in.t = rs.t;
  in.eta = params.eta;
  in.c_ls = rs.c_ls;
  in.fisher_weight = fisher_weight ? *fisher_weight : certify::fisher_weight_rule(rp.friction());
  DissipationReport rep;
  rep.certificate = certify::dissipation_rate(in);
  if (!rep.certificate.valid)
    throw std::runtime_error("verify_dissipation: certificate invalid at these parameters");
  rep.certified_factor = rep.certificate.contraction_factor;

  AffineKernel K = kernel_of_transition(rs.P, rp);
  GaussianLaw mu = stationary_law(rs.P);
  GaussianLaw nu = detail::push_linear(nu0, rs.transform);
  double prev = divergences(nu, mu, in.fisher_weight).modified_entropy;
  for (int k = 0; k < n_max; ++k) {
    nu = K.apply(nu);
    const double cur = divergences(nu, mu, in.fisher_weight).modified_entropy;
    const double ratio = prev > 0 ? cur / prev : 0.0;
    rep.steps.push_back({k + 1, cur, ratio});
    rep.max_ratio = std::max(rep.max_ratio, ratio);
    if (ratio > rep.certified_factor * (1.0 + 1e-9)) rep.all_steps_within_bound = false;
    prev = cur;
  }
  return rep;
}

struct RegularizationReport {
  double entropy_after;     // Ent(nu Q^n | mu)
  double w2_squared_before; // W2^2(nu, mu)
  double constant;          // certified multiplier
  int effective_steps;
  bool within_bound;
};

/// Checks Ent(nu Q^n | mu) <= c_n W2^2(nu, mu) with exact Gaussian formulas.
inline RegularizationReport verify_regularization(const Mat& P, const ChainParams& params,
                                                  const GaussianLaw& nu0, int n) {
  if (n < 1) throw std::invalid_argument("verify_regularization: n >= 1");
  auto rs = detail::rescale_quadratic(P, params.t);
  ChainParams rp = params;
  rp.t = rs.t;
  rp.placement = RefreshPlacement::refresh_flow_refresh;
  const auto rc = certify::n_step_regularization(rp.t, rp.eta, 0.0, n);
  AffineKernel Q = kernel_of_transition(rs.P, rp);
  GaussianLaw mu = stationary_law(rs.P);
  GaussianLaw nu = detail::push_linear(nu0, rs.transform);
  const double w2 = w2_distance(nu, mu);
  GaussianLaw nun = propagate(nu, Q, n);
  RegularizationReport rep;
  rep.entropy_after = divergences(nun, mu).kl;
  rep.w2_squared_before = w2 * w2;
  rep.constant = rc.constant;
  rep.effective_steps = rc.effective_steps;
  // the 1e-12 floor absorbs floating-point noise when nu0 is (numerically) mu
  rep.within_bound =
      rep.entropy_after <= rep.constant * rep.w2_squared_before * (1.0 + 1e-9) + 1e-12;
  return rep;
}

}  // namespace gauss
}  // namespace hmclab
