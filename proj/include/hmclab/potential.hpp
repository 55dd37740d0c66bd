#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "hmclab/rng.hpp"
#include "hmclab/types.hpp"

namespace hmclab {

/// Target model: U, its gradient, optionally its Hessian, together with the
/// smoothness metadata the chain guards rely on. `hessian_bound` dominates the
/// operator norm of the Hessian and `hessian_lipschitz` its Frobenius-Lipschitz
/// constant; for the non-global builtins both are certified only on `box`.
///
/// Immutable after construction; safe to share across concurrent chain runners.
class Potential {
 public:
  using ValueFn = std::function<double(const Vec&)>;
  using GradFn = std::function<Vec(const Vec&)>;
  using HessFn = std::function<Mat(const Vec&)>;

  Potential(std::string name, Eigen::Index dim, ValueFn value, GradFn grad,
            std::optional<HessFn> hess, double hessian_bound, double hessian_lipschitz,
            std::optional<double> lsi_constant = std::nullopt,
            std::optional<Box> box = std::nullopt)
      : name_(std::move(name)),
        dim_(dim),
        value_(std::move(value)),
        grad_(std::move(grad)),
        hess_(std::move(hess)),
        L_(hessian_bound),
        L_H_(hessian_lipschitz),
        lsi_(lsi_constant),
        box_(std::move(box)) {
    if (dim_ <= 0) throw std::invalid_argument("Potential: dim must be positive");
    if (L_ < 0 || L_H_ < 0) throw std::invalid_argument("Potential: negative smoothness bound");
  }

  const std::string& name() const { return name_; }
  Eigen::Index dim() const { return dim_; }
  double hessian_bound() const { return L_; }
  double hessian_lipschitz() const { return L_H_; }
  const std::optional<double>& lsi_constant() const { return lsi_; }
  const std::optional<Box>& box() const { return box_; }
  bool has_hessian() const { return hess_.has_value(); }

  double value(const Vec& x) const {
    require_dim(x, dim_, "Potential::value");
    return value_(x);
  }

  Vec gradient(const Vec& x) const {
    require_dim(x, dim_, "Potential::gradient");
    return grad_(x);
  }

  Mat hessian(const Vec& x) const {
    require_dim(x, dim_, "Potential::hessian");
    if (!hess_)
      throw std::runtime_error("Potential '" + name_ + "' has no Hessian; this operation needs one");
    return (*hess_)(x);
  }

 private:
  std::string name_;
  Eigen::Index dim_;
  ValueFn value_;
  GradFn grad_;
  std::optional<HessFn> hess_;
  double L_;
  double L_H_;
  std::optional<double> lsi_;
  std::optional<Box> box_;
};

struct EvalBundle {
  double value;
  Vec gradient;
  std::optional<Mat> hessian;
};

inline EvalBundle eval_bundle(const Potential& p, const Vec& x) {
  EvalBundle out{p.value(x), p.gradient(x), std::nullopt};
  if (p.has_hessian()) out.hessian = p.hessian(x);
  return out;
}

/// U multiplied by a positive factor (the annealing chain runs on beta*U).
inline Potential scaled_potential(const Potential& p, double factor) {
  if (factor <= 0) throw std::invalid_argument("scaled_potential: factor must be > 0");
  std::optional<Potential::HessFn> h;
  if (p.has_hessian()) h = [p, factor](const Vec& x) { return Mat(factor * p.hessian(x)); };
  return Potential(p.name() + "*" + std::to_string(factor), p.dim(),
                   [p, factor](const Vec& x) { return factor * p.value(x); },
                   [p, factor](const Vec& x) { return Vec(factor * p.gradient(x)); }, std::move(h),
                   factor * p.hessian_bound(), factor * p.hessian_lipschitz(), std::nullopt,
                   p.box());
}

// ---------------------------------------------------------------------------
// Builtin families
// ---------------------------------------------------------------------------

inline Potential zero_potential(Eigen::Index dim) {
  return Potential(
      "zero", dim, [](const Vec&) { return 0.0; }, [](const Vec& x) { return Vec(Vec::Zero(x.size())); },
      [](const Vec& x) { return Mat(Mat::Zero(x.size(), x.size())); }, 0.0, 0.0);
}

/// U(x) = x.Px/2 with P symmetric positive semidefinite.
inline Potential quadratic_potential(const Mat& P_in) {
  if (P_in.rows() != P_in.cols()) throw std::invalid_argument("quadratic_potential: P not square");
  Mat P = 0.5 * (P_in + P_in.transpose());
  if ((P - P_in).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + P_in.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("quadratic_potential: P must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(P);
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  if (lmin < -1e-12 * std::max(1.0, lmax))
    throw std::invalid_argument("quadratic_potential: P must be positive semidefinite");
  std::optional<double> lsi;
  if (lmin > 0) lsi = 1.0 / lmin;  // LSI constant of N(0, P^{-1})
  return Potential(
      "quadratic", P.rows(), [P](const Vec& x) { return 0.5 * x.dot(P * x); },
      [P](const Vec& x) { return Vec(P * x); }, [P](const Vec&) { return P; }, std::max(lmax, 0.0),
      0.0, lsi);
}

/// U(x) = scale*(x^2-1)^2 on a declared working box (default [-2, 2]).
inline Potential double_well_1d(double scale = 1.0, double half_width = 2.0) {
  if (scale <= 0 || half_width <= 1.0)
    throw std::invalid_argument("double_well_1d: need scale > 0 and box beyond the wells");
  const double b2 = half_width * half_width;
  const double L = scale * std::max(12.0 * b2 - 4.0, 4.0);  // sup |U''| on the box
  const double L_H = scale * 24.0 * half_width;             // sup |U'''| on the box
  Box box(Vec::Constant(1, -half_width), Vec::Constant(1, half_width));
  return Potential(
      "double_well_1d", 1,
      [scale](const Vec& x) {
        const double q = x[0] * x[0] - 1.0;
        return scale * q * q;
      },
      [scale](const Vec& x) {
        Vec g(1);
        g[0] = 4.0 * scale * x[0] * (x[0] * x[0] - 1.0);
        return g;
      },
      [scale](const Vec& x) {
        Mat h(1, 1);
        h(0, 0) = scale * (12.0 * x[0] * x[0] - 4.0);
        return h;
      },
      L, L_H, std::nullopt, box);
}

/// U(x) = scale*(|x|^2-1)^2 in dimension 2: a ring of minima at |x| = 1.
inline Potential mexican_hat_2d(double scale = 1.0, double half_width = 2.0) {
  if (scale <= 0 || half_width <= 1.0)
    throw std::invalid_argument("mexican_hat_2d: need scale > 0 and box containing the ring");
  const double R2 = 2.0 * half_width * half_width;  // squared corner radius
  // Hessian eigenvalues are 4s(3r^2-1) radially and 4s(r^2-1) tangentially.
  const double L = 4.0 * scale * std::max(3.0 * R2 - 1.0, 1.0);
  const double L_H = 8.0 * scale * std::sqrt(R2) * (std::sqrt(2.0) + 2.0);
  Box box(Vec::Constant(2, -half_width), Vec::Constant(2, half_width));
  return Potential(
      "mexican_hat_2d", 2,
      [scale](const Vec& x) {
        const double q = x.squaredNorm() - 1.0;
        return scale * q * q;
      },
      [scale](const Vec& x) { return Vec(4.0 * scale * (x.squaredNorm() - 1.0) * x); },
      [scale](const Vec& x) {
        const double q = x.squaredNorm() - 1.0;
        return Mat(4.0 * scale * (q * Mat::Identity(2, 2) + 2.0 * x * x.transpose()));
      },
      L, L_H, std::nullopt, box);
}

// ---------------------------------------------------------------------------
// Smoothness validation (report-only)
// ---------------------------------------------------------------------------

struct SmoothnessReport {
  double worst_hessian_ratio = 0.0;    // max |hess|_op / L over samples
  double worst_lipschitz_ratio = 0.0;  // max ||hess(x)-hess(y)||_F / (L_H |x-y|)
  int samples = 0;
  bool ok() const { return worst_hessian_ratio <= 1.0 + 1e-9 && worst_lipschitz_ratio <= 1.0 + 1e-9; }
};

/// Samples the box and measures how tight the declared L and L_H are.
inline SmoothnessReport validate_smoothness(const Potential& p, const Box& box, int n_samples,
                                            RngStream rng) {
  if (!p.has_hessian()) throw std::runtime_error("validate_smoothness: potential has no Hessian");
  if (n_samples < 2) throw std::invalid_argument("validate_smoothness: n_samples >= 2");
  SmoothnessReport rep;
  rep.samples = n_samples;
  std::vector<Vec> xs;
  std::vector<Mat> hs;
  xs.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    Vec u(box.dim());
    for (Eigen::Index j = 0; j < u.size(); ++j) u[j] = rng.uniform();
    Vec x = box.sample(u);
    Mat h = p.hessian(x);
    const double op = h.cwiseAbs().sum() > 0
                          ? Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (h + h.transpose()))
                                .eigenvalues()
                                .cwiseAbs()
                                .maxCoeff()
                          : 0.0;
    if (p.hessian_bound() > 0)
      rep.worst_hessian_ratio = std::max(rep.worst_hessian_ratio, op / p.hessian_bound());
    else if (op > 0)
      rep.worst_hessian_ratio = std::numeric_limits<double>::infinity();
    xs.push_back(std::move(x));
    hs.push_back(std::move(h));
  }
  for (size_t i = 0; i + 1 < xs.size(); ++i) {
    const double dist = (xs[i] - xs[i + 1]).norm();
    if (dist < 1e-12) continue;
    const double fro = (hs[i] - hs[i + 1]).norm();
    if (p.hessian_lipschitz() > 0)
      rep.worst_lipschitz_ratio =
          std::max(rep.worst_lipschitz_ratio, fro / (p.hessian_lipschitz() * dist));
    else if (fro > 1e-12)
      rep.worst_lipschitz_ratio = std::numeric_limits<double>::infinity();
  }
  return rep;
}

/// Central finite-difference gradient, used as the independent consistency
/// oracle for user-supplied gradients.
inline Vec fd_gradient(const Potential& p, const Vec& x, double eps = 1e-5) {
  Vec g(x.size());
  Vec xp = x, xm = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = eps * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (p.value(xp) - p.value(xm)) / (2 * h);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return g;
}

}  // namespace hmclab
