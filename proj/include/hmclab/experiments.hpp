#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hmclab/anneal.hpp"
#include "hmclab/certify.hpp"
#include "hmclab/chain.hpp"
#include "hmclab/coupling.hpp"
#include "hmclab/gaussian_lab.hpp"
#include "hmclab/meanfield.hpp"
#include "hmclab/threading.hpp"

namespace hmclab {
namespace experiments {

inline double fit_loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double lx = std::log(xs[i]), ly = std::log(std::max(ys[i], 1e-300));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// Discretization error: idealized vs Verlet chains under shared draws
// ---------------------------------------------------------------------------

struct VerletErrorRow {
  double delta;
  int verlet_steps;
  double mean_error;     // E |z_ideal - z_verlet|
  double mean_sq_error;  // E |z_ideal - z_verlet|^2
  double moment_ratio_p2;  // E|z|^4 / d^2 for the idealized endpoint
};

struct VerletErrorReport {
  std::vector<VerletErrorRow> rows;
  double slope_p1;  // log mean_error vs log delta
  double slope_p2;  // log mean_sq_error vs log delta
};

using StateSampler = std::function<PhaseState(RngStream&)>;

/// Couples the idealized and Verlet chains synchronously (same Gaussian
/// draws) and measures the endpoint gap for each step size.
inline VerletErrorReport verlet_error_experiment(const Potential& p, const ChainParams& params,
                                                 const StateSampler& init, int n_steps,
                                                 const std::vector<int>& verlet_steps_list,
                                                 int replicas, RngStream rng, int threads = 0) {
  params.validate(p);
  VerletErrorReport rep;
  const int nt = resolve_threads(threads);
  for (int K : verlet_steps_list) {
    if (K < 1) throw std::invalid_argument("verlet_error_experiment: verlet steps >= 1");
    std::vector<double> err(replicas), err2(replicas), m4(replicas);
    parallel_for(replicas, nt, [&](long r) {
      RngStream sub = rng.substream(static_cast<std::uint64_t>(r));
      PhaseState ideal = init(sub);
      PhaseState discrete = ideal;
      const auto d = ideal.dim();
      ChainParams ip = params;
      ChainParams vp = params;
      vp.integrator.method = IntegratorMethod::verlet;
      vp.integrator.verlet_steps = K;
      for (int s = 0; s < n_steps; ++s) {
        std::vector<Vec> gs;
        for (int i = 0; i < refreshes_per_transition(params.placement); ++i)
          gs.push_back(sub.normal_vector(d));
        ideal = transition_given(p, ip, ideal, params.t, gs);
        discrete = transition_given(p, vp, discrete, params.t, gs);
      }
      const double e = phase_distance(ideal, discrete);
      err[r] = e;
      err2[r] = e * e;
      const double zsq = ideal.x.squaredNorm() + ideal.v.squaredNorm();
      m4[r] = zsq * zsq;
    });
    VerletErrorRow row;
    row.delta = params.t / K;
    row.verlet_steps = K;
    row.mean_error = 0;
    row.mean_sq_error = 0;
    row.moment_ratio_p2 = 0;
    for (int r = 0; r < replicas; ++r) {
      row.mean_error += err[r];
      row.mean_sq_error += err2[r];
      row.moment_ratio_p2 += m4[r];
    }
    row.mean_error /= replicas;
    row.mean_sq_error /= replicas;
    row.moment_ratio_p2 /= replicas * std::pow(static_cast<double>(p.dim()), 2.0);
    rep.rows.push_back(row);
  }
  std::vector<double> deltas, e1, e2;
  for (const auto& r : rep.rows) {
    deltas.push_back(r.delta);
    e1.push_back(r.mean_error);
    e2.push_back(r.mean_sq_error);
  }
  rep.slope_p1 = fit_loglog_slope(deltas, e1);
  rep.slope_p2 = fit_loglog_slope(deltas, e2);
  return rep;
}

// ---------------------------------------------------------------------------
// Exact dissipation sweep on quadratic targets (CSV backend of `gaussian`)
// ---------------------------------------------------------------------------

struct DissipationGridRow {
  double t, eta;
  int k;
  double kl, fisher, mixed_fisher, modified_entropy;
  double certified_factor, observed_ratio;
};

inline std::vector<DissipationGridRow> dissipation_grid(const Mat& P,
                                                        const std::vector<double>& ts,
                                                        const std::vector<double>& etas,
                                                        const gauss::GaussianLaw& nu0, int n_steps) {
  std::vector<DissipationGridRow> rows;
  for (double t : ts) {
    for (double eta : etas) {
      ChainParams params;
      params.t = t;
      params.eta = eta;
      auto rs = gauss::detail::rescale_quadratic(P, t);
      ChainParams rp = params;
      rp.t = rs.t;
      const double a = certify::fisher_weight_rule(rp.friction());
      certify::RateInputs in;
      in.t = rs.t;
      in.eta = eta;
      in.c_ls = rs.c_ls;
      in.fisher_weight = a;
      const auto cert = certify::dissipation_rate(in);
      gauss::AffineKernel K = gauss::kernel_of_transition(rs.P, rp);
      gauss::GaussianLaw mu = gauss::stationary_law(rs.P);
      gauss::GaussianLaw nu = gauss::detail::push_linear(nu0, rs.transform);
      double prev = gauss::divergences(nu, mu, a).modified_entropy;
      for (int k = 1; k <= n_steps; ++k) {
        nu = K.apply(nu);
        auto div = gauss::divergences(nu, mu, a);
        rows.push_back({t, eta, k, div.kl, div.fisher, div.mixed_fisher, div.modified_entropy,
                        cert.contraction_factor, prev > 0 ? div.modified_entropy / prev : 0.0});
        prev = div.modified_entropy;
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Annealing with replicas
// ---------------------------------------------------------------------------

struct AnnealSummaryRow {
  long step;
  double beta, t, eta;
  double energy_q10, energy_q50, energy_q90;
  std::vector<double> exceed_fraction;  // per threshold
};

struct AnnealReport {
  std::vector<AnnealSummaryRow> rows;
  std::vector<double> thresholds;
  std::vector<std::vector<double>> final_energy_by_checkpoint;  // [checkpoint][replica]
};

inline AnnealReport anneal_experiment(const Potential& p, const anneal::AnnealSchedule& sched,
                                      const StateSampler& init, long n_steps,
                                      const std::vector<long>& checkpoints,
                                      std::vector<double> thresholds, int replicas, RngStream rng,
                                      int threads = 0) {
  sched.validate();
  AnnealReport rep;
  rep.thresholds = thresholds;
  const int nt = resolve_threads(threads);
  std::vector<std::vector<double>> energy(checkpoints.size(), std::vector<double>(replicas));
  parallel_for(replicas, nt, [&](long r) {
    RngStream sub = rng.substream(static_cast<std::uint64_t>(r));
    PhaseState z0 = init(sub);
    auto recs = anneal::run_annealing(p, sched, z0, n_steps, sub, checkpoints);
    for (size_t c = 0; c < checkpoints.size(); ++c) {
      for (const auto& rec : recs)
        if (rec.step == checkpoints[c]) energy[c][r] = rec.energy;
    }
  });
  rep.final_energy_by_checkpoint = energy;
  for (size_t c = 0; c < checkpoints.size(); ++c) {
    std::vector<double> es = energy[c];
    std::sort(es.begin(), es.end());
    auto q = [&](double f) { return es[static_cast<size_t>(f * (es.size() - 1))]; };
    AnnealSummaryRow row;
    row.step = checkpoints[c];
    const auto pt = sched.at(checkpoints[c]);
    row.beta = pt.beta;
    row.t = pt.t;
    row.eta = pt.eta;
    row.energy_q10 = q(0.10);
    row.energy_q50 = q(0.50);
    row.energy_q90 = q(0.90);
    for (double u : thresholds) {
      int count = 0;
      for (double e : energy[c])
        if (e >= u) ++count;
      row.exceed_fraction.push_back(static_cast<double>(count) / replicas);
    }
    rep.rows.push_back(row);
  }
  return rep;
}

/// Bootstrap confidence interval for fraction(n_late >= u) - fraction(n_early >= u).
inline ot::BootstrapInterval exceedance_drop_interval(const std::vector<double>& early,
                                                      const std::vector<double>& late,
                                                      double threshold, RngStream rng,
                                                      int resamples = 2000, double level = 0.95) {
  if (early.size() != late.size()) throw std::invalid_argument("exceedance_drop_interval: size mismatch");
  const int n = static_cast<int>(early.size());
  auto stat = [&](const std::vector<int>& idx) {
    double fe = 0, fl = 0;
    for (int i : idx) {
      fe += early[i] >= threshold ? 1.0 : 0.0;
      fl += late[i] >= threshold ? 1.0 : 0.0;
    }
    return (fe - fl) / static_cast<double>(idx.size());  // positive when late < early
  };
  return ot::bootstrap(n, resamples, level, rng, stat);
}

}  // namespace experiments
}  // namespace hmclab
