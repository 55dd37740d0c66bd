#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "hmclab/chain.hpp"
#include "hmclab/potential.hpp"
#include "hmclab/threading.hpp"
#include "hmclab/wasserstein.hpp"

namespace hmclab {
namespace meanfield {

/// N exchangeable particles in R^p with confinement U and even pairwise
/// interaction W: U_N(x) = sum_i U(x_i) + (1/(2N)) sum_{i != j} W(x_i - x_j).
struct MeanFieldSpec {
  Eigen::Index p = 1;
  int N = 2;
  Potential confinement;
  Potential interaction;

  MeanFieldSpec(Eigen::Index p_, int N_, Potential conf, Potential inter)
      : p(p_), N(N_), confinement(std::move(conf)), interaction(std::move(inter)) {
    if (p <= 0 || N < 1) throw std::invalid_argument("MeanFieldSpec: need p >= 1, N >= 1");
    if (confinement.dim() != p || interaction.dim() != p)
      throw std::invalid_argument("MeanFieldSpec: component potentials must live on R^p");
  }
};

namespace detail {

inline void check_even(const Potential& W, RngStream rng, int samples = 32) {
  for (int i = 0; i < samples; ++i) {
    Vec y = 2.0 * rng.normal_vector(W.dim());
    const double a = W.value(y), b = W.value(-y);
    if (std::abs(a - b) > 1e-9 * (1.0 + std::abs(a)))
      throw std::invalid_argument("build_meanfield: interaction potential is not even");
  }
}

}  // namespace detail

/// Assembles U_N on R^{pN}. Value and gradient are pairwise sums in O(N^2);
/// the Hessian is built only when both components provide one. The declared
/// smoothness uses L = L_U + 2 L_W and L_H = sqrt(L_HU^2 + 2 L_HW^2).
inline Potential build_meanfield(const MeanFieldSpec& spec, std::uint64_t evenness_check_seed = 7) {
  detail::check_even(spec.interaction, RngStream(evenness_check_seed));
  const auto p = spec.p;
  const int N = spec.N;
  const Potential U = spec.confinement;
  const Potential W = spec.interaction;

  // evenness of W folds each ordered pair with its mirror, so the loops run
  // over unordered pairs with weight 1/N
  auto value = [p, N, U, W](const Vec& x) {
    double acc = 0;
    for (int i = 0; i < N; ++i) acc += U.value(x.segment(i * p, p));
    double inter = 0;
    for (int i = 0; i < N; ++i)
      for (int j = i + 1; j < N; ++j) inter += W.value(x.segment(i * p, p) - x.segment(j * p, p));
    return acc + inter / N;
  };
  auto grad = [p, N, U, W](const Vec& x) {
    Vec g(x.size());
    for (int i = 0; i < N; ++i) g.segment(i * p, p) = U.gradient(x.segment(i * p, p));
    for (int i = 0; i < N; ++i)
      for (int j = i + 1; j < N; ++j) {
        Vec gw = W.gradient(x.segment(i * p, p) - x.segment(j * p, p)) / static_cast<double>(N);
        g.segment(i * p, p) += gw;
        g.segment(j * p, p) -= gw;
      }
    return g;
  };
  std::optional<Potential::HessFn> hess;
  if (U.has_hessian() && W.has_hessian()) {
    hess = [p, N, U, W](const Vec& x) {
      Mat H = Mat::Zero(x.size(), x.size());
      for (int i = 0; i < N; ++i)
        H.block(i * p, i * p, p, p) = U.hessian(x.segment(i * p, p));
      for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j) {
          Mat Hw = W.hessian(x.segment(i * p, p) - x.segment(j * p, p)) / static_cast<double>(N);
          H.block(i * p, i * p, p, p) += Hw;
          H.block(j * p, j * p, p, p) += Hw;
          H.block(i * p, j * p, p, p) -= Hw;
          H.block(j * p, i * p, p, p) -= Hw;
        }
      return H;
    };
  }
  const double L = U.hessian_bound() + 2.0 * W.hessian_bound();
  const double L_H = std::sqrt(U.hessian_lipschitz() * U.hessian_lipschitz() +
                               2.0 * W.hessian_lipschitz() * W.hessian_lipschitz());
  return Potential("meanfield[" + U.name() + "," + W.name() + "]", p * N, std::move(value),
                   std::move(grad), std::move(hess), L, L_H);
}

using ParticleSampler = std::function<PhaseState(RngStream&)>;  // one particle in R^{2p}

/// Stacks N i.i.d. particle draws into one chain state.
inline PhaseState sample_product_state(const ParticleSampler& sampler, Eigen::Index p, int N,
                                       RngStream& rng) {
  Vec x(p * N), v(p * N);
  for (int i = 0; i < N; ++i) {
    PhaseState zi = sampler(rng);
    require_dim(zi.x, p, "sample_product_state");
    x.segment(i * p, p) = zi.x;
    v.segment(i * p, p) = zi.v;
  }
  return PhaseState(std::move(x), std::move(v));
}

struct ChaosRow {
  int N;
  double w2sq;
  double lo, hi;  // bootstrap band
  std::string method;
};

struct ChaosReport {
  int k;  // marginal size
  std::vector<ChaosRow> rows;
  double slope;            // of log w2sq against log N
  double slope_lo, slope_hi;
  int reference_N;
};

struct ChaosConfig {
  std::vector<int> N_list{16, 64};
  int reference_N = 256;
  int k = 1;
  int n_steps = 30;
  int replicas = 512;        // chain runs per particle count
  int reference_replicas = 64;
  int bootstrap_resamples = 400;
  double bootstrap_level = 0.95;
  int threads = 0;
};

/// Propagation-of-chaos experiment: for each N, the empirical k-particle
/// position marginal after n steps is compared against a large-N reference
/// run by empirical W2; the 1/N trend is summarized by a log-log slope.
inline ChaosReport chaos_experiment(const MeanFieldSpec& spec, const ChainParams& params,
                                    const ParticleSampler& nu0, const ChaosConfig& cfg,
                                    RngStream rng) {
  if (cfg.k != 1) throw std::invalid_argument("chaos_experiment: only k = 1 is implemented");
  const auto p = spec.p;
  const int threads = resolve_threads(cfg.threads);

  auto harvest = [&](int N, int replicas, std::uint64_t stream_salt) {
    MeanFieldSpec s(p, N, spec.confinement, spec.interaction);
    Potential UN = build_meanfield(s);
    ChainParams local = params;
    std::vector<std::vector<Vec>> per_replica(replicas);
    parallel_for(replicas, threads, [&](long r) {
      RngStream sub = rng.substream(stream_salt + static_cast<std::uint64_t>(r));
      PhaseState z = sample_product_state(nu0, p, N, sub);
      for (int step = 0; step < cfg.n_steps; ++step) z = transition(UN, local, z, sub);
      auto& cloud = per_replica[r];
      cloud.reserve(N);
      for (int i = 0; i < N; ++i) cloud.push_back(z.x.segment(i * p, p));
    });
    return per_replica;
  };

  auto ref_clouds = harvest(cfg.reference_N, cfg.reference_replicas, 0x52454600ull);

  ChaosReport rep;
  rep.k = cfg.k;
  rep.reference_N = cfg.reference_N;
  RngStream util = rng.substream(0xB00757ull);

  // equal sample counts against the reference so the empirical bias cancels
  // in comparisons across N
  size_t m_ref = 0;
  for (auto& c : ref_clouds) m_ref += c.size();
  size_t m_each_min = std::numeric_limits<size_t>::max();
  for (int N : cfg.N_list)
    m_each_min = std::min(m_each_min, static_cast<size_t>(N) * cfg.replicas);
  const size_t m = std::min(m_ref, m_each_min);

  auto flatten_subsample = [&](const std::vector<std::vector<Vec>>& clouds, size_t want,
                               RngStream& r2) {
    std::vector<Vec> all;
    for (auto& c : clouds) all.insert(all.end(), c.begin(), c.end());
    // deterministic thinning: shuffle then truncate
    for (size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[static_cast<size_t>(r2.uniform() * i) % i]);
    all.resize(want);
    return all;
  };
  std::vector<Vec> ref_sample = flatten_subsample(ref_clouds, m, util);

  // least-squares slope of log w2sq vs log N
  auto slope_of = [](const std::vector<double>& xs, const std::vector<double>& ys) {
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      sx += xs[i];
      sy += ys[i];
      sxx += xs[i] * xs[i];
      sxy += xs[i] * ys[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  };

  std::vector<double> logN, logW;
  std::vector<std::vector<double>> boot_vals(cfg.N_list.size());
  for (size_t ni = 0; ni < cfg.N_list.size(); ++ni) {
    const int N = cfg.N_list[ni];
    auto clouds = harvest(N, cfg.replicas, 0xA0000ull + 0x10000ull * ni);
    std::vector<Vec> sample = flatten_subsample(clouds, m, util);
    auto est = ot::w2sq_empirical(sample, ref_sample, util);
    // cluster bootstrap over replicas
    RngStream rboot = util.substream(0xDD00 + ni);
    std::vector<double>& vals = boot_vals[ni];
    vals.resize(cfg.bootstrap_resamples);
    for (int r = 0; r < cfg.bootstrap_resamples; ++r) {
      std::vector<std::vector<Vec>> res;
      res.reserve(cfg.replicas);
      for (int i = 0; i < cfg.replicas; ++i) {
        const int pick = static_cast<int>(rboot.uniform() * cfg.replicas) % cfg.replicas;
        res.push_back(clouds[pick]);
      }
      RngStream r3 = rboot.substream(r);
      std::vector<Vec> s2 = flatten_subsample(res, std::min(m, res.size() * static_cast<size_t>(N)), r3);
      RngStream r4 = rboot.substream(0x10000u + r);
      vals[r] = ot::w2sq_empirical(s2, ref_sample, r4).w2sq;
    }
    std::vector<double> sorted = vals;
    std::sort(sorted.begin(), sorted.end());
    const double alpha = (1.0 - cfg.bootstrap_level) / 2.0;
    auto pick_q = [&](double q) {
      const int i = std::clamp(static_cast<int>(q * (sorted.size() - 1)), 0,
                               static_cast<int>(sorted.size()) - 1);
      return sorted[i];
    };
    rep.rows.push_back({N, est.w2sq, pick_q(alpha), pick_q(1.0 - alpha), est.method});
    logN.push_back(std::log(static_cast<double>(N)));
    logW.push_back(std::log(std::max(est.w2sq, 1e-300)));
  }

  rep.slope = slope_of(logN, logW);
  // band from pairing independent per-N resamples
  std::vector<double> slopes(cfg.bootstrap_resamples);
  for (int r = 0; r < cfg.bootstrap_resamples; ++r) {
    std::vector<double> lw(cfg.N_list.size());
    for (size_t ni = 0; ni < cfg.N_list.size(); ++ni)
      lw[ni] = std::log(std::max(boot_vals[ni][r], 1e-300));
    slopes[r] = slope_of(logN, lw);
  }
  std::sort(slopes.begin(), slopes.end());
  const double alpha = (1.0 - cfg.bootstrap_level) / 2.0;
  rep.slope_lo = slopes[static_cast<size_t>(alpha * (slopes.size() - 1))];
  rep.slope_hi = slopes[static_cast<size_t>((1.0 - alpha) * (slopes.size() - 1))];
  return rep;
}

}  // namespace meanfield
}  // namespace hmclab
