#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "hmclab/flow.hpp"
#include "hmclab/potential.hpp"
#include "hmclab/rng.hpp"

namespace hmclab {

/// D acts first on the state under `refresh_then_flow`, which realizes the
/// composed transition used by the dissipation certificates. The narrative
/// order `flow_then_refresh` has identical stationary behaviour; finite-n
/// marginals differ by one half-operation. `refresh_flow_refresh` is the
/// doubly-randomized transition the regularization bounds are stated for.
enum class RefreshPlacement { refresh_then_flow, flow_then_refresh, refresh_flow_refresh };

/// Distribution of the integration time.
struct StepLaw {
  enum class Kind { fixed, uniform, discrete };
  Kind kind = Kind::fixed;
  double t0 = 0.0;                      // fixed value, or lower endpoint
  double t1 = 0.0;                      // upper endpoint (uniform)
  std::vector<double> atoms;            // discrete support
  std::vector<double> weights;          // discrete weights, sum to 1

  static StepLaw fixed(double t) { return {Kind::fixed, t, t, {}, {}}; }
  static StepLaw uniform(double a, double b) {
    if (!(0 < a && a < b)) throw std::invalid_argument("StepLaw::uniform: need 0 < a < b");
    return {Kind::uniform, a, b, {}, {}};
  }
  static StepLaw discrete(std::vector<double> ts, std::vector<double> ws) {
    if (ts.empty() || ts.size() != ws.size())
      throw std::invalid_argument("StepLaw::discrete: atoms/weights mismatch");
    double sum = 0;
    for (size_t i = 0; i < ts.size(); ++i) {
      if (ts[i] <= 0 || ws[i] < 0) throw std::invalid_argument("StepLaw::discrete: bad atom");
      sum += ws[i];
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("StepLaw::discrete: weights must sum to 1");
    return {Kind::discrete, 0, 0, std::move(ts), std::move(ws)};
  }

  double max_support() const {
    switch (kind) {
      case Kind::fixed: return t0;
      case Kind::uniform: return t1;
      case Kind::discrete: {
        double m = 0;
        for (double t : atoms) m = std::max(m, t);
        return m;
      }
    }
    return 0;
  }

  /// Inverse-CDF draw; fixed laws consume no randomness.
  double draw(RngStream& rng) const {
    switch (kind) {
      case Kind::fixed: return t0;
      case Kind::uniform: return rng.uniform(t0, t1);
      case Kind::discrete: {
        const double u = rng.uniform();
        double acc = 0;
        for (size_t i = 0; i < atoms.size(); ++i) {
          acc += weights[i];
          if (u < acc) return atoms[i];
        }
        return atoms.back();
      }
    }
    return t0;
  }
};

struct ChainParams {
  double t = 0.1;
  double eta = 0.0;
  RefreshPlacement placement = RefreshPlacement::refresh_then_flow;
  std::optional<StepLaw> step_law;  // overrides t when present
  IntegratorConfig integrator;
  bool allow_large_t = false;  // waive the t*sqrt(L) <= 1/4 guard for boundary studies

  double friction() const { return (1.0 - eta) / t; }

  void validate(const Potential& p) const {
    if (eta < 0 || eta >= 1) throw std::invalid_argument("ChainParams: eta must be in [0, 1)");
    const double tmax = step_law ? step_law->max_support() : t;
    if (tmax <= 0) throw std::invalid_argument("ChainParams: t must be > 0");
    if (!allow_large_t && tmax * std::sqrt(p.hessian_bound()) > 0.25 + 1e-12)
      throw std::invalid_argument(
          "ChainParams: t*sqrt(L) > 1/4; set allow_large_t to study that regime anyway");
  }
};

/// Keeps x, blends the velocity with a fresh Gaussian. The square root is
/// split as sqrt((1-eta)(1+eta)) to survive eta -> 1.
inline PhaseState refresh(const PhaseState& z, double eta, const Vec& g) {
  if (eta < 0 || eta >= 1) throw std::invalid_argument("refresh: eta must be in [0, 1)");
  require_dim(g, z.dim(), "refresh");
  const double w = std::sqrt((1.0 - eta) * (1.0 + eta));
  return PhaseState(z.x, eta * z.v + w * g);
}

/// One transition with explicit Gaussian input: one vector for the single
/// refresh placements, two stacked vectors for refresh_flow_refresh.
inline PhaseState transition_given(const Potential& p, const ChainParams& params,
                                   const PhaseState& z, double t, std::span<const Vec> gs) {
  switch (params.placement) {
    case RefreshPlacement::refresh_then_flow:
      return flow_state(p, refresh(z, params.eta, gs[0]), t, params.integrator);
    case RefreshPlacement::flow_then_refresh:
      return refresh(flow_state(p, z, t, params.integrator), params.eta, gs[0]);
    case RefreshPlacement::refresh_flow_refresh:
      return refresh(flow_state(p, refresh(z, params.eta, gs[0]), t, params.integrator),
                     params.eta, gs[1]);
  }
  throw std::logic_error("transition_given: bad placement");
}

inline int refreshes_per_transition(RefreshPlacement pl) {
  return pl == RefreshPlacement::refresh_flow_refresh ? 2 : 1;
}

inline PhaseState transition(const Potential& p, const ChainParams& params, const PhaseState& z,
                             RngStream& rng) {
  params.validate(p);
  const auto d = z.dim();
  std::vector<Vec> gs;
  gs.reserve(2);
  for (int i = 0; i < refreshes_per_transition(params.placement); ++i)
    gs.push_back(rng.normal_vector(d));
  return transition_given(p, params, z, params.t, gs);
}

/// Draws the integration time from the step law, then transitions.
inline PhaseState transition_random_time(const Potential& p, const ChainParams& params,
                                         const PhaseState& z, RngStream& rng) {
  params.validate(p);
  const double t = params.step_law ? params.step_law->draw(rng) : params.t;
  const auto d = z.dim();
  std::vector<Vec> gs;
  for (int i = 0; i < refreshes_per_transition(params.placement); ++i)
    gs.push_back(rng.normal_vector(d));
  return transition_given(p, params, z, t, gs);
}

struct TrajectoryRecord {
  int step;
  PhaseState state;
  double potential;
  double x_squared;
  std::vector<double> extra;
};

using Observable = std::function<double(const PhaseState&)>;

/// Deterministic given the seed; records z_0 as step 0.
inline std::vector<TrajectoryRecord> run_trajectory(const Potential& p, const ChainParams& params,
                                                    const PhaseState& z0, int n_steps,
                                                    RngStream& rng,
                                                    const std::vector<Observable>& observables = {}) {
  if (n_steps < 0) throw std::invalid_argument("run_trajectory: n_steps >= 0");
  params.validate(p);
  std::vector<TrajectoryRecord> out;
  out.reserve(n_steps + 1);
  auto record = [&](int k, const PhaseState& z) {
    TrajectoryRecord r{k, z, p.value(z.x), z.x.squaredNorm(), {}};
    for (const auto& f : observables) r.extra.push_back(f(z));
    out.push_back(std::move(r));
  };
  PhaseState z = z0;
  record(0, z);
  for (int k = 1; k <= n_steps; ++k) {
    z = params.step_law ? transition_random_time(p, params, z, rng) : transition(p, params, z, rng);
    record(k, z);
  }
  return out;
}

struct CouplingSeries {
  std::vector<double> x_distance;  // |x_k - x_k'|
  std::vector<double> z_distance;  // |z_k - z_k'|
  PhaseState final_a, final_b;
};

/// Two chains driven by the same Gaussian draws and the same drawn times.
inline CouplingSeries parallel_coupling(const Potential& p, const ChainParams& params,
                                        const PhaseState& z0, const PhaseState& z0p, int n_steps,
                                        RngStream& rng) {
  params.validate(p);
  if (z0.dim() != z0p.dim()) throw std::invalid_argument("parallel_coupling: dimension mismatch");
  const auto d = z0.dim();
  CouplingSeries s;
  s.x_distance.reserve(n_steps + 1);
  s.z_distance.reserve(n_steps + 1);
  PhaseState a = z0, b = z0p;
  s.x_distance.push_back((a.x - b.x).norm());
  s.z_distance.push_back(phase_distance(a, b));
  for (int k = 0; k < n_steps; ++k) {
    const double t = params.step_law ? params.step_law->draw(rng) : params.t;
    std::vector<Vec> gs;
    for (int i = 0; i < refreshes_per_transition(params.placement); ++i)
      gs.push_back(rng.normal_vector(d));
    a = transition_given(p, params, a, t, gs);
    b = transition_given(p, params, b, t, gs);
    s.x_distance.push_back((a.x - b.x).norm());
    s.z_distance.push_back(phase_distance(a, b));
  }
  s.final_a = a;
  s.final_b = b;
  return s;
}

}  // namespace hmclab
