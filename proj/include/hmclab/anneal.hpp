#pragma once

#include <cmath>
#include <limits>
#include <queue>
#include <vector>

#include "hmclab/chain.hpp"
#include "hmclab/potential.hpp"

namespace hmclab {
namespace anneal {

/// Logarithmic cooling with the step size and damping tied to the current
/// inverse temperature: beta_n = beta0 + ln(1+n)/c_hat, t_n = q/sqrt(beta_n L0),
/// eta_n = 1 - gamma t_n. c_hat = +inf freezes the schedule at beta0.
struct AnnealSchedule {
  double beta0;
  double c_hat;
  double gamma;
  double q;
  double L0;

  struct Point {
    double beta, t, eta;
  };

  void validate() const {
    if (beta0 <= 0 || gamma <= 0 || L0 <= 0) throw std::invalid_argument("AnnealSchedule: positives required");
    if (!(q > 0 && q < 0.25)) throw std::invalid_argument("AnnealSchedule: q must be in (0, 1/4)");
    if (at(0).eta < 0)
      throw std::invalid_argument("AnnealSchedule: eta_0 < 0; gamma too large for beta0, q");
  }

  Point at(long n) const {
    Point pt;
    pt.beta = std::isfinite(c_hat) ? beta0 + std::log1p(static_cast<double>(n)) / c_hat : beta0;
    pt.t = q / std::sqrt(pt.beta * L0);
    pt.eta = 1.0 - gamma * pt.t;
    return pt;
  }
};

struct AnnealRecord {
  long step;
  double beta, t, eta;
  double energy;       // U(X_n)
  PhaseState state;
};

/// Time-inhomogeneous chain: step n runs one transition of the chain with
/// potential beta_n * U, time t_n and damping eta_n. U is expected to have
/// min U = 0 so that `energy` reads as excess energy.
inline std::vector<AnnealRecord> run_annealing(const Potential& p, const AnnealSchedule& sched,
                                               const PhaseState& z0, long n_steps, RngStream& rng,
                                               const std::vector<long>& record_at = {},
                                               RefreshPlacement placement = RefreshPlacement::refresh_then_flow,
                                               const IntegratorConfig& integrator = {}) {
  sched.validate();
  std::vector<AnnealRecord> out;
  auto want = [&](long n) {
    return record_at.empty() || std::find(record_at.begin(), record_at.end(), n) != record_at.end();
  };
  PhaseState z = z0;
  if (want(0)) {
    auto pt = sched.at(0);
    out.push_back({0, pt.beta, pt.t, pt.eta, p.value(z.x), z});
  }
  for (long n = 0; n < n_steps; ++n) {
    const auto pt = sched.at(n);
    if (pt.eta < 0) throw std::runtime_error("run_annealing: schedule produced eta < 0");
    Potential hot = scaled_potential(p, pt.beta);
    ChainParams params;
    params.t = pt.t;
    params.eta = pt.eta;
    params.placement = placement;
    params.integrator = integrator;
    z = transition(hot, params, z, rng);
    if (want(n + 1)) {
      const auto pt1 = sched.at(n + 1);
      out.push_back({n + 1, pt1.beta, pt1.t, pt1.eta, p.value(z.x), z});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Critical depth on a grid graph
// ---------------------------------------------------------------------------

struct CriticalDepthResult {
  double c_star;
  std::vector<Vec> witness_path;  // from the deepest local minimum to the global set
  double refinement_error;        // |estimate(h) - estimate(h/2)|
  double grid_resolution;         // finest resolution used
};

namespace detail {

struct Grid {
  std::vector<double> U;
  std::vector<Eigen::Index> shape;  // nodes per axis
  Box box;
  double h;

  long size() const {
    long s = 1;
    for (auto n : shape) s *= n;
    return s;
  }

  Vec coords(long idx) const {
    Vec x(shape.size());
    for (size_t a = 0; a < shape.size(); ++a) {
      x[a] = box.lo[a] + h * static_cast<double>(idx % shape[a]);
      idx /= shape[a];
    }
    return x;
  }

  void axis_neighbors(long idx, std::vector<long>& out) const {
    out.clear();
    long stride = 1;
    long rest = idx;
    for (size_t a = 0; a < shape.size(); ++a) {
      const long pos = rest % shape[a];
      if (pos > 0) out.push_back(idx - stride);
      if (pos + 1 < shape[a]) out.push_back(idx + stride);
      stride *= shape[a];
      rest /= shape[a];
    }
  }
};

inline Grid make_grid(const Potential& p, const Box& box, double resolution) {
  if (box.dim() != p.dim()) throw std::invalid_argument("critical_depth: box/potential dimension mismatch");
  if (p.dim() > 2) throw std::invalid_argument("critical_depth: only 1D and 2D grids supported");
  Grid g;
  g.box = box;
  g.h = resolution;
  long total = 1;
  for (Eigen::Index a = 0; a < box.dim(); ++a) {
    const auto n = static_cast<Eigen::Index>(std::floor((box.hi[a] - box.lo[a]) / resolution)) + 1;
    g.shape.push_back(n);
    total *= n;
  }
  g.U.resize(total);
  for (long i = 0; i < total; ++i) g.U[i] = p.value(g.coords(i));
  return g;
}

/// Plateau components: connected nodes of exactly equal value. A component is
/// a local minimum when no outside neighbor is lower.
inline std::vector<std::vector<long>> local_min_components(const Grid& g) {
  const long n = g.size();
  std::vector<int> comp(n, -1);
  std::vector<std::vector<long>> comps;
  std::vector<long> nbr;
  for (long i = 0; i < n; ++i) {
    if (comp[i] >= 0) continue;
    // flood the equal-value plateau containing i
    std::vector<long> stack{i}, members;
    comp[i] = static_cast<int>(comps.size());
    bool is_min = true;
    while (!stack.empty()) {
      long u = stack.back();
      stack.pop_back();
      members.push_back(u);
      g.axis_neighbors(u, nbr);
      for (long v : nbr) {
        if (g.U[v] == g.U[i]) {
          if (comp[v] < 0) {
            comp[v] = comp[i];
            stack.push_back(v);
          }
        } else if (g.U[v] < g.U[i]) {
          is_min = false;
        }
      }
    }
    if (is_min)
      comps.push_back(std::move(members));
    else
      for (long u : members) comp[u] = -2;  // visited, not a minimum
  }
  // note: comp ids of kept components may not be dense; comps holds the kept ones
  return comps;
}

struct Bottleneck {
  double value;
  std::vector<long> path;
};

/// Priority-first search on node values: cost of a path is the maximum value
/// along it. Returns the smallest such maximum from src to any target.
inline Bottleneck bottleneck_path(const Grid& g, long src, const std::vector<char>& target) {
  const long n = g.size();
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<long> prev(n, -1);
  using Item = std::pair<double, long>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  best[src] = g.U[src];
  pq.push({best[src], src});
  std::vector<long> nbr;
  while (!pq.empty()) {
    auto [b, u] = pq.top();
    pq.pop();
    if (b > best[u]) continue;
    if (target[u]) {
      Bottleneck out{b, {}};
      for (long w = u; w >= 0; w = prev[w]) out.path.push_back(w);
      std::reverse(out.path.begin(), out.path.end());
      return out;
    }
    g.axis_neighbors(u, nbr);
    for (long v : nbr) {
      const double nb = std::max(b, g.U[v]);
      if (nb < best[v]) {
        best[v] = nb;
        prev[v] = u;
        pq.push({nb, v});
      }
    }
  }
  return {std::numeric_limits<double>::infinity(), {}};
}

struct DepthPass {
  double c_star = 0.0;
  std::vector<long> witness;
  const Grid* grid = nullptr;
};

inline DepthPass depth_on_grid(const Grid& g) {
  DepthPass out;
  auto comps = local_min_components(g);
  double gmin = std::numeric_limits<double>::infinity();
  for (double u : g.U) gmin = std::min(gmin, u);
  std::vector<char> is_global(g.size(), 0);
  for (long i = 0; i < g.size(); ++i) is_global[i] = static_cast<char>(g.U[i] == gmin);
  for (const auto& members : comps) {
    // targets: global-minimum nodes outside this plateau
    std::vector<char> target = is_global;
    for (long u : members) target[u] = 0;
    bool any = false;
    for (long i = 0; i < g.size(); ++i) any = any || target[i];
    if (!any) continue;  // this plateau is the only global component
    Bottleneck b = bottleneck_path(g, members.front(), target);
    const double depth = b.value - g.U[members.front()];
    if (depth > out.c_star) {
      out.c_star = depth;
      out.witness = std::move(b.path);
    }
  }
  return out;
}

}  // namespace detail

/// Largest barrier separating any discrete local minimum from the global
/// minimum set, computed on an axis-neighbor grid and refined once at double
/// resolution.
inline CriticalDepthResult critical_depth(const Potential& p, const Box& box, double resolution) {
  if (resolution <= 0) throw std::invalid_argument("critical_depth: resolution > 0");
  detail::Grid coarse = detail::make_grid(p, box, resolution);
  detail::DepthPass pass1 = detail::depth_on_grid(coarse);
  detail::Grid fine = detail::make_grid(p, box, resolution / 2);
  detail::DepthPass pass2 = detail::depth_on_grid(fine);
  CriticalDepthResult out;
  out.c_star = pass2.c_star;
  out.refinement_error = std::abs(pass2.c_star - pass1.c_star);
  out.grid_resolution = resolution / 2;
  out.witness_path.reserve(pass2.witness.size());
  for (long idx : pass2.witness) out.witness_path.push_back(fine.coords(idx));
  return out;
}

}  // namespace anneal
}  // namespace hmclab
