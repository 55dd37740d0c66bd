#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hmclab/rng.hpp"
#include "hmclab/types.hpp"

namespace hmclab {
namespace ot {

/// Squared W2 between two equal-size 1D samples: sort and pair.
inline double w2sq_sorted_1d(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("w2sq_sorted_1d: need equal nonempty sizes");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double acc = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

/// Exact squared W2 between equal-size point clouds by solving the assignment
/// problem (shortest augmenting path / Jonker-Volgenant). Quadratic memory;
/// meant for clouds of a few hundred points.
inline double w2sq_assignment(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  const int n = static_cast<int>(a.size());
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("w2sq_assignment: need equal nonempty sizes");
  Mat cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cost(i, j) = (a[i] - b[j]).squaredNorm();
  const double INF = std::numeric_limits<double>::infinity();
  // JV shortest augmenting path with potentials; 1-based internal arrays.
  std::vector<double> u(n + 1, 0), v(n + 1, 0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, INF);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = -1;
      double delta = INF;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0;
  for (int j = 1; j <= n; ++j) total += cost(p[j] - 1, j - 1);
  return total / n;
}

/// Sliced squared W2: average of 1D squared W2 over random directions.
inline double w2sq_sliced(const std::vector<Vec>& a, const std::vector<Vec>& b, int n_projections,
                          RngStream& rng) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("w2sq_sliced: need equal nonempty sizes");
  const auto d = a.front().size();
  double acc = 0;
  std::vector<double> pa(a.size()), pb(b.size());
  for (int k = 0; k < n_projections; ++k) {
    Vec dir = rng.normal_vector(d);
    dir.normalize();
    for (size_t i = 0; i < a.size(); ++i) pa[i] = dir.dot(a[i]);
    for (size_t i = 0; i < b.size(); ++i) pb[i] = dir.dot(b[i]);
    acc += w2sq_sorted_1d(pa, pb);
  }
  return acc / n_projections;
}

struct EmpiricalW2 {
  double w2sq;
  std::string method;  // "sorted_1d", "assignment" or "sliced"
};

/// Chooses the estimator: exact in 1D, exact assignment for small clouds in
/// dimension <= 4, sliced otherwise.
inline EmpiricalW2 w2sq_empirical(const std::vector<Vec>& a, const std::vector<Vec>& b,
                                  RngStream& rng, int n_projections = 64) {
  const auto d = a.front().size();
  if (d == 1) {
    std::vector<double> xa(a.size()), xb(b.size());
    for (size_t i = 0; i < a.size(); ++i) xa[i] = a[i][0];
    for (size_t i = 0; i < b.size(); ++i) xb[i] = b[i][0];
    return {w2sq_sorted_1d(std::move(xa), std::move(xb)), "sorted_1d"};
  }
  if (a.size() <= 512 && d <= 4) return {w2sq_assignment(a, b), "assignment"};
  return {w2sq_sliced(a, b, n_projections, rng), "sliced"};
}

struct BootstrapInterval {
  double lo, hi, point;
};

/// Percentile bootstrap of a statistic over index resamples.
template <typename Statistic>
BootstrapInterval bootstrap(int n_items, int n_resamples, double level, RngStream& rng,
                            Statistic&& stat) {
  std::vector<int> idx(n_items);
  std::vector<double> vals(n_resamples);
  for (int r = 0; r < n_resamples; ++r) {
    for (int i = 0; i < n_items; ++i)
      idx[i] = static_cast<int>(rng.uniform() * n_items) % n_items;
    vals[r] = stat(idx);
  }
  std::sort(vals.begin(), vals.end());
  const double alpha = (1.0 - level) / 2.0;
  auto pick = [&](double q) {
    const int i = std::clamp(static_cast<int>(q * (n_resamples - 1)), 0, n_resamples - 1);
    return vals[i];
  };
  std::vector<int> all(n_items);
  for (int i = 0; i < n_items; ++i) all[i] = i;
  return {pick(alpha), pick(1.0 - alpha), stat(all)};
}

}  // namespace ot
}  // namespace hmclab
