#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace hmclab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A point in position-velocity space.
struct PhaseState {
  Vec x;
  Vec v;

  PhaseState() = default;
  PhaseState(Vec x_, Vec v_) : x(std::move(x_)), v(std::move(v_)) {
    if (x.size() != v.size())
      throw std::invalid_argument("PhaseState: x and v must have equal length");
  }

  Eigen::Index dim() const { return x.size(); }

  Vec packed() const {
    Vec z(2 * x.size());
    z << x, v;
    return z;
  }

  static PhaseState unpack(const Vec& z) {
    const auto d = z.size() / 2;
    return PhaseState(z.head(d), z.tail(d));
  }

  bool all_finite() const { return x.allFinite() && v.allFinite(); }
};

inline double phase_distance(const PhaseState& a, const PhaseState& b) {
  return std::sqrt((a.x - b.x).squaredNorm() + (a.v - b.v).squaredNorm());
}

/// Axis-aligned hyper-rectangle, used as the certified working region of a potential.
struct Box {
  Vec lo;
  Vec hi;

  Box() = default;
  Box(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
    if (lo.size() != hi.size() || (hi - lo).minCoeff() <= 0)
      throw std::invalid_argument("Box: need lo < hi componentwise");
  }

  Eigen::Index dim() const { return lo.size(); }

  bool contains(const Vec& x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }

  Vec sample(const Vec& unit01) const {
    return lo.array() + (hi - lo).array() * unit01.array();
  }
};

inline void require_dim(const Vec& x, Eigen::Index d, const char* where) {
  if (x.size() != d)
    throw std::invalid_argument(std::string(where) + ": dimension mismatch, got " +
                                std::to_string(x.size()) + ", expected " + std::to_string(d));
}

}  // namespace hmclab
