#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bold/errors.hpp"
#include "bold/random.hpp"
#include "bold/space.hpp"

namespace bold::acquisition {

using Point = std::vector<double>;

/// Up to `r` distinct grid-snapped points (unit coordinates) from a scrambled
/// Sobol sequence over `bounds`. Order follows the Sobol stream.
inline std::vector<Point> generate_candidates(const std::vector<Interval>& bounds, std::size_t r,
                                              const ParameterSpace& space, std::uint64_t seed) {
  if (r == 0) throw ContractViolation("generate_candidates: r must be >= 1");
  if (bounds.size() != space.dim()) throw ContractViolation("generate_candidates: bounds dimension mismatch");
  for (const auto& b : bounds)
    if (!(b.lo <= b.hi) || b.lo < 0.0 || b.hi > 1.0) throw ContractViolation("generate_candidates: invalid bounds");
  const auto phys = space.to_physical(bounds);
  // Probe every dimension once so a collapsed interval fails up front.
  for (std::size_t j = 0; j < space.dim(); ++j) ParameterSpace::snap_within(space[j], phys[j].lo, phys[j].lo, phys[j].hi);

  ScrambledSobol sobol(space.dim(), seed);
  std::set<Point> seen;
  std::vector<Point> out;
  out.reserve(r);
  for (std::size_t i = 0; i < r; ++i) {
    const auto u = sobol.next();
    Point x(space.dim());
    for (std::size_t j = 0; j < space.dim(); ++j) {
      const auto& p = space[j];
      const double v = phys[j].lo + u[j] * (phys[j].hi - phys[j].lo);
      const double snapped = ParameterSpace::snap_within(p, v, phys[j].lo, phys[j].hi);
      x[j] = (snapped - p.lo) / (p.hi - p.lo);
    }
    if (seen.insert(x).second) out.push_back(std::move(x));
  }
  return out;
}

/// Known constraints g_k, feasible when every g_k(x) <= 0. Each g_k receives
/// the point in the coordinates the candidates are expressed in.
struct KnownConstraintSet {
  std::vector<std::function<double(std::span<const double>)>> constraints;

  bool feasible(std::span<const double> x) const {
    for (const auto& g : constraints)
      if (!(g(x) <= 0.0)) return false;
    return true;
  }
};

/// Candidates satisfying every known constraint, in input order.
inline std::vector<Point> filter_known(const std::vector<Point>& candidates, const KnownConstraintSet& set) {
  std::vector<Point> out;
  for (const auto& c : candidates)
    if (set.feasible(c)) out.push_back(c);
  return out;
}

inline Eigen::MatrixXd to_matrix(const std::vector<Point>& pts, std::size_t dim) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < dim; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = pts[i][j];
  return m;
}

}  // namespace bold::acquisition
