#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bold/errors.hpp"
#include "bold/trust_region.hpp"

namespace bold {

/// One process parameter: physical bounds and the machine's step grid.
struct ParameterSpec {
  std::string name;
  std::string unit;
  double lo = 0.0;
  double hi = 1.0;
  double step = 0.0;  // 0 = continuous

  bool operator==(const ParameterSpec&) const = default;
};

/// Box of physical parameters with affine maps to and from [0,1]^d.
class ParameterSpace {
 public:
  ParameterSpace() = default;
  explicit ParameterSpace(std::vector<ParameterSpec> params) : params_(std::move(params)) {
    for (const auto& p : params_) {
      if (!(p.hi > p.lo)) throw ConfigError("parameter '" + p.name + "': hi must exceed lo");
      if (p.step < 0.0) throw ConfigError("parameter '" + p.name + "': negative step");
      if (p.step > 0.0 && max_index(p) < 0) throw ConfigError("parameter '" + p.name + "': step larger than range");
    }
  }

  std::size_t dim() const { return params_.size(); }
  const std::vector<ParameterSpec>& params() const { return params_; }
  const ParameterSpec& operator[](std::size_t j) const { return params_[j]; }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t j = 0; j < params_.size(); ++j)
      if (params_[j].name == name) return j;
    throw LookupError("unknown parameter '" + name + "'");
  }

  std::vector<double> to_unit(const std::vector<double>& physical) const {
    check(physical);
    std::vector<double> u(dim());
    for (std::size_t j = 0; j < dim(); ++j) u[j] = (physical[j] - params_[j].lo) / (params_[j].hi - params_[j].lo);
    return u;
  }

  std::vector<double> to_physical(const std::vector<double>& unit) const {
    check(unit);
    std::vector<double> x(dim());
    for (std::size_t j = 0; j < dim(); ++j) x[j] = params_[j].lo + unit[j] * (params_[j].hi - params_[j].lo);
    return x;
  }

  /// Grid value lo + k * step.
  static double grid_value(const ParameterSpec& p, long k) { return p.lo + static_cast<double>(k) * p.step; }

  static long max_index(const ParameterSpec& p) {
    return static_cast<long>(std::floor((p.hi - p.lo) / p.step + 1e-9));
  }

  /// Nearest grid point to a physical value inside [a, b] (physical). Throws
  /// EmptyRegionError when no grid point lies in the interval.
  static double snap_within(const ParameterSpec& p, double v, double a, double b) {
    if (p.step == 0.0) return std::clamp(v, a, b);
    long kmin = static_cast<long>(std::ceil((a - p.lo) / p.step - 1e-9));
    long kmax = static_cast<long>(std::floor((b - p.lo) / p.step + 1e-9));
    kmin = std::max(kmin, 0L);
    kmax = std::min(kmax, max_index(p));
    if (kmin > kmax) throw EmptyRegionError("parameter '" + p.name + "': interval contains no grid point");
    const long k = std::clamp(std::lround((v - p.lo) / p.step), kmin, kmax);
    return grid_value(p, k);
  }

  /// Snap a physical point to the grid, staying inside the global bounds.
  std::vector<double> snap(const std::vector<double>& physical) const {
    check(physical);
    std::vector<double> out(dim());
    for (std::size_t j = 0; j < dim(); ++j) out[j] = snap_within(params_[j], physical[j], params_[j].lo, params_[j].hi);
    return out;
  }

  bool on_grid(const std::vector<double>& physical, double tol = 1e-9) const {
    check(physical);
    for (std::size_t j = 0; j < dim(); ++j) {
      const auto& p = params_[j];
      if (physical[j] < p.lo - tol || physical[j] > p.hi + tol) return false;
      if (p.step == 0.0) continue;
      const double k = std::round((physical[j] - p.lo) / p.step);
      if (std::abs(grid_value(p, static_cast<long>(k)) - physical[j]) > tol) return false;
    }
    return true;
  }

  bool contains(const std::vector<double>& physical) const {
    check(physical);
    for (std::size_t j = 0; j < dim(); ++j)
      if (!(physical[j] >= params_[j].lo && physical[j] <= params_[j].hi)) return false;
    return true;
  }

  /// Unit-space intervals mapped to physical units.
  std::vector<Interval> to_physical(const std::vector<Interval>& unit) const {
    if (unit.size() != dim()) throw ContractViolation("interval dimension mismatch");
    std::vector<Interval> out(dim());
    for (std::size_t j = 0; j < dim(); ++j) {
      const double w = params_[j].hi - params_[j].lo;
      out[j] = {params_[j].lo + unit[j].lo * w, params_[j].lo + unit[j].hi * w};
    }
    return out;
  }

  bool operator==(const ParameterSpace&) const = default;

 private:
  void check(const std::vector<double>& v) const {
    if (v.size() != dim())
      throw ContractViolation("point has " + std::to_string(v.size()) + " coordinates, space has " + std::to_string(dim()));
  }

  std::vector<ParameterSpec> params_;
};

/// The eleven-parameter three-pass laser process (trench, dice, recovery).
/// Step sizes are the machine grid; bounds are this build's operating window.
inline ParameterSpace laser_space() {
  return ParameterSpace({
      {"trench_power", "W", 0.5, 5.0, 0.1},
      {"trench_step", "um", 1.0, 10.0, 0.1},
      {"trench_angle", "deg", 0.0, 10.0, 0.2},
      {"dice_power", "W", 2.0, 12.0, 0.2},
      {"dice_focus", "um", -100.0, 100.0, 10.0},
      {"dice_step", "um", 0.5, 6.0, 0.1},
      {"dice_frequency", "Hz", 20000.0, 200000.0, 1000.0},
      {"recov_power", "W", 0.4, 8.0, 0.2},
      {"recov_focus", "um", -100.0, 100.0, 10.0},
      {"recov_step", "um", 0.5, 6.0, 0.1},
      {"recov_frequency", "Hz", 20000.0, 200000.0, 1000.0},
  });
}

}  // namespace bold
