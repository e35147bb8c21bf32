#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bold/errors.hpp"

namespace bold {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
  bool operator==(const Interval&) const = default;
};

struct TrustRegionConfig {
  double tau_init = 0.8;
  double tau_max = 1.6;
  double tau_threshold = 0.015;
  int success_tolerance = 3;
  /// 0 selects max(5, ceil(d / q)).
  int failure_tolerance = 0;
  /// Scale sides by the objective lengthscales; false gives a pure cube.
  bool lengthscale_weighting = true;

  bool operator==(const TrustRegionConfig&) const = default;
};

inline int default_failure_tolerance(std::size_t dim, int batch_size) {
  const int q = std::max(1, batch_size);
  return std::max(5, static_cast<int>((dim + static_cast<std::size_t>(q) - 1) / static_cast<std::size_t>(q)));
}

/// Hypercube trust region in normalized [0,1]^d coordinates.
struct TrustRegionState {
  std::size_t dim = 0;
  double side_length = 0.8;
  std::optional<std::vector<double>> center;
  int success_count = 0;
  int failure_count = 0;
  int success_tolerance = 3;
  int failure_tolerance = 5;
  double tau_init = 0.8;
  double tau_max = 1.6;
  double tau_threshold = 0.015;
  bool lengthscale_weighting = true;
  bool terminated = false;

  bool operator==(const TrustRegionState&) const = default;
};

inline TrustRegionState init_trust_region(std::size_t dim, const TrustRegionConfig& cfg, int batch_size = 1) {
  if (dim == 0) throw ConfigError("trust region dimension must be positive");
  if (!(cfg.tau_threshold > 0.0 && cfg.tau_threshold < cfg.tau_init && cfg.tau_init <= cfg.tau_max))
    throw ConfigError("trust region sizes must satisfy 0 < tau_threshold < tau_init <= tau_max");
  if (cfg.success_tolerance < 1 || cfg.failure_tolerance < 0)
    throw ConfigError("trust region tolerances must be positive");
  TrustRegionState s;
  s.dim = dim;
  s.side_length = cfg.tau_init;
  s.success_tolerance = cfg.success_tolerance;
  s.failure_tolerance = cfg.failure_tolerance > 0 ? cfg.failure_tolerance : default_failure_tolerance(dim, batch_size);
  s.tau_init = cfg.tau_init;
  s.tau_max = cfg.tau_max;
  s.tau_threshold = cfg.tau_threshold;
  s.lengthscale_weighting = cfg.lengthscale_weighting;
  return s;
}

inline TrustRegionState recenter(TrustRegionState s, const std::vector<double>& incumbent) {
  if (incumbent.size() != s.dim) throw ContractViolation("recenter: incumbent dimension mismatch");
  for (double v : incumbent)
    if (!(v >= 0.0 && v <= 1.0)) throw ContractViolation("recenter: incumbent outside [0,1]^d");
  s.center = incumbent;
  return s;
}

/// One success/failure step of the expand/shrink schedule.
inline TrustRegionState update(TrustRegionState s, bool improved) {
  if (s.terminated) throw LifecycleError("trust region already terminated");
  if (improved) {
    ++s.success_count;
    s.failure_count = 0;
    if (s.success_count >= s.success_tolerance) {
      s.side_length = std::min(2.0 * s.side_length, s.tau_max);
      s.success_count = 0;
    }
  } else {
    ++s.failure_count;
    s.success_count = 0;
    if (s.failure_count >= s.failure_tolerance) {
      s.side_length /= 2.0;
      s.failure_count = 0;
    }
  }
  if (s.side_length < s.tau_threshold) s.terminated = true;
  return s;
}

/// Trust region for a new stage: side tau_init / 2, counters cleared, center kept.
inline TrustRegionState restart(TrustRegionState s) {
  s.side_length = s.tau_init / 2.0;
  s.success_count = 0;
  s.failure_count = 0;
  s.terminated = false;
  return s;
}

/// Per-dimension side widths: tau * l_j * d / sum(l), clamped to [tau/4, 4 tau].
inline std::vector<double> side_widths(const TrustRegionState& s, const std::vector<double>& lengthscales) {
  std::vector<double> w(s.dim, s.side_length);
  if (!s.lengthscale_weighting || lengthscales.empty()) return w;
  if (lengthscales.size() != s.dim) throw ContractViolation("region_bounds: lengthscale dimension mismatch");
  double sum = 0.0;
  for (double l : lengthscales) sum += l;
  for (std::size_t j = 0; j < s.dim; ++j) {
    const double raw = s.side_length * lengthscales[j] * static_cast<double>(s.dim) / sum;
    w[j] = std::clamp(raw, s.side_length / 4.0, 4.0 * s.side_length);
  }
  return w;
}

/// Trust region intersected with the unit box.
inline std::vector<Interval> region_bounds(const TrustRegionState& s, const std::vector<double>& lengthscales = {}) {
  if (!s.center) throw LifecycleError("region_bounds: trust region has no center yet");
  const auto w = side_widths(s, lengthscales);
  std::vector<Interval> out(s.dim);
  for (std::size_t j = 0; j < s.dim; ++j) {
    const double c = (*s.center)[j];
    out[j] = {std::max(0.0, c - w[j] / 2.0), std::min(1.0, c + w[j] / 2.0)};
  }
  return out;
}

}  // namespace bold
