#pragma once

#include <cstdint>
#include <limits>

#include "bold/sim/wafer.hpp"

namespace bold::sim {

struct OracleResult {
  Config config;
  double utility = -std::numeric_limits<double>::infinity();
  bool feasible = false;
};

/// Machine- and requirement-feasible under the noise-free surfaces.
inline bool fully_feasible(const Config& x, const WaferPreset& p) {
  return machine_feasible(x, p) && requirement_feasible(latent(x, p), p);
}

/// Grid descent from a feasible start. Each sweep tries single-coordinate
/// moves of 1, 2, 4, ... 64 steps and paired moves of up to 4 steps in two
/// coordinates (dose-type ridges couple power with step and frequency), and
/// takes the best improving feasible move. Stops when a sweep finds nothing.
inline OracleResult polish(OracleResult best, const WaferPreset& p, const acquisition::UtilityWeights& w,
                           const ParameterSpace& space) {
  const std::size_t d = space.dim();
  const auto moved = [&](const Config& base, std::size_t j, int k, Config& x) {
    const auto& spec = space[j];
    const double v = base[j] + k * spec.step;
    if (v < spec.lo - 1e-9 || v > spec.hi + 1e-9) return false;
    x[j] = ParameterSpace::snap_within(spec, v, spec.lo, spec.hi);
    return true;
  };
  for (int sweep = 0; sweep < 1000; ++sweep) {
    Config next;
    double next_u = best.utility;
    const auto consider = [&](const Config& x) {
      if (!fully_feasible(x, p)) return;
      const double u = latent_utility(x, p, w);
      if (u > next_u) {
        next_u = u;
        next = x;
      }
    };
    for (std::size_t j = 0; j < d; ++j)
      for (int mag = 1; mag <= 64; mag *= 2)
        for (int sign : {-1, 1}) {
          Config x = best.config;
          if (moved(best.config, j, sign * mag, x)) consider(x);
        }
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j)
        for (int a : {-4, -2, -1, 1, 2, 4})
          for (int b : {-4, -2, -1, 1, 2, 4}) {
            Config x = best.config;
            if (moved(best.config, i, a, x) && moved(best.config, j, b, x)) consider(x);
          }
    if (next.empty()) break;
    best.config = std::move(next);
    best.utility = next_u;
  }
  return best;
}

/// Dense scrambled-Sobol scan of the grid-snapped space followed by polish.
inline OracleResult oracle_best(const WaferPreset& p, const acquisition::UtilityWeights& w, std::size_t samples,
                                std::uint64_t seed) {
  if (samples < 100000) throw ContractViolation("oracle_best: samples must be >= 1e5");
  w.validate();
  const auto space = laser_space();
  ScrambledSobol sobol(space.dim(), derive_seed(seed, "oracle"));
  OracleResult best;
  for (std::size_t i = 0; i < samples; ++i) {
    const auto x = space.snap(space.to_physical(sobol.next()));
    if (!fully_feasible(x, p)) continue;
    const double u = latent_utility(x, p, w);
    if (u > best.utility) {
      best.utility = u;
      best.config = x;
    }
  }
  if (best.config.empty()) throw PresetError("preset '" + p.id + "' has no feasible point in the oracle scan");
  best.feasible = true;
  return polish(best, p, w, space);
}

/// Fraction of `samples` Sobol points that are machine feasible, and the
/// fraction of those that are also requirement feasible.
struct FeasibleVolume {
  double machine = 0.0;
  double requirement_given_machine = 0.0;
};

inline FeasibleVolume feasible_volume(const WaferPreset& p, std::size_t samples, std::uint64_t seed) {
  const auto space = laser_space();
  ScrambledSobol sobol(space.dim(), derive_seed(seed, "volume"));
  std::size_t machine = 0, both = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const auto x = space.to_physical(sobol.next());
    if (!machine_feasible(x, p)) continue;
    ++machine;
    if (requirement_feasible(latent(x, p), p)) ++both;
  }
  FeasibleVolume v;
  v.machine = static_cast<double>(machine) / static_cast<double>(samples);
  v.requirement_given_machine = machine ? static_cast<double>(both) / static_cast<double>(machine) : 0.0;
  return v;
}

}  // namespace bold::sim
