#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include "bold/errors.hpp"

namespace bold::acquisition {

namespace objective {
inline constexpr std::string_view kDicingWidth = "dicing_width";
inline constexpr std::string_view kModWidth = "mod_width";
inline constexpr std::string_view kBurr = "burr";
inline constexpr std::string_view kFrontStrength = "front_strength";
inline constexpr std::string_view kBackStrength = "back_strength";
inline constexpr std::array<std::string_view, 5> kAll{kDicingWidth, kModWidth, kBurr, kFrontStrength, kBackStrength};
}  // namespace objective

/// Expert weights of the scalarized utility.
struct UtilityWeights {
  double w_width = 0.05;
  double w_mod = 0.05;
  double w_burr = 0.1;
  double w_throughput = 0.3;
  double w_front = 0.25;
  double w_back = 0.25;
  double strength_base = 300.0;  // MPa subtracted before weighting
  double width_target = 28.0;    // um
  double mod_target = 28.0;      // um

  void validate() const {
    const std::array<double, 6> w{w_width, w_mod, w_burr, w_throughput, w_front, w_back};
    bool any = false;
    for (double v : w) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("utility weights must be finite and non-negative");
      any = any || v > 0.0;
    }
    if (!any) throw ConfigError("at least one utility weight must be positive");
    if (!std::isfinite(strength_base) || !std::isfinite(width_target) || !std::isfinite(mod_target))
      throw ConfigError("utility base/targets must be finite");
  }

  bool operator==(const UtilityWeights&) const = default;
};

/// Optical and destructive objective values in physical units.
struct ObjectiveValues {
  double dicing_width = 0.0;   // um
  double mod_width = 0.0;      // um
  double burr = 0.0;           // um
  double front_strength = 0.0; // MPa
  double back_strength = 0.0;  // MPa
};

/// u = w_t t - w_width |width - target| - w_mod |mod - target| - w_burr burr
///     + w_front (front - b) + w_back (back - b)
inline double utility(const ObjectiveValues& m, double throughput, const UtilityWeights& w) {
  for (double v : {m.dicing_width, m.mod_width, m.burr, m.front_strength, m.back_strength, throughput})
    if (!std::isfinite(v)) throw ContractViolation("utility: non-finite input");
  return w.w_throughput * throughput - w.w_width * std::abs(m.dicing_width - w.width_target) -
         w.w_mod * std::abs(m.mod_width - w.mod_target) - w.w_burr * m.burr +
         w.w_front * (m.front_strength - w.strength_base) + w.w_back * (m.back_strength - w.strength_base);
}

/// Optical-only surrogate: strength weights dropped, their mass spread
/// proportionally over the remaining terms.
inline UtilityWeights optical_only(const UtilityWeights& w) {
  UtilityWeights out = w;
  const double total = w.w_width + w.w_mod + w.w_burr + w.w_throughput + w.w_front + w.w_back;
  const double rest = w.w_width + w.w_mod + w.w_burr + w.w_throughput;
  out.w_front = 0.0;
  out.w_back = 0.0;
  if (rest > 0.0) {
    const double scale = total / rest;
    out.w_width *= scale;
    out.w_mod *= scale;
    out.w_burr *= scale;
    out.w_throughput *= scale;
  }
  return out;
}

/// Weights used in a fidelity stage (1 = optical only, 2 = full).
inline UtilityWeights stage_weights(const UtilityWeights& w, int stage) { return stage == 1 ? optical_only(w) : w; }

inline UtilityWeights make_weights(double width, double mod, double burr, double throughput, double front,
                                   double back) {
  UtilityWeights w;
  w.w_width = width;
  w.w_mod = mod;
  w.w_burr = burr;
  w.w_throughput = throughput;
  w.w_front = front;
  w.w_back = back;
  return w;
}

/// Expert weight rows by name: bare_silicon, product (also bold_a), bold_b
/// (strength-heavy) and bold_c (speed-heavy).
inline UtilityWeights named_weights(const std::string& name) {
  if (name == "bare_silicon") return make_weights(0.075, 0.075, 1.0, 0.01, 0.5, 0.5);
  if (name == "product" || name == "bold_a") return make_weights(0.05, 0.05, 0.1, 0.3, 0.25, 0.25);
  if (name == "bold_b") return make_weights(0.005, 0.005, 0.01, 0.098, 0.45, 0.45);
  if (name == "bold_c") return make_weights(0.005, 0.005, 0.01, 0.78, 0.1, 0.1);
  throw ConfigError("unknown weight set '" + name + "' (bare_silicon, product, bold_a, bold_b, bold_c)");
}

}  // namespace bold::acquisition
