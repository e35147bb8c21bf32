#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include <boost/random/normal_distribution.hpp>
#include <json.hpp>

#include "bold/acquisition/utility.hpp"
#include "bold/errors.hpp"
#include "bold/random.hpp"
#include "bold/space.hpp"

/// Synthetic laser-dicing black box. Every formula and constant lives here and
/// in docs/simulator.md; they are constructions, not physics.
namespace bold::sim {

/// Coordinate order of a configuration, matching laser_space().
enum Param : std::size_t {
  kTrenchPower,
  kTrenchStep,
  kTrenchAngle,
  kDicePower,
  kDiceFocus,
  kDiceStep,
  kDiceFrequency,
  kRecovPower,
  kRecovFocus,
  kRecovStep,
  kRecovFrequency,
  kNumParams
};

using Config = std::vector<double>;  // physical units, laser_space() order

/// Constants of the latent surfaces. Doses are in mJ/mm, pulse energies in uJ,
/// powers in W, focus in um, strengths in MPa.
struct LatentConstants {
  // dicing (kerf + recast) width = w0 + w1 log(1 + rho_T / w_rho) + w_angle * angle + w_defocus (1 - eta_D)
  double width_base = 22.0;
  double width_gain = 2.5;
  double width_dose_scale = 4.0;
  double width_angle = 0.4;
  double width_defocus = 4.0;
  // modification width = m0 + m1 log(1 + d_D / m_scale) + m_focus |focus_D| / 100
  double mod_base = 21.0;
  double mod_gain = 6.5;
  double mod_dose_scale = 10.0;
  double mod_focus = 2.0;
  // burr = b0 + b_trench sig((rho_T - b_trench_dose)/b_trench_width) + b_dice sig(ln(d_D/b_dice_dose)/0.3) + b_recov (1 - B_front)
  double burr_base = 0.3;
  double burr_trench = 2.0;
  double burr_trench_dose = 35.0;
  double burr_trench_width = 8.0;
  double burr_dice = 1.5;
  double burr_dice_dose = 200.0;
  double burr_recov = 1.5;
  // focus coupling eta = 1 - defocus_loss (focus / 100)^2
  double defocus_loss = 0.5;
  // crack fractions: crack_max * sig(z)
  double crack_max = 0.6;
  double front_crack_energy = 220.0;  // uJ, dice pulse energy
  double front_crack_width = 25.0;
  double corner_crack_dose = 150.0;   // mJ/mm, dice effective dose
  double corner_crack_log_width = 0.25;
  double corner_angle_center = 4.0;   // deg
  double corner_angle_width = 2.5;
  double back_crack_energy = 110.0;   // uJ, recovery pulse energy
  double back_crack_width = 15.0;
  // chipouts = chip_max * sig((P_eff,D - chip_power - chip_shield min(1, rho_T / chip_shield_dose)) / chip_width)
  double chip_max = 0.8;
  double chip_power = 6.5;
  double chip_shield = 2.5;
  double chip_shield_dose = 30.0;
  double chip_width = 0.5;
  // separation = clamp(1 - sep_gain * deficit), deficit from cut power and dice dose
  double cut_power = 3.5;      // W, effective dice power for full-depth cut
  double cut_dose = 15.0;      // mJ/mm
  double sep_gain = 2.0;
  // strength = base - HAZ terms + gain * recovery bump
  double front_base = 560.0;
  double back_base = 520.0;
  double haz_dice = 120.0;
  double haz_dice_dose = 60.0;
  double haz_dice_log_width = 0.35;
  double haz_back_share = 0.8;
  double haz_trench = 60.0;
  double haz_trench_dose = 45.0;
  double haz_trench_width = 8.0;
  double angle_penalty = 40.0;
  double angle_center = 4.0;
  double angle_scale = 6.0;
  double front_gain = 140.0;
  double back_gain = 130.0;
  double back_recov_energy = 100.0;  // uJ, back strength loss onset
  double back_recov_penalty = 80.0;
  double back_recov_width = 15.0;
  // recovery bump B = exp(-((P-P0)/sP)^2/2 - ((F-F0)/sF)^2/2 - (ln(rho_R/rho0)/s_rho)^2/2)
  double bump_power = 3.0;
  double bump_power_width = 2.0;
  double bump_front_focus = 20.0;
  double bump_back_focus = -20.0;
  double bump_focus_width = 45.0;
  double bump_dose = 12.0;
  double bump_dose_log_width = 0.4;
  // bump gain falls with recovery scan speed: gain / (1 + v_R / bump_speed_half)
  double bump_speed_half = 1000.0;

  bool operator==(const LatentConstants&) const = default;
};

struct WaferPreset {
  std::string id;
  // throughput t = 3600 / (L (1/v_T + 1/v_D + 1/v_R) + T_oh), velocities in mm/s
  double street_length_mm = 1.0e5;
  double overhead_s = 120.0;
  double trench_frequency_hz = 50000.0;
  // machine limits
  double dice_energy_cap_uj = 300.0;
  double recov_energy_cap_uj = 150.0;
  double dice_speed_cap_mm_s = 600.0;
  double focus_band_um = 90.0;
  double dice_power_center = 7.0;
  double dice_power_halfwidth = 7.5;
  double recov_power_center = 4.2;
  double recov_power_halfwidth = 5.5;
  // requirement bands
  double width_lo = 28.0;
  double width_hi = 32.0;
  double burr_max = 2.5;
  double crack_max = 0.1;
  double chipout_max = 0.1;
  bool chipouts_active = false;
  // measurement noise
  double sigma_width = 0.3;
  double sigma_burr = 0.1;
  double sigma_fraction = 0.01;
  double sigma_strength = 50.0;
  acquisition::UtilityWeights weights;
  LatentConstants latent;

  bool operator==(const WaferPreset&) const = default;
};

inline WaferPreset bare_silicon() {
  WaferPreset p;
  p.id = "bare_silicon";
  p.weights = {0.075, 0.075, 1.0, 0.01, 0.5, 0.5};
  return p;
}

inline WaferPreset product() {
  WaferPreset p;
  p.id = "product";
  p.chipouts_active = true;
  p.weights = acquisition::UtilityWeights{};
  p.latent.front_base = 420.0;
  p.latent.back_base = 360.0;
  p.latent.front_gain = 120.0;
  p.latent.back_gain = 100.0;
  return p;
}

inline WaferPreset preset_by_id(const std::string& id) {
  if (id == "bare_silicon") return bare_silicon();
  if (id == "product") return product();
  throw PresetError("unknown preset '" + id + "'");
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LatentConstants, width_base, width_gain, width_dose_scale, width_angle,
                                                width_defocus, mod_base, mod_gain, mod_dose_scale, mod_focus, burr_base,
                                                burr_trench, burr_trench_dose, burr_trench_width, burr_dice,
                                                burr_dice_dose, burr_recov, defocus_loss, crack_max, front_crack_energy,
                                                front_crack_width, corner_crack_dose, corner_crack_log_width,
                                                corner_angle_center, corner_angle_width, back_crack_energy,
                                                back_crack_width, chip_max, chip_power, chip_shield, chip_shield_dose,
                                                chip_width, cut_power, cut_dose, sep_gain, front_base, back_base,
                                                haz_dice, haz_dice_dose, haz_dice_log_width, haz_back_share, haz_trench,
                                                haz_trench_dose, haz_trench_width, angle_penalty, angle_center,
                                                angle_scale, front_gain, back_gain, back_recov_energy,
                                                back_recov_penalty, back_recov_width, bump_power, bump_power_width,
                                                bump_front_focus, bump_back_focus, bump_focus_width, bump_dose,
                                                bump_dose_log_width, bump_speed_half)

}  // namespace bold::sim

namespace bold::acquisition {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(UtilityWeights, w_width, w_mod, w_burr, w_throughput, w_front, w_back,
                                                strength_base, width_target, mod_target)
}  // namespace bold::acquisition

namespace bold::sim {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(WaferPreset, id, street_length_mm, overhead_s, trench_frequency_hz,
                                                dice_energy_cap_uj, recov_energy_cap_uj, dice_speed_cap_mm_s,
                                                focus_band_um, dice_power_center, dice_power_halfwidth,
                                                recov_power_center, recov_power_halfwidth, width_lo, width_hi,
                                                burr_max, crack_max, chipout_max, chipouts_active, sigma_width,
                                                sigma_burr, sigma_fraction, sigma_strength, weights, latent)

/// Preset from JSON; missing keys fall back to the named built-in (or the
/// bare-silicon defaults when `id` is not a built-in).
inline WaferPreset preset_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw PresetError("preset must be a JSON object");
  WaferPreset base;
  if (j.contains("id") && j["id"].is_string()) {
    const auto id = j["id"].get<std::string>();
    if (id == "bare_silicon" || id == "product") base = preset_by_id(id);
  }
  nlohmann::json merged = base;
  merged.merge_patch(j);
  try {
    auto p = merged.get<WaferPreset>();
    p.weights.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw PresetError(std::string("invalid preset: ") + e.what());
  } catch (const ConfigError& e) {
    throw PresetError(std::string("invalid preset: ") + e.what());
  }
}

/// Derived process quantities shared by the latent surfaces.
struct ProcessQuantities {
  double v_trench, v_dice, v_recov;  // mm/s
  double trench_dose;                // mJ/mm
  double dice_energy, recov_energy;  // uJ per pulse
  double dice_eta, recov_eta;        // focus coupling
  double dice_eff_power;             // W
  double dice_dose;                  // mJ/mm, effective
  double recov_dose;                 // mJ/mm
};

inline void check_config(const Config& x) {
  if (x.size() != kNumParams)
    throw ContractViolation("configuration has " + std::to_string(x.size()) + " values, expected 11");
  for (double v : x)
    if (!std::isfinite(v)) throw ContractViolation("configuration has non-finite value");
}

inline ProcessQuantities quantities(const Config& x, const WaferPreset& p) {
  check_config(x);
  const auto& c = p.latent;
  ProcessQuantities q{};
  q.v_trench = x[kTrenchStep] * p.trench_frequency_hz * 1e-3;
  q.v_dice = x[kDiceStep] * x[kDiceFrequency] * 1e-3;
  q.v_recov = x[kRecovStep] * x[kRecovFrequency] * 1e-3;
  q.trench_dose = x[kTrenchPower] / q.v_trench * 1e3;
  q.dice_energy = x[kDicePower] / x[kDiceFrequency] * 1e6;
  q.recov_energy = x[kRecovPower] / x[kRecovFrequency] * 1e6;
  q.dice_eta = 1.0 - c.defocus_loss * std::pow(x[kDiceFocus] / 100.0, 2);
  q.recov_eta = 1.0 - c.defocus_loss * std::pow(x[kRecovFocus] / 100.0, 2);
  q.dice_eff_power = x[kDicePower] * q.dice_eta;
  q.dice_dose = q.dice_eff_power / q.v_dice * 1e3;
  q.recov_dose = x[kRecovPower] * q.recov_eta / q.v_recov * 1e3;
  return q;
}

/// Wafers per hour.
inline double throughput(const Config& x, const WaferPreset& p) {
  const auto q = quantities(x, p);
  return 3600.0 / (p.street_length_mm * (1.0 / q.v_trench + 1.0 / q.v_dice + 1.0 / q.v_recov) + p.overhead_s);
}

inline constexpr std::size_t kNumKnownConstraints = 5;

/// Machine limits, feasible when every value <= 0:
///   0: dice pulse energy  P_D / f_D <= cap
///   1: recovery pulse energy  P_R / f_R <= cap
///   2: dice focus/power ellipse (focus inside the Rayleigh band, shrinking at extreme power)
///   3: recovery focus/power ellipse
///   4: dice scan speed  step_D * f_D <= cap
/// Each value moves by less than kKnownLipschitzPerStep for a single grid step.
inline std::array<double, kNumKnownConstraints> known_constraints(const Config& x, const WaferPreset& p) {
  const auto q = quantities(x, p);
  return {
      q.dice_energy / p.dice_energy_cap_uj - 1.0,
      q.recov_energy / p.recov_energy_cap_uj - 1.0,
      std::pow(x[kDiceFocus] / p.focus_band_um, 2) +
          std::pow((x[kDicePower] - p.dice_power_center) / p.dice_power_halfwidth, 2) - 1.0,
      std::pow(x[kRecovFocus] / p.focus_band_um, 2) +
          std::pow((x[kRecovPower] - p.recov_power_center) / p.recov_power_halfwidth, 2) - 1.0,
      q.v_dice / p.dice_speed_cap_mm_s - 1.0,
  };
}

inline constexpr double kKnownLipschitzPerStep = 0.25;

inline bool machine_feasible(const Config& x, const WaferPreset& p) {
  for (double g : known_constraints(x, p))
    if (!(g <= 0.0)) return false;
  return true;
}

/// Noise-free measurement surfaces. Chipouts are reported only when active.
struct Measurements {
  double dicing_width = 0.0;
  double mod_width = 0.0;
  double burr = 0.0;
  double front_cracks = 0.0;
  double corner_cracks = 0.0;
  double back_cracks = 0.0;
  double separation = 1.0;
  std::optional<double> chipouts;
  double front_strength = 0.0;  // latent mean
  double back_strength = 0.0;   // latent mean

  bool operator==(const Measurements&) const = default;
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double recovery_bump(const Config& x, const ProcessQuantities& q, const LatentConstants& c, double focus_center) {
  const double dp = (x[kRecovPower] - c.bump_power) / c.bump_power_width;
  const double df = (x[kRecovFocus] - focus_center) / c.bump_focus_width;
  const double dd = std::log(q.recov_dose / c.bump_dose) / c.bump_dose_log_width;
  return std::exp(-0.5 * (dp * dp + df * df + dd * dd));
}

inline Measurements latent(const Config& x, const WaferPreset& p) {
  const auto q = quantities(x, p);
  const auto& c = p.latent;
  Measurements m;
  const double bump_front = recovery_bump(x, q, c, c.bump_front_focus);
  const double bump_back = recovery_bump(x, q, c, c.bump_back_focus);

  m.dicing_width = c.width_base + c.width_gain * std::log1p(q.trench_dose / c.width_dose_scale) +
                   c.width_angle * x[kTrenchAngle] + c.width_defocus * (1.0 - q.dice_eta);
  m.mod_width = c.mod_base + c.mod_gain * std::log1p(q.dice_dose / c.mod_dose_scale) +
                c.mod_focus * std::abs(x[kDiceFocus]) / 100.0;
  m.burr = c.burr_base + c.burr_trench * sigmoid((q.trench_dose - c.burr_trench_dose) / c.burr_trench_width) +
           c.burr_dice * sigmoid(std::log(q.dice_dose / c.burr_dice_dose) / 0.3) + c.burr_recov * (1.0 - bump_front);

  m.front_cracks = c.crack_max * sigmoid((q.dice_energy - c.front_crack_energy) / c.front_crack_width);
  const double da = (x[kTrenchAngle] - c.corner_angle_center) / c.corner_angle_width;
  m.corner_cracks =
      c.crack_max * sigmoid(std::log(q.dice_dose / c.corner_crack_dose) / c.corner_crack_log_width + da * da - 1.0);
  m.back_cracks = c.crack_max * sigmoid((q.recov_energy - c.back_crack_energy) / c.back_crack_width);
  if (p.chipouts_active) {
    const double shield = c.chip_shield * std::min(1.0, q.trench_dose / c.chip_shield_dose);
    m.chipouts = c.chip_max * sigmoid((q.dice_eff_power - c.chip_power - shield) / c.chip_width);
  }
  const double deficit =
      std::max(0.0, (c.cut_power - q.dice_eff_power) / c.cut_power) + std::max(0.0, (c.cut_dose - q.dice_dose) / c.cut_dose);
  m.separation = std::clamp(1.0 - c.sep_gain * deficit, 0.0, 1.0);

  const double haz_dice = c.haz_dice * sigmoid(std::log(q.dice_dose / c.haz_dice_dose) / c.haz_dice_log_width);
  const double haz_trench = c.haz_trench * sigmoid((q.trench_dose - c.haz_trench_dose) / c.haz_trench_width);
  const double ang = (x[kTrenchAngle] - c.angle_center) / c.angle_scale;
  const double speed = 1.0 / (1.0 + q.v_recov / c.bump_speed_half);
  m.front_strength =
      c.front_base - haz_dice - haz_trench - c.angle_penalty * ang * ang + c.front_gain * speed * bump_front;
  m.back_strength = (c.back_base - c.haz_back_share * haz_dice -
                     c.back_recov_penalty * sigmoid((q.recov_energy - c.back_recov_energy) / c.back_recov_width) +
                     c.back_gain * speed * bump_back);
  return m;
}

/// Requirement bands: width band, burr ceiling, crack/chipout ceilings, full separation.
inline bool requirement_feasible(const Measurements& m, const WaferPreset& p) {
  if (m.dicing_width < p.width_lo || m.dicing_width > p.width_hi) return false;
  if (m.burr > p.burr_max) return false;
  if (m.front_cracks > p.crack_max || m.corner_cracks > p.crack_max || m.back_cracks > p.crack_max) return false;
  if (m.chipouts && *m.chipouts > p.chipout_max) return false;
  return m.separation >= 1.0;
}

/// Noise-free utility of a configuration under `w`.
inline double latent_utility(const Config& x, const WaferPreset& p, const acquisition::UtilityWeights& w) {
  const auto m = latent(x, p);
  return acquisition::utility({m.dicing_width, m.mod_width, m.burr, m.front_strength, m.back_strength}, throughput(x, p),
                              w);
}

/// Seed of the noise stream for one (configuration, seed) pair.
inline std::uint64_t config_seed(const Config& x, std::uint64_t seed, std::string_view channel) {
  std::uint64_t h = derive_seed(seed, channel);
  for (double v : x) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h = splitmix64(h ^ bits);
  }
  return h;
}

inline void require_machine_feasible(const Config& x, const WaferPreset& p) {
  if (!machine_feasible(x, p)) throw ValidationError("configuration violates a machine limit (interlock)");
}

/// Optical inspection: widths, burr and failure fractions with measurement noise.
inline Measurements evaluate_optical(const Config& x, const WaferPreset& p, std::uint64_t seed) {
  require_machine_feasible(x, p);
  Measurements m = latent(x, p);
  auto rng = make_engine(config_seed(x, seed, "optical"));
  const auto noisy = [&](double mean, double sd) { return mean + sd * standard_normal(rng); };
  const auto frac = [&](double mean) { return std::clamp(noisy(mean, p.sigma_fraction), 0.0, 1.0); };
  m.dicing_width = std::max(0.0, noisy(m.dicing_width, p.sigma_width));
  m.mod_width = std::max(0.0, noisy(m.mod_width, p.sigma_width));
  m.burr = std::max(0.0, noisy(m.burr, p.sigma_burr));
  m.front_cracks = frac(m.front_cracks);
  m.corner_cracks = frac(m.corner_cracks);
  m.back_cracks = frac(m.back_cracks);
  if (m.chipouts) m.chipouts = frac(*m.chipouts);
  // Full separation is a hard outcome; only partial cuts are noisy.
  if (m.separation < 1.0) m.separation = std::clamp(noisy(m.separation, p.sigma_fraction), 0.0, 1.0 - 1e-3);
  return m;
}

struct StrengthSamples {
  std::vector<double> front;
  std::vector<double> back;
};

/// Three-point bending: n_reps raw strengths per side.
inline StrengthSamples evaluate_destructive(const Config& x, const WaferPreset& p, int n_reps, std::uint64_t seed) {
  if (n_reps < 1) throw ValidationError("n_reps must be >= 1");
  require_machine_feasible(x, p);
  const auto m = latent(x, p);
  auto rng = make_engine(config_seed(x, seed, "destructive"));
  StrengthSamples s;
  for (int i = 0; i < n_reps; ++i) s.front.push_back(m.front_strength + p.sigma_strength * standard_normal(rng));
  for (int i = 0; i < n_reps; ++i) s.back.push_back(m.back_strength + p.sigma_strength * standard_normal(rng));
  return s;
}

}  // namespace bold::sim
