#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bold/acquisition/utility.hpp"
#include "bold/gp/kernel.hpp"
#include "bold/gp/model.hpp"
#include "bold/sim/wafer.hpp"
#include "bold/space.hpp"
#include "bold/trust_region.hpp"

namespace bold::campaign {

using nlohmann::json;
using Config = std::vector<double>;  // physical units

inline constexpr int kSchemaVersion = 1;

/// Learned constraint channels in trace-column order.
namespace constraint {
inline constexpr std::string_view kFrontCracks = "front_cracks";
inline constexpr std::string_view kCornerCracks = "corner_cracks";
inline constexpr std::string_view kBackCracks = "back_cracks";
inline constexpr std::string_view kSeparation = "separation";
inline constexpr std::string_view kChipouts = "chipouts";
inline constexpr std::array<std::string_view, 5> kAll{kFrontCracks, kCornerCracks, kBackCracks, kSeparation, kChipouts};
}  // namespace constraint

struct CampaignConfig {
  std::vector<ParameterSpec> parameters = laser_space().params();
  /// Machine limits, requirement thresholds and throughput constants. Only
  /// the known-constraint, threshold and throughput fields are used.
  sim::WaferPreset machine = sim::bare_silicon();
  acquisition::UtilityWeights weights = sim::bare_silicon().weights;
  int n_init = 9;
  int batch_size = 2;
  std::uint64_t seed = 0;
  int candidate_count = 1000;
  int destructive_reps = 10;
  int validation_reps = 15;
  TrustRegionConfig trust_region;
  int fit_restarts_initial = 8;
  int fit_restarts = 2;
  int fit_max_iterations = 100;
  int widen_retries = 3;
  /// Optional log-normal hyperparameter priors keyed by output name.
  std::map<std::string, gp::LogNormalPrior> priors;

  ParameterSpace space() const { return ParameterSpace(parameters); }

  std::vector<std::string> active_constraints() const {
    std::vector<std::string> out;
    for (auto c : constraint::kAll)
      if (c != constraint::kChipouts || machine.chipouts_active) out.emplace_back(c);
    return out;
  }

  void validate() const {
    if (parameters.size() != sim::kNumParams) throw ConfigError("campaign needs the 11 laser parameters");
    (void)space();
    weights.validate();
    if (n_init < 1) throw ConfigError("n_init must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (candidate_count < 1) throw ConfigError("candidate_count must be >= 1");
    if (destructive_reps < 1 || validation_reps < 1) throw ConfigError("repetition counts must be >= 1");
    if (fit_restarts_initial < 1 || fit_restarts < 1 || fit_max_iterations < 1)
      throw ConfigError("fit settings must be >= 1");
    if (widen_retries < 0) throw ConfigError("widen_retries must be >= 0");
    (void)init_trust_region(parameters.size(), trust_region, batch_size);
  }

  bool operator==(const CampaignConfig&) const = default;
};

/// Campaign defaults for a simulator preset: its weights, q = 2 for bare
/// silicon and q = 3 for product wafers.
inline CampaignConfig config_for_preset(const sim::WaferPreset& p, std::uint64_t seed) {
  CampaignConfig c;
  c.machine = p;
  c.weights = p.weights;
  c.batch_size = p.chipouts_active ? 3 : 2;
  c.seed = seed;
  return c;
}

struct OpticalMeasurement {
  double dicing_width = 0.0;
  double mod_width = 0.0;
  double burr = 0.0;
  double front_cracks = 0.0;
  double corner_cracks = 0.0;
  double back_cracks = 0.0;
  double separation = 1.0;
  std::optional<double> chipouts;

  bool operator==(const OpticalMeasurement&) const = default;
};

struct DestructiveMeasurement {
  std::vector<double> front;
  std::vector<double> back;

  bool operator==(const DestructiveMeasurement&) const = default;
};

struct Observation {
  std::string id;
  int iteration = 0;  // 1-based evaluation index
  int stage = 1;      // stage when told
  Config x;
  OpticalMeasurement optical;
  std::optional<DestructiveMeasurement> destructive;
  std::vector<double> violations;  // active constraints, observed - permitted
  bool feasible = false;
  double utility_optical = 0.0;         // stage-1 weights
  std::optional<double> utility_full;   // full weights, needs destructive data

  bool operator==(const Observation&) const = default;
};

struct PendingConfig {
  std::string id;
  Config x;

  bool operator==(const PendingConfig&) const = default;
};

struct Event {
  std::string type;  // initialized | asked | told | stage_switched | terminated
  std::string timestamp;
  int iteration = 0;
  json payload;

  bool operator==(const Event&) const = default;
};

struct TraceRow {
  int iter = 0;
  int stage = 1;
  double tau = 0.0;
  std::optional<double> utility_best;          // best-so-far feasible, current stage definition
  std::optional<double> utility_optical_best;  // best-so-far feasible, stage-1 utility, whole run
  std::optional<double> utility_full_best;     // best-so-far feasible, full utility, whole run
  double viol_front = 0.0;
  double viol_corner = 0.0;
  double viol_back = 0.0;
  double viol_sep = 0.0;
  std::optional<double> viol_chip;
  bool feasible = false;
  int destructive_count = 0;  // raw strength values told so far

  bool operator==(const TraceRow&) const = default;
};

struct CampaignState {
  int schema_version = kSchemaVersion;
  CampaignConfig config;
  int stage = 1;
  TrustRegionState trust_region;
  std::vector<PendingConfig> pending;
  bool pending_from_ask = false;  // initial-design batches do not move the trust region
  bool batch_improved = false;
  std::vector<Observation> observations;
  int next_id = 0;
  int ask_count = 0;
  std::optional<std::string> incumbent_id;
  std::optional<double> incumbent_utility;
  std::map<std::string, gp::KernelHyperparameters> hyperparameters;
  std::optional<int> stage_switch_iteration;
  bool complete = false;
  std::vector<TraceRow> trace;
  std::vector<Event> events;

  int iteration() const { return static_cast<int>(observations.size()); }

  bool operator==(const CampaignState&) const = default;
};

// -- JSON -------------------------------------------------------------------

namespace detail {
template <typename T>
void put(json& j, const char* key, const std::optional<T>& v) {
  j[key] = v ? json(*v) : json(nullptr);
}
template <typename T>
void get(const json& j, const char* key, std::optional<T>& v) {
  if (!j.contains(key) || j.at(key).is_null())
    v.reset();
  else
    v = j.at(key).get<T>();
}
}  // namespace detail

}  // namespace bold::campaign

namespace bold {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ParameterSpec, name, unit, lo, hi, step)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrustRegionConfig, tau_init, tau_max, tau_threshold, success_tolerance,
                                                failure_tolerance, lengthscale_weighting)

inline void to_json(nlohmann::json& j, const TrustRegionState& s) {
  j = {{"dim", s.dim},
       {"side_length", s.side_length},
       {"success_count", s.success_count},
       {"failure_count", s.failure_count},
       {"success_tolerance", s.success_tolerance},
       {"failure_tolerance", s.failure_tolerance},
       {"tau_init", s.tau_init},
       {"tau_max", s.tau_max},
       {"tau_threshold", s.tau_threshold},
       {"lengthscale_weighting", s.lengthscale_weighting},
       {"terminated", s.terminated}};
  campaign::detail::put(j, "center", s.center);
}
inline void from_json(const nlohmann::json& j, TrustRegionState& s) {
  j.at("dim").get_to(s.dim);
  j.at("side_length").get_to(s.side_length);
  j.at("success_count").get_to(s.success_count);
  j.at("failure_count").get_to(s.failure_count);
  j.at("success_tolerance").get_to(s.success_tolerance);
  j.at("failure_tolerance").get_to(s.failure_tolerance);
  j.at("tau_init").get_to(s.tau_init);
  j.at("tau_max").get_to(s.tau_max);
  j.at("tau_threshold").get_to(s.tau_threshold);
  j.at("lengthscale_weighting").get_to(s.lengthscale_weighting);
  j.at("terminated").get_to(s.terminated);
  campaign::detail::get(j, "center", s.center);
}
}  // namespace bold

namespace bold::gp {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(KernelHyperparameters, lengthscales, signal_variance, noise_variance)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LogNormalPrior, center, log_std)
}  // namespace bold::gp

namespace bold::campaign {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CampaignConfig, parameters, machine, weights, n_init, batch_size, seed,
                                                candidate_count, destructive_reps, validation_reps, trust_region,
                                                fit_restarts_initial, fit_restarts, fit_max_iterations, widen_retries,
                                                priors)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DestructiveMeasurement, front, back)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PendingConfig, id, x)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Event, type, timestamp, iteration, payload)

inline void to_json(json& j, const OpticalMeasurement& m) {
  j = {{"dicing_width", m.dicing_width}, {"mod_width", m.mod_width},         {"burr", m.burr},
       {"front_cracks", m.front_cracks}, {"corner_cracks", m.corner_cracks}, {"back_cracks", m.back_cracks},
       {"separation", m.separation}};
  detail::put(j, "chipouts", m.chipouts);
}

/// Strict: every optical field except chipouts is required and numeric.
inline void from_json(const json& j, OpticalMeasurement& m) {
  const auto num = [&](const char* k) {
    if (!j.contains(k)) throw ValidationError(std::string("optical measurement is missing '") + k + "'");
    if (!j.at(k).is_number()) throw ValidationError(std::string("optical field '") + k + "' must be a number");
    return j.at(k).get<double>();
  };
  m.dicing_width = num("dicing_width");
  m.mod_width = num("mod_width");
  m.burr = num("burr");
  m.front_cracks = num("front_cracks");
  m.corner_cracks = num("corner_cracks");
  m.back_cracks = num("back_cracks");
  m.separation = num("separation");
  if (j.contains("chipouts") && !j.at("chipouts").is_null())
    m.chipouts = num("chipouts");
  else
    m.chipouts.reset();
}

inline void to_json(json& j, const Observation& o) {
  j = {{"id", o.id},
       {"iteration", o.iteration},
       {"stage", o.stage},
       {"x", o.x},
       {"optical", o.optical},
       {"violations", o.violations},
       {"feasible", o.feasible},
       {"utility_optical", o.utility_optical}};
  detail::put(j, "destructive", o.destructive);
  detail::put(j, "utility_full", o.utility_full);
}
inline void from_json(const json& j, Observation& o) {
  j.at("id").get_to(o.id);
  j.at("iteration").get_to(o.iteration);
  j.at("stage").get_to(o.stage);
  j.at("x").get_to(o.x);
  j.at("optical").get_to(o.optical);
  j.at("violations").get_to(o.violations);
  j.at("feasible").get_to(o.feasible);
  j.at("utility_optical").get_to(o.utility_optical);
  detail::get(j, "destructive", o.destructive);
  detail::get(j, "utility_full", o.utility_full);
}

inline void to_json(json& j, const TraceRow& r) {
  j = {{"iter", r.iter},
       {"stage", r.stage},
       {"tau", r.tau},
       {"viol_front", r.viol_front},
       {"viol_corner", r.viol_corner},
       {"viol_back", r.viol_back},
       {"viol_sep", r.viol_sep},
       {"feasible", r.feasible},
       {"destructive_count", r.destructive_count}};
  detail::put(j, "utility_best", r.utility_best);
  detail::put(j, "utility_optical_best", r.utility_optical_best);
  detail::put(j, "utility_full_best", r.utility_full_best);
  detail::put(j, "viol_chip", r.viol_chip);
}
inline void from_json(const json& j, TraceRow& r) {
  j.at("iter").get_to(r.iter);
  j.at("stage").get_to(r.stage);
  j.at("tau").get_to(r.tau);
  j.at("viol_front").get_to(r.viol_front);
  j.at("viol_corner").get_to(r.viol_corner);
  j.at("viol_back").get_to(r.viol_back);
  j.at("viol_sep").get_to(r.viol_sep);
  j.at("feasible").get_to(r.feasible);
  j.at("destructive_count").get_to(r.destructive_count);
  detail::get(j, "utility_best", r.utility_best);
  detail::get(j, "utility_optical_best", r.utility_optical_best);
  detail::get(j, "utility_full_best", r.utility_full_best);
  detail::get(j, "viol_chip", r.viol_chip);
}

inline void to_json(json& j, const CampaignState& s) {
  j = {{"schema_version", s.schema_version},
       {"config", s.config},
       {"stage", s.stage},
       {"trust_region", s.trust_region},
       {"pending", s.pending},
       {"pending_from_ask", s.pending_from_ask},
       {"batch_improved", s.batch_improved},
       {"observations", s.observations},
       {"next_id", s.next_id},
       {"ask_count", s.ask_count},
       {"hyperparameters", s.hyperparameters},
       {"complete", s.complete},
       {"trace", s.trace},
       {"events", s.events}};
  detail::put(j, "incumbent_id", s.incumbent_id);
  detail::put(j, "incumbent_utility", s.incumbent_utility);
  detail::put(j, "stage_switch_iteration", s.stage_switch_iteration);
}

inline void from_json(const json& j, CampaignState& s) {
  const int version = j.at("schema_version").get<int>();
  if (version != kSchemaVersion)
    throw MigrationError("campaign schema version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kSchemaVersion) + ")");
  s.schema_version = version;
  j.at("config").get_to(s.config);
  j.at("stage").get_to(s.stage);
  j.at("trust_region").get_to(s.trust_region);
  j.at("pending").get_to(s.pending);
  j.at("pending_from_ask").get_to(s.pending_from_ask);
  j.at("batch_improved").get_to(s.batch_improved);
  j.at("observations").get_to(s.observations);
  j.at("next_id").get_to(s.next_id);
  j.at("ask_count").get_to(s.ask_count);
  j.at("hyperparameters").get_to(s.hyperparameters);
  j.at("complete").get_to(s.complete);
  j.at("trace").get_to(s.trace);
  j.at("events").get_to(s.events);
  detail::get(j, "incumbent_id", s.incumbent_id);
  detail::get(j, "incumbent_utility", s.incumbent_utility);
  detail::get(j, "stage_switch_iteration", s.stage_switch_iteration);
}

}  // namespace bold::campaign
