#pragma once

#include <boost/math/distributions/normal.hpp>
#include <sstream>

#include "bold/campaign/campaign.hpp"
#include "bold/sim/wafer.hpp"

namespace bold::campaign {

/// Black box used by the autonomous loop. `evaluation` is the 0-based index
/// of the configuration within the run.
struct Evaluator {
  std::function<OpticalMeasurement(const Config&, int evaluation)> optical;
  std::function<DestructiveMeasurement(const Config&, int reps, int evaluation)> destructive;
};

inline OpticalMeasurement to_optical(const sim::Measurements& m) {
  return {m.dicing_width, m.mod_width, m.burr, m.front_cracks, m.corner_cracks, m.back_cracks, m.separation, m.chipouts};
}

/// Simulator evaluator; evaluation n draws its noise from derive_seed(seed, "eval", n).
inline Evaluator sim_evaluator(const sim::WaferPreset& preset, std::uint64_t seed) {
  Evaluator e;
  e.optical = [preset, seed](const Config& x, int n) {
    return to_optical(sim::evaluate_optical(x, preset, derive_seed(seed, "eval", static_cast<std::uint64_t>(n))));
  };
  e.destructive = [preset, seed](const Config& x, int reps, int n) {
    auto s = sim::evaluate_destructive(x, preset, reps, derive_seed(seed, "eval-destructive", static_cast<std::uint64_t>(n)));
    return DestructiveMeasurement{std::move(s.front), std::move(s.back)};
  };
  return e;
}

struct AutonomousOptions {
  int budget = 140;
  /// Stage 1 ends after this share of the budget if its trust region has not
  /// collapsed by then.
  double stage1_budget_fraction = 0.5;
};

/// Closed ask -> evaluate -> tell loop until the budget is spent or the
/// Stage-2 trust region terminates. Destructive tests run only in Stage 2.
inline const std::vector<TraceRow>& run_autonomous(CampaignState& s, const Evaluator& eval,
                                                   const AutonomousOptions& opt, const Clock& clock = system_clock()) {
  if (opt.budget < s.config.n_init) throw ContractViolation("run_autonomous: budget must be >= n_init");
  if (!(opt.stage1_budget_fraction > 0.0 && opt.stage1_budget_fraction <= 1.0))
    throw ContractViolation("run_autonomous: stage1_budget_fraction must be in (0, 1]");
  const auto evaluate_pending = [&] {
    const auto batch = s.pending;
    for (const auto& p : batch) {
      const int n = s.iteration();
      OpticalMeasurement m;
      std::optional<DestructiveMeasurement> d;
      try {
        m = eval.optical(p.x, n);
        if (s.stage == 2) d = eval.destructive(p.x, s.config.destructive_reps, n);
      } catch (const std::exception& e) {
        throw EvaluationError("evaluation " + std::to_string(n) + " (" + p.id + "): " + e.what(), n);
      }
      tell(s, p.id, m, d, clock);
    }
  };
  evaluate_pending();
  const int stage1_limit = static_cast<int>(std::ceil(opt.stage1_budget_fraction * opt.budget));
  while (s.iteration() < opt.budget && !s.complete) {
    if (s.stage == 1 && s.iteration() >= stage1_limit) switch_stage(s, "budget", clock);
    const int q = std::min(s.config.batch_size, opt.budget - s.iteration());
    ask(s, clock, q);
    evaluate_pending();
  }
  return s.trace;
}

// -- MAP what-if --------------------------------------------------------------

/// Posterior summaries over a dense machine-feasible pool; reusable across weight sets.
struct MapPool {
  std::vector<Config> configs;
  std::vector<double> throughput;
  std::map<std::string, Eigen::VectorXd> objective_mean;
  std::vector<Eigen::VectorXd> feasibility;  // per constraint, P(c <= 0)
  std::vector<std::string> constraint_names;
};

struct MapResult {
  Config config;
  double throughput = 0.0;
  double utility = 0.0;  // posterior-mean utility under the requested weights
  std::map<std::string, double> predicted;
  double feasibility_level = 0.0;  // minimum per-constraint probability at the returned config
};

inline MapPool build_map_pool(const CampaignState& state, std::size_t samples = 100000) {
  if (state.stage != 2) throw LifecycleError("map_estimate needs Stage-2 models");
  if (state.observations.empty()) throw LifecycleError("map_estimate needs observations");
  CampaignState s = state;
  const auto space = s.config.space();
  const auto models = fit_models(s, derive_seed(s.config.seed, "map-fit"), false);

  MapPool pool;
  std::set<Config> seen;
  ScrambledSobol sobol(space.dim(), derive_seed(s.config.seed, "map-pool"));
  for (std::size_t i = 0; i < samples; ++i) {
    const auto x = space.snap(space.to_physical(sobol.next()));
    if (sim::machine_feasible(x, s.config.machine) && seen.insert(x).second) pool.configs.push_back(x);
  }
  if (state.incumbent_id)
    for (const auto& o : state.observations)
      if (o.id == *state.incumbent_id && seen.insert(o.x).second) pool.configs.push_back(o.x);

  std::vector<acquisition::Point> unit;
  unit.reserve(pool.configs.size());
  for (const auto& x : pool.configs) {
    unit.push_back(space.to_unit(x));
    pool.throughput.push_back(sim::throughput(x, s.config.machine));
  }
  const Eigen::MatrixXd U = acquisition::to_matrix(unit, space.dim());
  for (const auto& o : models.objectives.outputs()) {
    Eigen::VectorXd mean;
    o.predict_many(U, mean, nullptr);
    pool.objective_mean[o.name()] = std::move(mean);
  }
  const boost::math::normal_distribution<> normal;
  for (const auto& c : models.constraints.outputs()) {
    Eigen::VectorXd mean, var;
    c.predict_many(U, mean, &var);
    Eigen::VectorXd p(mean.size());
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
      const double sd = std::sqrt(std::max(var[i], 0.0));
      p[i] = sd > 0.0 ? boost::math::cdf(normal, -mean[i] / sd) : (mean[i] <= 0.0 ? 1.0 : 0.0);
    }
    pool.feasibility.push_back(std::move(p));
    pool.constraint_names.push_back(c.name());
  }
  return pool;
}

/// Posterior-mean utility argmax over the pool subject to every constraint's
/// feasibility probability >= level.
inline MapResult map_estimate(const MapPool& pool, const acquisition::UtilityWeights& w, double level = 0.9) {
  w.validate();
  if (!(level >= 0.0 && level <= 1.0)) throw ValidationError("feasibility_level must be in [0,1]");
  const auto mean = [&](std::string_view name, std::size_t i, double fallback) {
    const auto it = pool.objective_mean.find(std::string(name));
    return it == pool.objective_mean.end() ? fallback : it->second[static_cast<Eigen::Index>(i)];
  };
  std::optional<std::size_t> best;
  double best_u = -std::numeric_limits<double>::infinity();
  double best_level = 0.0;
  for (std::size_t i = 0; i < pool.configs.size(); ++i) {
    double p_min = 1.0;
    for (const auto& f : pool.feasibility) p_min = std::min(p_min, f[static_cast<Eigen::Index>(i)]);
    best_level = std::max(best_level, p_min);
    if (p_min < level) continue;
    namespace ob = acquisition::objective;
    const double u = acquisition::utility({mean(ob::kDicingWidth, i, 0.0), mean(ob::kModWidth, i, 0.0),
                                           mean(ob::kBurr, i, 0.0), mean(ob::kFrontStrength, i, w.strength_base),
                                           mean(ob::kBackStrength, i, w.strength_base)},
                                          pool.throughput[i], w);
    if (u > best_u) {
      best_u = u;
      best = i;
    }
  }
  if (!best) {
    std::ostringstream msg;
    msg << "no candidate reaches feasibility level " << level << "; best achievable is " << best_level;
    throw ThresholdTooStrict(msg.str(), best_level);
  }
  MapResult r;
  r.config = pool.configs[*best];
  r.throughput = pool.throughput[*best];
  r.utility = best_u;
  for (const auto& [name, m] : pool.objective_mean) r.predicted[name] = m[static_cast<Eigen::Index>(*best)];
  r.feasibility_level = 1.0;
  for (const auto& f : pool.feasibility) r.feasibility_level = std::min(r.feasibility_level, f[static_cast<Eigen::Index>(*best)]);
  return r;
}

inline MapResult map_estimate(const CampaignState& s, const acquisition::UtilityWeights& w, double level = 0.9,
                              std::size_t samples = 100000) {
  return map_estimate(build_map_pool(s, samples), w, level);
}

// -- trace export ---------------------------------------------------------------

/// Numbers use the shortest text that round-trips; missing values are empty fields.
inline std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::string out = "iter,stage,tau,utility_best,viol_front,viol_corner,viol_back,viol_sep,viol_chip\n";
  const auto num = [&](const std::optional<double>& v) {
    out += ',';
    if (v) out += json(*v).dump();
  };
  for (const auto& r : rows) {
    out += std::to_string(r.iter) + ',' + std::to_string(r.stage) + ',' + json(r.tau).dump();
    num(r.utility_best);
    num(r.viol_front);
    num(r.viol_corner);
    num(r.viol_back);
    num(r.viol_sep);
    num(r.viol_chip);
    out += '\n';
  }
  return out;
}

inline json trace_json(const std::vector<TraceRow>& rows) { return json(rows); }

}  // namespace bold::campaign
