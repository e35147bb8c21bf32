#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <functional>
#include <limits>
#include <set>

#include "bold/acquisition/candidates.hpp"
#include "bold/acquisition/select_batch.hpp"
#include "bold/campaign/state.hpp"
#include "bold/gp/fit.hpp"
#include "bold/gp/multi_output.hpp"

namespace bold::campaign {

using Clock = std::function<std::string()>;

/// UTC wall clock; BOLD_FIXED_TIME overrides it for reproducible records.
inline std::string utc_now() {
  if (const char* fixed = std::getenv("BOLD_FIXED_TIME")) return fixed;
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline const Clock& system_clock() {
  static const Clock c = utc_now;
  return c;
}

// -- derived quantities ----------------------------------------------------

inline std::vector<double> to_unit(const CampaignState& s, const Config& x) { return s.config.space().to_unit(x); }

inline double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double e : v) acc += e;
  return acc / static_cast<double>(v.size());
}

/// Violation targets (observed - permitted) for the active constraints.
inline std::vector<double> violation_targets(const CampaignConfig& c, const OpticalMeasurement& m) {
  std::vector<double> out;
  for (const auto& name : c.active_constraints()) {
    if (name == constraint::kFrontCracks) out.push_back(m.front_cracks - c.machine.crack_max);
    if (name == constraint::kCornerCracks) out.push_back(m.corner_cracks - c.machine.crack_max);
    if (name == constraint::kBackCracks) out.push_back(m.back_cracks - c.machine.crack_max);
    if (name == constraint::kSeparation) out.push_back(1.0 - m.separation);
    if (name == constraint::kChipouts) out.push_back(m.chipouts.value_or(0.0) - c.machine.chipout_max);
  }
  return out;
}

inline bool is_feasible(const std::vector<double>& violations, const OpticalMeasurement& m) {
  for (double v : violations)
    if (v > 0.0) return false;
  return m.separation >= 1.0;
}

inline double total_violation(const Observation& o) {
  double acc = 0.0;
  for (double v : o.violations) acc += std::max(0.0, v);
  return acc;
}

inline std::optional<double> stage_utility(const Observation& o, int stage) {
  if (stage == 1) return o.utility_optical;
  return o.utility_full;
}

/// Index of the feasible observation maximizing the stage utility; earliest wins ties.
inline std::optional<std::size_t> incumbent_index(const std::vector<Observation>& obs, int stage, std::size_t upto) {
  std::optional<std::size_t> best;
  double best_u = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < upto; ++i) {
    const auto u = stage_utility(obs[i], stage);
    if (!obs[i].feasible || !u) continue;
    if (*u > best_u) {
      best_u = *u;
      best = i;
    }
  }
  return best;
}

inline void validate_measurement(const CampaignConfig& c, const OpticalMeasurement& m,
                                 const std::optional<DestructiveMeasurement>& d) {
  const auto finite = [](double v, const char* what) {
    if (!std::isfinite(v)) throw ValidationError(std::string(what) + " must be finite");
  };
  for (auto [v, what] : {std::pair{m.dicing_width, "dicing_width"}, {m.mod_width, "mod_width"}, {m.burr, "burr"}}) {
    finite(v, what);
    if (v < 0.0) throw ValidationError(std::string(what) + " must be >= 0");
  }
  const auto fraction = [&](double v, const char* what) {
    finite(v, what);
    if (v < 0.0 || v > 1.0) throw ValidationError(std::string(what) + " must be a fraction in [0,1]");
  };
  fraction(m.front_cracks, "front_cracks");
  fraction(m.corner_cracks, "corner_cracks");
  fraction(m.back_cracks, "back_cracks");
  fraction(m.separation, "separation");
  if (m.chipouts) fraction(*m.chipouts, "chipouts");
  if (c.machine.chipouts_active && !m.chipouts) throw ValidationError("chipouts is required for this campaign");
  if (d) {
    if (d->front.size() != d->back.size()) throw ValidationError("front and back strength lists differ in length");
    const auto n = static_cast<int>(d->front.size());
    if (n != c.destructive_reps && n != c.validation_reps)
      throw ValidationError("strength lists must have " + std::to_string(c.destructive_reps) + " (or " +
                            std::to_string(c.validation_reps) + ") values per side");
    for (const auto* side : {&d->front, &d->back})
      for (double v : *side) {
        finite(v, "strength");
        if (v <= 0.0) throw ValidationError("strength values must be positive MPa");
      }
  }
}

inline Observation make_observation(const CampaignConfig& c, const std::string& id, int iteration, int stage,
                                    const Config& x, const OpticalMeasurement& m,
                                    const std::optional<DestructiveMeasurement>& d) {
  Observation o;
  o.id = id;
  o.iteration = iteration;
  o.stage = stage;
  o.x = x;
  o.optical = m;
  o.destructive = d;
  o.violations = violation_targets(c, m);
  o.feasible = is_feasible(o.violations, m);
  const double t = sim::throughput(x, c.machine);
  o.utility_optical = acquisition::utility({m.dicing_width, m.mod_width, m.burr, c.weights.strength_base,
                                            c.weights.strength_base},
                                           t, acquisition::stage_weights(c.weights, 1));
  if (d)
    o.utility_full =
        acquisition::utility({m.dicing_width, m.mod_width, m.burr, mean_of(d->front), mean_of(d->back)}, t, c.weights);
  return o;
}

inline acquisition::KnownConstraintSet known_constraint_set(const CampaignConfig& c) {
  const auto space = c.space();
  acquisition::KnownConstraintSet set;
  for (std::size_t k = 0; k < sim::kNumKnownConstraints; ++k)
    set.constraints.push_back([space, machine = c.machine, k](std::span<const double> u) {
      return sim::known_constraints(space.to_physical(std::vector<double>(u.begin(), u.end())), machine)[k];
    });
  return set;
}

inline void push_event(CampaignState& s, const Clock& clock, std::string type, json payload) {
  s.events.push_back({std::move(type), clock(), s.iteration(), std::move(payload)});
}

// -- models ----------------------------------------------------------------

struct FittedModels {
  gp::MultiOutputGP objectives;
  gp::MultiOutputGP constraints;
  std::vector<double> lengthscales;  // geometric mean over weighted objective models
};

/// Fit every objective and constraint GP on the campaign data. Strength
/// outputs enter only in Stage 2, as raw repetitions. Fitted hyperparameters
/// are written back as warm starts. With optimize = false only outputs that
/// have no stored hyperparameters are optimized.
inline FittedModels fit_models(CampaignState& s, std::uint64_t seed, bool optimize = true) {
  const auto& c = s.config;
  const std::size_t d = c.parameters.size();
  const auto n = static_cast<Eigen::Index>(s.observations.size());
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = to_unit(s, s.observations[static_cast<std::size_t>(i)].x);
    for (std::size_t j = 0; j < d; ++j) X(i, static_cast<Eigen::Index>(j)) = u[j];
  }

  const auto fit = [&](const std::string& name, gp::OutputData data) {
    gp::OutputFitSettings st;
    const auto h = s.hyperparameters.find(name);
    st.optimize = optimize || h == s.hyperparameters.end();
    st.fit.seed = derive_seed(seed, "fit:" + name);
    st.fit.max_iterations = c.fit_max_iterations;
    st.fit.restarts = h == s.hyperparameters.end() ? c.fit_restarts_initial : c.fit_restarts;
    if (h != s.hyperparameters.end()) st.fit.warm_start = h->second;
    if (auto p = c.priors.find(name); p != c.priors.end()) st.fit.prior = p->second;
    auto model = gp::fit_output(name, data, d, st);
    if (st.optimize && data.targets.size() >= 2) s.hyperparameters[name] = model.model().hyperparameters();
    return model;
  };
  const auto column = [&](auto&& get) {
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = get(s.observations[static_cast<std::size_t>(i)]);
    return y;
  };

  FittedModels out;
  std::vector<gp::OutputModel> objs;
  objs.push_back(fit(std::string(acquisition::objective::kDicingWidth),
                     {X, column([](const Observation& o) { return o.optical.dicing_width; })}));
  objs.push_back(fit(std::string(acquisition::objective::kModWidth),
                     {X, column([](const Observation& o) { return o.optical.mod_width; })}));
  objs.push_back(
      fit(std::string(acquisition::objective::kBurr), {X, column([](const Observation& o) { return o.optical.burr; })}));
  if (s.stage == 2) {
    for (const bool front : {true, false}) {
      std::vector<Eigen::Index> rows;
      std::vector<double> ys;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& o = s.observations[static_cast<std::size_t>(i)];
        if (!o.destructive) continue;
        for (double v : front ? o.destructive->front : o.destructive->back) {
          rows.push_back(i);
          ys.push_back(v);
        }
      }
      gp::OutputData data{Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d)),
                          Eigen::VectorXd(static_cast<Eigen::Index>(rows.size()))};
      for (std::size_t r = 0; r < rows.size(); ++r) {
        data.inputs.row(static_cast<Eigen::Index>(r)) = X.row(rows[r]);
        data.targets[static_cast<Eigen::Index>(r)] = ys[r];
      }
      objs.push_back(fit(std::string(front ? acquisition::objective::kFrontStrength
                                           : acquisition::objective::kBackStrength),
                         std::move(data)));
    }
  }
  std::vector<gp::OutputModel> cons;
  const auto names = c.active_constraints();
  for (std::size_t k = 0; k < names.size(); ++k)
    cons.push_back(fit(names[k], {X, column([k](const Observation& o) { return o.violations[k]; })}));

  const auto w = acquisition::stage_weights(c.weights, s.stage);
  std::vector<double> log_sum(d, 0.0);
  int count = 0;
  for (const auto& o : objs) {
    if (acquisition::objective_weight(w, o.name()) == 0.0 || o.model().num_observations() < 2) continue;
    const auto& ls = o.model().hyperparameters().lengthscales;
    for (std::size_t j = 0; j < d; ++j) log_sum[j] += std::log(ls[j]);
    ++count;
  }
  if (count > 0)
    for (double v : log_sum) out.lengthscales.push_back(std::exp(v / count));
  out.objectives = gp::MultiOutputGP(std::move(objs));
  out.constraints = gp::MultiOutputGP(std::move(cons));
  return out;
}

// -- lifecycle ---------------------------------------------------------------

inline std::string next_config_id(CampaignState& s) { return "c" + std::to_string(s.next_id++); }

/// New campaign with its initial design pending: the supplied seed
/// configurations (snapped) followed by Sobol points up to n_init.
inline CampaignState initialize(const CampaignConfig& config, const std::vector<Config>& seed_configs = {},
                                const Clock& clock = system_clock()) {
  config.validate();
  const auto space = config.space();
  CampaignState s;
  s.config = config;
  s.trust_region = init_trust_region(space.dim(), config.trust_region, config.batch_size);

  std::vector<Config> design;
  std::set<Config> seen;
  for (const auto& x : seed_configs) {
    if (x.size() != space.dim()) throw ValidationError("seed configuration must have 11 values");
    if (!space.contains(x)) throw ValidationError("seed configuration outside the parameter bounds");
    const auto snapped = space.snap(x);
    if (!sim::machine_feasible(snapped, config.machine)) throw ValidationError("seed configuration violates a machine limit");
    if (seen.insert(snapped).second) design.push_back(snapped);
  }
  ScrambledSobol sobol(space.dim(), derive_seed(config.seed, "initial-design"));
  for (int draws = 0; static_cast<int>(design.size()) < config.n_init; ++draws) {
    if (draws >= 100000) throw InfeasibleSpace("no machine-feasible initial design within 1e5 Sobol draws");
    const auto x = space.snap(space.to_physical(sobol.next()));
    if (!sim::machine_feasible(x, config.machine)) continue;
    if (seen.insert(x).second) design.push_back(x);
  }
  json batch = json::array();
  for (const auto& x : design) {
    s.pending.push_back({next_config_id(s), x});
    batch.push_back(s.pending.back());
  }
  push_event(s, clock, "initialized", {{"config", config}, {"seed_configs", seed_configs}, {"batch", batch}});
  return s;
}

/// Observation used to centre the trust region: current-stage incumbent, else
/// best optical-utility feasible point, else least total violation.
inline const Observation& region_anchor(const CampaignState& s) {
  const auto n = s.observations.size();
  if (auto i = incumbent_index(s.observations, s.stage, n)) return s.observations[*i];
  if (auto i = incumbent_index(s.observations, 1, n)) return s.observations[*i];
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (total_violation(s.observations[i]) < total_violation(s.observations[best])) best = i;
  return s.observations[best];
}

struct AskDetails {
  std::vector<Interval> bounds;          // unit space, as used
  std::size_t feasible_candidates = 0;
  std::vector<bool> fallback;
};

/// Next batch of (at most) q configurations. Deterministic in the state.
inline std::vector<PendingConfig> ask(CampaignState& state, const Clock& clock = system_clock(),
                                      std::optional<int> q_override = std::nullopt, AskDetails* details = nullptr) {
  if (state.complete) throw CampaignComplete("campaign is complete");
  if (!state.pending.empty()) throw Conflict("a batch is still outstanding; tell all pending configurations first");
  if (state.observations.empty()) throw LifecycleError("tell the initial design before asking");
  if (state.trust_region.terminated) throw CampaignComplete("trust region terminated");
  const int q = q_override.value_or(state.config.batch_size);
  if (q < 1) throw ContractViolation("ask: q must be >= 1");

  CampaignState s = state;
  const auto& c = s.config;
  const auto space = c.space();
  const std::uint64_t ask_seed = derive_seed(c.seed, "ask", static_cast<std::uint64_t>(s.ask_count));
  const auto models = fit_models(s, ask_seed);

  s.trust_region = recenter(s.trust_region, to_unit(s, region_anchor(s).x));
  const auto known = known_constraint_set(c);
  std::vector<Interval> bounds;
  std::vector<acquisition::Point> feasible;
  for (int attempt = 0; attempt <= c.widen_retries && feasible.empty(); ++attempt) {
    auto widened = s.trust_region;
    widened.side_length = std::min(widened.side_length * std::pow(2.0, attempt), 2.0);
    bounds = region_bounds(widened, models.lengthscales);
    const auto cands = acquisition::generate_candidates(bounds, static_cast<std::size_t>(c.candidate_count), space,
                                                        derive_seed(ask_seed, "candidates", static_cast<std::uint64_t>(attempt)));
    feasible = acquisition::filter_known(cands, known);
  }
  if (feasible.empty()) throw NoFeasibleCandidates("no machine-feasible candidate in the widened trust region");

  std::vector<double> tp;
  tp.reserve(feasible.size());
  for (const auto& u : feasible) tp.push_back(sim::throughput(space.to_physical(u), c.machine));
  const auto sel = acquisition::select_batch(models.objectives, models.constraints, feasible, q,
                                             acquisition::stage_weights(c.weights, s.stage), tp,
                                             derive_seed(ask_seed, "select"));

  json batch = json::array();
  for (std::size_t idx : sel.indices) {
    s.pending.push_back({next_config_id(s), space.snap(space.to_physical(feasible[idx]))});
    batch.push_back(s.pending.back());
  }
  s.pending_from_ask = true;
  s.batch_improved = false;
  s.ask_count += 1;
  push_event(s, clock, "asked", {{"q", q}, {"batch", batch}, {"fallback", sel.fallback}});
  if (details) *details = {bounds, feasible.size(), sel.fallback};
  state = std::move(s);
  return state.pending;
}

inline void refresh_incumbent(CampaignState& s) {
  const auto i = incumbent_index(s.observations, s.stage, s.observations.size());
  if (i) {
    s.incumbent_id = s.observations[*i].id;
    s.incumbent_utility = stage_utility(s.observations[*i], s.stage);
  } else {
    s.incumbent_id.reset();
    s.incumbent_utility.reset();
  }
}

/// Stage 1 -> 2: trust region restarts at tau_init / 2, destructive data joins the models.
inline void switch_stage(CampaignState& state, const std::string& reason, const Clock& clock = system_clock()) {
  if (state.stage != 1) throw LifecycleError("campaign is already in Stage 2");
  CampaignState s = state;
  s.stage = 2;
  s.trust_region = restart(s.trust_region);
  s.stage_switch_iteration = s.iteration();
  s.batch_improved = false;
  refresh_incumbent(s);
  push_event(s, clock, "stage_switched", {{"reason", reason}, {"iteration", s.iteration()}});
  state = std::move(s);
}

inline TraceRow trace_row(const CampaignState& s, const Observation& o) {
  TraceRow r;
  r.iter = o.iteration;
  r.stage = o.stage;
  r.tau = s.trust_region.side_length;
  const auto n = s.observations.size();
  if (auto i = incumbent_index(s.observations, o.stage, n)) r.utility_best = stage_utility(s.observations[*i], o.stage);
  if (auto i = incumbent_index(s.observations, 1, n)) r.utility_optical_best = s.observations[*i].utility_optical;
  if (auto i = incumbent_index(s.observations, 2, n)) r.utility_full_best = s.observations[*i].utility_full;
  const auto names = s.config.active_constraints();
  for (std::size_t k = 0; k < names.size(); ++k) {
    const double v = o.violations[k];
    if (names[k] == constraint::kFrontCracks) r.viol_front = v;
    if (names[k] == constraint::kCornerCracks) r.viol_corner = v;
    if (names[k] == constraint::kBackCracks) r.viol_back = v;
    if (names[k] == constraint::kSeparation) r.viol_sep = v;
    if (names[k] == constraint::kChipouts) r.viol_chip = v;
  }
  r.feasible = o.feasible;
  for (const auto& ob : s.observations)
    if (ob.destructive) r.destructive_count += static_cast<int>(ob.destructive->front.size() + ob.destructive->back.size());
  return r;
}

/// Record measurements for a pending configuration. Strong guarantee: on any
/// error the state is unchanged.
inline void tell(CampaignState& state, const std::string& config_id, const OpticalMeasurement& optical,
                 const std::optional<DestructiveMeasurement>& destructive = std::nullopt,
                 const Clock& clock = system_clock()) {
  const auto it = std::find_if(state.pending.begin(), state.pending.end(),
                               [&](const PendingConfig& p) { return p.id == config_id; });
  if (it == state.pending.end()) throw LookupError("configuration '" + config_id + "' is not pending");
  validate_measurement(state.config, optical, destructive);

  CampaignState s = state;
  const auto pit = s.pending.begin() + (it - state.pending.begin());
  const Config x = pit->x;
  s.pending.erase(pit);
  json warnings = json::array();
  if (destructive && s.stage == 1)
    warnings.push_back("destructive data told during Stage 1 is stored but excluded from the models until Stage 2");

  const auto previous = s.incumbent_utility;
  s.observations.push_back(make_observation(s.config, config_id, s.iteration() + 1, s.stage, x, optical, destructive));
  refresh_incumbent(s);
  const bool improved = s.incumbent_utility && (!previous || *s.incumbent_utility > *previous + 1e-9);
  if (improved && s.pending_from_ask) s.batch_improved = true;

  json payload = {{"config_id", config_id}, {"optical", optical}, {"warnings", warnings}};
  detail::put(payload, "destructive", destructive);
  push_event(s, clock, "told", std::move(payload));

  if (s.pending.empty() && s.pending_from_ask) {
    s.trust_region = update(s.trust_region, s.batch_improved);
    s.pending_from_ask = false;
    s.batch_improved = false;
    if (s.trust_region.terminated) {
      if (s.stage == 1) {
        switch_stage(s, "trust_region", clock);
      } else {
        s.complete = true;
        push_event(s, clock, "terminated", {{"reason", "trust_region"}, {"iteration", s.iteration()}});
      }
    }
  }
  s.trace.push_back(trace_row(s, s.observations.back()));
  state = std::move(s);
}

/// Feasible observation with the best current-stage utility (earliest on ties).
inline const Observation& best_feasible(const CampaignState& s) {
  const auto i = incumbent_index(s.observations, s.stage, s.observations.size());
  if (!i) throw NoFeasibleIncumbent("no feasible observation in Stage " + std::to_string(s.stage));
  return s.observations[*i];
}

inline const PendingConfig* find_pending(const CampaignState& s, const std::string& id) {
  for (const auto& p : s.pending)
    if (p.id == id) return &p;
  return nullptr;
}

/// Rebuild a campaign from its event log alone, re-running every operation.
/// Throws IntegrityError when a recomputed batch differs from the logged one.
inline CampaignState replay(const std::vector<Event>& events) {
  if (events.empty() || events.front().type != "initialized")
    throw IntegrityError("event log must start with 'initialized'", 0);
  std::size_t cursor = 0;
  const Clock clock = [&]() -> std::string {
    if (cursor >= events.size()) throw IntegrityError("replay produced more events than logged", cursor);
    return events[cursor++].timestamp;
  };
  const auto& init = events.front().payload;
  CampaignState s = initialize(init.at("config").get<CampaignConfig>(),
                               init.at("seed_configs").get<std::vector<Config>>(), clock);
  while (cursor < events.size()) {
    const auto& e = events[cursor];
    if (e.type == "asked") {
      ask(s, clock, e.payload.at("q").get<int>());
      if (json(s.pending) != e.payload.at("batch")) throw IntegrityError("replayed batch differs from the log", cursor);
    } else if (e.type == "told") {
      const auto& p = e.payload;
      std::optional<DestructiveMeasurement> d;
      detail::get(p, "destructive", d);
      tell(s, p.at("config_id").get<std::string>(), p.at("optical").get<OpticalMeasurement>(), d, clock);
    } else if (e.type == "stage_switched") {
      switch_stage(s, e.payload.at("reason").get<std::string>(), clock);
    } else {
      throw IntegrityError("unexpected event '" + e.type + "' during replay", cursor);
    }
  }
  return s;
}

}  // namespace bold::campaign
