#include <gtest/gtest.h>

#include <random>

#include "bold/campaign/autonomous.hpp"

using namespace bold;
using namespace bold::campaign;

namespace {

const Clock kClock = [] { return std::string("2026-01-01T00:00:00Z"); };

CampaignConfig small_config(const sim::WaferPreset& p = sim::bare_silicon(), std::uint64_t seed = 3) {
  auto c = config_for_preset(p, seed);
  c.candidate_count = 200;
  c.fit_restarts_initial = 2;
  c.fit_restarts = 1;
  c.fit_max_iterations = 40;
  return c;
}

OpticalMeasurement good_optical(bool chip = false) {
  OpticalMeasurement m{30.0, 30.0, 1.0, 0.0, 0.0, 0.0, 1.0, std::nullopt};
  if (chip) m.chipouts = 0.0;
  return m;
}

DestructiveMeasurement strengths(double front, double back, int n = 10) {
  return {std::vector<double>(static_cast<std::size_t>(n), front), std::vector<double>(static_cast<std::size_t>(n), back)};
}

void tell_pending_sim(CampaignState& s, const sim::WaferPreset& p, std::uint64_t seed) {
  const auto eval = sim_evaluator(p, seed);
  const auto batch = s.pending;
  for (const auto& c : batch) {
    std::optional<DestructiveMeasurement> d;
    if (s.stage == 2) d = eval.destructive(c.x, s.config.destructive_reps, s.iteration());
    tell(s, c.id, eval.optical(c.x, s.iteration()), d, kClock);
  }
}

// Mid-campaign state with a few asks done, optionally in Stage 2.
CampaignState mid_campaign(std::uint64_t seed, int asks, bool stage2 = false) {
  const auto p = sim::bare_silicon();
  auto s = initialize(small_config(p, seed), {}, kClock);
  tell_pending_sim(s, p, seed);
  if (stage2) switch_stage(s, "manual", kClock);
  for (int i = 0; i < asks; ++i) {
    ask(s, kClock);
    tell_pending_sim(s, p, seed);
  }
  return s;
}

void tell_all(CampaignState& s, const OpticalMeasurement& m, const std::optional<DestructiveMeasurement>& d) {
  const auto batch = s.pending;
  for (const auto& p : batch) tell(s, p.id, m, d, kClock);
}

bool on_grid(const ParameterSpace& space, const Config& x) { return space.snap(x) == x; }

}  // namespace

TEST(Initialize, DesignIsFeasibleOnGridAndDeterministic) {
  const auto c = small_config();
  const auto a = initialize(c, {}, kClock);
  const auto b = initialize(c, {}, kClock);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.pending.size(), 9u);
  const auto space = c.space();
  std::set<Config> distinct;
  for (std::size_t i = 0; i < a.pending.size(); ++i) {
    EXPECT_EQ(a.pending[i].id, "c" + std::to_string(i));
    EXPECT_TRUE(sim::machine_feasible(a.pending[i].x, c.machine));
    EXPECT_TRUE(on_grid(space, a.pending[i].x));
    distinct.insert(a.pending[i].x);
  }
  EXPECT_EQ(distinct.size(), 9u);
  ASSERT_EQ(a.events.size(), 1u);
  EXPECT_EQ(a.events[0].type, "initialized");
}

TEST(Initialize, SeedConfigsComeFirstSnapped) {
  const auto c = small_config();
  const auto space = c.space();
  Config x = space.to_physical(std::vector<double>(11, 0.3));
  x[sim::kDicePower] = 3.01;
  const auto s = initialize(c, {x, x}, kClock);
  ASSERT_EQ(s.pending.size(), 9u);
  EXPECT_EQ(s.pending[0].x, space.snap(x));
  EXPECT_NE(s.pending[1].x, space.snap(x));
}

TEST(Initialize, RejectsBadSeedConfigs) {
  const auto c = small_config();
  EXPECT_THROW(initialize(c, {Config(3, 0.0)}, kClock), ValidationError);
  auto far = c.space().to_physical(std::vector<double>(11, 0.5));
  far[0] = 1e9;
  EXPECT_THROW(initialize(c, {far}, kClock), ValidationError);
  auto hot = c.space().to_physical(std::vector<double>(11, 0.5));
  hot[sim::kDicePower] = c.space()[sim::kDicePower].hi;
  hot[sim::kDiceFrequency] = c.space()[sim::kDiceFrequency].lo;
  ASSERT_FALSE(sim::machine_feasible(c.space().snap(hot), c.machine));
  EXPECT_THROW(initialize(c, {hot}, kClock), ValidationError);
}

TEST(Lifecycle, AskWithOutstandingBatchConflicts) {
  auto s = initialize(small_config(), {}, kClock);
  EXPECT_THROW(ask(s, kClock), Conflict);
}

TEST(Tell, ErrorsLeaveStateUntouched) {
  auto s = initialize(small_config(), {}, kClock);
  const auto before = s;
  EXPECT_THROW(tell(s, "c99", good_optical(), std::nullopt, kClock), LookupError);
  auto bad = good_optical();
  bad.burr = std::nan("");
  EXPECT_THROW(tell(s, "c0", bad, std::nullopt, kClock), ValidationError);
  bad = good_optical();
  bad.front_cracks = 1.5;
  EXPECT_THROW(tell(s, "c0", bad, std::nullopt, kClock), ValidationError);
  bad = good_optical();
  bad.dicing_width = -1.0;
  EXPECT_THROW(tell(s, "c0", bad, std::nullopt, kClock), ValidationError);
  EXPECT_THROW(tell(s, "c0", good_optical(), strengths(500, 500, 7), kClock), ValidationError);
  auto uneven = strengths(500, 500);
  uneven.back.pop_back();
  EXPECT_THROW(tell(s, "c0", good_optical(), uneven, kClock), ValidationError);
  EXPECT_THROW(tell(s, "c0", good_optical(), strengths(500, -1), kClock), ValidationError);
  EXPECT_EQ(s, before);

  tell(s, "c0", good_optical(), std::nullopt, kClock);
  EXPECT_THROW(tell(s, "c0", good_optical(), std::nullopt, kClock), LookupError);
}

TEST(Tell, ProductRequiresChipouts) {
  auto s = initialize(small_config(sim::product()), {}, kClock);
  EXPECT_THROW(tell(s, "c0", good_optical(false), std::nullopt, kClock), ValidationError);
  tell(s, "c0", good_optical(true), std::nullopt, kClock);
  EXPECT_EQ(s.observations.back().violations.size(), 5u);
}

TEST(Tell, ViolationsAndFeasibility) {
  auto s = initialize(small_config(), {}, kClock);
  auto m = good_optical();
  m.front_cracks = 0.25;
  m.separation = 0.9;
  tell(s, "c0", m, std::nullopt, kClock);
  const auto& o = s.observations.back();
  ASSERT_EQ(o.violations.size(), 4u);
  EXPECT_DOUBLE_EQ(o.violations[0], 0.15);
  EXPECT_DOUBLE_EQ(o.violations[3], 1.0 - 0.9);
  EXPECT_FALSE(o.feasible);
  tell(s, "c1", good_optical(), std::nullopt, kClock);
  EXPECT_TRUE(s.observations.back().feasible);
  EXPECT_EQ(s.incumbent_id, "c1");
}

TEST(StageDiscipline, Stage1DestructiveIsQuarantined) {
  auto s = initialize(small_config(), {}, kClock);
  tell(s, "c0", good_optical(), strengths(600, 550), kClock);
  EXPECT_FALSE(s.events.back().payload.at("warnings").empty());
  EXPECT_TRUE(s.observations.back().destructive.has_value());
  tell_all(s, good_optical(), std::nullopt);
  auto copy = s;
  auto models = fit_models(copy, 1);
  EXPECT_FALSE(models.objectives.contains("front_strength"));
  EXPECT_FALSE(models.objectives.contains("back_strength"));

  switch_stage(s, "manual", kClock);
  copy = s;
  models = fit_models(copy, 1);
  ASSERT_TRUE(models.objectives.contains("front_strength"));
  EXPECT_EQ(models.objectives.at("front_strength").model().num_observations(), 10);
}

TEST(StageSwitch, ManualSwitchRestartsRegion) {
  auto s = mid_campaign(4, 1);
  EXPECT_EQ(s.stage, 1);
  switch_stage(s, "manual", kClock);
  EXPECT_EQ(s.stage, 2);
  EXPECT_DOUBLE_EQ(s.trust_region.side_length, 0.4);
  EXPECT_EQ(s.stage_switch_iteration, s.iteration());
  EXPECT_EQ(s.events.back().type, "stage_switched");
  EXPECT_THROW(switch_stage(s, "manual", kClock), LifecycleError);
  // Stage-2 utility needs destructive data, so nothing qualifies yet.
  EXPECT_FALSE(s.incumbent_id.has_value());
  EXPECT_THROW(best_feasible(s), NoFeasibleIncumbent);
}

TEST(Ask, BatchIsFeasibleOnGridAndInsideBounds) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto s = mid_campaign(seed, 2);
    AskDetails details;
    const auto batch = ask(s, kClock, std::nullopt, &details);
    ASSERT_EQ(batch.size(), 2u);
    const auto space = s.config.space();
    for (const auto& p : batch) {
      EXPECT_TRUE(sim::machine_feasible(p.x, s.config.machine));
      EXPECT_TRUE(on_grid(space, p.x));
      const auto u = space.to_unit(p.x);
      for (std::size_t j = 0; j < u.size(); ++j) {
        EXPECT_GE(u[j], details.bounds[j].lo - 1e-12);
        EXPECT_LE(u[j], details.bounds[j].hi + 1e-12);
      }
    }
    EXPECT_EQ(s.events.back().type, "asked");
  }
}

TEST(Ask, RefitStoresWarmStarts) {
  auto s = mid_campaign(5, 0);
  EXPECT_TRUE(s.hyperparameters.empty());
  ask(s, kClock);
  EXPECT_TRUE(s.hyperparameters.count("dicing_width"));
  EXPECT_TRUE(s.hyperparameters.count("separation"));
  EXPECT_FALSE(s.hyperparameters.count("front_strength"));
}

TEST(TrustRegion, InitialDesignDoesNotUpdateButBatchesDo) {
  auto s = initialize(small_config(), {}, kClock);
  auto mediocre = good_optical();
  mediocre.dicing_width = 31.5;
  mediocre.burr = 2.4;
  tell_all(s, mediocre, std::nullopt);
  EXPECT_EQ(s.trust_region.failure_count, 0);
  EXPECT_EQ(s.trust_region.success_count, 0);

  // A batch whose measurements score below the incumbent counts as one failure.
  ask(s, kClock);
  auto worse = good_optical();
  worse.dicing_width = 45.0;
  worse.burr = 6.0;
  tell_all(s, worse, std::nullopt);
  EXPECT_EQ(s.trust_region.failure_count, 1);
  EXPECT_EQ(s.trust_region.success_count, 0);

  // Narrower dicing width raises the optical utility: one success for the batch.
  ask(s, kClock);
  auto better = good_optical();
  better.dicing_width = 28.0;
  better.burr = 0.0;
  tell(s, s.pending[0].id, better, std::nullopt, kClock);
  tell(s, s.pending[0].id, worse, std::nullopt, kClock);
  EXPECT_EQ(s.trust_region.success_count, 1);
  EXPECT_EQ(s.trust_region.failure_count, 0);
}

TEST(TrustRegion, Stage1TerminationSwitchesStageAndStage2TerminationCompletes) {
  auto c = small_config();
  c.trust_region.tau_init = 0.02;
  c.trust_region.failure_tolerance = 1;
  auto s = initialize(c, {}, kClock);
  tell_all(s, good_optical(), std::nullopt);
  for (int guard = 0; s.stage == 1 && guard < 40; ++guard) {
    ask(s, kClock);
    tell_all(s, good_optical(), std::nullopt);
  }
  EXPECT_EQ(s.events.back().type, "stage_switched");
  EXPECT_EQ(s.events.back().payload.at("reason"), "trust_region");
  EXPECT_DOUBLE_EQ(s.trust_region.side_length, 0.01);
  // tau_init / 2 = 0.01 is already below the threshold: the next failed batch ends the campaign.
  for (int guard = 0; !s.complete && guard < 20; ++guard) {
    ask(s, kClock);
    tell_all(s, good_optical(), strengths(500, 500));
  }
  EXPECT_TRUE(s.complete);
  EXPECT_EQ(s.events.back().type, "terminated");
  EXPECT_THROW(ask(s, kClock), CampaignComplete);
}

TEST(BestFeasible, EarliestTieWinsAndMatchesLinearScan) {
  auto s = initialize(small_config(), {}, kClock);
  EXPECT_THROW(best_feasible(s), NoFeasibleIncumbent);
  tell(s, "c0", good_optical(), std::nullopt, kClock);
  tell(s, "c1", good_optical(), std::nullopt, kClock);
  // Same measurements; throughput differs per config, so compare via utilities.
  const auto& b = best_feasible(s);
  const auto& o0 = s.observations[0];
  const auto& o1 = s.observations[1];
  EXPECT_EQ(b.id, o1.utility_optical > o0.utility_optical ? "c1" : "c0");

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const auto rest = s.pending;
  for (const auto& p : rest) {
    auto m = good_optical();
    m.dicing_width = 27.0 + 6.0 * U(rng);
    m.front_cracks = U(rng) < 0.4 ? 0.3 : 0.0;
    tell(s, p.id, m, std::nullopt, kClock);
  }
  const Observation* want = nullptr;
  for (const auto& o : s.observations)
    if (o.feasible && (!want || o.utility_optical > want->utility_optical)) want = &o;
  ASSERT_NE(want, nullptr);
  EXPECT_EQ(best_feasible(s).id, want->id);
}

TEST(BestFeasible, TieBreakIsEarliest) {
  std::vector<Observation> obs(3);
  for (int i = 0; i < 3; ++i) {
    obs[i].id = "c" + std::to_string(i);
    obs[i].feasible = i != 0;
    obs[i].utility_optical = 5.0;
  }
  EXPECT_EQ(incumbent_index(obs, 1, 3), 1u);
}

TEST(Persistence, JsonRoundTripThenAskMatchesContinuous) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    auto s = mid_campaign(seed, 2, seed == 13);
    const auto restored = json::parse(json(s).dump()).get<CampaignState>();
    ASSERT_EQ(restored, s);
    auto a = s;
    auto b = restored;
    EXPECT_EQ(ask(a, kClock), ask(b, kClock));
    EXPECT_EQ(json(a).dump(), json(b).dump());
  }
}

TEST(Persistence, SchemaMismatchRaisesMigrationError) {
  auto j = json(initialize(small_config(), {}, kClock));
  j["schema_version"] = 99;
  EXPECT_THROW(j.get<CampaignState>(), MigrationError);
}

TEST(Replay, EventLogReconstructsState) {
  auto s = mid_campaign(21, 2);
  switch_stage(s, "manual", kClock);
  ask(s, kClock);
  tell_pending_sim(s, sim::bare_silicon(), 21);
  ask(s, kClock);  // leave a batch outstanding
  EXPECT_EQ(replay(s.events), s);
}

TEST(Replay, TamperedLogIsDetected) {
  auto s = mid_campaign(22, 1);
  auto events = s.events;
  for (auto& e : events)
    if (e.type == "asked") e.payload["batch"][0]["x"][0] = -1.0;
  EXPECT_THROW(replay(events), IntegrityError);
  EXPECT_THROW(replay({}), IntegrityError);
}

TEST(Autonomous, BudgetEqualToInitialDesignAsksNothing) {
  auto s = initialize(small_config(), {}, kClock);
  const auto& trace = run_autonomous(s, sim_evaluator(s.config.machine, 1), {9, 0.6}, kClock);
  EXPECT_EQ(trace.size(), 9u);
  EXPECT_EQ(s.ask_count, 0);
  auto t = initialize(small_config(), {}, kClock);
  EXPECT_THROW(run_autonomous(t, sim_evaluator(t.config.machine, 1), {8, 0.6}, kClock), ContractViolation);
}

TEST(Autonomous, DeterministicWithStageDisciplineAndMonotoneTrace) {
  for (const auto& p : {sim::bare_silicon(), sim::product()}) {
    const auto run = [&] {
      auto s = initialize(small_config(p, 7), {}, kClock);
      run_autonomous(s, sim_evaluator(p, 7), {24, 0.5}, kClock);
      return s;
    };
    const auto a = run();
    const auto b = run();
    EXPECT_EQ(trace_csv(a.trace), trace_csv(b.trace));
    EXPECT_EQ(json(a).dump(), json(b).dump());
    ASSERT_EQ(a.trace.size(), 24u);
    ASSERT_EQ(a.stage, 2);
    int stage2 = 0;
    for (const auto& o : a.observations) {
      EXPECT_EQ(o.destructive.has_value(), o.stage == 2);
      stage2 += o.stage == 2;
    }
    EXPECT_EQ(a.trace.back().destructive_count, 2 * 10 * stage2);
    for (std::size_t i = 1; i < a.trace.size(); ++i) {
      const auto& prev = a.trace[i - 1];
      const auto& cur = a.trace[i];
      if (prev.stage == cur.stage && prev.utility_best) {
        ASSERT_TRUE(cur.utility_best.has_value());
        EXPECT_GE(*cur.utility_best, *prev.utility_best);
      }
    }
  }
}

TEST(Autonomous, EvaluatorErrorsCarryTheIndex) {
  auto s = initialize(small_config(), {}, kClock);
  auto eval = sim_evaluator(s.config.machine, 1);
  auto inner = eval.optical;
  eval.optical = [inner](const Config& x, int n) {
    if (n == 4) throw std::runtime_error("stage fault");
    return inner(x, n);
  };
  try {
    run_autonomous(s, eval, {20, 0.6}, kClock);
    FAIL() << "expected EvaluationError";
  } catch (const EvaluationError& e) {
    EXPECT_EQ(e.evaluation, 4);
    EXPECT_NE(std::string(e.what()).find("stage fault"), std::string::npos);
  }
}

TEST(Trace, CsvHeaderAndEmptyChipColumn) {
  auto s = mid_campaign(31, 1);
  const auto csv = trace_csv(s.trace);
  const auto header = csv.substr(0, csv.find('\n'));
  EXPECT_EQ(header, "iter,stage,tau,utility_best,viol_front,viol_corner,viol_back,viol_sep,viol_chip");
  const auto first = csv.substr(header.size() + 1, csv.find('\n', header.size() + 1) - header.size() - 1);
  EXPECT_EQ(first.back(), ',');
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(s.trace.size()) + 1);
  const auto rt = trace_json(s.trace).get<std::vector<TraceRow>>();
  EXPECT_EQ(rt, s.trace);
}

class MapTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const auto p = sim::bare_silicon();
    state_ = new CampaignState(initialize(small_config(p, 41), {}, kClock));
    run_autonomous(*state_, sim_evaluator(p, 41), {30, 0.5}, kClock);
    pool_ = new MapPool(build_map_pool(*state_, 20000));
  }
  static void TearDownTestSuite() {
    delete state_;
    delete pool_;
  }
  static CampaignState* state_;
  static MapPool* pool_;
};
CampaignState* MapTest::state_ = nullptr;
MapPool* MapTest::pool_ = nullptr;

TEST_F(MapTest, ZeroLevelIsUnconstrainedPosteriorMeanArgmax) {
  const auto& w = state_->config.weights;
  const auto r = map_estimate(*pool_, w, 0.0);
  double best = -1e300;
  for (std::size_t i = 0; i < pool_->configs.size(); ++i) {
    const auto at = [&](const char* n) { return pool_->objective_mean.at(n)[static_cast<Eigen::Index>(i)]; };
    const double u = acquisition::utility({at("dicing_width"), at("mod_width"), at("burr"), at("front_strength"),
                                           at("back_strength")},
                                          pool_->throughput[i], w);
    best = std::max(best, u);
  }
  EXPECT_DOUBLE_EQ(r.utility, best);
  EXPECT_TRUE(sim::machine_feasible(r.config, state_->config.machine));
}

TEST_F(MapTest, PoolContainsIncumbentSoMapDominatesIt) {
  ASSERT_TRUE(state_->incumbent_id.has_value());
  const auto r = map_estimate(*pool_, state_->config.weights, 0.0);
  const auto& inc = best_feasible(*state_);
  const auto it = std::find(pool_->configs.begin(), pool_->configs.end(), inc.x);
  ASSERT_NE(it, pool_->configs.end());
  const auto i = static_cast<Eigen::Index>(it - pool_->configs.begin());
  const auto at = [&](const char* n) { return pool_->objective_mean.at(n)[i]; };
  const double u_inc = acquisition::utility({at("dicing_width"), at("mod_width"), at("burr"), at("front_strength"),
                                             at("back_strength")},
                                            pool_->throughput[static_cast<std::size_t>(i)], state_->config.weights);
  EXPECT_GE(r.utility, u_inc);
}

TEST_F(MapTest, LevelIsRespectedAndTooStrictReportsBest) {
  double best_level = 0.0;
  for (std::size_t i = 0; i < pool_->configs.size(); ++i) {
    double p = 1.0;
    for (const auto& f : pool_->feasibility) p = std::min(p, f[static_cast<Eigen::Index>(i)]);
    best_level = std::max(best_level, p);
  }
  const double level = best_level * 0.9;
  const auto r = map_estimate(*pool_, state_->config.weights, level);
  EXPECT_GE(r.feasibility_level, level);
  if (best_level < 1.0) {
    try {
      map_estimate(*pool_, state_->config.weights, std::nextafter(best_level, 2.0));
      FAIL() << "expected ThresholdTooStrict";
    } catch (const ThresholdTooStrict& e) {
      EXPECT_DOUBLE_EQ(e.best_achievable_level, best_level);
    }
  }
  EXPECT_THROW(map_estimate(*pool_, state_->config.weights, 1.5), ValidationError);
}

TEST_F(MapTest, SpeedHeavyWeightsGiveAtLeastTheThroughputOfStrengthHeavy) {
  const auto b = acquisition::named_weights("bold_b");
  const auto c = acquisition::named_weights("bold_c");
  for (double level : {0.0, 0.5})
    EXPECT_GE(map_estimate(*pool_, c, level).throughput, map_estimate(*pool_, b, level).throughput);
}

TEST(Map, NeedsStage2) {
  auto s = mid_campaign(51, 0);
  EXPECT_THROW(build_map_pool(s, 1000), LifecycleError);
}
