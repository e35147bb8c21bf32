#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <thread>

#include "bold/service/http.hpp"

using namespace bold;
using namespace bold::service;

namespace {

const Clock kClock = [] { return std::string("2026-01-01T00:00:00Z"); };

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("bold_service_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json small_request(const std::string& preset, int seed) {
  return {{"preset", preset},
          {"seed", seed},
          {"config", {{"candidate_count", 200}, {"fit_restarts_initial", 2}, {"fit_restarts", 1}}}};
}

json measurement(const campaign::CampaignState& s, const campaign::PendingConfig& p, std::uint64_t seed) {
  const auto eval = campaign::sim_evaluator(s.config.machine, seed);
  json body = {{"config_id", p.id}, {"optical", eval.optical(p.x, s.iteration())}};
  if (s.stage == 2) body["destructive"] = eval.destructive(p.x, s.config.destructive_reps, s.iteration());
  return body;
}

// Tells every pending configuration through the API with simulator measurements.
void tell_all(Api& api, const std::string& id, std::uint64_t seed) {
  while (true) {
    const auto s = api.store().load(id).state;
    if (s.pending.empty()) return;
    api.tell(id, measurement(s, s.pending.front(), seed));
  }
}

campaign::CampaignState finished_product_run(std::uint64_t seed, int budget) {
  auto c = campaign::config_for_preset(sim::product(), seed);
  c.candidate_count = 300;
  auto s = campaign::initialize(c, {}, kClock);
  campaign::run_autonomous(s, campaign::sim_evaluator(c.machine, seed), {budget, 0.5}, kClock);
  return s;
}

}  // namespace

TEST(Store, RoundTripIsBitIdentical) {
  Store store(fresh_dir("roundtrip"));
  Api api(store.dir(), kClock);
  const auto id = api.create(small_request("bare_silicon", 1)).at("id").get<std::string>();
  const auto fresh = store.load(id);
  store.save(fresh);
  EXPECT_EQ(store.load(id), fresh);
  EXPECT_EQ(serialize(store.load(id)), slurp(store.path_of(id)));

  tell_all(api, id, 1);
  api.ask(id);
  const auto mid = store.load(id);
  ASSERT_FALSE(mid.state.pending.empty());
  EXPECT_EQ(deserialize(serialize(mid)), mid);
}

TEST(Store, ReloadedStateAsksLikeTheLiveOne) {
  Store store(fresh_dir("continuation"));
  Api api(store.dir(), kClock);
  const auto id = api.create(small_request("product", 2)).at("id").get<std::string>();
  tell_all(api, id, 2);
  auto live = store.load(id).state;
  auto loaded = deserialize(slurp(store.path_of(id))).state;
  EXPECT_EQ(campaign::ask(live, kClock), campaign::ask(loaded, kClock));
  EXPECT_EQ(live, loaded);
}

TEST(Store, CorruptAndTruncatedRecords) {
  Store store(fresh_dir("corrupt"));
  Api api(store.dir(), kClock);
  const auto id = api.create(small_request("bare_silicon", 3)).at("id").get<std::string>();
  const auto text = slurp(store.path_of(id));

  try {
    deserialize(text.substr(0, text.size() / 2));
    FAIL() << "expected IntegrityError";
  } catch (const IntegrityError& e) {
    EXPECT_GT(e.offset, 0u);
    EXPECT_LE(e.offset, text.size() / 2 + 1);
  }
  EXPECT_THROW(deserialize("{\"id\": \"x\", \"schema_version\": 1}"), IntegrityError);

  // A crashed write leaves only a temporary file behind; the record is intact.
  std::ofstream(store.path_of(id).string() + ".tmp.999") << text.substr(0, 40);
  EXPECT_EQ(slurp(store.path_of(id)), text);
  EXPECT_NO_THROW(store.load(id));

  std::ofstream(store.path_of(id), std::ios::trunc) << text.substr(0, 100);
  EXPECT_THROW(store.load(id), IntegrityError);
}

TEST(Store, SchemaMismatchAndBadIds) {
  Store store(fresh_dir("schema"));
  Api api(store.dir(), kClock);
  const auto id = api.create(small_request("bare_silicon", 4)).at("id").get<std::string>();
  auto j = json::parse(slurp(store.path_of(id)));
  j["schema_version"] = 0;
  EXPECT_THROW(deserialize(j.dump()), MigrationError);
  EXPECT_THROW(store.load("../etc"), LookupError);
  EXPECT_THROW(store.load("missing"), LookupError);
}

TEST(Api, LifecycleThroughHandle) {
  Api api(fresh_dir("lifecycle"), kClock);
  auto r = api.handle("POST", "/campaigns", small_request("bare_silicon", 5).dump());
  ASSERT_EQ(r.status, 201) << r.body.dump();
  const auto id = r.body.at("id").get<std::string>();
  EXPECT_EQ(r.body.at("batch").size(), 9u);

  EXPECT_EQ(api.handle("GET", "/campaigns/" + id + "/ask", "").status, 409);
  EXPECT_EQ(api.handle("GET", "/campaigns/nope/status", "").status, 404);
  EXPECT_EQ(api.handle("GET", "/nowhere", "").status, 404);

  bool any_feasible = false;
  for (const auto& p : r.body.at("batch")) {
    const auto s = api.store().load(id).state;
    const auto body = measurement(s, s.pending.front(), 5);
    ASSERT_EQ(body.at("config_id"), p.at("id"));
    const auto t = api.handle("POST", "/campaigns/" + id + "/tell", body.dump());
    ASSERT_EQ(t.status, 200) << t.body.dump();
    any_feasible = any_feasible || api.store().load(id).state.observations.back().feasible;
  }
  const auto st = api.handle("GET", "/campaigns/" + id + "/status", "");
  ASSERT_EQ(st.status, 200);
  EXPECT_EQ(st.body.at("stage"), 1);
  EXPECT_EQ(st.body.at("counts").at("observations"), 9);
  EXPECT_EQ(!st.body.at("incumbent").is_null(), any_feasible);

  const auto a = api.handle("POST", "/campaigns/" + id + "/ask", "");
  ASSERT_EQ(a.status, 200) << a.body.dump();
  EXPECT_EQ(a.body.at("batch").size(), 2u);
  EXPECT_EQ(api.handle("POST", "/campaigns/" + id + "/map", "{}").status, 409);

  const auto sw = api.handle("POST", "/campaigns/" + id + "/stage-switch", "");
  ASSERT_EQ(sw.status, 200);
  EXPECT_EQ(sw.body.at("stage"), 2);
  EXPECT_EQ(api.handle("POST", "/campaigns/" + id + "/stage-switch", "").status, 409);
}

TEST(Api, ValidationErrorsAre422AndLeaveRecordUntouched) {
  Api api(fresh_dir("validation"), kClock);
  const auto id = api.create(small_request("product", 6)).at("id").get<std::string>();
  const auto before = slurp(api.store().path_of(id));
  const auto s = api.store().load(id).state;
  auto body = measurement(s, s.pending.front(), 6);
  body["optical"]["chipouts"] = 1.4;
  auto r = api.handle("POST", "/campaigns/" + id + "/tell", body.dump());
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(r.body.at("error"), "validation");

  body = measurement(s, s.pending.front(), 6);
  body["optical"].erase("burr");
  EXPECT_EQ(api.handle("POST", "/campaigns/" + id + "/tell", body.dump()).status, 422);
  EXPECT_EQ(api.handle("POST", "/campaigns/" + id + "/tell", "{not json").status, 422);
  EXPECT_EQ(api.handle("POST", "/campaigns/" + id + "/tell", R"({"config_id":"c99","optical":{}})").status, 422);
  body = measurement(s, s.pending.front(), 6);
  body["config_id"] = "c99";
  EXPECT_EQ(api.handle("POST", "/campaigns/" + id + "/tell", body.dump()).status, 404);
  EXPECT_EQ(slurp(api.store().path_of(id)), before);

  EXPECT_EQ(api.handle("POST", "/campaigns", R"({"preset":"gallium"})").status, 422);
  EXPECT_EQ(api.handle("POST", "/campaigns", R"({"config":{"batch_size":0}})").status, 422);
}

TEST(Api, ConcurrentMutationGets409WithRetryHint) {
  const auto dir = fresh_dir("busy");
  Response contended;
  Api* self = nullptr;
  std::string id;
  bool inside = false;
  // The clock runs while the campaign lock is held; a second writer arriving then must be refused.
  Api api(dir, [&] {
    if (inside && contended.status == 200) {
      std::thread other([&] { contended = self->handle("POST", "/campaigns/" + id + "/stage-switch", ""); });
      other.join();
    }
    return std::string("2026-01-01T00:00:00Z");
  });
  self = &api;
  id = api.create(small_request("bare_silicon", 7)).at("id").get<std::string>();
  const auto s = api.store().load(id).state;
  inside = true;
  const auto r = api.handle("POST", "/campaigns/" + id + "/tell", measurement(s, s.pending.front(), 7).dump());
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(contended.status, 409);
  EXPECT_EQ(contended.headers.at("Retry-After"), "1");
  EXPECT_EQ(api.store().load(id).state.stage, 1);
}

TEST(Api, TraceIsLosslessAgainstStatus) {
  Api api(fresh_dir("trace"), kClock);
  const auto id = api.create(small_request("bare_silicon", 8)).at("id").get<std::string>();
  tell_all(api, id, 8);
  api.ask(id);
  tell_all(api, id, 8);
  const auto rows = api.trace(id).at("rows").get<std::vector<campaign::TraceRow>>();
  EXPECT_EQ(rows, api.store().load(id).state.trace);
  EXPECT_EQ(rows.size(), 11u);
  const auto st = api.status(id);
  EXPECT_EQ(rows.back().tau, st.at("tau").get<double>());
  if (!st.at("incumbent").is_null()) EXPECT_EQ(*rows.back().utility_best, st.at("incumbent").at("utility").get<double>());
  const auto csv = api.handle("GET", "/campaigns/" + id + "/trace", "", {{"format", "csv"}});
  EXPECT_EQ(csv.content_type, "text/csv");
  EXPECT_EQ(csv.text, campaign::trace_csv(rows));
}

TEST(Api, MapOrdersSpeedAboveStrength) {
  Api api(fresh_dir("map"), kClock);
  const auto s = finished_product_run(3, 40);
  api.store().save({"done", campaign::kSchemaVersion, s});
  const auto b = api.handle("POST", "/campaigns/done/map", R"({"weights":"bold_b","feasibility_level":0.5,"samples":20000})");
  const auto c = api.handle("POST", "/campaigns/done/map", R"({"weights":"bold_c","feasibility_level":0.5,"samples":20000})");
  ASSERT_EQ(b.status, 200) << b.body.dump();
  ASSERT_EQ(c.status, 200) << c.body.dump();
  EXPECT_GE(c.body.at("throughput").get<double>(), b.body.at("throughput").get<double>());
  EXPECT_EQ(c.body.at("parameters").size(), 11u);
  const auto strict = api.handle("POST", "/campaigns/done/map", R"({"feasibility_level":1.0,"samples":20000})");
  if (strict.status == 422) EXPECT_TRUE(strict.body.contains("best_achievable_level"));
  EXPECT_EQ(api.handle("POST", "/campaigns/done/map", R"({"weights":"bold_z"})").status, 422);
  EXPECT_EQ(api.handle("POST", "/campaigns/done/map", R"({"weights":{"w_front":-1}})").status, 422);
}

TEST(Http, ServesTheApiOverSockets) {
  Api api(fresh_dir("http"), kClock);
  httplib::Server server;
  mount(server, api);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  auto res = client.Post("/campaigns", small_request("bare_silicon", 9).dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 201);
  const auto id = json::parse(res->body).at("id").get<std::string>();
  res = client.Get("/campaigns/" + id + "/ask");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 409);
  const auto s = api.store().load(id).state;
  res = client.Post("/campaigns/" + id + "/tell", measurement(s, s.pending.front(), 9).dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body).at("counts").at("observations"), 1);
  res = client.Get("/campaigns/" + id + "/trace?format=csv");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->get_header_value("Content-Type"), "text/csv");
  res = client.Get("/campaigns/zzz/status");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  server.stop();
  t.join();
}

#ifdef BOLD_CLI_PATH
namespace {

int run_cli(const fs::path& dir, const std::string& args, std::string* stdout_text = nullptr) {
  const auto out = dir / "cli_out.txt";
  const std::string cmd = "BOLD_FIXED_TIME=2026-01-01T00:00:00Z BOLD_DATA_DIR='" + dir.string() + "' '" +
                          BOLD_CLI_PATH + "' " + args + " > '" + out.string() + "' 2> '" + (dir / "cli_err.txt").string() + "'";
  const int rc = std::system(cmd.c_str());
  if (stdout_text) *stdout_text = slurp(out);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Cli, SameScenarioThroughCliAndApiGivesIdenticalRecords) {
  const auto cli_dir = fresh_dir("cli");
  const auto api_dir = fresh_dir("api");
  Api api(api_dir, kClock);
  const auto request = small_request("product", 10);
  std::ofstream(cli_dir / "request.json") << request.dump();
  ASSERT_EQ(run_cli(cli_dir, "init --config '" + (cli_dir / "request.json").string() + "' --id run"), 0);
  auto req = request;
  req["id"] = "run";
  api.create(req);

  const auto tell_both = [&] {
    while (true) {
      const auto s = api.store().load("run").state;
      if (s.pending.empty()) return;
      const auto body = measurement(s, s.pending.front(), 10);
      const auto file = cli_dir / "m.json";
      std::ofstream(file) << body.dump();
      ASSERT_EQ(run_cli(cli_dir, "tell -c run --config-id " + s.pending.front().id + " --measurement '" + file.string() + "'"), 0);
      api.tell("run", body);
    }
  };
  tell_both();
  ASSERT_EQ(run_cli(cli_dir, "ask -c run"), 0);
  api.ask("run");
  tell_both();
  ASSERT_EQ(run_cli(cli_dir, "stage-switch -c run"), 0);
  api.stage_switch("run");
  ASSERT_EQ(run_cli(cli_dir, "ask -c run --q 2"), 0);
  api.ask("run", 2);
  tell_both();
  EXPECT_EQ(slurp(cli_dir / "run.json"), slurp(api_dir / "run.json"));

  std::string csv;
  ASSERT_EQ(run_cli(cli_dir, "export-trace -c run --format csv", &csv), 0);
  EXPECT_EQ(csv, api.trace_csv("run"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iter,stage,tau,utility_best,viol_front,viol_corner,viol_back,viol_sep,viol_chip");
}

TEST(Cli, ExitCodesAndAtomicTell) {
  const auto dir = fresh_dir("cli_codes");
  ASSERT_EQ(run_cli(dir, "init --preset bare_silicon --seed 1 --id x"), 0);
  const auto before = slurp(dir / "x.json");
  EXPECT_EQ(run_cli(dir, "tell -c x --config-id c0 --dicing-width 30 --mod-width 30"), 1);
  EXPECT_EQ(run_cli(dir, "tell -c x --config-id c0 --dicing-width 30 --mod-width 30 --burr 1 --front-cracks 0 "
                         "--corner-cracks 0 --back-cracks 2 --separation 1"),
            1);
  EXPECT_EQ(slurp(dir / "x.json"), before);
  EXPECT_EQ(run_cli(dir, "ask -c x"), 1);
  EXPECT_EQ(run_cli(dir, "status -c missing"), 1);
  EXPECT_EQ(run_cli(dir, "frobnicate"), 1);
  EXPECT_EQ(run_cli(dir, "tell -c x --config-id c0 --dicing-width 30 --mod-width 30 --burr 1 --front-cracks 0 "
                         "--corner-cracks 0 --back-cracks 0 --separation 1"),
            0);
  std::ofstream(dir / "x.json", std::ios::trunc) << "{\"id\":";
  EXPECT_EQ(run_cli(dir, "status -c x"), 2);
}

TEST(Cli, RunSimIsDeterministic) {
  const auto dir = fresh_dir("cli_runsim");
  std::string a, b;
  ASSERT_EQ(run_cli(dir, "run-sim --preset bare_silicon --budget 15 --seed 7", &a), 0);
  ASSERT_EQ(run_cli(dir, "run-sim --preset bare_silicon --budget 15 --seed 7", &b), 0);
  EXPECT_EQ(a, b);
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 16);
  std::string o;
  ASSERT_EQ(run_cli(dir, "oracle --preset bare_silicon --samples 100000", &o), 0);
  EXPECT_GT(json::parse(o).at("utility").get<double>(), 0.0);
  EXPECT_EQ(run_cli(dir, "oracle --preset bare_silicon --samples 10"), 1);
}
#endif
