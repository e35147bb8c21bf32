// bold: command-line front end for campaigns, simulator runs and the HTTP service.
#include <csignal>
#include <fstream>
#include <iostream>

#include "bold/service/http.hpp"
#include "bold/sim/oracle.hpp"

#include <CLI11.hpp>

using namespace bold;
using bold::campaign::json;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

// A file path, a JSON literal or a named weight row.
json weights_arg(const std::string& arg) {
  if (arg.empty()) return nullptr;
  if (arg.front() == '{') return json::parse(arg);
  if (std::ifstream(arg).good()) return read_json_file(arg);
  return arg;
}

void write_output(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + out);
  f << text;
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

int exit_code_for(const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const ValidationError&) {
    return 1;
  } catch (const ConfigError&) {
    return 1;
  } catch (const PresetError&) {
    return 1;
  } catch (const LookupError&) {
    return 1;
  } catch (const Conflict&) {
    return 1;
  } catch (const LifecycleError&) {
    return 1;
  } catch (const CampaignComplete&) {
    return 1;
  } catch (const NoFeasibleIncumbent&) {
    return 1;
  } catch (const ThresholdTooStrict&) {
    return 1;
  } catch (const json::exception&) {
    return 1;
  } catch (...) {
    return 2;
  }
}

httplib::Server* g_server = nullptr;
void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trust-region Bayesian optimization for multi-pass laser dicing"};
  app.require_subcommand(1);
  std::string data_dir = service::default_data_dir().string();
  app.add_option("--data-dir", data_dir, "Campaign directory (default $BOLD_DATA_DIR or ./bold-data)");

  std::string campaign_id;
  const auto campaign_opt = [&](CLI::App* sub) { sub->add_option("--campaign,-c", campaign_id, "Campaign id")->required(); };

  auto* init = app.add_subcommand("init", "Create a campaign and print its initial batch");
  std::string config_file, preset = "bare_silicon", new_id;
  std::uint64_t seed = 0;
  init->add_option("--config", config_file, "Request file: {preset, seed, config, seed_configs}");
  init->add_option("--preset", preset, "bare_silicon or product (when no --config)");
  init->add_option("--seed", seed, "Campaign seed (when no --config)");
  init->add_option("--id", new_id, "Campaign id (default campaign-NNNN)");

  auto* ask = app.add_subcommand("ask", "Propose the next batch");
  campaign_opt(ask);
  int q = 0;
  ask->add_option("--q", q, "Batch size override");

  auto* tell = app.add_subcommand("tell", "Record measurements for a pending configuration");
  campaign_opt(tell);
  std::string config_id, measurement_file;
  tell->add_option("--config-id", config_id, "Pending configuration id")->required();
  tell->add_option("--measurement", measurement_file, "JSON file {optical: {...}, destructive?: {front, back}}");
  std::map<std::string, std::optional<double>> optical_flags;
  for (const char* f : {"dicing_width", "mod_width", "burr", "front_cracks", "corner_cracks", "back_cracks",
                        "separation", "chipouts"}) {
    std::string flag = std::string("--") + f;
    std::replace(flag.begin(), flag.end(), '_', '-');
    tell->add_option(flag, optical_flags[f], std::string("Optical measurement ") + f);
  }
  std::vector<double> front_strength, back_strength;
  tell->add_option("--front-strength", front_strength, "Front strengths (MPa)")->delimiter(',');
  tell->add_option("--back-strength", back_strength, "Back strengths (MPa)")->delimiter(',');

  auto* status = app.add_subcommand("status", "Stage, trust region, incumbent and counts");
  campaign_opt(status);

  auto* stage_switch = app.add_subcommand("stage-switch", "Switch a campaign to Stage 2");
  campaign_opt(stage_switch);

  auto* map = app.add_subcommand("map", "Posterior-mean optimum under alternative weights");
  campaign_opt(map);
  std::string weights;
  double level = 0.9;
  std::size_t map_samples = 100000;
  map->add_option("--weights", weights, "Weight row name, JSON object or file");
  map->add_option("--level", level, "Per-constraint feasibility probability");
  map->add_option("--samples", map_samples, "Sobol pool size");

  auto* export_trace = app.add_subcommand("export-trace", "Write the per-iteration trace");
  campaign_opt(export_trace);
  std::string format = "csv", out;
  export_trace->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));
  export_trace->add_option("--out,-o", out, "Output file (default stdout)");

  auto* run_sim = app.add_subcommand("run-sim", "Autonomous campaign against the wafer simulator");
  int budget = 120;
  double stage1_fraction = campaign::AutonomousOptions{}.stage1_budget_fraction;
  std::string save_id;
  run_sim->add_option("--preset", preset)->check(CLI::IsMember({"bare_silicon", "product"}));
  run_sim->add_option("--budget", budget)->check(CLI::PositiveNumber);
  run_sim->add_option("--seed", seed);
  run_sim->add_option("--stage1-fraction", stage1_fraction, "Budget share after which Stage 2 is forced");
  run_sim->add_option("--save", save_id, "Persist the finished campaign under this id");
  run_sim->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));
  run_sim->add_option("--out,-o", out, "Trace output file (default stdout)");

  auto* oracle = app.add_subcommand("oracle", "Best noise-free feasible configuration of a preset");
  std::size_t samples = 1000000;
  oracle->add_option("--preset", preset)->check(CLI::IsMember({"bare_silicon", "product"}));
  oracle->add_option("--weights", weights, "Weight row name, JSON object or file (default: preset weights)");
  oracle->add_option("--samples", samples)->check(CLI::Range(100000ul, 100000000ul));
  oracle->add_option("--seed", seed);

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  int port = 8080;
  std::string host = "127.0.0.1";
  serve->add_option("--port", port);
  serve->add_option("--host", host);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    service::Api api(data_dir);
    if (*init) {
      json body = config_file.empty() ? json{{"preset", preset}, {"seed", seed}} : read_json_file(config_file);
      if (!new_id.empty()) body["id"] = new_id;
      print(api.create(body));
    } else if (*ask) {
      print(api.ask(campaign_id, q > 0 ? std::optional<int>(q) : std::nullopt));
    } else if (*tell) {
      json body;
      if (!measurement_file.empty()) {
        body = read_json_file(measurement_file);
      } else {
        json optical = json::object();
        for (const auto& [k, v] : optical_flags)
          if (v) optical[k] = *v;
        body["optical"] = optical;
        if (!front_strength.empty() || !back_strength.empty())
          body["destructive"] = {{"front", front_strength}, {"back", back_strength}};
      }
      body["config_id"] = config_id;
      print(api.tell(campaign_id, body));
    } else if (*status) {
      print(api.status(campaign_id));
    } else if (*stage_switch) {
      print(api.stage_switch(campaign_id));
    } else if (*map) {
      print(api.map(campaign_id, {{"weights", weights_arg(weights)}, {"feasibility_level", level}, {"samples", map_samples}}));
    } else if (*export_trace) {
      write_output(format == "csv" ? api.trace_csv(campaign_id) : api.trace(campaign_id).at("rows").dump(2) + "\n", out);
    } else if (*run_sim) {
      const auto p = sim::preset_by_id(preset);
      auto state = campaign::initialize(campaign::config_for_preset(p, seed));
      campaign::run_autonomous(state, campaign::sim_evaluator(p, seed), {budget, stage1_fraction});
      if (!save_id.empty()) api.store().save({save_id, campaign::kSchemaVersion, state});
      write_output(format == "csv" ? campaign::trace_csv(state.trace) : campaign::trace_json(state.trace).dump(2) + "\n",
                   out);
    } else if (*oracle) {
      const auto p = sim::preset_by_id(preset);
      const auto w = service::weights_from_request(weights_arg(weights), p.weights);
      const auto r = sim::oracle_best(p, w, samples, seed);
      const auto m = sim::latent(r.config, p);
      const auto space = laser_space();
      json params = json::object();
      for (std::size_t j = 0; j < space.dim(); ++j) params[space[j].name] = r.config[j];
      print({{"preset", p.id},
             {"utility", r.utility},
             {"x", r.config},
             {"parameters", params},
             {"throughput", sim::throughput(r.config, p)},
             {"front_strength", m.front_strength},
             {"back_strength", m.back_strength},
             {"dicing_width", m.dicing_width},
             {"burr", m.burr}});
    } else if (*serve) {
      httplib::Server server;
      service::mount(server, api);
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      std::cerr << "listening on " << host << ":" << port << ", data in " << data_dir << "\n";
      if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
    }
    return 0;
  } catch (...) {
    const auto ep = std::current_exception();
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
    }
    return exit_code_for(ep);
  }
}
