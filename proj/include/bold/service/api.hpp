#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <regex>

#include "bold/campaign/autonomous.hpp"
#include "bold/service/store.hpp"

namespace bold::service {

using campaign::Clock;

/// Another request holds the campaign's write lock.
class Busy : public Conflict {
 public:
  using Conflict::Conflict;
};

struct Response {
  int status = 200;
  json body;
  std::map<std::string, std::string> headers;
  std::string content_type = "application/json";
  std::string text;  // non-JSON payload (CSV trace)
};

inline json error_body(const std::string& type, const std::string& message) {
  return {{"error", type}, {"message", message}};
}

/// Maps a thrown error to an HTTP status and body.
inline Response error_response(const std::exception_ptr& ep) {
  Response r;
  try {
    std::rethrow_exception(ep);
  } catch (const Busy& e) {
    r = {409, error_body("busy", e.what()), {{"Retry-After", "1"}}};
  } catch (const ThresholdTooStrict& e) {
    r = {422, error_body("threshold_too_strict", e.what())};
    r.body["best_achievable_level"] = e.best_achievable_level;
  } catch (const ValidationError& e) {
    r = {422, error_body("validation", e.what())};
  } catch (const ConfigError& e) {
    r = {422, error_body("config", e.what())};
  } catch (const PresetError& e) {
    r = {422, error_body("preset", e.what())};
  } catch (const json::exception& e) {
    r = {422, error_body("validation", e.what())};
  } catch (const LookupError& e) {
    r = {404, error_body("not_found", e.what())};
  } catch (const Conflict& e) {
    r = {409, error_body("conflict", e.what())};
  } catch (const LifecycleError& e) {
    r = {409, error_body("lifecycle", e.what())};
  } catch (const CampaignComplete& e) {
    r = {409, error_body("campaign_complete", e.what())};
  } catch (const NoFeasibleIncumbent& e) {
    r = {409, error_body("no_feasible_incumbent", e.what())};
  } catch (const IntegrityError& e) {
    r = {500, error_body("integrity", e.what())};
    r.body["offset"] = e.offset;
  } catch (const MigrationError& e) {
    r = {500, error_body("migration", e.what())};
  } catch (const std::exception& e) {
    r = {500, error_body("internal", e.what())};
  }
  return r;
}

inline json pending_json(const CampaignState& s) {
  json out = json::array();
  const auto space = s.config.space();
  for (const auto& p : s.pending) {
    json params = json::object();
    for (std::size_t j = 0; j < space.dim(); ++j) params[space[j].name] = p.x[j];
    out.push_back({{"id", p.id}, {"x", p.x}, {"parameters", params}});
  }
  return out;
}

inline json status_json(const std::string& id, const CampaignState& s) {
  int feasible = 0, destructive = 0;
  for (const auto& o : s.observations) {
    feasible += o.feasible;
    if (o.destructive) destructive += static_cast<int>(o.destructive->front.size() + o.destructive->back.size());
  }
  json inc = nullptr;
  if (s.incumbent_id) {
    for (const auto& o : s.observations)
      if (o.id == *s.incumbent_id) {
        inc = {{"id", o.id},
               {"x", o.x},
               {"utility", *s.incumbent_utility},
               {"throughput", sim::throughput(o.x, s.config.machine)},
               {"optical", o.optical}};
        campaign::detail::put(inc, "destructive", o.destructive);
      }
  }
  return {{"id", id},
          {"stage", s.stage},
          {"tau", s.trust_region.side_length},
          {"iteration", s.iteration()},
          {"complete", s.complete},
          {"incumbent", inc},
          {"pending", pending_json(s)},
          {"counts",
           {{"observations", s.observations.size()},
            {"feasible", feasible},
            {"pending", s.pending.size()},
            {"destructive_values", destructive},
            {"asks", s.ask_count}}}};
}

/// Campaign configuration from a create request: a preset (default
/// bare_silicon) and seed, with an optional "config" object merge-patched on top.
inline campaign::CampaignConfig config_from_request(const json& body) {
  const auto preset_id = body.value("preset", std::string("bare_silicon"));
  const auto seed = body.value("seed", std::uint64_t{0});
  json merged = campaign::config_for_preset(sim::preset_by_id(preset_id), seed);
  if (body.contains("config")) merged.merge_patch(body.at("config"));
  auto config = merged.get<campaign::CampaignConfig>();
  config.validate();
  return config;
}

/// Weights for a what-if: a named row, or an object patched onto the campaign's weights.
inline acquisition::UtilityWeights weights_from_request(const json& j, const acquisition::UtilityWeights& base) {
  if (j.is_null()) return base;
  if (j.is_string()) return acquisition::named_weights(j.get<std::string>());
  json merged = base;
  merged.merge_patch(j);
  auto w = merged.get<acquisition::UtilityWeights>();
  w.validate();
  return w;
}

/// Every campaign operation behind one object; the HTTP server and the CLI
/// both call these, so a scenario driven through either path produces the
/// same records.
class Api {
 public:
  explicit Api(fs::path data_dir, Clock clock = campaign::system_clock())
      : store_(std::move(data_dir)), clock_(std::move(clock)) {}

  Store& store() { return store_; }

  json create(const json& body) {
    const auto config = config_from_request(body);
    std::vector<campaign::Config> seeds;
    if (body.contains("seed_configs")) seeds = body.at("seed_configs").get<std::vector<campaign::Config>>();
    std::lock_guard<std::mutex> guard(create_mutex_);
    CampaignRecord r;
    r.id = body.contains("id") ? body.at("id").get<std::string>() : store_.new_id();
    if (!valid_campaign_id(r.id)) throw ValidationError("invalid campaign id '" + r.id + "'");
    if (store_.exists(r.id)) throw Conflict("campaign '" + r.id + "' already exists");
    r.state = campaign::initialize(config, seeds, clock_);
    store_.save(r);
    return {{"id", r.id}, {"batch", pending_json(r.state)}};
  }

  json ask(const std::string& id, std::optional<int> q = std::nullopt) {
    return mutate(id, [&](CampaignState& s) {
      campaign::ask(s, clock_, q);
      return json{{"batch", pending_json(s)}};
    });
  }

  json tell(const std::string& id, const json& body) {
    const auto config_id = body.at("config_id").get<std::string>();
    if (!body.contains("optical")) throw ValidationError("missing 'optical' measurements");
    const auto optical = body.at("optical").get<campaign::OpticalMeasurement>();
    std::optional<campaign::DestructiveMeasurement> destructive;
    if (body.contains("destructive") && !body.at("destructive").is_null()) {
      try {
        destructive = body.at("destructive").get<campaign::DestructiveMeasurement>();
      } catch (const json::exception& e) {
        throw ValidationError(std::string("destructive: ") + e.what());
      }
    }
    return mutate(id, [&](CampaignState& s) {
      campaign::tell(s, config_id, optical, destructive, clock_);
      auto st = status_json(id, s);
      // Events emitted by this tell: the told event and possibly a stage switch or termination.
      auto it = s.events.rbegin();
      for (; it->type != "told"; ++it) st[it->type] = it->payload;
      st["warnings"] = it->payload.at("warnings");
      return st;
    });
  }

  json stage_switch(const std::string& id, const json& body = json::object()) {
    const auto reason = body.value("reason", std::string("manual"));
    return mutate(id, [&](CampaignState& s) {
      campaign::switch_stage(s, reason, clock_);
      return status_json(id, s);
    });
  }

  json status(const std::string& id) const { return status_json(id, store_.load(id).state); }

  json trace(const std::string& id) const {
    const auto s = store_.load(id).state;
    return {{"id", id}, {"rows", campaign::trace_json(s.trace)}};
  }

  std::string trace_csv(const std::string& id) const { return campaign::trace_csv(store_.load(id).state.trace); }

  json record(const std::string& id) const { return store_.load(id); }

  json map(const std::string& id, const json& body) const {
    const auto s = store_.load(id).state;
    const auto w = weights_from_request(body.value("weights", json()), s.config.weights);
    const double level = body.value("feasibility_level", 0.9);
    const auto samples = body.value("samples", std::size_t{100000});
    const auto r = campaign::map_estimate(s, w, level, samples);
    json params = json::object();
    const auto space = s.config.space();
    for (std::size_t j = 0; j < space.dim(); ++j) params[space[j].name] = r.config[j];
    return {{"x", r.config},
            {"parameters", params},
            {"throughput", r.throughput},
            {"utility", r.utility},
            {"predicted", r.predicted},
            {"feasibility_level", r.feasibility_level},
            {"weights", w}};
  }

  json list() const { return store_.list(); }

  /// Route one request. Paths are those of the HTTP API.
  Response handle(const std::string& method, const std::string& path, const std::string& body_text,
                  const std::map<std::string, std::string>& query = {}) {
    static const std::regex campaign_path(R"(^/campaigns/([^/]+)(/[a-z-]+)?$)");
    try {
      const auto body = [&] { return body_text.empty() ? json::object() : json::parse(body_text); };
      if (path == "/campaigns") {
        if (method == "POST") return {201, create(body())};
        if (method == "GET") return {200, list()};
        return {405, error_body("method", "use GET or POST")};
      }
      std::smatch m;
      if (!std::regex_match(path, m, campaign_path)) return {404, error_body("not_found", "no route for " + path)};
      const std::string id = m[1];
      const std::string action = m[2];
      if (!store_.exists(id)) return {404, error_body("not_found", "unknown campaign '" + id + "'")};
      const auto route = method + " " + action;
      if (route == "GET " || route == "GET /record") return {200, record(id)};
      if (route == "GET /ask" || route == "POST /ask") {
        std::optional<int> q;
        if (auto it = query.find("q"); it != query.end()) q = std::stoi(it->second);
        return {200, ask(id, q)};
      }
      if (route == "POST /tell") return {200, tell(id, body())};
      if (route == "GET /status") return {200, status(id)};
      if (route == "GET /trace") {
        if (auto it = query.find("format"); it != query.end() && it->second == "csv") {
          Response r;
          r.content_type = "text/csv";
          r.text = trace_csv(id);
          return r;
        }
        return {200, trace(id)};
      }
      if (route == "POST /map") return {200, map(id, body())};
      if (route == "POST /stage-switch") return {200, stage_switch(id, body())};
      return {404, error_body("not_found", "no route for " + method + " " + path)};
    } catch (...) {
      return error_response(std::current_exception());
    }
  }

 private:
  template <typename F>
  json mutate(const std::string& id, F&& op) {
    std::unique_lock<std::mutex> lock(lock_for(id), std::try_to_lock);
    if (!lock.owns_lock()) throw Busy("campaign '" + id + "' is being updated; retry shortly");
    auto r = store_.load(id);
    json out = op(r.state);
    store_.save(r);
    return out;
  }

  std::mutex& lock_for(const std::string& id) {
    std::lock_guard<std::mutex> guard(locks_mutex_);
    auto& m = locks_[id];
    if (!m) m = std::make_unique<std::mutex>();
    return *m;
  }

  Store store_;
  Clock clock_;
  std::mutex create_mutex_;
  std::mutex locks_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

}  // namespace bold::service
