#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>
#include <sstream>

#include "bold/campaign/state.hpp"

namespace bold::service {

namespace fs = std::filesystem;
using campaign::CampaignState;
using campaign::json;

/// One persisted campaign: opaque id plus the full state, event log included.
struct CampaignRecord {
  std::string id;
  int schema_version = campaign::kSchemaVersion;
  CampaignState state;

  bool operator==(const CampaignRecord&) const = default;
};

inline void to_json(json& j, const CampaignRecord& r) {
  j = json{{"id", r.id}, {"schema_version", r.schema_version}, {"state", r.state}};
}

inline void from_json(const json& j, CampaignRecord& r) {
  const int version = j.at("schema_version").get<int>();
  if (version != campaign::kSchemaVersion)
    throw MigrationError("record schema version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(campaign::kSchemaVersion) + ")");
  r.id = j.at("id").get<std::string>();
  r.schema_version = version;
  r.state = j.at("state").get<CampaignState>();
}

inline std::string serialize(const CampaignRecord& r) { return json(r).dump(2) + "\n"; }

/// Parse a record. Malformed text raises IntegrityError with the byte offset
/// of the parse failure; a well-formed record that does not match the schema
/// raises IntegrityError at offset 0.
inline CampaignRecord deserialize(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IntegrityError(std::string("corrupt campaign record: ") + e.what(), e.byte);
  }
  try {
    return j.get<CampaignRecord>();
  } catch (const MigrationError&) {
    throw;
  } catch (const std::exception& e) {
    throw IntegrityError(std::string("campaign record does not match the schema: ") + e.what(), 0);
  }
}

inline bool valid_campaign_id(const std::string& id) {
  static const std::regex re("[A-Za-z0-9_-]{1,64}");
  return std::regex_match(id, re);
}

/// Directory of `<id>.json` records. Writes go to a temporary file that is
/// flushed and renamed over the target, so readers see either the old or the
/// new record, never a partial one.
class Store {
 public:
  explicit Store(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  const fs::path& dir() const { return dir_; }

  fs::path path_of(const std::string& id) const {
    if (!valid_campaign_id(id)) throw LookupError("invalid campaign id '" + id + "'");
    return dir_ / (id + ".json");
  }

  bool exists(const std::string& id) const { return valid_campaign_id(id) && fs::exists(path_of(id)); }

  void save(const CampaignRecord& r) const {
    const auto target = path_of(r.id);
    const auto tmp = target.string() + ".tmp." + std::to_string(::getpid());
    const auto text = serialize(r);
    {
      std::FILE* f = std::fopen(tmp.c_str(), "wb");
      if (!f) throw Error("cannot write " + tmp);
      const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size() && std::fflush(f) == 0 &&
                      ::fsync(::fileno(f)) == 0;
      std::fclose(f);
      if (!ok) {
        fs::remove(tmp);
        throw Error("short write to " + tmp);
      }
    }
    fs::rename(tmp, target);
  }

  CampaignRecord load(const std::string& id) const {
    const auto p = path_of(id);
    std::ifstream in(p, std::ios::binary);
    if (!in) throw LookupError("unknown campaign '" + id + "'");
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto r = deserialize(text);
    if (r.id != id) throw IntegrityError("record id '" + r.id + "' does not match file name", 0);
    return r;
  }

  /// Next free id of the form campaign-NNNN.
  std::string new_id() const {
    for (int n = 1;; ++n) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "campaign-%04d", n);
      if (!fs::exists(dir_ / (std::string(buf) + ".json"))) return buf;
    }
  }

  std::vector<std::string> list() const {
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(dir_))
      if (e.path().extension() == ".json") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
  }

 private:
  fs::path dir_;
};

/// Data directory from BOLD_DATA_DIR, else ./bold-data.
inline fs::path default_data_dir() {
  if (const char* d = std::getenv("BOLD_DATA_DIR"); d && *d) return d;
  return "bold-data";
}

}  // namespace bold::service
