#pragma once

#include <filesystem>
#include <set>
#include <string>

#include <json.hpp>

#include "evsim/analysis.hpp"
#include "evsim/clustering.hpp"
#include "evsim/environment.hpp"
#include "evsim/orchestrator.hpp"
#include "evsim/rl_core.hpp"
#include "evsim/scenario.hpp"

namespace evsim {

using Json = nlohmann::json;

/// Reads an object field by field and rejects keys nobody asked for.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string where);

  template <typename T>
  void get(const char* key, T& out) {
    auto it = j_.find(key);
    seen_.insert(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::InvalidConfig, where_ + "." + key + ": wrong type");
    }
  }
  bool has(const char* key) const { return j_.contains(key); }
  void skip(const char* key) { seen_.insert(key); }
  const Json* child(const char* key);
  void finish() const;

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Json to_json(const RoadGraph& graph);
RoadGraph graph_from_json(const Json& j);

Json to_json(const Charger& c);
Charger charger_from_json(const Json& j);

Json to_json(const Scenario& s);
Scenario scenario_from_json(const Json& j);

Json to_json(const ScenarioConfig& c);
ScenarioConfig scenario_config_from_json(const Json& j);

Json to_json(const RewardConfig& c);
RewardConfig reward_config_from_json(const Json& j);
Json to_json(const EnvConfig& c);
EnvConfig env_config_from_json(const Json& j);
Json to_json(const DqnConfig& c);
DqnConfig dqn_config_from_json(const Json& j);
Json to_json(const CampaignConfig& c);
CampaignConfig campaign_config_from_json(const Json& j);

Json to_json(const UsagePattern& u);
UsagePattern usage_from_json(const Json& j);

Json to_json(const QNetwork& net);
QNetwork network_from_json(const Json& j);
Json to_json(const Policy& p, bool include_buffer);
Policy policy_from_json(const Json& j, const DqnConfig& config);

Json to_json(const GroupEpisodeStats& g);
GroupEpisodeStats group_stats_from_json(const Json& j);
/// Summary without usage, observations or traces.
Json to_json(const EpisodeResult& r);
EpisodeResult episode_result_from_json(const Json& j);

Json to_json(const DriverGroups& g);
Json to_json(const TraceEvent& e);
Json to_json(const HexSocMap& m);
Json to_json(const RiskReport& r);

std::string group_key_string(const GroupKey& key);
GroupKey parse_group_key(const std::string& text);

Json read_json_file(const std::filesystem::path& path);
/// Writes through a temporary file and rename so readers never see a partial file.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json_atomic(const std::filesystem::path& path, const Json& j);

}  // namespace evsim
