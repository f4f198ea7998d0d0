#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evsim/core.hpp"
#include "evsim/road_network.hpp"

namespace evsim {

using AgentId = std::int64_t;

struct EVSpec {
  std::string name;
  double battery_kwh = 0.0;
  double consumption_wh_per_mi = 0.0;

  double full_range_mi() const { return battery_kwh * 1000.0 / consumption_wh_per_mi; }
  /// State-of-charge fraction used per mile driven.
  double soc_per_mile() const { return consumption_wh_per_mi / (battery_kwh * 1000.0); }
};

/// The five most popular UK models of 2022 with their battery and consumption figures.
std::vector<EVSpec> default_ev_catalog();

struct Charger {
  ChargerId charger_id = 0;
  NodeId node_id = 0;
  int ports = 1;
  double price_gbp_per_kwh = 0.3;
  double speed_kw = 6.4;
  double initial_parking_fee_gbp = 0.0;
  double additional_parking_fee_gbp_per_h = 1.2;
};

enum class TripPurpose { Work, Leisure };

std::string to_string(TripPurpose purpose);
TripPurpose parse_purpose(const std::string& text);

/// Survey trip-purpose categories and their two-way reclassification.
const std::vector<std::string>& survey_purposes();
TripPurpose reclassify_purpose(const std::string& survey_purpose);

struct Trip {
  NodeId origin = 0;
  NodeId destination = 0;
  TripPurpose purpose = TripPurpose::Work;
  std::string survey_purpose;
  double start_time_min = 0.0;
  double planned_distance_mi = 0.0;
};

struct DriverAgent {
  AgentId agent_id = 0;
  EVSpec ev;
  double soc = 0.5;
  double soc_threshold = 0.2;
  std::vector<Trip> trips;
  int cluster_id = -1;
  double cd = 0.0;
  double tcd = 0.0;
  /// Generator regime label, -1 when unknown.
  int regime = -1;

  double total_distance_mi() const;
};

struct Scenario {
  RoadGraph graph;
  std::vector<Charger> chargers;
  std::vector<DriverAgent> agents;
  std::uint64_t seed = 0;
  std::string config_hash;

  const Charger& charger(ChargerId id) const;
  const DriverAgent& agent(AgentId id) const;
};

struct NormalSpec {
  double mean = 0.0;
  double sd = 1.0;
};

struct RegimeConfig {
  std::string name;
  double weight = 1.0;
  std::vector<int> origin_zones;
  std::vector<int> dest_zones;
  NormalSpec one_way_distance_mi{10.0, 1.0};
  NormalSpec initial_soc{0.5, 0.05};
  double work_fraction = 0.5;
  /// Restricts vehicle assignment to these catalogue names; empty means all.
  std::vector<std::string> ev_names;
  /// Departure time for both purposes; unset falls back to the purpose defaults.
  std::optional<NormalSpec> start_min;
};

struct ScenarioConfig {
  int grid_nx = 20;
  int grid_ny = 15;
  double spacing_mi = 2.0;
  double jitter = 0.15;
  double detour_max = 0.08;
  int zone_cols = 4;
  int zone_rows = 3;
  double default_charger_probability = 0.08;
  std::map<int, double> zone_charger_probability;
  double rapid_fraction = 0.3;
  double ultra_fraction = 0.1;
  int agent_count = 60;
  int trips_per_agent = 2;
  std::vector<RegimeConfig> regimes;
  std::vector<EVSpec> ev_catalog = default_ev_catalog();
  NormalSpec work_start_min{480.0, 40.0};
  NormalSpec leisure_start_min{660.0, 90.0};
  double work_dwell_min = 480.0;
  double leisure_dwell_min = 180.0;
  NormalSpec soc_threshold{0.2, 0.05};
  double soc_threshold_lo = 0.05;
  double soc_threshold_hi = 0.5;
  double speed_mph = 40.0;
  double buffer_m = 500.0;
};

/// Throws InvalidConfig naming the offending field.
void validate(const ScenarioConfig& config);

using ZoneMap = std::map<int, std::vector<NodeId>>;

/// Block partition of the generated grid into zone_cols x zone_rows zones.
ZoneMap grid_zones(const RoadGraph& graph, const ScenarioConfig& config);

/// Origin drawn uniformly from the origin zone; destination is the node of the
/// destination zone whose network distance from the origin is closest to
/// `trip_distance_mi` (smallest id on ties).
std::pair<NodeId, NodeId> select_od(const RoadGraph& graph, const ZoneMap& zones,
                                    int origin_zone, int dest_zone, double trip_distance_mi,
                                    Rng& rng);

/// Chargers within `buffer_m` of the route per route mile.
double compute_cd(const Path& path, const std::vector<Charger>& chargers,
                  const RoadGraph& graph, double buffer_m = 500.0);

struct TimeWindow {
  double start = 0.0;
  double end = 0.0;

  bool overlaps(const TimeWindow& other) const {
    return start <= other.end && other.start <= end;
  }
};

/// Concurrent trips whose route comes within `buffer_m` of this route, per route mile.
double compute_tcd(const Path& path, const TimeWindow& own_window,
                   const std::vector<std::pair<Path, TimeWindow>>& other_trips,
                   const RoadGraph& graph, double buffer_m = 500.0);

/// Normal(mean, sd) conditioned on (lo, hi) by rejection; RetryLimit after
/// 10,000 rejected draws.
double sample_truncated_normal(Rng& rng, double mean, double sd, double lo, double hi);

double sample_initial_soc(Rng& rng, double mean, double sd);

/// The bundled desk-scale configuration with five driver regimes.
ScenarioConfig default_scenario_config();

Scenario generate_scenario(const ScenarioConfig& config, std::uint64_t seed);

/// Recomputes every agent's CD and TCD from its trips.
void compute_agent_densities(Scenario& scenario, double speed_mph, double buffer_m = 500.0);

}  // namespace evsim
