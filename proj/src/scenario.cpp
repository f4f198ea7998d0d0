#include "evsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>

namespace evsim {

std::vector<EVSpec> default_ev_catalog() {
  return {
      {"Tesla Model Y", 57.5, 267.0},
      {"Tesla Model 3", 57.5, 221.0},
      {"Kia Niro EV", 64.8, 270.0},
      {"Volkswagen ID.3", 59.0, 268.0},
      {"Nissan Leaf", 39.0, 269.0},
  };
}

std::string to_string(TripPurpose purpose) {
  return purpose == TripPurpose::Work ? "work" : "leisure";
}

TripPurpose parse_purpose(const std::string& text) {
  if (text == "work") return TripPurpose::Work;
  if (text == "leisure") return TripPurpose::Leisure;
  fail(ErrorKind::InvalidArgument, "unknown trip purpose '" + text + "'");
}

const std::vector<std::string>& survey_purposes() {
  static const std::vector<std::string> kPurposes = {
      "Commuting",   "Personal business", "Business", "Education/escort education",
      "Other escort", "Shopping",         "Leisure"};
  return kPurposes;
}

TripPurpose reclassify_purpose(const std::string& survey_purpose) {
  static const std::map<std::string, TripPurpose> kMap = {
      {"Commuting", TripPurpose::Work},
      {"Personal business", TripPurpose::Work},
      {"Business", TripPurpose::Work},
      {"Education/escort education", TripPurpose::Work},
      {"Other escort", TripPurpose::Leisure},
      {"Shopping", TripPurpose::Leisure},
      {"Leisure", TripPurpose::Leisure},
  };
  auto it = kMap.find(survey_purpose);
  if (it == kMap.end())
    fail(ErrorKind::InvalidArgument, "unknown survey purpose '" + survey_purpose + "'");
  return it->second;
}

double DriverAgent::total_distance_mi() const {
  double total = 0.0;
  for (const auto& t : trips) total += t.planned_distance_mi;
  return total;
}

const Charger& Scenario::charger(ChargerId id) const {
  for (const auto& c : chargers)
    if (c.charger_id == id) return c;
  fail(ErrorKind::InvalidArgument, "unknown charger " + std::to_string(id));
}

const DriverAgent& Scenario::agent(AgentId id) const {
  for (const auto& a : agents)
    if (a.agent_id == id) return a;
  fail(ErrorKind::InvalidArgument, "unknown agent " + std::to_string(id));
}

namespace {

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) fail(ErrorKind::InvalidConfig, field + ": " + why);
}

}  // namespace

void validate(const ScenarioConfig& c) {
  require(c.grid_nx >= 2, "grid_nx", "must be >= 2");
  require(c.grid_ny >= 2, "grid_ny", "must be >= 2");
  require(c.spacing_mi > 0.0, "spacing_mi", "must be > 0");
  require(c.jitter >= 0.0 && c.jitter < 0.5, "jitter", "must lie in [0, 0.5)");
  require(c.detour_max >= 0.0 && c.detour_max <= 1.0, "detour_max", "must lie in [0, 1]");
  require(c.zone_cols >= 1 && c.zone_cols <= c.grid_nx, "zone_cols", "must lie in [1, grid_nx]");
  require(c.zone_rows >= 1 && c.zone_rows <= c.grid_ny, "zone_rows", "must lie in [1, grid_ny]");
  const int zones = c.zone_cols * c.zone_rows;
  require(c.default_charger_probability >= 0.0 && c.default_charger_probability <= 1.0,
          "default_charger_probability", "must lie in [0, 1]");
  for (const auto& [zone, p] : c.zone_charger_probability) {
    require(zone >= 0 && zone < zones, "zone_charger_probability", "zone out of range");
    require(p >= 0.0 && p <= 1.0, "zone_charger_probability", "must lie in [0, 1]");
  }
  require(c.rapid_fraction >= 0.0 && c.ultra_fraction >= 0.0 &&
              c.rapid_fraction + c.ultra_fraction <= 1.0,
          "rapid_fraction", "rapid + ultra fractions must lie in [0, 1]");
  require(c.agent_count >= 0, "agent_count", "must be >= 0");
  require(c.trips_per_agent == 1 || c.trips_per_agent == 2, "trips_per_agent", "must be 1 or 2");
  require(c.agent_count == 0 || !c.regimes.empty(), "regimes", "at least one regime required");
  for (std::size_t i = 0; i < c.regimes.size(); ++i) {
    const auto& r = c.regimes[i];
    const std::string f = "regimes[" + std::to_string(i) + "]";
    require(r.weight > 0.0, f + ".weight", "must be > 0");
    require(!r.origin_zones.empty(), f + ".origin_zones", "must be nonempty");
    require(!r.dest_zones.empty(), f + ".dest_zones", "must be nonempty");
    for (int z : r.origin_zones) require(z >= 0 && z < zones, f + ".origin_zones", "zone out of range");
    for (int z : r.dest_zones) require(z >= 0 && z < zones, f + ".dest_zones", "zone out of range");
    require(r.one_way_distance_mi.mean > 0.0 && r.one_way_distance_mi.sd >= 0.0,
            f + ".one_way_distance_mi", "mean must be > 0 and sd >= 0");
    require(r.initial_soc.mean > 0.0 && r.initial_soc.mean < 1.0 && r.initial_soc.sd > 0.0,
            f + ".initial_soc", "mean must lie in (0,1) and sd > 0");
    require(r.work_fraction >= 0.0 && r.work_fraction <= 1.0, f + ".work_fraction",
            "must lie in [0, 1]");
    require(!r.start_min || r.start_min->sd >= 0.0, f + ".start_min", "sd must be >= 0");
    for (const auto& name : r.ev_names) {
      const bool known = std::any_of(c.ev_catalog.begin(), c.ev_catalog.end(),
                                     [&](const EVSpec& ev) { return ev.name == name; });
      require(known, f + ".ev_names", "unknown vehicle '" + name + "'");
    }
  }
  require(!c.ev_catalog.empty(), "ev_catalog", "must be nonempty");
  for (const auto& ev : c.ev_catalog)
    require(ev.battery_kwh > 0.0 && ev.consumption_wh_per_mi > 0.0, "ev_catalog",
            "battery and consumption must be > 0");
  require(c.work_start_min.sd >= 0.0 && c.leisure_start_min.sd >= 0.0, "start_min", "sd must be >= 0");
  require(c.work_dwell_min >= 0.0 && c.leisure_dwell_min >= 0.0, "dwell_min", "must be >= 0");
  require(c.soc_threshold_lo > 0.0 && c.soc_threshold_hi < 1.0 &&
              c.soc_threshold_lo < c.soc_threshold_hi,
          "soc_threshold_lo", "bounds must satisfy 0 < lo < hi < 1");
  require(c.soc_threshold.sd > 0.0, "soc_threshold.sd", "must be > 0");
  require(c.speed_mph > 0.0, "speed_mph", "must be > 0");
  require(c.buffer_m > 0.0, "buffer_m", "must be > 0");
}

ZoneMap grid_zones(const RoadGraph& graph, const ScenarioConfig& c) {
  ZoneMap zones;
  for (const auto& n : graph.nodes()) {
    const int gx = static_cast<int>(n.id % c.grid_nx);
    const int gy = static_cast<int>(n.id / c.grid_nx);
    const int zx = std::min(c.zone_cols - 1, gx * c.zone_cols / c.grid_nx);
    const int zy = std::min(c.zone_rows - 1, gy * c.zone_rows / c.grid_ny);
    zones[zy * c.zone_cols + zx].push_back(n.id);
  }
  return zones;
}

std::pair<NodeId, NodeId> select_od(const RoadGraph& graph, const ZoneMap& zones,
                                    int origin_zone, int dest_zone, double trip_distance_mi,
                                    Rng& rng) {
  auto oz = zones.find(origin_zone);
  auto dz = zones.find(dest_zone);
  if (oz == zones.end() || oz->second.empty())
    fail(ErrorKind::InvalidArgument, "origin zone " + std::to_string(origin_zone) + " is empty");
  if (dz == zones.end() || dz->second.empty())
    fail(ErrorKind::InvalidArgument, "destination zone " + std::to_string(dest_zone) + " is empty");
  if (!(trip_distance_mi > 0.0)) fail(ErrorKind::InvalidArgument, "trip distance must be > 0");

  const NodeId origin = oz->second[rng.below(oz->second.size())];
  const auto dist = distances_from(graph, graph.index_of(origin));
  std::optional<NodeId> best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (NodeId candidate : dz->second) {
    const double d = dist[graph.index_of(candidate)];
    if (!std::isfinite(d)) continue;
    const double gap = std::abs(d - trip_distance_mi);
    if (gap < best_gap || (gap == best_gap && candidate < *best)) {
      best_gap = gap;
      best = candidate;
    }
  }
  if (!best) fail(ErrorKind::NoPath, "no destination-zone node reachable from " + std::to_string(origin));
  return {origin, *best};
}

double compute_cd(const Path& path, const std::vector<Charger>& chargers,
                  const RoadGraph& graph, double buffer_m) {
  if (!(path.total_length_mi > 0.0)) fail(ErrorKind::ZeroLengthPath, "CD needs a positive-length path");
  int count = 0;
  for (const auto& c : chargers) {
    const Point p = graph.position(graph.index_of(c.node_id));
    if (distance_to_path(p, path, graph) <= buffer_m) ++count;
  }
  return count / path.total_length_mi;
}

double compute_tcd(const Path& path, const TimeWindow& own_window,
                   const std::vector<std::pair<Path, TimeWindow>>& other_trips,
                   const RoadGraph& graph, double buffer_m) {
  if (!(path.total_length_mi > 0.0)) fail(ErrorKind::ZeroLengthPath, "TCD needs a positive-length path");
  if (own_window.start > own_window.end) fail(ErrorKind::InvalidArgument, "window start after end");
  int count = 0;
  for (const auto& [other, window] : other_trips) {
    if (window.start > window.end) fail(ErrorKind::InvalidArgument, "window start after end");
    if (!own_window.overlaps(window)) continue;
    if (path_separation(path, other, graph) <= buffer_m) ++count;
  }
  return count / path.total_length_mi;
}

double sample_truncated_normal(Rng& rng, double mean, double sd, double lo, double hi) {
  if (!(sd > 0.0)) fail(ErrorKind::InvalidArgument, "sd must be > 0");
  if (!(lo < hi)) fail(ErrorKind::InvalidArgument, "empty truncation interval");
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const double x = rng.normal(mean, sd);
    if (x > lo && x < hi) return x;
  }
  fail(ErrorKind::RetryLimit, "truncated normal rejected 10000 draws");
}

double sample_initial_soc(Rng& rng, double mean, double sd) {
  if (!(mean > 0.0 && mean < 1.0)) fail(ErrorKind::InvalidArgument, "mean must lie in (0,1)");
  return sample_truncated_normal(rng, mean, sd, 0.0, 1.0);
}

ScenarioConfig default_scenario_config() {
  ScenarioConfig c;
  // Zone layout (4 x 3 blocks of 5 x 5 nodes, 10 x 10 miles each):
  //   0 dense city core, 1 and 4 suburbs, everything else rural.
  c.zone_charger_probability = {{0, 0.9}, {1, 0.45}, {4, 0.45}};
  c.default_charger_probability = 0.07;
  c.regimes = {
      {"mid-distance inter-city", 1.0, {6, 10}, {6, 7, 10, 11}, {10.0, 1.0}, {0.5, 0.04}, 0.5, {}, std::nullopt},
      {"long-distance low-battery", 1.0, {2, 3}, {10, 11}, {18.0, 1.0}, {0.08, 0.015}, 0.5, {}, std::nullopt},
      {"mid-distance high-density", 1.0, {1, 4}, {0, 1, 4}, {10.0, 1.0}, {0.5, 0.04}, 0.5, {}, std::nullopt},
      {"long-distance inter-city", 1.0, {9, 10}, {2, 3, 7}, {17.0, 1.0}, {0.8, 0.04}, 0.5, {}, std::nullopt},
      {"short-distance high-density", 1.0, {0}, {0}, {5.0, 0.5}, {0.75, 0.04}, 0.5, {}, std::nullopt},
  };
  return c;
}

namespace {

RoadGraph build_grid(const ScenarioConfig& c, Rng& rng) {
  const double spacing_km = c.spacing_mi * kKmPerMile;
  std::vector<Node> nodes;
  nodes.reserve(static_cast<std::size_t>(c.grid_nx * c.grid_ny));
  for (int y = 0; y < c.grid_ny; ++y) {
    for (int x = 0; x < c.grid_nx; ++x) {
      const double jx = rng.uniform(-c.jitter, c.jitter) * spacing_km;
      const double jy = rng.uniform(-c.jitter, c.jitter) * spacing_km;
      nodes.push_back({static_cast<NodeId>(y * c.grid_nx + x), x * spacing_km + jx,
                       y * spacing_km + jy});
    }
  }
  std::vector<Edge> edges;
  const auto link = [&](NodeId a, NodeId b) {
    const Point pa{nodes[a].x_km, nodes[a].y_km};
    const Point pb{nodes[b].x_km, nodes[b].y_km};
    const double straight_mi = (pa - pb).norm() / kKmPerMile;
    const double length = straight_mi * (1.0 + rng.uniform(0.0, c.detour_max));
    edges.push_back({a, b, std::round(length * 1e6) / 1e6 + 1e-6});
  };
  for (int y = 0; y < c.grid_ny; ++y) {
    for (int x = 0; x < c.grid_nx; ++x) {
      const NodeId id = y * c.grid_nx + x;
      if (x + 1 < c.grid_nx) link(id, id + 1);
      if (y + 1 < c.grid_ny) link(id, id + c.grid_nx);
    }
  }
  return RoadGraph(std::move(nodes), std::move(edges));
}

double round_to(double v, double step) { return std::round(v / step) * step; }

Charger sample_charger(ChargerId id, NodeId node, const ScenarioConfig& c, Rng& rng) {
  Charger ch;
  ch.charger_id = id;
  ch.node_id = node;
  const double u = rng.uniform();
  ch.ports = u < 0.5 ? 1 : u < 0.85 ? 2 : 3 + static_cast<int>(rng.below(10));
  ch.price_gbp_per_kwh = round_to(rng.uniform(0.3, 1.1), 0.01);
  const double kind = rng.uniform();
  if (kind < c.ultra_fraction) {
    ch.speed_kw = round_to(rng.uniform(150.0, 300.2), 0.1);
  } else if (kind < c.ultra_fraction + c.rapid_fraction) {
    ch.speed_kw = round_to(rng.uniform(43.0, 150.0), 0.1);
  } else {
    ch.speed_kw = round_to(rng.uniform(6.4, 22.0), 0.1);
  }
  ch.initial_parking_fee_gbp = round_to(rng.uniform(0.0, 0.6), 0.01);
  // Hourly fees are skewed toward the cheap end of the range.
  const double f = rng.uniform();
  ch.additional_parking_fee_gbp_per_h = round_to(1.2 + (24.0 - 1.2) * f * f * f, 0.01);
  ch.price_gbp_per_kwh = std::clamp(ch.price_gbp_per_kwh, 0.3, 1.1);
  ch.speed_kw = std::clamp(ch.speed_kw, 6.4, 300.2);
  ch.initial_parking_fee_gbp = std::clamp(ch.initial_parking_fee_gbp, 0.0, 0.6);
  ch.additional_parking_fee_gbp_per_h = std::clamp(ch.additional_parking_fee_gbp_per_h, 1.2, 24.0);
  return ch;
}

std::vector<int> apportion(int total, const std::vector<RegimeConfig>& regimes) {
  double weight_sum = 0.0;
  for (const auto& r : regimes) weight_sum += r.weight;
  std::vector<int> counts(regimes.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t i = 0; i < regimes.size(); ++i) {
    const double exact = total * regimes[i].weight / weight_sum;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - counts[i], i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& l, const auto& r) { return l.first > r.first; });
  for (int k = 0; assigned < total; ++k, ++assigned) ++counts[remainders[k].second];
  return counts;
}

std::string hash_config(const ScenarioConfig& c) {
  // FNV-1a over the fields that shape the generated world.
  std::uint64_t h = 1469598103934665603ULL;
  const auto feed = [&h](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  const auto feed_str = [&h](const std::string& s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  };
  for (double v : {double(c.grid_nx), double(c.grid_ny), c.spacing_mi, c.jitter, c.detour_max,
                   double(c.zone_cols), double(c.zone_rows), c.default_charger_probability,
                   c.rapid_fraction, c.ultra_fraction, double(c.agent_count),
                   double(c.trips_per_agent), c.work_start_min.mean, c.work_start_min.sd,
                   c.leisure_start_min.mean, c.leisure_start_min.sd, c.work_dwell_min,
                   c.leisure_dwell_min, c.soc_threshold.mean, c.soc_threshold.sd,
                   c.soc_threshold_lo, c.soc_threshold_hi, c.speed_mph, c.buffer_m})
    feed(v);
  for (const auto& [z, p] : c.zone_charger_probability) {
    feed(z);
    feed(p);
  }
  for (const auto& r : c.regimes) {
    feed_str(r.name);
    feed(r.weight);
    for (int z : r.origin_zones) feed(z);
    feed(-1);
    for (int z : r.dest_zones) feed(z);
    feed(-1);
    for (double v : {r.one_way_distance_mi.mean, r.one_way_distance_mi.sd, r.initial_soc.mean,
                     r.initial_soc.sd, r.work_fraction})
      feed(v);
    for (const auto& n : r.ev_names) feed_str(n);
    if (r.start_min) {
      feed_str("start_min");
      feed(r.start_min->mean);
      feed(r.start_min->sd);
    }
  }
  for (const auto& ev : c.ev_catalog) {
    feed_str(ev.name);
    feed(ev.battery_kwh);
    feed(ev.consumption_wh_per_mi);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

void compute_agent_densities(Scenario& scenario, double speed_mph, double buffer_m) {
  const RouteTable routes(scenario.graph);
  struct TripRoute {
    std::size_t agent;
    Path path;
    TimeWindow window;
  };
  std::vector<TripRoute> all;
  for (std::size_t i = 0; i < scenario.agents.size(); ++i) {
    for (const auto& t : scenario.agents[i].trips) {
      Path p = routes.path(scenario.graph.index_of(t.origin), scenario.graph.index_of(t.destination));
      const double duration = p.total_length_mi / speed_mph * 60.0;
      all.push_back({i, std::move(p), {t.start_time_min, t.start_time_min + duration}});
    }
  }
  std::vector<double> chargers_near(scenario.agents.size(), 0.0);
  std::vector<double> trips_near(scenario.agents.size(), 0.0);
  std::vector<double> length(scenario.agents.size(), 0.0);
  for (const auto& trip : all) {
    if (!(trip.path.total_length_mi > 0.0)) continue;
    std::vector<std::pair<Path, TimeWindow>> others;
    for (const auto& other : all)
      if (other.agent != trip.agent) others.emplace_back(other.path, other.window);
    const double L = trip.path.total_length_mi;
    chargers_near[trip.agent] += compute_cd(trip.path, scenario.chargers, scenario.graph, buffer_m) * L;
    trips_near[trip.agent] += compute_tcd(trip.path, trip.window, others, scenario.graph, buffer_m) * L;
    length[trip.agent] += L;
  }
  for (std::size_t i = 0; i < scenario.agents.size(); ++i) {
    auto& a = scenario.agents[i];
    a.cd = length[i] > 0.0 ? std::round(chargers_near[i]) / length[i] : 0.0;
    a.tcd = length[i] > 0.0 ? std::round(trips_near[i]) / length[i] : 0.0;
  }
}

Scenario generate_scenario(const ScenarioConfig& config, std::uint64_t seed) {
  validate(config);
  Scenario s;
  s.seed = seed;
  s.config_hash = hash_config(config);

  Rng graph_rng(derive_seed(seed, 1));
  RoadGraph grid = build_grid(config, graph_rng);
  const ZoneMap zones = grid_zones(grid, config);
  std::map<NodeId, int> zone_of;
  for (const auto& [z, ids] : zones)
    for (NodeId id : ids) zone_of[id] = z;

  Rng charger_rng(derive_seed(seed, 2));
  std::vector<ChargerPlacement> placements;
  for (const auto& n : grid.nodes()) {
    auto it = config.zone_charger_probability.find(zone_of[n.id]);
    const double p = it == config.zone_charger_probability.end()
                         ? config.default_charger_probability
                         : it->second;
    if (charger_rng.bernoulli(p)) {
      const ChargerId id = static_cast<ChargerId>(s.chargers.size() + 1);
      s.chargers.push_back(sample_charger(id, n.id, config, charger_rng));
      placements.push_back({n.id, id});
    }
  }
  s.graph = RoadGraph(grid.nodes(), grid.edges(), placements);

  Rng agent_rng(derive_seed(seed, 3));
  const auto counts = apportion(config.agent_count, config.regimes);
  const RouteTable routes(s.graph);
  AgentId next_id = 1;
  for (std::size_t r = 0; r < config.regimes.size(); ++r) {
    const auto& regime = config.regimes[r];
    std::vector<EVSpec> fleet;
    for (const auto& ev : config.ev_catalog)
      if (regime.ev_names.empty() ||
          std::find(regime.ev_names.begin(), regime.ev_names.end(), ev.name) != regime.ev_names.end())
        fleet.push_back(ev);
    for (int k = 0; k < counts[r]; ++k) {
      DriverAgent a;
      a.agent_id = next_id++;
      a.regime = static_cast<int>(r);
      a.ev = fleet[agent_rng.below(fleet.size())];
      a.soc = sample_initial_soc(agent_rng, regime.initial_soc.mean, regime.initial_soc.sd);
      a.soc_threshold = sample_truncated_normal(agent_rng, config.soc_threshold.mean,
                                                config.soc_threshold.sd, config.soc_threshold_lo,
                                                config.soc_threshold_hi);
      const TripPurpose purpose =
          agent_rng.bernoulli(regime.work_fraction) ? TripPurpose::Work : TripPurpose::Leisure;
      std::vector<std::string> labels;
      for (const auto& p : survey_purposes())
        if (reclassify_purpose(p) == purpose) labels.push_back(p);
      const std::string survey = labels[agent_rng.below(labels.size())];

      const double target = sample_truncated_normal(
          agent_rng, regime.one_way_distance_mi.mean,
          std::max(regime.one_way_distance_mi.sd, 1e-9), 0.5 * config.spacing_mi,
          std::numeric_limits<double>::infinity());
      NodeId origin = 0, dest = 0;
      for (int attempt = 0; attempt < 100; ++attempt) {
        const int oz = regime.origin_zones[agent_rng.below(regime.origin_zones.size())];
        const int dz = regime.dest_zones[agent_rng.below(regime.dest_zones.size())];
        std::tie(origin, dest) = select_od(s.graph, zones, oz, dz, target, agent_rng);
        if (origin != dest) break;
      }
      if (origin == dest)
        fail(ErrorKind::InvalidConfig, "regimes[" + std::to_string(r) + "]: cannot place a non-trivial trip");

      const NormalSpec& start = regime.start_min          ? *regime.start_min
                                : purpose == TripPurpose::Work ? config.work_start_min
                                                               : config.leisure_start_min;
      const double dwell = purpose == TripPurpose::Work ? config.work_dwell_min
                                                        : config.leisure_dwell_min;
      const double distance = routes.distance(s.graph.index_of(origin), s.graph.index_of(dest));
      Trip out;
      out.origin = origin;
      out.destination = dest;
      out.purpose = purpose;
      out.survey_purpose = survey;
      out.start_time_min = std::clamp(std::round(agent_rng.normal(start.mean, start.sd)), 0.0, 1380.0);
      out.planned_distance_mi = distance;
      a.trips.push_back(out);
      if (config.trips_per_agent == 2) {
        Trip back = out;
        std::swap(back.origin, back.destination);
        const double travel = distance / config.speed_mph * 60.0;
        back.start_time_min = std::min(1439.0, std::round(out.start_time_min + travel + dwell));
        a.trips.push_back(back);
      }
      s.agents.push_back(std::move(a));
    }
  }
  compute_agent_densities(s, config.speed_mph, config.buffer_m);
  return s;
}

}  // namespace evsim
