#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "evsim/environment.hpp"
#include "evsim/road_network.hpp"
#include "evsim/scenario.hpp"

namespace fixtures {

using namespace evsim;

inline EVSpec model_y() { return {"Tesla Model Y", 57.5, 267.0}; }

/// Nodes 0..n-1 on the x axis, `spacing_mi` apart, each joined to its neighbour.
inline RoadGraph line_graph(int n, double spacing_mi, const std::vector<NodeId>& charger_nodes = {}) {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) nodes.push_back({i, i * spacing_mi * kKmPerMile, 0.0});
  for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, spacing_mi});
  std::vector<ChargerPlacement> placed;
  for (std::size_t k = 0; k < charger_nodes.size(); ++k)
    placed.push_back({charger_nodes[k], static_cast<ChargerId>(100 + k)});
  return RoadGraph(nodes, edges, placed);
}

inline Charger charger(ChargerId id, NodeId node, int ports = 1, double kw = 50.0) {
  Charger c;
  c.charger_id = id;
  c.node_id = node;
  c.ports = ports;
  c.speed_kw = kw;
  c.price_gbp_per_kwh = 0.3;
  c.initial_parking_fee_gbp = 0.5;
  c.additional_parking_fee_gbp_per_h = 2.0;
  return c;
}

inline DriverAgent agent(AgentId id, double soc, std::vector<Trip> trips, EVSpec ev = model_y()) {
  DriverAgent a;
  a.agent_id = id;
  a.ev = std::move(ev);
  a.soc = soc;
  a.soc_threshold = 0.2;
  a.trips = std::move(trips);
  a.cd = 0.5;
  a.tcd = 0.1;
  return a;
}

inline Trip trip(NodeId o, NodeId d, double start_min, TripPurpose p = TripPurpose::Work) {
  Trip t;
  t.origin = o;
  t.destination = d;
  t.start_time_min = start_min;
  t.purpose = p;
  return t;
}

/// Line world with chargers at the listed nodes (ids 100, 101, ...).
inline Scenario line_scenario(int n, double spacing_mi, const std::vector<NodeId>& charger_nodes,
                              std::vector<DriverAgent> agents, int ports = 1, double kw = 50.0) {
  Scenario s;
  s.graph = line_graph(n, spacing_mi, charger_nodes);
  for (std::size_t k = 0; k < charger_nodes.size(); ++k)
    s.chargers.push_back(charger(static_cast<ChargerId>(100 + k), charger_nodes[k], ports, kw));
  s.agents = std::move(agents);
  return s;
}

/// Connected random graph on `n` nodes with integer edge lengths in [1, max_len].
inline RoadGraph random_graph(Rng& rng, int n, double extra_edge_p, int max_len = 5) {
  std::vector<Node> nodes;
  for (int i = 0; i < n; ++i) nodes.push_back({i, rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)});
  std::vector<Edge> edges;
  std::vector<std::vector<bool>> has(static_cast<std::size_t>(n), std::vector<bool>(static_cast<std::size_t>(n), false));
  const auto add = [&](int a, int b) {
    if (a == b || has[a][b]) return;
    has[a][b] = has[b][a] = true;
    edges.push_back({a, b, static_cast<double>(1 + rng.below(static_cast<std::uint64_t>(max_len)))});
  };
  for (int i = 1; i < n; ++i) add(i, static_cast<int>(rng.below(static_cast<std::uint64_t>(i))));
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (rng.bernoulli(extra_edge_p)) add(a, b);
  return RoadGraph(nodes, edges);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("evsim-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::filesystem::path source_path(const std::string& relative) {
  return std::filesystem::path(EVSIM_SOURCE_DIR) / relative;
}

}  // namespace fixtures
