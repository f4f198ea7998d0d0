#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "evsim/environment.hpp"

namespace checks {

using namespace evsim;

struct ConservationReport {
  long steps = 0;
  long energy_violations = 0;
  long soc_violations = 0;
  long occupancy_violations = 0;
  long fifo_violations = 0;
  double worst_energy_gap = 0.0;
  std::string first_problem;

  bool ok() const {
    return energy_violations == 0 && soc_violations == 0 && occupancy_violations == 0 && fifo_violations == 0;
  }
  void flag(long& counter, const std::string& what) {
    ++counter;
    if (first_problem.empty()) first_problem = what;
  }
};

inline ScenarioConfig small_world_config(int agents) {
  ScenarioConfig c = default_scenario_config();
  c.grid_nx = 10;
  c.grid_ny = 8;
  c.agent_count = agents;
  return c;
}

inline int random_legal(const ActionMask& mask, Rng& rng, double proceed_bias) {
  if (rng.bernoulli(proceed_bias)) return 0;
  std::vector<int> legal;
  for (std::size_t a = 0; a < mask.size(); ++a)
    if (mask[a]) legal.push_back(static_cast<int>(a));
  return legal[rng.below(legal.size())];
}

inline double edge_length(const RoadGraph& g, NodeId a, NodeId b) {
  for (const auto& arc : g.arcs(g.index_of(a)))
    if (g.id_of(arc.to) == b) return arc.length_mi;
  return -1.0;
}

/// Sessions on one charger never exceed its ports, and anyone who waited
/// started the instant another session on that charger ended.
inline void check_sessions(const World& w, ConservationReport& r) {
  std::map<ChargerId, std::vector<ChargingSession>> by;
  for (const auto& s : w.sessions()) by[s.charger_id].push_back(s);
  for (const auto& [cid, list] : by) {
    const int ports = w.scenario().charger(cid).ports;
    for (const auto& s : list) {
      int overlap = 0;
      for (const auto& o : list) overlap += o.start_min <= s.start_min && s.start_min < o.end_min;
      if (overlap > ports) r.flag(r.occupancy_violations, "charger " + std::to_string(cid) + " over capacity");
      if (s.start_min > s.arrive_min) {
        const bool freed = std::any_of(list.begin(), list.end(), [&](const ChargingSession& o) {
          return &o != &s && o.end_min == s.start_min;
        });
        if (!freed) r.flag(r.fifo_violations, "queued session started without a release");
      }
    }
  }
}

/// Single-agent days with random legal actions. Every step's SOC change is
/// recomputed from edge lengths and route distances.
inline void single_agent_energy(const Scenario& s, const RouteTable& routes, Rng& rng, long target_steps,
                                ConservationReport& r) {
  EnvConfig cfg;
  for (const auto& agent : s.agents) {
    if (r.steps >= target_steps) return;
    World w(s, routes, cfg, {agent.agent_id});
    const double rate = agent.ev.soc_per_mile();
    while (w.ready(agent.agent_id)) {
      const NodeId before = w.position(agent.agent_id);
      const double soc_before = w.soc(agent.agent_id);
      const std::size_t trip_before = static_cast<std::size_t>(w.ledger(agent.agent_id).trips_completed);
      const LegalActions legal = w.legal_actions(agent.agent_id);
      const int a = random_legal(legal.mask, rng, 0.7);
      const Action act = decode_action(a);
      const StepOutcome out = w.step(agent.agent_id, a);
      ++r.steps;
      const double soc_after = w.soc(agent.agent_id);
      if (soc_after < 0.0 || soc_after > 1.0 + 1e-12) r.flag(r.soc_violations, "soc out of [0, 1]");

      double expected;
      if (out.status == Status::Failed && soc_after == 0.0) {
        expected = 0.0;
      } else if (act.is_proceed()) {
        const Trip& trip = agent.trips[trip_before];
        const Path p = shortest_path(s.graph, before, trip.destination);
        expected = soc_before - edge_length(s.graph, before, p.nodes.at(1)) * rate;
      } else {
        const Charger& c = s.charger(legal.targets[static_cast<std::size_t>(act.slot)]);
        expected = soc_before - shortest_path(s.graph, before, c.node_id).total_length_mi * rate + act.n / 100.0;
      }
      const double gap = std::abs(expected - soc_after);
      r.worst_energy_gap = std::max(r.worst_energy_gap, gap);
      if (gap > 1e-9) r.flag(r.energy_violations, "step energy mismatch at agent " + std::to_string(agent.agent_id));
      w.check_invariants();
      if (r.steps >= target_steps) break;
    }
    const AgentLedger& l = w.ledger(agent.agent_id);
    if (std::abs(l.soc_start - l.energy_used + l.energy_charged - w.soc(agent.agent_id)) > 1e-9)
      r.flag(r.energy_violations, "day energy balance");
  }
}

/// Shared worlds with every agent live: occupancy and FIFO checks after every turn.
inline void shared_world_occupancy(const Scenario& s, const RouteTable& routes, Rng& rng, long target_steps,
                                   ConservationReport& r) {
  EnvConfig cfg;
  std::vector<AgentId> ids;
  for (const auto& a : s.agents) ids.push_back(a.agent_id);
  World w(s, routes, cfg, ids);
  while (auto turn = w.next_turn()) {
    if (turn->previous) ++r.steps;
    for (const auto& [cid, c] : w.chargers()) {
      if (c.busy_ports() > c.ports) r.flag(r.occupancy_violations, "busy ports exceed ports");
      if (!c.queue.empty() && c.busy_ports() < c.ports) r.flag(r.fifo_violations, "queue while a port is free");
    }
    for (AgentId id : ids) {
      const double soc = w.soc(id);
      if (soc < 0.0 || soc > 1.0 + 1e-12) r.flag(r.soc_violations, "soc out of [0, 1]");
    }
    if (turn->needs_action) w.act(turn->agent, random_legal(w.legal_actions(turn->agent).mask, rng, 0.6));
    if (r.steps >= target_steps) break;
  }
  w.check_invariants();
  check_sessions(w, r);
}

inline ConservationReport environment_conservation(long steps, std::uint64_t seed) {
  ConservationReport r;
  for (std::uint64_t k = 0; r.steps < steps; ++k) {
    const Scenario s = generate_scenario(small_world_config(20), derive_seed(seed, k));
    const RouteTable routes(s.graph);
    Rng rng(derive_seed(seed, k, 1));
    const long half = r.steps + (steps - r.steps + 1) / 2;
    single_agent_energy(s, routes, rng, std::max(half, r.steps + 1), r);
    shared_world_occupancy(s, routes, rng, steps, r);
  }
  return r;
}

}  // namespace checks
