#include "evsim/environment.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace evsim {

int action_index(const Action& a) {
  if (a.is_proceed()) return 0;
  if (a.n < 10 || a.n > 100 || a.n % 10 != 0)
    fail(ErrorKind::InvalidArgument, "charge amount must be a multiple of 10 in [10, 100]");
  return 1 + a.slot * kChargeLevels + (a.n / 10 - 1);
}

Action decode_action(int index) {
  if (index < 0) fail(ErrorKind::InvalidArgument, "negative action index");
  if (index == 0) return Action::proceed();
  return Action::charge((index - 1) / kChargeLevels, ((index - 1) % kChargeLevels + 1) * 10);
}

void validate(const RewardConfig& c) {
  const auto positive = [](double v, const char* field) {
    if (!(v > 0.0) || !std::isfinite(v))
      fail(ErrorKind::InvalidConfig, std::string("reward.") + field + ": must be > 0");
  };
  positive(c.epsilon_u, "epsilon_u");
  positive(c.alpha, "alpha");
  positive(c.beta, "beta");
  positive(c.gamma_r, "gamma_r");
  positive(c.rho, "rho");
  positive(c.short_max_mi, "short_max_mi");
  positive(c.min_charge_urgency, "min_charge_urgency");
  if (!(c.mid_max_mi > c.short_max_mi))
    fail(ErrorKind::InvalidConfig, "reward.mid_max_mi: must exceed short_max_mi");
}

int distance_class(double total_trip_mi, const RewardConfig& c) {
  if (total_trip_mi < c.short_max_mi) return 1;
  if (total_trip_mi <= c.mid_max_mi) return 2;
  return 3;
}

RewardTerms reward_terms(const RewardContext& ctx, const RewardConfig& cfg) {
  if (ctx.distance_class < 1 || ctx.distance_class > 3)
    fail(ErrorKind::InvalidArgument, "distance class must be 1, 2 or 3");
  const double indicator = ctx.charged ? 1.0 : 0.0;
  RewardTerms t;
  t.d_soc = ctx.soc - ctx.threshold;
  if (ctx.charged) {
    const double urgency =
        cfg.epsilon_u * std::log(ctx.timing_charge_min * ctx.chance_charge * ctx.status_battery + 1.0);
    t.d_charge = std::max(cfg.min_charge_urgency, urgency);
  }
  const double base = cfg.alpha * std::log(1.0 + ctx.payment_gbp * indicator) +
                      cfg.beta * std::log(1.0 + ctx.t_travel_min + ctx.t_charge_min * indicator) + 1.0;
  t.d_cost = std::pow(base, static_cast<double>(ctx.n_charges) / ctx.distance_class);
  t.reward = cfg.gamma_r * t.d_soc / (t.d_charge * t.d_cost) + cfg.rho * ctx.status;
  if (!std::isfinite(t.reward))
    fail(ErrorKind::NonFiniteReward, "reward evaluated to " + std::to_string(t.reward));
  return t;
}

double compute_reward(const RewardContext& ctx, const RewardConfig& cfg) {
  return reward_terms(ctx, cfg).reward;
}

double charging_time(const EVSpec& ev, const Charger& charger, int n_percent) {
  return (n_percent / 100.0 * ev.battery_kwh) / charger.speed_kw * 60.0;
}

double charging_payment(const Charger& c, double energy_kwh, double total_dwell_h) {
  if (energy_kwh < 0.0 || total_dwell_h < 0.0)
    fail(ErrorKind::InvalidArgument, "payment inputs must be >= 0");
  double pay = energy_kwh * c.price_gbp_per_kwh;
  if (total_dwell_h > 0.0) {
    pay += c.initial_parking_fee_gbp;
    pay += c.additional_parking_fee_gbp_per_h * std::max(0.0, std::ceil(total_dwell_h) - 1.0);
  }
  return pay;
}

void validate(const EnvConfig& c) {
  if (!(c.speed_mph > 0.0)) fail(ErrorKind::InvalidConfig, "env.speed_mph: must be > 0");
  if (c.k_max < 0) fail(ErrorKind::InvalidConfig, "env.k_max: must be >= 0");
  if (c.days < 1) fail(ErrorKind::InvalidConfig, "env.days: must be >= 1");
  if (c.max_decisions_per_trip < 1)
    fail(ErrorKind::InvalidConfig, "env.max_decisions_per_trip: must be >= 1");
  if (!(c.max_trip_distance_mi > 0.0))
    fail(ErrorKind::InvalidConfig, "env.max_trip_distance_mi: must be > 0");
  if (c.max_trips < 1) fail(ErrorKind::InvalidConfig, "env.max_trips: must be >= 1");
  if (!(c.epsilon_tcd > 0.0)) fail(ErrorKind::InvalidConfig, "env.epsilon_tcd: must be > 0");
  validate(c.reward);
}

Eigen::VectorXd EnvState::normalized(const EnvConfig& c) const {
  Eigen::VectorXd s(5);
  s << soc, std::min(1.0, dist_mi / c.max_trip_distance_mi), time_min / 1440.0, stations,
      std::min(1.0, static_cast<double>(trips_remaining) / c.max_trips);
  return s;
}

bool UsagePattern::empty() const {
  for (const auto& [_, list] : sessions)
    if (!list.empty()) return false;
  return true;
}

int ChargerRuntime::busy_ports() const {
  int n = 0;
  for (const auto& p : occupancy) n += p.has_value();
  return n;
}

World::World(const Scenario& scenario, const RouteTable& routes, EnvConfig config,
             std::vector<AgentId> live_agents, const UsagePattern* background)
    : scenario_(scenario), routes_(routes), config_(std::move(config)) {
  validate(config_);
  for (const auto& c : scenario_.chargers) {
    ChargerRuntime r;
    r.charger_id = c.charger_id;
    r.ports = c.ports;
    r.occupancy.resize(static_cast<std::size_t>(std::max(1, c.ports)));
    runtime_.emplace(c.charger_id, std::move(r));
    charger_specs_.emplace(c.charger_id, &c);
  }
  std::sort(live_agents.begin(), live_agents.end());
  for (AgentId id : live_agents) {
    const DriverAgent& spec = scenario_.agent(id);
    if (spec.trips.empty()) fail(ErrorKind::InvalidArgument, "agent " + std::to_string(id) + " has no trips");
    AgentRuntime a;
    a.spec = &spec;
    a.soc = spec.soc;
    a.ledger.agent_id = id;
    a.ledger.soc_start = spec.soc;
    a.ledger.trips_total = static_cast<int>(spec.trips.size());
    auto [it, inserted] = agents_.emplace(id, std::move(a));
    if (!inserted) fail(ErrorKind::InvalidArgument, "agent listed twice");
    activate_trip(it->second, spec.trips.front().start_time_min);
  }
  if (background) {
    for (const auto& [cid, list] : background->sessions) {
      if (!runtime_.count(cid)) continue;
      for (const auto& s : list) {
        if (agents_.count(s.agent_id) || s.background) continue;
        push(s.start_min, EventClass::Arrive, s.agent_id, cid, -1, s.end_min - s.start_min, true);
      }
    }
  }
}

World::AgentRuntime& World::runtime(AgentId id) {
  auto it = agents_.find(id);
  if (it == agents_.end()) fail(ErrorKind::InvalidArgument, "agent " + std::to_string(id) + " is not live");
  return it->second;
}

const World::AgentRuntime& World::runtime(AgentId id) const {
  auto it = agents_.find(id);
  if (it == agents_.end()) fail(ErrorKind::InvalidArgument, "agent " + std::to_string(id) + " is not live");
  return it->second;
}

void World::push(double time, EventClass cls, AgentId agent, ChargerId charger, int port,
                 double duration, bool background) {
  events_.push({time, cls, seq_++, agent, charger, port, duration, background});
}

void World::activate_trip(AgentRuntime& a, double time) {
  const Trip& trip = a.spec->trips[a.trip];
  a.node = scenario_.graph.index_of(trip.origin);
  a.trip_started_min = std::max(time, trip.start_time_min);
  a.moved_this_trip = false;
  a.decisions_this_trip = 0;
  if (a.trip == 0) soc_obs_.push_back({trip.origin, a.soc});
  push(a.trip_started_min, EventClass::Decision, a.ledger.agent_id);
}

std::optional<double> World::drive_to(AgentRuntime& a, std::size_t target, double& fail_min,
                                      bool record) {
  const double rate = a.spec->ev.soc_per_mile();
  double minutes = 0.0;
  while (a.node != target) {
    const std::size_t next = routes_.next_hop(a.node, target);
    double length = 0.0;
    for (const auto& arc : scenario_.graph.arcs(a.node))
      if (arc.to == next) {
        length = arc.length_mi;
        break;
      }
    const double need = length * rate;
    if (need > a.soc) {
      minutes += (a.soc / rate) / config_.speed_mph * 60.0;
      a.ledger.energy_used += a.soc;
      a.soc = 0.0;
      fail_min = now_ + minutes;
      return std::nullopt;
    }
    a.soc -= need;
    a.ledger.energy_used += need;
    minutes += length / config_.speed_mph * 60.0;
    a.node = next;
    a.moved_this_trip = true;
    if (record) soc_obs_.push_back({scenario_.graph.id_of(a.node), a.soc});
  }
  return minutes;
}

std::vector<std::pair<ChargerId, double>> World::reachable(const AgentRuntime& a) const {
  const double range = a.soc * a.spec->ev.full_range_mi();
  std::vector<std::pair<ChargerId, double>> out;
  for (const auto& c : scenario_.chargers) {
    const double d = routes_.distance(a.node, scenario_.graph.index_of(c.node_id));
    if (d <= range) out.emplace_back(c.charger_id, d);
  }
  std::sort(out.begin(), out.end(), [](const auto& l, const auto& r) {
    return l.second != r.second ? l.second < r.second : l.first < r.first;
  });
  return out;
}

double World::chance_charge(const AgentRuntime& a) const {
  return a.spec->cd / std::max(a.spec->tcd, config_.epsilon_tcd);
}

EnvState World::observe(AgentId id) const {
  const AgentRuntime& a = runtime(id);
  if (a.done) fail(ErrorKind::NoActiveTrip, "agent " + std::to_string(id) + " has finished");
  EnvState s;
  s.soc = a.soc;
  s.dist_mi = routes_.distance(a.node, scenario_.graph.index_of(a.spec->trips[a.trip].destination));
  s.time_min = now_;
  const auto r = reachable(a);
  int available = 0;
  for (const auto& [cid, _] : r) available += runtime_.at(cid).available();
  s.stations = r.empty() ? 0.0 : static_cast<double>(available) / static_cast<double>(r.size());
  s.trips_remaining = static_cast<int>(a.spec->trips.size() - a.trip);
  return s;
}

LegalActions World::legal_actions(AgentId id) const {
  const AgentRuntime& a = runtime(id);
  if (a.done) fail(ErrorKind::NoActiveTrip, "agent " + std::to_string(id) + " has finished");
  LegalActions out;
  out.mask.assign(static_cast<std::size_t>(head_size(config_.k_max)), false);
  out.mask[0] = true;
  if (!a.moved_this_trip) return out;  // no charging before leaving the origin
  for (const auto& [cid, _] : reachable(a)) {
    if (static_cast<int>(out.targets.size()) == config_.k_max) break;
    if (config_.strict_available_only && !runtime_.at(cid).available()) continue;
    out.targets.push_back(cid);
  }
  for (std::size_t slot = 0; slot < out.targets.size(); ++slot)
    for (int n = 10; n <= 100; n += 10)
      if (a.soc + n / 100.0 <= 1.0 + 1e-12)
        out.mask[action_index(Action::charge(static_cast<int>(slot), n))] = true;
  return out;
}

void World::act(AgentId id, int index) {
  AgentRuntime& a = runtime(id);
  if (!a.awaiting_action)
    fail(ErrorKind::IllegalAction, "agent " + std::to_string(id) + " is not at a decision point");
  const LegalActions legal = legal_actions(id);
  if (index < 0 || index >= static_cast<int>(legal.mask.size()) || !legal.mask[index])
    fail(ErrorKind::IllegalAction, "action " + std::to_string(index) + " for agent " + std::to_string(id));

  Pending p;
  p.before = observe(id);
  p.action = index;
  p.ctx.threshold = a.spec->soc_threshold;
  p.ctx.status_battery = a.spec->soc;
  p.ctx.distance_class = distance_class(a.spec->total_distance_mi(), config_.reward);
  p.ctx.n_charges = a.n_charges;
  a.awaiting_action = false;
  ++a.decisions_this_trip;
  ++a.ledger.decisions;
  a.ledger.actions.push_back(index);

  const Action action = decode_action(index);
  const std::size_t dest = scenario_.graph.index_of(a.spec->trips[a.trip].destination);
  double fail_min = 0.0;
  if (action.is_proceed()) {
    const auto minutes = drive_to(a, routes_.next_hop(a.node, dest), fail_min, true);
    p.ctx.soc = a.soc;
    if (!minutes) {
      p.failed = true;
      a.pending = p;
      push(fail_min, EventClass::Decision, id);
      return;
    }
    if (a.node == dest) p.ctx.status = 1;
    a.pending = p;
    const double t = now_ + *minutes;
    if (p.ctx.status == 1) {
      ++a.ledger.trips_completed;
      if (a.trip + 1 < a.spec->trips.size()) {
        ++a.trip;
        activate_trip(a, t);
        return;
      }
    }
    push(t, EventClass::Decision, id);
    return;
  }

  const ChargerId cid = legal.targets[static_cast<std::size_t>(action.slot)];
  const Charger& spec = *charger_specs_.at(cid);
  const auto minutes = drive_to(a, scenario_.graph.index_of(spec.node_id), fail_min, true);
  p.ctx.soc = a.soc;
  if (!minutes) {
    p.failed = true;
    a.pending = p;
    push(fail_min, EventClass::Decision, id);
    return;
  }
  p.charge = true;
  p.n = action.n;
  p.detour_minutes = *minutes;
  p.charge_minutes = charging_time(a.spec->ev, spec, action.n);
  a.pending = p;
  push(now_ + *minutes, EventClass::Arrive, id, cid, -1, p.charge_minutes, false);
}

void World::start_session(ChargerRuntime& c, int port, const ChargerRuntime::Waiting& w, double time) {
  if (c.occupancy[static_cast<std::size_t>(port)])
    fail(ErrorKind::InternalInconsistency, "port already busy");
  c.occupancy[static_cast<std::size_t>(port)] =
      ChargerRuntime::Busy{w.agent, w.arrive_min, time, time + w.duration_min, w.background};
  if (!w.background) {
    AgentRuntime& a = runtime(w.agent);
    a.pending->start_min = time;
  }
  push(time + w.duration_min, EventClass::Release, w.agent, c.charger_id, port, 0.0, w.background);
}

void World::arrive_at_charger(const Event& e) {
  ChargerRuntime& c = runtime_.at(e.charger);
  ChargerRuntime::Waiting w{e.agent, e.duration, now_, e.background};
  if (!e.background) runtime(e.agent).pending->arrive_min = now_;
  if (c.queue.empty()) {
    for (std::size_t port = 0; port < c.occupancy.size(); ++port) {
      if (!c.occupancy[port]) {
        start_session(c, static_cast<int>(port), w, now_);
        return;
      }
    }
  }
  c.queue.push_back(w);
}

void World::release_port(const Event& e) {
  ChargerRuntime& c = runtime_.at(e.charger);
  auto& slot = c.occupancy[static_cast<std::size_t>(e.port)];
  if (!slot || slot->agent != e.agent || slot->background != e.background)
    fail(ErrorKind::InternalInconsistency, "release of a port not held by the agent");
  const ChargingSession session{c.charger_id, e.agent,
                                slot->arrive_min,
                                slot->start_min, now_, e.port, e.background};
  sessions_.push_back(session);
  slot.reset();

  if (!e.background) {
    AgentRuntime& a = runtime(e.agent);
    Pending& p = *a.pending;
    const Charger& spec = *charger_specs_.at(c.charger_id);
    a.soc += p.n / 100.0;
    a.ledger.energy_charged += p.n / 100.0;
    ++a.n_charges;
    p.ctx.charged = true;
    p.ctx.soc = a.soc;
    p.ctx.timing_charge_min = p.start_min - a.trip_started_min;
    p.ctx.chance_charge = chance_charge(a);
    p.ctx.payment_gbp = charging_payment(spec, p.n / 100.0 * a.spec->ev.battery_kwh, p.charge_minutes / 60.0);
    p.ctx.t_travel_min = p.detour_minutes;
    p.ctx.t_charge_min = (p.start_min - p.arrive_min) + p.charge_minutes;
    p.ctx.n_charges = a.n_charges;
    const std::size_t dest = scenario_.graph.index_of(a.spec->trips[a.trip].destination);
    if (a.node == dest) {
      p.ctx.status = 1;
      ++a.ledger.trips_completed;
      if (a.trip + 1 < a.spec->trips.size()) {
        ++a.trip;
        activate_trip(a, now_);
      } else {
        push(now_, EventClass::Decision, e.agent);
      }
    } else {
      push(now_, EventClass::Decision, e.agent);
    }
  }

  if (!c.queue.empty()) {
    const auto next = c.queue.front();
    c.queue.pop_front();
    start_session(c, e.port, next, now_);
  }
}

std::optional<Turn> World::resolve(AgentRuntime& a) {
  const AgentId id = a.ledger.agent_id;
  const std::size_t total = a.spec->trips.size();
  const bool all_done = a.ledger.trips_completed == static_cast<int>(total);

  if (!a.pending) {
    if (now_ >= config_.horizon_min()) {
      a.done = true;
      a.ledger.failed = true;
      return Turn{id, std::nullopt, -1, false};
    }
    a.awaiting_action = true;
    return Turn{id, std::nullopt, -1, true};
  }

  Pending p = *a.pending;
  a.pending.reset();
  Status status = static_cast<Status>(p.ctx.status);
  bool done = false;
  if (p.failed) {
    status = Status::Failed;
    done = true;
  } else if (all_done) {
    done = true;
  } else if (now_ >= config_.horizon_min()) {
    if (status != Status::Arrived) status = Status::Failed;
    done = true;
  } else if (status != Status::Arrived && a.decisions_this_trip >= config_.max_decisions_per_trip) {
    status = Status::Failed;
    done = true;
  }
  p.ctx.status = static_cast<int>(status);

  StepOutcome out;
  out.terms = reward_terms(p.ctx, config_.reward);
  out.reward = out.terms.reward;
  out.status = status;
  out.done = done;
  a.ledger.reward_total += out.reward;
  if (done) {
    a.done = true;
    a.ledger.finished = all_done;
    a.ledger.failed = !all_done;
    out.next_state.soc = a.soc;
    out.next_state.time_min = now_;
    out.next_state.trips_remaining = static_cast<int>(total) - a.ledger.trips_completed;
    if (!all_done)
      out.next_state.dist_mi =
          routes_.distance(a.node, scenario_.graph.index_of(a.spec->trips[a.trip].destination));
  } else {
    out.next_state = observe(id);
    a.awaiting_action = true;
  }
  trace_.push_back({now_, id, scenario_.graph.id_of(a.node), a.soc, p.action, out.reward,
                    static_cast<int>(status)});
  return Turn{id, out, p.action, !done};
}

std::optional<Turn> World::next_turn() {
  while (!events_.empty()) {
    const Event e = events_.top();
    events_.pop();
    now_ = e.time;
    switch (e.cls) {
      case EventClass::Release:
        release_port(e);
        break;
      case EventClass::Arrive:
        arrive_at_charger(e);
        break;
      case EventClass::Decision: {
        AgentRuntime& a = runtime(e.agent);
        if (a.done) break;
        return resolve(a);
      }
    }
  }
  return std::nullopt;
}

bool World::ready(AgentId id) {
  if (agents_.size() != 1) fail(ErrorKind::InvalidArgument, "ready() needs a single live agent");
  AgentRuntime& a = runtime(id);
  while (!a.awaiting_action && !a.done) {
    if (!next_turn()) break;
  }
  return a.awaiting_action;
}

StepOutcome World::step(AgentId id, int index) {
  if (agents_.size() != 1) fail(ErrorKind::InvalidArgument, "step() needs a single live agent");
  act(id, index);
  while (auto turn = next_turn()) {
    if (turn->agent == id && turn->previous) return *turn->previous;
  }
  fail(ErrorKind::InternalInconsistency, "action never resolved");
}

NodeId World::position(AgentId id) const { return scenario_.graph.id_of(runtime(id).node); }

double World::soc(AgentId id) const { return runtime(id).soc; }

const AgentLedger& World::ledger(AgentId id) const { return runtime(id).ledger; }

std::vector<AgentId> World::agents() const {
  std::vector<AgentId> out;
  for (const auto& [id, _] : agents_) out.push_back(id);
  return out;
}

UsagePattern World::usage(int episode) const {
  UsagePattern u;
  u.episode = episode;
  for (const auto& s : sessions_)
    if (!s.background) u.sessions[s.charger_id].push_back(s);
  for (auto& [_, list] : u.sessions)
    std::sort(list.begin(), list.end(), [](const auto& l, const auto& r) {
      return l.start_min != r.start_min ? l.start_min < r.start_min : l.agent_id < r.agent_id;
    });
  return u;
}

void World::check_invariants() const {
  for (const auto& [cid, c] : runtime_) {
    if (c.busy_ports() > c.ports) fail(ErrorKind::InternalInconsistency, "charger over capacity");
    if (!c.queue.empty() && c.busy_ports() < c.ports)
      fail(ErrorKind::InternalInconsistency, "agent queued while a port is free");
  }
  for (const auto& [id, a] : agents_) {
    if (a.soc < 0.0 || a.soc > 1.0 + 1e-12)
      fail(ErrorKind::InternalInconsistency, "soc out of bounds for agent " + std::to_string(id));
    const double expected = a.ledger.soc_start - a.ledger.energy_used + a.ledger.energy_charged;
    if (std::abs(expected - a.soc) > 1e-9)
      fail(ErrorKind::InternalInconsistency, "energy balance broken for agent " + std::to_string(id));
  }
}

UsagePattern fold_sessions(const std::vector<ChargingSession>& sessions,
                           const std::vector<Charger>& chargers, int episode) {
  std::map<ChargerId, int> ports;
  for (const auto& c : chargers) ports[c.charger_id] = c.ports;
  UsagePattern u;
  u.episode = episode;
  std::map<ChargerId, std::vector<ChargingSession>> by_charger;
  for (const auto& s : sessions) {
    if (s.background) continue;
    if (!ports.count(s.charger_id))
      fail(ErrorKind::InvalidArgument, "session on unknown charger " + std::to_string(s.charger_id));
    by_charger[s.charger_id].push_back(s);
  }
  for (auto& [cid, list] : by_charger) {
    std::sort(list.begin(), list.end(), [](const auto& l, const auto& r) {
      if (l.start_min != r.start_min) return l.start_min < r.start_min;
      if (l.end_min != r.end_min) return l.end_min < r.end_min;
      return l.agent_id < r.agent_id;
    });
    std::vector<double> free_at(static_cast<std::size_t>(ports[cid]), -1e300);
    for (auto& s : list) {
      auto it = std::find_if(free_at.begin(), free_at.end(), [&](double t) { return t <= s.start_min; });
      if (it == free_at.end())
        fail(ErrorKind::PortOverflow, "charger " + std::to_string(cid) + " at minute " +
                                          std::to_string(s.start_min));
      s.port = static_cast<int>(it - free_at.begin());
      *it = s.end_min;
    }
    u.sessions[cid] = std::move(list);
  }
  return u;
}

}  // namespace evsim
