#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "evsim/rl_core.hpp"
#include "evsim/scenario.hpp"

namespace evsim {

inline constexpr int kChargeLevels = 10;  // n in {10, 20, ..., 100}

constexpr int head_size(int k_max) { return 1 + kChargeLevels * k_max; }

/// Decoded head entry: slot < 0 is proceed, otherwise the k-th nearest
/// charger with amount n percent.
struct Action {
  int slot = -1;
  int n = 0;

  bool is_proceed() const { return slot < 0; }
  static Action proceed() { return {}; }
  static Action charge(int slot, int n) { return {slot, n}; }
};

int action_index(const Action& a);
Action decode_action(int index);

struct RewardConfig {
  double epsilon_u = 1.0;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma_r = 1.0;
  double rho = 20.0;
  /// Distance-class upper bounds for m = 1 and m = 2 (miles).
  double short_max_mi = 15.0;
  double mid_max_mi = 25.0;
  /// Lower bound on the charging-urgency term. The raw term reaches zero for a
  /// charge at the very start of a trip; at 1 a charging step never scores
  /// above a non-charging step with the same SOC.
  double min_charge_urgency = 1.0;
};

void validate(const RewardConfig& config);

int distance_class(double total_trip_mi, const RewardConfig& config);

struct RewardContext {
  double soc = 0.0;
  double threshold = 0.2;
  bool charged = false;
  double timing_charge_min = 0.0;
  double chance_charge = 0.0;
  double status_battery = 0.0;
  double payment_gbp = 0.0;
  double t_travel_min = 0.0;
  double t_charge_min = 0.0;
  int n_charges = 0;
  int distance_class = 1;
  int status = 0;
};

struct RewardTerms {
  double d_soc = 0.0;
  double d_charge = 1.0;
  double d_cost = 1.0;
  double reward = 0.0;
};

RewardTerms reward_terms(const RewardContext& ctx, const RewardConfig& config);
double compute_reward(const RewardContext& ctx, const RewardConfig& config);

double charging_time(const EVSpec& ev, const Charger& charger, int n_percent);
double charging_payment(const Charger& charger, double energy_kwh, double total_dwell_h);

struct EnvConfig {
  double speed_mph = 40.0;
  int k_max = 5;
  int days = 1;
  int max_decisions_per_trip = 200;
  double max_trip_distance_mi = 60.0;
  int max_trips = 2;
  /// Restricts charge targets to currently available chargers.
  bool strict_available_only = false;
  /// Floor on TCD when forming chance_charge = CD / TCD.
  double epsilon_tcd = 0.01;
  RewardConfig reward;

  double horizon_min() const { return 1440.0 * days; }
};

void validate(const EnvConfig& config);

struct EnvState {
  double soc = 0.0;
  double dist_mi = 0.0;
  double time_min = 0.0;
  double stations = 0.0;
  int trips_remaining = 0;

  Eigen::VectorXd normalized(const EnvConfig& config) const;
};

struct LegalActions {
  /// Charger for each head slot, nearest first.
  std::vector<ChargerId> targets;
  ActionMask mask;
};

enum class Status { Failed = -1, Continuing = 0, Arrived = 1 };

struct StepOutcome {
  EnvState next_state;
  double reward = 0.0;
  Status status = Status::Continuing;
  bool done = false;
  RewardTerms terms;
};

struct ChargingSession {
  ChargerId charger_id = 0;
  AgentId agent_id = 0;
  double arrive_min = 0.0;
  double start_min = 0.0;
  double end_min = 0.0;
  int port = 0;
  bool background = false;
};

/// Busy windows per charger produced by one simulated day.
struct UsagePattern {
  int episode = -1;
  std::map<ChargerId, std::vector<ChargingSession>> sessions;

  bool empty() const;
};

struct ChargerRuntime {
  struct Waiting {
    AgentId agent = 0;
    double duration_min = 0.0;
    double arrive_min = 0.0;
    bool background = false;
  };
  struct Busy {
    AgentId agent = 0;
    double arrive_min = 0.0;
    double start_min = 0.0;
    double release_min = 0.0;
    bool background = false;
  };

  ChargerId charger_id = 0;
  int ports = 1;
  std::vector<std::optional<Busy>> occupancy;
  std::deque<Waiting> queue;

  int busy_ports() const;
  bool available() const { return busy_ports() < ports && queue.empty(); }
};

struct TraceEvent {
  double time_min = 0.0;
  AgentId agent_id = 0;
  NodeId node = 0;
  double soc = 0.0;
  int action = 0;
  double reward = 0.0;
  int status = 0;
};

struct SocObservation {
  NodeId node = 0;
  double soc = 0.0;
};

/// Per-agent bookkeeping kept for reporting and invariant checks.
struct AgentLedger {
  AgentId agent_id = 0;
  double soc_start = 0.0;
  double energy_used = 0.0;      // SOC fraction consumed by driving
  double energy_charged = 0.0;   // SOC fraction added by charging
  int trips_total = 0;
  int trips_completed = 0;
  bool failed = false;
  bool finished = false;
  double reward_total = 0.0;
  int decisions = 0;
  std::vector<int> actions;
};

/// A decision point reported by the event loop. `previous` carries the
/// resolved outcome of the agent's last action, if any; `needs_action` is
/// false when the agent has left the simulation.
struct Turn {
  AgentId agent = 0;
  std::optional<StepOutcome> previous;
  int previous_action = -1;
  bool needs_action = false;
};

/// Event-driven simulated day. Agents move node to node, detour to chargers,
/// queue FIFO for ports and are rewarded when each action resolves. Background
/// sessions replay a usage pattern as extra port demand.
class World {
 public:
  World(const Scenario& scenario, const RouteTable& routes, EnvConfig config,
        std::vector<AgentId> live_agents, const UsagePattern* background = nullptr);

  /// Runs events until some agent reaches a decision or leaves; nullopt
  /// when the simulation is over.
  std::optional<Turn> next_turn();

  EnvState observe(AgentId agent) const;
  LegalActions legal_actions(AgentId agent) const;
  /// Commits `action_index` for an agent that is at its decision point.
  void act(AgentId agent, int action_index);

  /// Single-agent convenience: commit the action and run until its outcome
  /// resolves. Requires the agent to be the only live agent.
  StepOutcome step(AgentId agent, int action_index);
  /// Runs until `agent` first needs a decision (or leaves). Single-agent only.
  bool ready(AgentId agent);

  double now() const { return now_; }
  const EnvConfig& config() const { return config_; }
  const Scenario& scenario() const { return scenario_; }
  NodeId position(AgentId agent) const;
  double soc(AgentId agent) const;
  const AgentLedger& ledger(AgentId agent) const;
  std::vector<AgentId> agents() const;
  const std::map<ChargerId, ChargerRuntime>& chargers() const { return runtime_; }
  const std::vector<ChargingSession>& sessions() const { return sessions_; }
  const std::vector<TraceEvent>& trace() const { return trace_; }
  const std::vector<SocObservation>& soc_observations() const { return soc_obs_; }

  /// Sessions driven by live agents, grouped per charger.
  UsagePattern usage(int episode) const;

  /// Throws InternalInconsistency when port or queue bookkeeping is broken.
  void check_invariants() const;

 private:
  enum class EventClass { Release = 0, Arrive = 1, Decision = 2 };
  struct Event {
    double time;
    EventClass cls;
    std::uint64_t seq;
    AgentId agent;
    ChargerId charger;
    int port;
    double duration;
    bool background;
  };
  struct EventOrder {
    bool operator()(const Event& l, const Event& r) const {
      if (l.time != r.time) return l.time > r.time;
      if (l.cls != r.cls) return l.cls > r.cls;
      return l.seq > r.seq;
    }
  };

  struct Pending {
    EnvState before;
    int action = 0;
    RewardContext ctx;
    bool charge = false;
    int n = 0;
    double arrive_min = 0.0;
    double start_min = 0.0;
    double charge_minutes = 0.0;
    double detour_minutes = 0.0;
    bool failed = false;
  };

  struct AgentRuntime {
    const DriverAgent* spec = nullptr;
    std::size_t node = 0;
    double soc = 0.0;
    std::size_t trip = 0;
    double trip_started_min = 0.0;
    bool moved_this_trip = false;
    int decisions_this_trip = 0;
    int n_charges = 0;
    bool awaiting_action = false;
    bool done = false;
    std::optional<Pending> pending;
    AgentLedger ledger;
  };

  AgentRuntime& runtime(AgentId id);
  const AgentRuntime& runtime(AgentId id) const;
  void push(double time, EventClass cls, AgentId agent, ChargerId charger = 0, int port = -1,
            double duration = 0.0, bool background = false);
  void activate_trip(AgentRuntime& a, double time);
  /// Drives along the canonical path toward `target`; returns minutes spent
  /// or nullopt (and time-to-failure in `fail_min`) if the battery empties.
  std::optional<double> drive_to(AgentRuntime& a, std::size_t target, double& fail_min,
                                 bool record);
  void arrive_at_charger(const Event& e);
  void release_port(const Event& e);
  void start_session(ChargerRuntime& c, int port, const ChargerRuntime::Waiting& w, double time);
  std::optional<Turn> resolve(AgentRuntime& a);
  std::vector<std::pair<ChargerId, double>> reachable(const AgentRuntime& a) const;
  double chance_charge(const AgentRuntime& a) const;

  const Scenario& scenario_;
  const RouteTable& routes_;
  EnvConfig config_;
  std::map<AgentId, AgentRuntime> agents_;
  std::map<ChargerId, ChargerRuntime> runtime_;
  std::map<ChargerId, const Charger*> charger_specs_;
  std::priority_queue<Event, std::vector<Event>, EventOrder> events_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
  std::vector<ChargingSession> sessions_;
  std::vector<TraceEvent> trace_;
  std::vector<SocObservation> soc_obs_;
};

/// Folds sessions into per-charger windows with explicit port assignment.
/// PortOverflow when more sessions overlap than the charger has ports.
UsagePattern fold_sessions(const std::vector<ChargingSession>& sessions,
                           const std::vector<Charger>& chargers, int episode);

}  // namespace evsim
