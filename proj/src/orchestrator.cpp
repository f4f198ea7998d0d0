#include "evsim/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "evsim/io.hpp"

namespace evsim {

void validate(const CampaignConfig& c) {
  if (c.episodes < 1) fail(ErrorKind::InvalidConfig, "campaign.episodes: must be >= 1");
  if (c.training_sets < 1) fail(ErrorKind::InvalidConfig, "campaign.training_sets: must be >= 1");
  if (c.simulation_sets < 1) fail(ErrorKind::InvalidConfig, "campaign.simulation_sets: must be >= 1");
  if (c.clusters < 1) fail(ErrorKind::InvalidConfig, "campaign.clusters: must be >= 1");
  if (!(c.simulation_sample_fraction > 0.0 && c.simulation_sample_fraction <= 1.0))
    fail(ErrorKind::InvalidConfig, "campaign.simulation_sample_fraction: must lie in (0, 1]");
  if (c.checkpoint_every < 1) fail(ErrorKind::InvalidConfig, "campaign.checkpoint_every: must be >= 1");
  if (c.jobs < 1) fail(ErrorKind::InvalidConfig, "campaign.jobs: must be >= 1");
  validate(c.dqn);
  validate(c.env);
  if (c.dqn.input_size != 5) fail(ErrorKind::InvalidConfig, "dqn.input_size: the driver state has 5 components");
  if (c.dqn.output_size != head_size(c.env.k_max))
    fail(ErrorKind::InvalidConfig, "dqn.output_size: must equal 1 + 10 * env.k_max");
}

const GroupEpisodeStats& EpisodeResult::group(const GroupKey& key) const {
  for (const auto& g : groups)
    if (g.key == key) return g;
  fail(ErrorKind::InvalidArgument, "no group " + group_name(key) + " in episode result");
}

Representatives choose_representatives(const DriverGroups& groups, int training_sets,
                                       std::uint64_t seed) {
  Representatives reps(static_cast<std::size_t>(training_sets));
  for (int s = 0; s < training_sets; ++s) {
    for (const auto& [key, members] : groups.groups) {
      if (members.empty()) continue;
      Rng rng(derive_seed(seed, s, key.first, static_cast<int>(key.second)));
      reps[s][key] = members[rng.below(members.size())];
    }
  }
  return reps;
}

PolicyMap make_policies(const DriverGroups& groups, const DqnConfig& config, std::uint64_t seed) {
  PolicyMap out;
  for (const auto& [key, _] : groups.groups)
    out.emplace(key, Policy(config, derive_seed(seed, key.first, static_cast<int>(key.second))));
  return out;
}

namespace {

struct TrainingOutcome {
  double reward = 0.0;
  int trips_completed = 0;
  int trips_total = 0;
  std::vector<std::int64_t> actions;
  double loss_sum = 0.0;
  std::int64_t losses = 0;
};

TrainingOutcome train_representative(const Scenario& scenario, const RouteTable& routes,
                                     Policy& policy, AgentId rep, const UsagePattern& background,
                                     double epsilon, const EnvConfig& env, Rng& rng) {
  World world(scenario, routes, env, {rep}, &background);
  TrainingOutcome out;
  out.actions.assign(static_cast<std::size_t>(head_size(env.k_max)), 0);
  Eigen::VectorXd state;
  while (auto turn = world.next_turn()) {
    if (turn->previous) {
      const StepOutcome& o = *turn->previous;
      Experience e;
      e.state = state;
      e.action = turn->previous_action;
      e.reward = o.reward;
      e.next_state = o.next_state.normalized(env);
      e.terminal = o.done;
      e.next_legal = o.done ? ActionMask(out.actions.size(), false) : world.legal_actions(rep).mask;
      out.reward += o.reward;
      if (auto loss = policy.observe(std::move(e), rng)) {
        out.loss_sum += *loss;
        ++out.losses;
      }
    }
    if (!turn->needs_action) continue;
    state = world.observe(rep).normalized(env);
    const auto legal = world.legal_actions(rep);
    const int a = select_action(policy.q_values(state), legal.mask, epsilon, rng);
    ++out.actions[static_cast<std::size_t>(a)];
    world.act(rep, a);
  }
  world.check_invariants();
  out.trips_completed = world.ledger(rep).trips_completed;
  out.trips_total = world.ledger(rep).trips_total;
  return out;
}

struct SimulationOutcome {
  std::map<GroupKey, std::vector<std::int64_t>> actions;
  std::map<GroupKey, double> reward;
  std::map<GroupKey, std::pair<int, int>> trips;  // completed, total
  std::map<GroupKey, int> agents;
  UsagePattern usage;
  std::vector<SocObservation> soc;
  std::vector<TraceEvent> traces;
};

SimulationOutcome run_simulation(const Scenario& scenario, const RouteTable& routes,
                                 const DriverGroups& groups, const PolicyMap& policies,
                                 const std::vector<AgentId>& agents, const EnvConfig& env,
                                 int episode) {
  std::map<AgentId, GroupKey> group_of;
  for (const auto& [key, members] : groups.groups)
    for (AgentId id : members) group_of[id] = key;
  SimulationOutcome out;
  for (const auto& [key, _] : groups.groups) {
    out.actions[key].assign(static_cast<std::size_t>(head_size(env.k_max)), 0);
    out.reward[key] = 0.0;
    out.trips[key] = {0, 0};
    out.agents[key] = 0;
  }
  World world(scenario, routes, env, agents);
  while (auto turn = world.next_turn()) {
    if (!turn->needs_action) continue;
    const GroupKey& key = group_of.at(turn->agent);
    const Eigen::VectorXd state = world.observe(turn->agent).normalized(env);
    const auto legal = world.legal_actions(turn->agent);
    const int a = greedy_action(policies.at(key).q_values(state), legal.mask);
    ++out.actions[key][static_cast<std::size_t>(a)];
    world.act(turn->agent, a);
  }
  world.check_invariants();
  for (AgentId id : agents) {
    const GroupKey& key = group_of.at(id);
    const AgentLedger& l = world.ledger(id);
    out.reward[key] += l.reward_total;
    out.trips[key].first += l.trips_completed;
    out.trips[key].second += l.trips_total;
    ++out.agents[key];
  }
  out.usage = world.usage(episode);
  out.soc = world.soc_observations();
  out.traces = world.trace();
  return out;
}

std::vector<AgentId> simulation_agents(const Scenario& scenario, const CampaignConfig& cfg,
                                       int episode, int set) {
  std::vector<AgentId> ids;
  Rng rng(derive_seed(cfg.seed, 51, episode, set));
  for (const auto& a : scenario.agents)
    if (set == 0 || rng.bernoulli(cfg.simulation_sample_fraction)) ids.push_back(a.agent_id);
  return ids;
}

void run_phase2(const Scenario& scenario, const RouteTable& routes, const DriverGroups& groups,
                const PolicyMap& policies, const CampaignConfig& cfg, int episode,
                EpisodeResult& result) {
  std::map<GroupKey, double> completion_sum;
  int completed_all = 0, total_all = 0;
  for (int s = 0; s < cfg.simulation_sets; ++s) {
    auto sim = run_simulation(scenario, routes, groups, policies,
                              simulation_agents(scenario, cfg, episode, s), cfg.env, episode);
    int done = 0, total = 0;
    for (const auto& [key, trips] : sim.trips) {
      done += trips.first;
      total += trips.second;
      completion_sum[key] += trips.second ? static_cast<double>(trips.first) / trips.second : 0.0;
    }
    result.simulation_set_completion.push_back(total ? static_cast<double>(done) / total : 0.0);
    if (s != 0) continue;
    completed_all = done;
    total_all = total;
    for (auto& g : result.groups) {
      g.simulation_actions = sim.actions.at(g.key);
      g.simulation_reward = sim.agents.at(g.key) ? sim.reward.at(g.key) / sim.agents.at(g.key) : 0.0;
    }
    result.usage = std::move(sim.usage);
    result.soc_observations = std::move(sim.soc);
    result.traces = std::move(sim.traces);
  }
  for (auto& g : result.groups) g.simulation_completion = completion_sum[g.key] / cfg.simulation_sets;
  result.completion_rate = total_all ? static_cast<double>(completed_all) / total_all : 0.0;
}

}  // namespace

EpisodeResult run_episode(const Scenario& scenario, const RouteTable& routes,
                          const DriverGroups& groups, PolicyMap& policies,
                          const Representatives& reps, const UsagePattern& prev_usage, int episode,
                          const CampaignConfig& cfg) {
  EpisodeResult result;
  result.episode = episode;
  result.epsilon = epsilon_at(cfg.dqn.exploration, episode);
  const std::vector<GroupKey> keys = groups.keys();
  result.groups.resize(keys.size());

  // Phase 1: groups are independent, so they may train concurrently.
  const auto train_group = [&](std::size_t gi) {
    const GroupKey& key = keys[gi];
    GroupEpisodeStats& stats = result.groups[gi];
    stats.key = key;
    stats.members = static_cast<int>(groups.members(key).size());
    stats.training_actions.assign(static_cast<std::size_t>(head_size(cfg.env.k_max)), 0);
    Policy& policy = policies.at(key);
    int sets = 0, completed = 0, total = 0;
    double loss_sum = 0.0;
    std::int64_t losses = 0;
    for (int s = 0; s < static_cast<int>(reps.size()); ++s) {
      auto it = reps[s].find(key);
      if (it == reps[s].end()) continue;
      Rng rng(derive_seed(cfg.seed, 41, episode, key.first, static_cast<int>(key.second), s));
      const auto t = train_representative(scenario, routes, policy, it->second, prev_usage,
                                          result.epsilon, cfg.env, rng);
      ++sets;
      stats.training_reward += t.reward;
      completed += t.trips_completed;
      total += t.trips_total;
      for (std::size_t a = 0; a < t.actions.size(); ++a) stats.training_actions[a] += t.actions[a];
      loss_sum += t.loss_sum;
      losses += t.losses;
    }
    if (sets) stats.training_reward /= sets;
    stats.training_completion = total ? static_cast<double>(completed) / total : 0.0;
    stats.mean_loss = losses ? loss_sum / static_cast<double>(losses) : 0.0;
    stats.train_steps = policy.train_steps();
  };
  const int jobs = std::min<int>(cfg.jobs, static_cast<int>(keys.size()));
  if (jobs <= 1) {
    for (std::size_t gi = 0; gi < keys.size(); ++gi) train_group(gi);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(keys.size());
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t gi = next++; gi < keys.size(); gi = next++) {
          try {
            train_group(gi);
          } catch (...) {
            errors[gi] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // Phase 2 reads the policies only.
  run_phase2(scenario, routes, groups, policies, cfg, episode, result);
  return result;
}

EpisodeResult simulate(const Scenario& scenario, const DriverGroups& groups,
                       const PolicyMap& policies, const CampaignConfig& cfg, int episode) {
  const RouteTable routes(scenario.graph);
  EpisodeResult result;
  result.episode = episode;
  for (const auto& key : groups.keys()) {
    GroupEpisodeStats g;
    g.key = key;
    g.members = static_cast<int>(groups.members(key).size());
    g.training_actions.assign(static_cast<std::size_t>(head_size(cfg.env.k_max)), 0);
    result.groups.push_back(g);
  }
  run_phase2(scenario, routes, groups, policies, cfg, episode, result);
  return result;
}

UsagePattern fold_usage(const EpisodeResult& result, const std::vector<Charger>& chargers) {
  std::vector<ChargingSession> all;
  for (const auto& [_, list] : result.usage.sessions) all.insert(all.end(), list.begin(), list.end());
  return fold_sessions(all, chargers, result.episode);
}

int pick_cluster(const DriverGroups& groups,
                 const std::function<double(const Eigen::RowVectorXd&)>& score) {
  int best = 1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < groups.model.centroids.rows(); ++c) {
    const double s = score(groups.model.centroids.row(c));
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(c) + 1;
    }
  }
  return best;
}

int long_low_cluster(const DriverGroups& groups) {
  return pick_cluster(groups, [](const Eigen::RowVectorXd& c) { return c(0) - c(1); });
}

int short_high_cluster(const DriverGroups& groups) {
  return pick_cluster(groups, [](const Eigen::RowVectorXd& c) { return -c(0) + c(1) + c(3); });
}

namespace fs = std::filesystem;

std::string episode_dir_name(int episode) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", episode);
  return buf;
}

namespace {

Json comparable_config(const CampaignConfig& cfg) {
  Json j = to_json(cfg);
  j.erase("episodes");
  j.erase("jobs");
  return j;
}

}  // namespace

void write_episode_artifacts(const fs::path& ep, const EpisodeResult& r, bool traces) {
  fs::create_directories(ep);
  Json result = to_json(r);
  result["schema_version"] = kSchemaVersion;
  write_json_atomic(ep / "result.json", result);
  Json usage = to_json(r.usage);
  usage["schema_version"] = kSchemaVersion;
  Json obs = Json::array();
  for (const auto& o : r.soc_observations) obs.push_back({o.node, o.soc});
  usage["soc_observations"] = std::move(obs);
  write_json_atomic(ep / "usage.json", usage);
  if (traces) {
    std::ostringstream out;
    for (const auto& e : r.traces) out << to_json(e).dump() << '\n';
    write_text_atomic(ep / "traces.ndjson", out.str());
  }
}

namespace {

void write_episode(const fs::path& dir, const EpisodeResult& r, bool traces) {
  write_episode_artifacts(dir / "episodes" / episode_dir_name(r.episode), r, traces);
}

void write_checkpoint(const fs::path& dir, const CampaignConfig& cfg, const CampaignState& state) {
  const fs::path ck = dir / "checkpoints";
  fs::create_directories(ck);
  Json full;
  full["schema_version"] = kSchemaVersion;
  full["config"] = comparable_config(cfg);
  full["next_episode"] = state.next_episode;
  full["prev_usage"] = to_json(state.prev_usage);
  Json pols = Json::object();
  Json snapshot = Json::object();
  for (const auto& [key, p] : state.policies) {
    pols[group_key_string(key)] = to_json(p, true);
    snapshot[group_key_string(key)] = to_json(p, false);
  }
  full["policies"] = std::move(pols);
  write_json_atomic(ck / "latest.json", full);
  Json snap;
  snap["schema_version"] = kSchemaVersion;
  snap["episode"] = state.next_episode - 1;
  snap["policies"] = std::move(snapshot);
  write_json_atomic(ck / ("policies-" + episode_dir_name(state.next_episode - 1) + ".json"), snap);
}

CampaignState load_checkpoint(const fs::path& file, const CampaignConfig& cfg) {
  const Json j = read_json_file(file);
  if (j.at("config") != comparable_config(cfg))
    fail(ErrorKind::InvalidConfig, "checkpoint was written under a different configuration");
  CampaignState st;
  st.next_episode = j.at("next_episode").get<int>();
  st.prev_usage = usage_from_json(j.at("prev_usage"));
  for (const auto& [k, v] : j.at("policies").items())
    st.policies.emplace(parse_group_key(k), policy_from_json(v, cfg.dqn));
  return st;
}

}  // namespace

CampaignRun run_campaign(const CampaignConfig& cfg, const Scenario& scenario,
                         const std::optional<fs::path>& out_dir, bool resume,
                         const std::function<void(const EpisodeResult&)>& on_episode) {
  validate(cfg);
  const RouteTable routes(scenario.graph);
  CampaignRun run;
  run.groups = cluster_drivers(scenario.agents, derive_seed(cfg.seed, 1), cfg.clusters);
  run.representatives = choose_representatives(run.groups, cfg.training_sets, derive_seed(cfg.seed, 2));

  CampaignState state;
  state.policies = make_policies(run.groups, cfg.dqn, derive_seed(cfg.seed, 3));
  if (out_dir) {
    fs::create_directories(*out_dir / "episodes");
    fs::create_directories(*out_dir / "checkpoints");
    const fs::path latest = *out_dir / "checkpoints" / "latest.json";
    if (resume && fs::exists(latest)) {
      state = load_checkpoint(latest, cfg);
      spdlog::info("resuming at episode {}", state.next_episode);
    }
    Json config = to_json(cfg);
    config["schema_version"] = kSchemaVersion;
    write_json_atomic(*out_dir / "config.json", config);
    Json sc = to_json(scenario);
    write_json_atomic(*out_dir / "scenario.json", sc);
    Json groups = to_json(run.groups);
    groups["schema_version"] = kSchemaVersion;
    groups["long_low_cluster"] = long_low_cluster(run.groups);
    groups["short_high_cluster"] = short_high_cluster(run.groups);
    Json reps = Json::array();
    for (const auto& set : run.representatives) {
      Json s = Json::object();
      for (const auto& [key, id] : set) s[group_key_string(key)] = id;
      reps.push_back(std::move(s));
    }
    groups["representatives"] = std::move(reps);
    write_json_atomic(*out_dir / "groups.json", groups);
  }

  for (int e = state.next_episode; e < cfg.episodes; ++e) {
    const Representatives reps =
        cfg.redraw_representatives
            ? choose_representatives(run.groups, cfg.training_sets, derive_seed(cfg.seed, 2, e))
            : run.representatives;
    EpisodeResult result =
        run_episode(scenario, routes, run.groups, state.policies, reps, state.prev_usage, e, cfg);
    state.prev_usage = fold_usage(result, scenario.chargers);
    state.next_episode = e + 1;
    if (out_dir) write_episode(*out_dir, result, cfg.write_traces);
    if (on_episode) on_episode(result);
    spdlog::debug("episode {} completion {:.3f}", e, result.completion_rate);
    result.traces.clear();
    result.soc_observations.clear();
    result.usage = UsagePattern{};
    run.results.push_back(std::move(result));
    if (out_dir && (state.next_episode % cfg.checkpoint_every == 0 || state.next_episode == cfg.episodes))
      write_checkpoint(*out_dir, cfg, state);
  }
  return run;
}

}  // namespace evsim
