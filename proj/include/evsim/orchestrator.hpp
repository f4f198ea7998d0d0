#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evsim/clustering.hpp"
#include "evsim/environment.hpp"
#include "evsim/rl_core.hpp"
#include "evsim/scenario.hpp"

namespace evsim {

struct CampaignConfig {
  int episodes = 200;
  int training_sets = 2;
  int simulation_sets = 1;
  int clusters = 5;
  std::uint64_t seed = 0;
  /// Draw fresh representatives every episode instead of once per campaign.
  bool redraw_representatives = false;
  /// Share of agents kept in simulation sets after the first.
  double simulation_sample_fraction = 0.8;
  int checkpoint_every = 10;
  bool write_traces = true;
  /// Worker threads for per-group training; results do not depend on it.
  int jobs = 1;
  DqnConfig dqn;
  EnvConfig env;
};

void validate(const CampaignConfig& config);

struct GroupEpisodeStats {
  GroupKey key{1, TripPurpose::Work};
  int members = 0;
  /// Cumulative reward of the group's representatives, averaged over training sets.
  double training_reward = 0.0;
  double training_completion = 0.0;
  std::vector<std::int64_t> training_actions;
  double mean_loss = 0.0;
  std::int64_t train_steps = 0;
  /// Mean per-agent cumulative reward in the first simulation set.
  double simulation_reward = 0.0;
  /// Trip completion averaged over simulation sets.
  double simulation_completion = 0.0;
  std::vector<std::int64_t> simulation_actions;
};

struct EpisodeResult {
  int episode = 0;
  double epsilon = 0.0;
  std::vector<GroupEpisodeStats> groups;
  double completion_rate = 0.0;
  std::vector<double> simulation_set_completion;
  UsagePattern usage;
  std::vector<SocObservation> soc_observations;
  std::vector<TraceEvent> traces;

  const GroupEpisodeStats& group(const GroupKey& key) const;
};

/// representatives[set][group] = agent id.
using Representatives = std::vector<std::map<GroupKey, AgentId>>;

Representatives choose_representatives(const DriverGroups& groups, int training_sets,
                                       std::uint64_t seed);

using PolicyMap = std::map<GroupKey, Policy>;

PolicyMap make_policies(const DriverGroups& groups, const DqnConfig& config, std::uint64_t seed);

/// One training-then-simulation cycle. Phase 1 trains each group's policy on
/// its representatives against `prev_usage` replayed as background demand;
/// Phase 2 runs every agent greedily under the updated policies in a shared
/// world.
EpisodeResult run_episode(const Scenario& scenario, const RouteTable& routes,
                          const DriverGroups& groups, PolicyMap& policies,
                          const Representatives& reps, const UsagePattern& prev_usage, int episode,
                          const CampaignConfig& config);

/// Phase-2 sessions of the first simulation set as per-charger windows.
UsagePattern fold_usage(const EpisodeResult& result, const std::vector<Charger>& chargers);

struct CampaignState {
  int next_episode = 0;
  PolicyMap policies;
  UsagePattern prev_usage;
};

struct CampaignRun {
  std::vector<EpisodeResult> results;  // traces and observations dropped
  DriverGroups groups;
  Representatives representatives;
};

/// Runs episodes [state.next_episode, config.episodes). With a directory,
/// per-episode artefacts and checkpoints are written below it and an existing
/// checkpoint is picked up when `resume` is set.
CampaignRun run_campaign(const CampaignConfig& config, const Scenario& scenario,
                         const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                         bool resume = false,
                         const std::function<void(const EpisodeResult&)>& on_episode = {});

/// Zero-padded directory name of an episode.
std::string episode_dir_name(int episode);

/// result.json, usage.json (with SOC observations) and optionally traces.ndjson.
void write_episode_artifacts(const std::filesystem::path& dir, const EpisodeResult& result,
                             bool traces);

/// Phase 2 only, under fixed policies.
EpisodeResult simulate(const Scenario& scenario, const DriverGroups& groups,
                       const PolicyMap& policies, const CampaignConfig& config, int episode);

/// Index of the group whose cluster centroid maximises `score(centroid)`
/// where centroid columns are the normalised driver features.
int pick_cluster(const DriverGroups& groups,
                 const std::function<double(const Eigen::RowVectorXd&)>& score);

/// Long trips on a low battery: largest distance minus SOC.
int long_low_cluster(const DriverGroups& groups);
/// Short trips, high SOC, dense chargers.
int short_high_cluster(const DriverGroups& groups);

}  // namespace evsim
