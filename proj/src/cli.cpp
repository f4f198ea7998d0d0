#include "evsim/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "evsim/analysis.hpp"
#include "evsim/io.hpp"

namespace evsim {

namespace fs = std::filesystem;

const std::vector<double>& calibration_grid(const std::string& param) {
  static const std::vector<double> lr{0.001, 0.00075, 0.0005, 0.00025, 0.0001};
  static const std::vector<double> discount{0.9, 0.95, 0.99};
  static const std::vector<double> exploration{0.95, 0.96, 0.97, 0.98, 0.99};
  if (param == "learning_rate") return lr;
  if (param == "discount_factor") return discount;
  if (param == "exploration_rate") return exploration;
  fail(ErrorKind::InvalidArgument, "unknown calibration parameter '" + param + "'");
}

CampaignConfig with_parameter(CampaignConfig base, const std::string& param, double value) {
  if (param == "learning_rate")
    base.dqn.optimizer.learning_rate = value;
  else if (param == "discount_factor")
    base.dqn.discount = value;
  else if (param == "exploration_rate")
    base.dqn.exploration.epsilon_start = value;
  else
    fail(ErrorKind::InvalidArgument, "unknown calibration parameter '" + param + "'");
  return base;
}

std::vector<double> reward_curve(const std::vector<EpisodeResult>& results) {
  std::vector<double> curve;
  for (const auto& r : results) {
    double sum = 0.0;
    for (const auto& g : r.groups) sum += g.training_reward;
    curve.push_back(r.groups.empty() ? 0.0 : sum / static_cast<double>(r.groups.size()));
  }
  return curve;
}

double delta_variance(const std::vector<double>& curve) {
  if (curve.size() < 3) fail(ErrorKind::TooFewValues, "need at least three points for delta variance");
  std::vector<double> d;
  for (std::size_t i = 1; i < curve.size(); ++i) d.push_back(curve[i] - curve[i - 1]);
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(d.size());
  double var = 0.0;
  for (double x : d) var += (x - mean) * (x - mean);
  return var / static_cast<double>(d.size());
}

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void report(std::string_view kind, const std::string& message) {
  std::cerr << Json{{"error", kind}, {"message", message}}.dump() << '\n';
}

void setup_logging() {
  spdlog::drop("evsim");
  auto logger = spdlog::stderr_logger_mt("evsim");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("EVSIM_LOG")) {
    const std::string v = lvl;
    if (v == "error")
      spdlog::set_level(spdlog::level::err);
    else if (v == "warn")
      spdlog::set_level(spdlog::level::warn);
    else if (v == "info")
      spdlog::set_level(spdlog::level::info);
    else if (v == "debug")
      spdlog::set_level(spdlog::level::debug);
    else
      throw UsageError("EVSIM_LOG must be one of error, warn, info, debug");
  }
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& given, const char* what) {
  if (given) return *given;
  std::random_device rd;
  const std::uint64_t seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  spdlog::info("{}: no --seed given, using {}", what, seed);
  return seed;
}

Scenario load_scenario(const fs::path& p) {
  try {
    return scenario_from_json(read_json_file(p));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidConfig, p.string() + ": " + e.what());
  }
}

CampaignConfig load_campaign_config(const std::optional<fs::path>& p, bool& has_seed) {
  has_seed = false;
  if (!p) return CampaignConfig{};
  const Json j = read_json_file(*p);
  has_seed = j.is_object() && j.contains("seed");
  return campaign_config_from_json(j);
}

int default_jobs() { return std::max(1, static_cast<int>(std::thread::hardware_concurrency())); }

PolicyMap load_policies(const fs::path& file, const DqnConfig& dqn) {
  const Json j = read_json_file(file);
  PolicyMap out;
  for (const auto& [k, v] : j.at("policies").items()) out.emplace(parse_group_key(k), policy_from_json(v, dqn));
  return out;
}

std::vector<int> campaign_episodes(const fs::path& campaign) {
  std::vector<int> eps;
  const fs::path dir = campaign / "episodes";
  if (!fs::exists(dir)) fail(ErrorKind::Io, dir.string() + " does not exist");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "usage.json")) continue;
    try {
      eps.push_back(std::stoi(entry.path().filename().string()));
    } catch (const std::exception&) {
    }
  }
  std::sort(eps.begin(), eps.end());
  if (eps.empty()) fail(ErrorKind::Io, "no episodes under " + dir.string());
  return eps;
}

fs::path episode_path(const fs::path& campaign, int episode) {
  return campaign / "episodes" / episode_dir_name(episode);
}

std::vector<SocObservation> load_soc_observations(const Json& usage) {
  std::vector<SocObservation> out;
  if (!usage.contains("soc_observations")) return out;
  for (const auto& o : usage.at("soc_observations")) {
    SocObservation s;
    s.node = o.at(0).get<NodeId>();
    s.soc = o.at(1).get<double>();
    out.push_back(s);
  }
  return out;
}

std::string fmt_r(double r) { return std::isfinite(r) ? fmt::format("{:.9g}", r) : "nan"; }

// --- subcommands -----------------------------------------------------------

struct GenArgs {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  fs::path out;
};

int cmd_gen(const GenArgs& a) {
  ScenarioConfig cfg = default_scenario_config();
  if (a.config) cfg = scenario_config_from_json(read_json_file(*a.config));
  const std::uint64_t seed = resolve_seed(a.seed, "gen");
  const Scenario s = generate_scenario(cfg, seed);
  Json j = to_json(s);
  j["generator"] = to_json(cfg);
  write_json_atomic(a.out, j);
  spdlog::info("wrote {} ({} agents, {} nodes, {} chargers)", a.out.string(), s.agents.size(),
               s.graph.size(), s.chargers.size());
  return 0;
}

struct TrainArgs {
  fs::path scenario;
  std::optional<fs::path> config;
  std::optional<int> episodes;
  std::optional<std::uint64_t> seed;
  fs::path out;
  bool resume = false;
  std::optional<int> jobs;
};

int cmd_train(const TrainArgs& a) {
  bool has_seed = false;
  CampaignConfig cfg = load_campaign_config(a.config, has_seed);
  if (a.episodes) cfg.episodes = *a.episodes;
  if (a.seed)
    cfg.seed = *a.seed;
  else if (!has_seed)
    cfg.seed = resolve_seed(std::nullopt, "train");
  cfg.jobs = a.jobs.value_or(default_jobs());
  validate(cfg);
  const Scenario scenario = load_scenario(a.scenario);
  const auto run = run_campaign(cfg, scenario, a.out, a.resume, [](const EpisodeResult& r) {
    spdlog::info("episode {:4d}  eps {:.3f}  completion {:.3f}", r.episode, r.epsilon, r.completion_rate);
  });
  spdlog::info("campaign finished: {} episodes this run, output in {}", run.results.size(), a.out.string());
  return 0;
}

struct SimulateArgs {
  fs::path campaign;
  std::optional<fs::path> checkpoint;
  std::optional<std::uint64_t> seed;
  int episode = 0;
  fs::path out;
};

int cmd_simulate(const SimulateArgs& a) {
  Json cj = read_json_file(a.campaign / "config.json");
  cj.erase("schema_version");
  CampaignConfig cfg = campaign_config_from_json(cj);
  const Scenario scenario = load_scenario(a.campaign / "scenario.json");
  const fs::path ck = a.checkpoint.value_or(a.campaign / "checkpoints" / "latest.json");
  const PolicyMap policies = load_policies(ck, cfg.dqn);
  const DriverGroups groups = cluster_drivers(scenario.agents, derive_seed(cfg.seed, 1), cfg.clusters);
  if (a.seed) cfg.seed = *a.seed;
  for (const auto& key : groups.keys())
    if (!policies.count(key)) fail(ErrorKind::InvalidConfig, "checkpoint lacks a policy for " + group_name(key));
  const EpisodeResult r = simulate(scenario, groups, policies, cfg, a.episode);
  write_episode_artifacts(a.out, r, cfg.write_traces);
  spdlog::info("simulated {} agents: completion {:.3f}", scenario.agents.size(), r.completion_rate);
  return 0;
}

struct ValidateArgs {
  fs::path campaign;
  std::optional<fs::path> reference;
  std::optional<int> reference_episode;
  int max_lag = 8;
  double interval = 15.0;
  fs::path out;
};

int cmd_validate(const ValidateArgs& a) {
  if (a.reference.has_value() == a.reference_episode.has_value())
    throw UsageError("validate needs exactly one of --reference and --reference-episode");
  const Scenario scenario = load_scenario(a.campaign / "scenario.json");
  Json cj = read_json_file(a.campaign / "config.json");
  const double horizon = 1440.0 * cj.at("env").value("days", 1);
  const fs::path ref_file = a.reference ? *a.reference : episode_path(a.campaign, *a.reference_episode) / "usage.json";
  const UsagePattern ref = usage_from_json(read_json_file(ref_file));
  const UsageMap ref_map = usage_map(ref, scenario.chargers, 0.0, horizon);
  const UsageSeries ref_series = usage_series(ref, a.interval, horizon);

  std::ostringstream csv;
  csv << "# schema_version=" << kSchemaVersion << "\n";
  csv << "episode,spatial_r,temporal_r_peak,lag\n";
  const auto guarded = [](auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ZeroVariance || e.kind() == ErrorKind::InsufficientOverlap)
        return std::numeric_limits<double>::quiet_NaN();
      throw;
    }
  };
  for (int e : campaign_episodes(a.campaign)) {
    const UsagePattern sim = usage_from_json(read_json_file(episode_path(a.campaign, e) / "usage.json"));
    const double rs = guarded([&] { return spatial_correlation(usage_map(sim, scenario.chargers, 0.0, horizon), ref_map); });
    int lag = 0;
    const double rt = guarded([&] {
      const LagScan scan = lag_scan(usage_series(sim, a.interval, horizon).values, ref_series.values, a.max_lag);
      lag = scan.best_lag;
      return scan.best_r;
    });
    csv << e << ',' << fmt_r(rs) << ',' << fmt_r(rt) << ',' << lag << '\n';
  }
  write_text_atomic(a.out, csv.str());
  return 0;
}

struct AnalyzeArgs {
  std::string what;
  std::optional<fs::path> scenario;
  std::optional<fs::path> campaign;
  std::optional<int> episode;
  double cell_area = kHexAreaFine;
  double buffer = 1000.0;
  int clusters = 5;
  int classes = 5;
  std::uint64_t seed = 0;
  fs::path out;
};

int cmd_analyze_clusters(const AnalyzeArgs& a) {
  if (!a.scenario && !a.campaign) throw UsageError("analyze clusters needs --scenario or --campaign");
  const Scenario s = load_scenario(a.scenario ? *a.scenario : *a.campaign / "scenario.json");
  const DriverGroups g = cluster_drivers(s.agents, derive_seed(a.seed, 1), a.clusters);
  Json j = to_json(g);
  j["schema_version"] = kSchemaVersion;
  j["long_low_cluster"] = long_low_cluster(g);
  j["short_high_cluster"] = short_high_cluster(g);
  Json elbow = Json::array();
  std::vector<int> ks;
  for (int k = 1; k <= std::min<int>(10, static_cast<int>(s.agents.size())); ++k) ks.push_back(k);
  const auto scan = elbow_scan(g.features.values, ks, a.seed);
  for (const auto& [k, w] : scan) elbow.push_back({{"k", k}, {"inertia", w}});
  j["elbow"] = elbow;
  if (scan.size() >= 3) j["suggested_k"] = suggest_elbow(scan);
  write_json_atomic(a.out, j);
  std::ostringstream csv;
  csv << "# schema_version=" << kSchemaVersion << "\n";
  csv << "agent_id,cluster,purpose,group\n";
  for (const auto& agent : s.agents) {
    const GroupKey key = g.group_of(agent.agent_id);
    csv << agent.agent_id << ',' << key.first << ',' << to_string(key.second) << ',' << group_name(key) << '\n';
  }
  fs::path csv_path = a.out;
  csv_path.replace_extension(".csv");
  write_text_atomic(csv_path, csv.str());
  return 0;
}

int last_or(const std::optional<int>& e, const fs::path& campaign) {
  return e ? *e : campaign_episodes(campaign).back();
}

int cmd_analyze_soc(const AnalyzeArgs& a) {
  if (!a.campaign) throw UsageError("analyze soc needs --campaign");
  const Scenario s = load_scenario(*a.campaign / "scenario.json");
  const int e = last_or(a.episode, *a.campaign);
  const auto obs = load_soc_observations(read_json_file(episode_path(*a.campaign, e) / "usage.json"));
  std::vector<PlanarObservation> planar;
  for (const auto& o : obs) {
    const Point p = s.graph.position(s.graph.index_of(o.node));
    planar.push_back({p.x(), p.y(), o.soc});
  }
  const HexSocMap hex = hex_aggregate(planar, a.cell_area);
  Json j = to_json(hex);
  j["episode"] = e;
  try {
    const SocCategories cats = low_soc_categories(hex, a.classes);
    j["breaks"] = cats.breaks;
    for (auto& f : j["features"]) {
      const std::pair<int, int> key{f["properties"]["q"].get<int>(), f["properties"]["r"].get<int>()};
      f["properties"]["category"] = cats.labels.at(key);
    }
  } catch (const Error& err) {
    if (err.kind() != ErrorKind::TooFewValues) throw;
    spdlog::warn("skipping natural-breaks categories: {}", err.what());
  }
  write_json_atomic(a.out, j);
  return 0;
}

int cmd_analyze_risk(const AnalyzeArgs& a) {
  if (!a.campaign) throw UsageError("analyze risk needs --campaign");
  const Scenario s = load_scenario(*a.campaign / "scenario.json");
  const int e = last_or(a.episode, *a.campaign);
  const auto obs = load_soc_observations(read_json_file(episode_path(*a.campaign, e) / "usage.json"));
  const RiskReport rep = risk_areas(mean_soc_by_node(obs), s.chargers, s.graph, a.buffer, a.seed);
  Json j = to_json(rep);
  j["episode"] = e;
  write_json_atomic(a.out, j);
  return 0;
}

struct CalibrateArgs {
  fs::path scenario;
  std::optional<fs::path> config;
  std::string param = "all";
  std::optional<int> episodes;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  fs::path out;
};

int cmd_calibrate(const CalibrateArgs& a) {
  bool has_seed = false;
  CampaignConfig base = load_campaign_config(a.config, has_seed);
  if (a.episodes) base.episodes = *a.episodes;
  if (a.seed)
    base.seed = *a.seed;
  else if (!has_seed)
    base.seed = resolve_seed(std::nullopt, "calibrate");
  base.jobs = a.jobs.value_or(default_jobs());
  validate(base);
  const Scenario scenario = load_scenario(a.scenario);
  std::vector<std::string> params;
  if (a.param == "all")
    params = {"learning_rate", "discount_factor", "exploration_rate"};
  else
    params = {a.param};
  for (const auto& p : params) calibration_grid(p);

  std::ostringstream csv;
  csv << "# schema_version=" << kSchemaVersion << "\n";
  csv << "param,value,episode,reward,completion\n";
  Json summary = Json::array();
  for (const auto& p : params) {
    for (double v : calibration_grid(p)) {
      const CampaignConfig cfg = with_parameter(base, p, v);
      validate(cfg);
      spdlog::info("calibrate {} = {}", p, v);
      const auto run = run_campaign(cfg, scenario);
      const auto curve = reward_curve(run.results);
      for (std::size_t i = 0; i < curve.size(); ++i)
        csv << p << ',' << fmt::format("{}", v) << ',' << run.results[i].episode << ',' << fmt::format("{:.9g}", curve[i])
            << ',' << fmt::format("{:.6f}", run.results[i].completion_rate) << '\n';
      summary.push_back({{"param", p},
                         {"value", v},
                         {"episodes", curve.size()},
                         {"delta_variance", curve.size() >= 3 ? delta_variance(curve) : 0.0},
                         {"final_reward", curve.empty() ? 0.0 : curve.back()}});
    }
  }
  fs::create_directories(a.out);
  write_text_atomic(a.out / "curves.csv", csv.str());
  write_json_atomic(a.out / "summary.json", {{"schema_version", kSchemaVersion}, {"runs", summary}});
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"EV charging behaviour simulator"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic scenario");
  g->add_option("--config", gen.config, "Scenario generator config (JSON)")->check(CLI::ExistingFile);
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--out", gen.out, "Scenario output file")->required();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Run a training campaign");
  t->add_option("--scenario", train.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  t->add_option("--config", train.config, "Campaign config (JSON)")->check(CLI::ExistingFile);
  t->add_option("--episodes", train.episodes, "Episode count override")->check(CLI::PositiveNumber);
  t->add_option("--seed", train.seed, "Random seed");
  t->add_option("--out", train.out, "Campaign directory")->required();
  t->add_flag("--resume", train.resume, "Continue from the latest checkpoint in --out");
  t->add_option("--jobs", train.jobs, "Worker threads")->check(CLI::PositiveNumber);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Phase-2 run under checkpointed policies");
  s->add_option("--campaign", sim.campaign, "Campaign directory")->required()->check(CLI::ExistingDirectory);
  s->add_option("--checkpoint", sim.checkpoint, "Policy file (default: checkpoints/latest.json)")
      ->check(CLI::ExistingFile);
  s->add_option("--seed", sim.seed, "Seed for simulation-set sampling");
  s->add_option("--episode", sim.episode, "Episode index recorded in the output");
  s->add_option("--out", sim.out, "Output directory")->required();

  ValidateArgs val;
  auto* v = app.add_subcommand("validate", "Correlation curves against a reference usage pattern");
  v->add_option("--campaign", val.campaign, "Campaign directory")->required()->check(CLI::ExistingDirectory);
  v->add_option("--reference", val.reference, "Reference usage file")->check(CLI::ExistingFile);
  v->add_option("--reference-episode", val.reference_episode, "Use one of the campaign's own episodes");
  v->add_option("--max-lag", val.max_lag, "Largest lag scanned, in intervals")->check(CLI::NonNegativeNumber);
  v->add_option("--interval", val.interval, "Series interval in minutes")->check(CLI::PositiveNumber);
  v->add_option("--out", val.out, "CSV output")->required();

  AnalyzeArgs an;
  auto* a = app.add_subcommand("analyze", "Post-hoc analyses");
  a->require_subcommand(1);
  const auto common = [&an](CLI::App* sub) {
    sub->add_option("--campaign", an.campaign, "Campaign directory")->check(CLI::ExistingDirectory);
    sub->add_option("--episode", an.episode, "Episode (default: last)");
    sub->add_option("--seed", an.seed, "Clustering seed");
    sub->add_option("--out", an.out, "Output file")->required();
  };
  auto* ac = a->add_subcommand("clusters", "Driver clustering with elbow scan");
  common(ac);
  ac->add_option("--scenario", an.scenario, "Scenario file")->check(CLI::ExistingFile);
  ac->add_option("--clusters", an.clusters, "Cluster count")->check(CLI::PositiveNumber);
  auto* as = a->add_subcommand("soc", "Hexagonal mean-SOC map (GeoJSON)");
  common(as);
  as->add_option("--cell-area", an.cell_area, "Cell area in km^2")->check(CLI::PositiveNumber);
  as->add_option("--classes", an.classes, "Natural-breaks classes")->check(CLI::PositiveNumber);
  auto* ar = a->add_subcommand("risk", "Battery-depletion risk areas");
  common(ar);
  ar->add_option("--buffer", an.buffer, "Buffer radius in metres")->check(CLI::PositiveNumber);

  CalibrateArgs cal;
  auto* c = app.add_subcommand("calibrate", "Hyperparameter sweep");
  c->add_option("--scenario", cal.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  c->add_option("--config", cal.config, "Base campaign config")->check(CLI::ExistingFile);
  c->add_option("--param", cal.param, "Parameter to sweep")
      ->check(CLI::IsMember({"learning_rate", "discount_factor", "exploration_rate", "all"}));
  c->add_option("--episodes", cal.episodes, "Episodes per setting")->check(CLI::PositiveNumber);
  c->add_option("--seed", cal.seed, "Random seed");
  c->add_option("--jobs", cal.jobs, "Worker threads")->check(CLI::PositiveNumber);
  c->add_option("--out", cal.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help();
    report("Usage", e.what());
    return 1;
  }

  try {
    setup_logging();
    if (*g) return cmd_gen(gen);
    if (*t) return cmd_train(train);
    if (*s) return cmd_simulate(sim);
    if (*v) return cmd_validate(val);
    if (*ac) return cmd_analyze_clusters(an);
    if (*as) return cmd_analyze_soc(an);
    if (*ar) return cmd_analyze_risk(an);
    if (*c) return cmd_calibrate(cal);
    throw UsageError("no subcommand");
  } catch (const UsageError& e) {
    report("Usage", e.what());
    return 1;
  } catch (const Error& e) {
    report(to_string(e.kind()), e.what());
    return e.kind() == ErrorKind::InvalidConfig ? 2 : 3;
  } catch (const nlohmann::json::exception& e) {
    report("InvalidConfig", e.what());
    return 2;
  } catch (const std::exception& e) {
    report("Runtime", e.what());
    return 3;
  }
}

}  // namespace evsim
