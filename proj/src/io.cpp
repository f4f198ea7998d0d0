#include "evsim/io.hpp"

#include <fstream>
#include <sstream>

namespace evsim {

StrictObject::StrictObject(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
  if (!j_.is_object()) fail(ErrorKind::InvalidConfig, where_ + ": expected an object");
}

const Json* StrictObject::child(const char* key) {
  seen_.insert(key);
  auto it = j_.find(key);
  if (it == j_.end()) return nullptr;
  if (!it->is_object()) fail(ErrorKind::InvalidConfig, where_ + "." + key + ": expected an object");
  return &*it;
}

void StrictObject::finish() const {
  for (const auto& [key, _] : j_.items())
    if (!seen_.count(key)) fail(ErrorKind::InvalidConfig, where_ + "." + key + ": unknown key");
}

Json to_json(const RoadGraph& g) {
  Json nodes = Json::array(), edges = Json::array(), chargers = Json::array();
  for (const auto& n : g.nodes()) nodes.push_back({{"id", n.id}, {"x_km", n.x_km}, {"y_km", n.y_km}});
  for (const auto& e : g.edges()) edges.push_back({{"a", e.a}, {"b", e.b}, {"length_mi", e.length_mi}});
  for (const auto& c : g.chargers()) chargers.push_back({{"node_id", c.node_id}, {"charger_id", c.charger_id}});
  return {{"nodes", nodes}, {"edges", edges}, {"chargers", chargers}};
}

RoadGraph graph_from_json(const Json& j) {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::vector<ChargerPlacement> chargers;
  for (const auto& n : j.at("nodes"))
    nodes.push_back({n.at("id").get<NodeId>(), n.at("x_km").get<double>(), n.at("y_km").get<double>()});
  for (const auto& e : j.at("edges"))
    edges.push_back({e.at("a").get<NodeId>(), e.at("b").get<NodeId>(), e.at("length_mi").get<double>()});
  if (j.contains("chargers"))
    for (const auto& c : j.at("chargers"))
      chargers.push_back({c.at("node_id").get<NodeId>(), c.at("charger_id").get<ChargerId>()});
  return RoadGraph(std::move(nodes), std::move(edges), std::move(chargers));
}

Json to_json(const Charger& c) {
  return {{"charger_id", c.charger_id},
          {"node_id", c.node_id},
          {"ports", c.ports},
          {"price_gbp_per_kwh", c.price_gbp_per_kwh},
          {"speed_kw", c.speed_kw},
          {"initial_parking_fee_gbp", c.initial_parking_fee_gbp},
          {"additional_parking_fee_gbp_per_h", c.additional_parking_fee_gbp_per_h}};
}

Charger charger_from_json(const Json& j) {
  Charger c;
  c.charger_id = j.at("charger_id").get<ChargerId>();
  c.node_id = j.at("node_id").get<NodeId>();
  c.ports = j.at("ports").get<int>();
  c.price_gbp_per_kwh = j.at("price_gbp_per_kwh").get<double>();
  c.speed_kw = j.at("speed_kw").get<double>();
  c.initial_parking_fee_gbp = j.at("initial_parking_fee_gbp").get<double>();
  c.additional_parking_fee_gbp_per_h = j.at("additional_parking_fee_gbp_per_h").get<double>();
  if (c.ports < 1) fail(ErrorKind::InvalidArgument, "charger ports must be >= 1");
  if (!(c.speed_kw > 0.0)) fail(ErrorKind::InvalidArgument, "charger speed must be > 0");
  return c;
}

namespace {

Json to_json(const EVSpec& ev) {
  return {{"name", ev.name}, {"battery_kwh", ev.battery_kwh}, {"consumption_wh_per_mi", ev.consumption_wh_per_mi}};
}

EVSpec ev_from_json(const Json& j) {
  EVSpec ev{j.at("name").get<std::string>(), j.at("battery_kwh").get<double>(),
            j.at("consumption_wh_per_mi").get<double>()};
  if (!(ev.battery_kwh > 0.0) || !(ev.consumption_wh_per_mi > 0.0))
    fail(ErrorKind::InvalidArgument, "EV battery and consumption must be > 0");
  return ev;
}

Json to_json(const Trip& t) {
  return {{"origin", t.origin},
          {"destination", t.destination},
          {"purpose", to_string(t.purpose)},
          {"survey_purpose", t.survey_purpose},
          {"start_time_min", t.start_time_min},
          {"planned_distance_mi", t.planned_distance_mi}};
}

Trip trip_from_json(const Json& j) {
  Trip t;
  t.origin = j.at("origin").get<NodeId>();
  t.destination = j.at("destination").get<NodeId>();
  t.purpose = parse_purpose(j.at("purpose").get<std::string>());
  t.survey_purpose = j.value("survey_purpose", std::string{});
  t.start_time_min = j.at("start_time_min").get<double>();
  t.planned_distance_mi = j.value("planned_distance_mi", 0.0);
  if (t.start_time_min < 0.0 || t.start_time_min >= 1440.0)
    fail(ErrorKind::InvalidArgument, "trip start time must lie in [0, 1440)");
  return t;
}

Json to_json(const NormalSpec& n) { return {{"mean", n.mean}, {"sd", n.sd}}; }

NormalSpec normal_from_json(const Json& j, const std::string& where) {
  NormalSpec n;
  StrictObject o(j, where);
  o.get("mean", n.mean);
  o.get("sd", n.sd);
  o.finish();
  return n;
}

}  // namespace

Json to_json(const Scenario& s) {
  Json agents = Json::array(), chargers = Json::array();
  for (const auto& c : s.chargers) chargers.push_back(to_json(c));
  for (const auto& a : s.agents) {
    Json trips = Json::array();
    for (const auto& t : a.trips) trips.push_back(to_json(t));
    agents.push_back({{"agent_id", a.agent_id},
                      {"ev", to_json(a.ev)},
                      {"soc", a.soc},
                      {"soc_threshold", a.soc_threshold},
                      {"trips", trips},
                      {"cluster_id", a.cluster_id},
                      {"cd", a.cd},
                      {"tcd", a.tcd},
                      {"regime", a.regime}});
  }
  return {{"schema_version", kSchemaVersion},
          {"graph", to_json(s.graph)},
          {"chargers", chargers},
          {"agents", agents},
          {"seed", s.seed},
          {"config_hash", s.config_hash}};
}

Scenario scenario_from_json(const Json& j) {
  Scenario s;
  s.graph = graph_from_json(j.at("graph"));
  for (const auto& c : j.at("chargers")) {
    s.chargers.push_back(charger_from_json(c));
    const auto placed = s.graph.charger_node(s.chargers.back().charger_id);
    if (s.graph.id_of(placed) != s.chargers.back().node_id)
      fail(ErrorKind::InvalidArgument, "charger placement disagrees with the graph");
  }
  for (const auto& a : j.at("agents")) {
    DriverAgent d;
    d.agent_id = a.at("agent_id").get<AgentId>();
    d.ev = ev_from_json(a.at("ev"));
    d.soc = a.at("soc").get<double>();
    d.soc_threshold = a.at("soc_threshold").get<double>();
    for (const auto& t : a.at("trips")) {
      d.trips.push_back(trip_from_json(t));
      s.graph.index_of(d.trips.back().origin);
      s.graph.index_of(d.trips.back().destination);
    }
    d.cluster_id = a.value("cluster_id", -1);
    d.cd = a.value("cd", 0.0);
    d.tcd = a.value("tcd", 0.0);
    d.regime = a.value("regime", -1);
    if (d.soc < 0.0 || d.soc > 1.0) fail(ErrorKind::InvalidArgument, "agent soc must lie in [0, 1]");
    if (!(d.soc_threshold > 0.0 && d.soc_threshold < 1.0))
      fail(ErrorKind::InvalidArgument, "agent soc threshold must lie in (0, 1)");
    if (d.trips.empty()) fail(ErrorKind::InvalidArgument, "agent without trips");
    s.agents.push_back(std::move(d));
  }
  s.seed = j.value("seed", std::uint64_t{0});
  s.config_hash = j.value("config_hash", std::string{});
  return s;
}

Json to_json(const ScenarioConfig& c) {
  Json zones = Json::object();
  for (const auto& [z, p] : c.zone_charger_probability) zones[std::to_string(z)] = p;
  Json regimes = Json::array();
  for (const auto& r : c.regimes) {
    Json rj{{"name", r.name},
            {"weight", r.weight},
            {"origin_zones", r.origin_zones},
            {"dest_zones", r.dest_zones},
            {"one_way_distance_mi", to_json(r.one_way_distance_mi)},
            {"initial_soc", to_json(r.initial_soc)},
            {"work_fraction", r.work_fraction},
            {"ev_names", r.ev_names}};
    if (r.start_min) rj["start_min"] = to_json(*r.start_min);
    regimes.push_back(std::move(rj));
  }
  Json evs = Json::array();
  for (const auto& ev : c.ev_catalog) evs.push_back(to_json(ev));
  return {{"grid_nx", c.grid_nx},
          {"grid_ny", c.grid_ny},
          {"spacing_mi", c.spacing_mi},
          {"jitter", c.jitter},
          {"detour_max", c.detour_max},
          {"zone_cols", c.zone_cols},
          {"zone_rows", c.zone_rows},
          {"default_charger_probability", c.default_charger_probability},
          {"zone_charger_probability", zones},
          {"rapid_fraction", c.rapid_fraction},
          {"ultra_fraction", c.ultra_fraction},
          {"agent_count", c.agent_count},
          {"trips_per_agent", c.trips_per_agent},
          {"regimes", regimes},
          {"ev_catalog", evs},
          {"work_start_min", to_json(c.work_start_min)},
          {"leisure_start_min", to_json(c.leisure_start_min)},
          {"work_dwell_min", c.work_dwell_min},
          {"leisure_dwell_min", c.leisure_dwell_min},
          {"soc_threshold", to_json(c.soc_threshold)},
          {"soc_threshold_lo", c.soc_threshold_lo},
          {"soc_threshold_hi", c.soc_threshold_hi},
          {"speed_mph", c.speed_mph},
          {"buffer_m", c.buffer_m}};
}

ScenarioConfig scenario_config_from_json(const Json& j) {
  ScenarioConfig c = default_scenario_config();
  StrictObject o(j, "scenario");
  o.get("grid_nx", c.grid_nx);
  o.get("grid_ny", c.grid_ny);
  o.get("spacing_mi", c.spacing_mi);
  o.get("jitter", c.jitter);
  o.get("detour_max", c.detour_max);
  o.get("zone_cols", c.zone_cols);
  o.get("zone_rows", c.zone_rows);
  o.get("default_charger_probability", c.default_charger_probability);
  if (const Json* z = o.child("zone_charger_probability")) {
    c.zone_charger_probability.clear();
    for (const auto& [k, v] : z->items()) {
      try {
        c.zone_charger_probability[std::stoi(k)] = v.get<double>();
      } catch (const std::exception&) {
        fail(ErrorKind::InvalidConfig, "scenario.zone_charger_probability." + k + ": bad entry");
      }
    }
  }
  o.get("rapid_fraction", c.rapid_fraction);
  o.get("ultra_fraction", c.ultra_fraction);
  o.get("agent_count", c.agent_count);
  o.get("trips_per_agent", c.trips_per_agent);
  if (j.contains("regimes")) {
    c.regimes.clear();
    int i = 0;
    for (const auto& r : j.at("regimes")) {
      const std::string where = "scenario.regimes[" + std::to_string(i++) + "]";
      RegimeConfig rc;
      StrictObject ro(r, where);
      ro.get("name", rc.name);
      ro.get("weight", rc.weight);
      ro.get("origin_zones", rc.origin_zones);
      ro.get("dest_zones", rc.dest_zones);
      if (const Json* d = ro.child("one_way_distance_mi")) rc.one_way_distance_mi = normal_from_json(*d, where + ".one_way_distance_mi");
      if (const Json* s = ro.child("initial_soc")) rc.initial_soc = normal_from_json(*s, where + ".initial_soc");
      ro.get("work_fraction", rc.work_fraction);
      ro.get("ev_names", rc.ev_names);
      if (const Json* t = ro.child("start_min")) rc.start_min = normal_from_json(*t, where + ".start_min");
      ro.finish();
      c.regimes.push_back(std::move(rc));
    }
  }
  o.skip("regimes");
  if (j.contains("ev_catalog")) {
    c.ev_catalog.clear();
    for (const auto& ev : j.at("ev_catalog")) c.ev_catalog.push_back(ev_from_json(ev));
  }
  o.skip("ev_catalog");
  if (const Json* w = o.child("work_start_min")) c.work_start_min = normal_from_json(*w, "scenario.work_start_min");
  if (const Json* l = o.child("leisure_start_min")) c.leisure_start_min = normal_from_json(*l, "scenario.leisure_start_min");
  o.get("work_dwell_min", c.work_dwell_min);
  o.get("leisure_dwell_min", c.leisure_dwell_min);
  if (const Json* t = o.child("soc_threshold")) c.soc_threshold = normal_from_json(*t, "scenario.soc_threshold");
  o.get("soc_threshold_lo", c.soc_threshold_lo);
  o.get("soc_threshold_hi", c.soc_threshold_hi);
  o.get("speed_mph", c.speed_mph);
  o.get("buffer_m", c.buffer_m);
  o.finish();
  validate(c);
  return c;
}

Json to_json(const RewardConfig& c) {
  return {{"epsilon_u", c.epsilon_u},       {"alpha", c.alpha},
          {"beta", c.beta},                 {"gamma_r", c.gamma_r},
          {"rho", c.rho},                   {"short_max_mi", c.short_max_mi},
          {"mid_max_mi", c.mid_max_mi},     {"min_charge_urgency", c.min_charge_urgency}};
}

RewardConfig reward_config_from_json(const Json& j) {
  RewardConfig c;
  StrictObject o(j, "reward");
  o.get("epsilon_u", c.epsilon_u);
  o.get("alpha", c.alpha);
  o.get("beta", c.beta);
  o.get("gamma_r", c.gamma_r);
  o.get("rho", c.rho);
  o.get("short_max_mi", c.short_max_mi);
  o.get("mid_max_mi", c.mid_max_mi);
  o.get("min_charge_urgency", c.min_charge_urgency);
  o.finish();
  validate(c);
  return c;
}

Json to_json(const EnvConfig& c) {
  return {{"speed_mph", c.speed_mph},
          {"k_max", c.k_max},
          {"days", c.days},
          {"max_decisions_per_trip", c.max_decisions_per_trip},
          {"max_trip_distance_mi", c.max_trip_distance_mi},
          {"max_trips", c.max_trips},
          {"strict_available_only", c.strict_available_only},
          {"epsilon_tcd", c.epsilon_tcd},
          {"reward", to_json(c.reward)}};
}

EnvConfig env_config_from_json(const Json& j) {
  EnvConfig c;
  StrictObject o(j, "env");
  o.get("speed_mph", c.speed_mph);
  o.get("k_max", c.k_max);
  o.get("days", c.days);
  o.get("max_decisions_per_trip", c.max_decisions_per_trip);
  o.get("max_trip_distance_mi", c.max_trip_distance_mi);
  o.get("max_trips", c.max_trips);
  o.get("strict_available_only", c.strict_available_only);
  o.get("epsilon_tcd", c.epsilon_tcd);
  if (const Json* r = o.child("reward")) c.reward = reward_config_from_json(*r);
  o.finish();
  validate(c);
  return c;
}

Json to_json(const DqnConfig& c) {
  return {{"input_size", c.input_size},
          {"output_size", c.output_size},
          {"hidden", c.hidden},
          {"discount", c.discount},
          {"batch_size", c.batch_size},
          {"sync_every", c.sync_every},
          {"buffer_capacity", c.buffer_capacity},
          {"optimizer", to_string(c.optimizer.kind)},
          {"learning_rate", c.optimizer.learning_rate},
          {"beta1", c.optimizer.beta1},
          {"beta2", c.optimizer.beta2},
          {"adam_epsilon", c.optimizer.epsilon},
          {"max_grad_norm", c.optimizer.max_grad_norm},
          {"epsilon_start", c.exploration.epsilon_start},
          {"epsilon_decay", c.exploration.decay},
          {"epsilon_floor", c.exploration.epsilon_floor}};
}

DqnConfig dqn_config_from_json(const Json& j) {
  DqnConfig c;
  StrictObject o(j, "dqn");
  o.get("input_size", c.input_size);
  o.get("output_size", c.output_size);
  o.get("hidden", c.hidden);
  o.get("discount", c.discount);
  o.get("batch_size", c.batch_size);
  o.get("sync_every", c.sync_every);
  o.get("buffer_capacity", c.buffer_capacity);
  std::string kind = to_string(c.optimizer.kind);
  o.get("optimizer", kind);
  c.optimizer.kind = parse_optimizer(kind);
  o.get("learning_rate", c.optimizer.learning_rate);
  o.get("beta1", c.optimizer.beta1);
  o.get("beta2", c.optimizer.beta2);
  o.get("adam_epsilon", c.optimizer.epsilon);
  o.get("max_grad_norm", c.optimizer.max_grad_norm);
  o.get("epsilon_start", c.exploration.epsilon_start);
  o.get("epsilon_decay", c.exploration.decay);
  o.get("epsilon_floor", c.exploration.epsilon_floor);
  o.finish();
  validate(c);
  return c;
}

Json to_json(const CampaignConfig& c) {
  return {{"episodes", c.episodes},
          {"training_sets", c.training_sets},
          {"simulation_sets", c.simulation_sets},
          {"clusters", c.clusters},
          {"seed", c.seed},
          {"redraw_representatives", c.redraw_representatives},
          {"simulation_sample_fraction", c.simulation_sample_fraction},
          {"checkpoint_every", c.checkpoint_every},
          {"write_traces", c.write_traces},
          {"jobs", c.jobs},
          {"dqn", to_json(c.dqn)},
          {"env", to_json(c.env)}};
}

CampaignConfig campaign_config_from_json(const Json& j) {
  CampaignConfig c;
  StrictObject o(j, "campaign");
  o.get("episodes", c.episodes);
  o.get("training_sets", c.training_sets);
  o.get("simulation_sets", c.simulation_sets);
  o.get("clusters", c.clusters);
  o.get("seed", c.seed);
  o.get("redraw_representatives", c.redraw_representatives);
  o.get("simulation_sample_fraction", c.simulation_sample_fraction);
  o.get("checkpoint_every", c.checkpoint_every);
  o.get("write_traces", c.write_traces);
  o.get("jobs", c.jobs);
  if (const Json* d = o.child("dqn")) c.dqn = dqn_config_from_json(*d);
  if (const Json* e = o.child("env")) c.env = env_config_from_json(*e);
  o.finish();
  validate(c);
  return c;
}

Json to_json(const UsagePattern& u) {
  Json chargers = Json::array();
  for (const auto& [cid, list] : u.sessions) {
    Json windows = Json::array();
    for (const auto& s : list)
      windows.push_back({{"agent_id", s.agent_id},
                         {"arrive_min", s.arrive_min},
                         {"start_min", s.start_min},
                         {"end_min", s.end_min},
                         {"port", s.port}});
    chargers.push_back({{"charger_id", cid}, {"busy_windows", windows}});
  }
  return {{"episode", u.episode}, {"chargers", chargers}};
}

UsagePattern usage_from_json(const Json& j) {
  UsagePattern u;
  u.episode = j.value("episode", -1);
  for (const auto& c : j.at("chargers")) {
    const ChargerId cid = c.at("charger_id").get<ChargerId>();
    auto& list = u.sessions[cid];
    for (const auto& w : c.at("busy_windows")) {
      ChargingSession s;
      s.charger_id = cid;
      s.agent_id = w.value("agent_id", AgentId{0});
      s.start_min = w.at("start_min").get<double>();
      s.end_min = w.at("end_min").get<double>();
      s.arrive_min = w.value("arrive_min", s.start_min);
      s.port = w.value("port", 0);
      if (s.end_min < s.start_min) fail(ErrorKind::InvalidArgument, "busy window ends before it starts");
      list.push_back(s);
    }
  }
  return u;
}

Json to_json(const QNetwork& net) {
  Json layers = Json::array();
  for (std::size_t l = 0; l < net.layers(); ++l) {
    const auto& W = net.weights()[l];
    const auto& b = net.biases()[l];
    layers.push_back({{"W", std::vector<double>(W.data(), W.data() + W.size())},
                      {"b", std::vector<double>(b.data(), b.data() + b.size())}});
  }
  return {{"sizes", net.sizes()}, {"layers", layers}};
}

QNetwork network_from_json(const Json& j) {
  QNetwork net(j.at("sizes").get<std::vector<int>>());
  const auto& layers = j.at("layers");
  if (layers.size() != net.layers()) fail(ErrorKind::ArchitectureMismatch, "layer count");
  for (std::size_t l = 0; l < net.layers(); ++l) {
    const auto W = layers[l].at("W").get<std::vector<double>>();
    const auto b = layers[l].at("b").get<std::vector<double>>();
    auto& Wm = net.weights()[l];
    auto& bv = net.biases()[l];
    if (W.size() != static_cast<std::size_t>(Wm.size()) || b.size() != static_cast<std::size_t>(bv.size()))
      fail(ErrorKind::ArchitectureMismatch, "layer " + std::to_string(l) + " shape");
    std::copy(W.begin(), W.end(), Wm.data());
    std::copy(b.begin(), b.end(), bv.data());
  }
  return net;
}

namespace {

std::string mask_string(const ActionMask& m) {
  std::string s(m.size(), '0');
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) s[i] = '1';
  return s;
}

ActionMask parse_mask(const std::string& s) {
  ActionMask m(s.size(), false);
  for (std::size_t i = 0; i < s.size(); ++i) m[i] = s[i] == '1';
  return m;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Json to_json(const Policy& p, bool include_buffer) {
  Json j;
  j["config"] = to_json(p.config());
  j["net"] = to_json(p.net());
  j["target"] = to_json(p.target().net());
  j["sync_count"] = p.target().sync_count();
  j["train_steps"] = p.train_steps();
  j["optimizer_steps"] = p.optimizer().steps();
  if (p.optimizer().first_moment().size()) {
    j["adam_m"] = to_vec(p.optimizer().first_moment());
    j["adam_v"] = to_vec(p.optimizer().second_moment());
  }
  j["buffer_size"] = p.buffer().size();
  j["buffer_inserted"] = p.buffer().inserted();
  if (include_buffer) {
    Json items = Json::array();
    for (const Experience* e : p.buffer().ordered())
      items.push_back({to_vec(e->state), e->action, e->reward, to_vec(e->next_state),
                       mask_string(e->next_legal), e->terminal});
    j["buffer"] = std::move(items);
  }
  return j;
}

Policy policy_from_json(const Json& j, const DqnConfig& config) {
  Policy p(config, 0);
  QNetwork net = network_from_json(j.at("net"));
  if (!net.same_architecture(p.net())) fail(ErrorKind::ArchitectureMismatch, "checkpoint network");
  p.net() = std::move(net);
  p.target().net() = network_from_json(j.at("target"));
  p.target().set_sync_count(j.at("sync_count").get<std::int64_t>());
  p.set_train_steps(j.at("train_steps").get<std::int64_t>());
  p.optimizer().set_steps(j.at("optimizer_steps").get<std::int64_t>());
  if (j.contains("adam_m")) {
    p.optimizer().first_moment() = from_vec(j.at("adam_m").get<std::vector<double>>());
    p.optimizer().second_moment() = from_vec(j.at("adam_v").get<std::vector<double>>());
  }
  if (j.contains("buffer")) {
    std::vector<Experience> items;
    for (const auto& e : j.at("buffer")) {
      Experience x;
      x.state = from_vec(e.at(0).get<std::vector<double>>());
      x.action = e.at(1).get<int>();
      x.reward = e.at(2).get<double>();
      x.next_state = from_vec(e.at(3).get<std::vector<double>>());
      x.next_legal = parse_mask(e.at(4).get<std::string>());
      x.terminal = e.at(5).get<bool>();
      items.push_back(std::move(x));
    }
    p.buffer().restore(std::move(items), j.at("buffer_inserted").get<std::uint64_t>());
  }
  return p;
}

std::string group_key_string(const GroupKey& key) { return group_name(key); }

GroupKey parse_group_key(const std::string& text) {
  const auto dash = text.find('-');
  if (text.size() < 4 || text[0] != 'c' || dash == std::string::npos)
    fail(ErrorKind::InvalidArgument, "bad group key '" + text + "'");
  return {std::stoi(text.substr(1, dash - 1)), parse_purpose(text.substr(dash + 1))};
}

Json to_json(const GroupEpisodeStats& g) {
  return {{"group", group_key_string(g.key)},
          {"members", g.members},
          {"training_reward", g.training_reward},
          {"training_completion", g.training_completion},
          {"training_actions", g.training_actions},
          {"mean_loss", g.mean_loss},
          {"train_steps", g.train_steps},
          {"simulation_reward", g.simulation_reward},
          {"simulation_completion", g.simulation_completion},
          {"simulation_actions", g.simulation_actions}};
}

GroupEpisodeStats group_stats_from_json(const Json& j) {
  GroupEpisodeStats g;
  g.key = parse_group_key(j.at("group").get<std::string>());
  g.members = j.at("members").get<int>();
  g.training_reward = j.at("training_reward").get<double>();
  g.training_completion = j.at("training_completion").get<double>();
  g.training_actions = j.at("training_actions").get<std::vector<std::int64_t>>();
  g.mean_loss = j.at("mean_loss").get<double>();
  g.train_steps = j.at("train_steps").get<std::int64_t>();
  g.simulation_reward = j.at("simulation_reward").get<double>();
  g.simulation_completion = j.at("simulation_completion").get<double>();
  g.simulation_actions = j.at("simulation_actions").get<std::vector<std::int64_t>>();
  return g;
}

Json to_json(const EpisodeResult& r) {
  Json groups = Json::array();
  for (const auto& g : r.groups) groups.push_back(to_json(g));
  return {{"episode", r.episode},
          {"epsilon", r.epsilon},
          {"completion_rate", r.completion_rate},
          {"simulation_set_completion", r.simulation_set_completion},
          {"groups", groups}};
}

EpisodeResult episode_result_from_json(const Json& j) {
  EpisodeResult r;
  r.episode = j.at("episode").get<int>();
  r.epsilon = j.at("epsilon").get<double>();
  r.completion_rate = j.at("completion_rate").get<double>();
  r.simulation_set_completion = j.at("simulation_set_completion").get<std::vector<double>>();
  for (const auto& g : j.at("groups")) r.groups.push_back(group_stats_from_json(g));
  return r;
}

Json to_json(const DriverGroups& g) {
  Json groups = Json::object();
  for (const auto& [key, ids] : g.groups) groups[group_key_string(key)] = ids;
  Json centroids = Json::array(), raw = Json::array();
  const Eigen::MatrixXd denorm = denormalize(g.features, g.model.centroids);
  for (Eigen::Index c = 0; c < g.model.centroids.rows(); ++c) {
    Json row = Json::object(), rrow = Json::object();
    for (std::size_t f = 0; f < g.features.columns.size(); ++f) {
      row[g.features.columns[f]] = g.model.centroids(c, static_cast<Eigen::Index>(f));
      rrow[g.features.columns[f]] = denorm(c, static_cast<Eigen::Index>(f));
    }
    centroids.push_back(row);
    raw.push_back(rrow);
  }
  return {{"groups", groups},
          {"centroids_normalized", centroids},
          {"centroids", raw},
          {"inertia", g.model.inertia}};
}

Json to_json(const TraceEvent& e) {
  return {{"time", e.time_min}, {"agent_id", e.agent_id}, {"node", e.node}, {"soc", e.soc},
          {"action", e.action}, {"reward", e.reward},     {"status", e.status}};
}

Json to_json(const HexSocMap& m) {
  Json features = Json::array();
  const double a = m.edge_km;
  for (const auto& [key, cell] : m.cells) {
    Json ring = Json::array();
    for (int k = 0; k <= 6; ++k) {
      const double ang = M_PI / 3.0 * (k % 6);
      ring.push_back({cell.x_km + a * std::cos(ang), cell.y_km + a * std::sin(ang)});
    }
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", Json::array({ring})}}},
                        {"properties",
                         {{"q", cell.q}, {"r", cell.r}, {"mean_soc", cell.mean_soc()}, {"count", cell.count}}}});
  }
  return {{"type", "FeatureCollection"},
          {"schema_version", kSchemaVersion},
          {"cell_area_km2", m.cell_area_km2},
          {"features", features}};
}

Json to_json(const RiskReport& r) {
  Json nodes = Json::array();
  for (const auto& n : r.nodes)
    nodes.push_back({{"node", n.node}, {"charger_count", n.charger_count}, {"mean_soc", n.mean_soc}, {"cluster", n.cluster}});
  Json centroids = Json::array();
  for (Eigen::Index c = 0; c < r.model.centroids.rows(); ++c)
    centroids.push_back({{"charger_count", r.model.centroids(c, 0)}, {"mean_soc", r.model.centroids(c, 1)}});
  return {{"schema_version", kSchemaVersion},
          {"buffer_m", r.buffer_m},
          {"nodes", nodes},
          {"centroids_normalized", centroids},
          {"high_risk_cluster", r.high_risk_cluster},
          {"high_risk_nodes", r.high_risk_nodes}};
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    out << text;
    if (!out) fail(ErrorKind::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json_atomic(const std::filesystem::path& path, const Json& j) {
  write_text_atomic(path, j.dump(1) + "\n");
}

}  // namespace evsim
