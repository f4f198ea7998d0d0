#include "evsim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace evsim {

double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) fail(ErrorKind::DimensionMismatch, "series lengths differ");
  if (x.size() < 2) fail(ErrorKind::TooFewValues, "correlation needs at least two values");
  const Eigen::ArrayXd dx = x.array() - x.mean();
  const Eigen::ArrayXd dy = y.array() - y.mean();
  const double sxx = dx.square().sum();
  const double syy = dy.square().sum();
  if (sxx == 0.0 || syy == 0.0) fail(ErrorKind::ZeroVariance, "constant series");
  return std::clamp((dx * dy).sum() / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

double spatial_correlation(const UsageMap& sim, const UsageMap& ref) {
  if (sim.size() != ref.size()) fail(ErrorKind::KeyMismatch, "maps cover different units");
  Eigen::VectorXd x(static_cast<Eigen::Index>(sim.size())), y(x.size());
  Eigen::Index i = 0;
  for (const auto& [key, value] : sim) {
    auto it = ref.find(key);
    if (it == ref.end()) fail(ErrorKind::KeyMismatch, "unit " + std::to_string(key) + " missing from reference");
    x(i) = value;
    y(i) = it->second;
    ++i;
  }
  return pearson(x, y);
}

double temporal_cross_correlation(const Eigen::VectorXd& z, const Eigen::VectorXd& x, int lag) {
  if (z.size() != x.size()) fail(ErrorKind::DimensionMismatch, "series lengths differ");
  const Eigen::Index n = z.size();
  const Eigen::Index lo = std::max<Eigen::Index>(0, lag);
  const Eigen::Index hi = std::min<Eigen::Index>(n, n + lag);
  if (hi - lo < 2) fail(ErrorKind::InsufficientOverlap, "lag " + std::to_string(lag) + " leaves fewer than two pairs");
  return pearson(z.segment(lo, hi - lo), x.segment(lo - lag, hi - lo));
}

LagScan lag_scan(const Eigen::VectorXd& z, const Eigen::VectorXd& x, int max_lag) {
  if (max_lag < 0) fail(ErrorKind::InvalidArgument, "max_lag must be >= 0");
  LagScan out;
  out.best_r = -std::numeric_limits<double>::infinity();
  for (int L = -max_lag; L <= max_lag; ++L) {
    double r;
    try {
      r = temporal_cross_correlation(z, x, L);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ZeroVariance || e.kind() == ErrorKind::InsufficientOverlap) continue;
      throw;
    }
    out.curve.emplace_back(L, r);
    if (r > out.best_r) {
      out.best_r = r;
      out.best_lag = L;
    }
  }
  if (out.curve.empty()) fail(ErrorKind::ZeroVariance, "no lag with varying overlap");
  return out;
}

UsageMap usage_map(const UsagePattern& usage, const std::vector<Charger>& chargers, double from_min,
                   double to_min) {
  UsageMap m;
  for (const auto& c : chargers) m[c.charger_id] = 0.0;
  for (const auto& [cid, list] : usage.sessions) {
    for (const auto& s : list) {
      const double overlap = std::min(s.end_min, to_min) - std::max(s.start_min, from_min);
      if (overlap > 0.0) m[cid] += overlap;
    }
  }
  return m;
}

UsageSeries usage_series(const UsagePattern& usage, double interval_min, double horizon_min) {
  if (!(interval_min > 0.0)) fail(ErrorKind::InvalidArgument, "interval must be > 0");
  UsageSeries s;
  s.interval_min = interval_min;
  const auto n = static_cast<Eigen::Index>(std::ceil(horizon_min / interval_min));
  s.values = Eigen::VectorXd::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * interval_min;
    for (const auto& [_, list] : usage.sessions) {
      const bool busy = std::any_of(list.begin(), list.end(),
                                    [t](const ChargingSession& x) { return x.start_min <= t && t < x.end_min; });
      s.values(k) += busy;
    }
  }
  return s;
}

double hex_edge_for_area(double cell_area_km2) {
  if (!(cell_area_km2 > 0.0)) fail(ErrorKind::InvalidArgument, "cell area must be > 0");
  return std::sqrt(2.0 * cell_area_km2 / (3.0 * std::sqrt(3.0)));
}

std::pair<int, int> hex_cell_of(double x, double y, double a) {
  const double fq = (2.0 / 3.0 * x) / a;
  const double fr = (-1.0 / 3.0 * x + std::sqrt(3.0) / 3.0 * y) / a;
  const double fs = -fq - fr;
  double q = std::round(fq), r = std::round(fr), s = std::round(fs);
  const double dq = std::abs(q - fq), dr = std::abs(r - fr), ds = std::abs(s - fs);
  if (dq > dr && dq > ds)
    q = -r - s;
  else if (dr > ds)
    r = -q - s;
  return {static_cast<int>(q), static_cast<int>(r)};
}

Eigen::Vector2d hex_center(int q, int r, double a) {
  return {a * 1.5 * q, a * std::sqrt(3.0) * (r + q / 2.0)};
}

HexSocMap hex_aggregate(const std::vector<PlanarObservation>& observations, double cell_area_km2) {
  HexSocMap m;
  m.cell_area_km2 = cell_area_km2;
  m.edge_km = hex_edge_for_area(cell_area_km2);
  for (const auto& o : observations) {
    const auto key = hex_cell_of(o.x_km, o.y_km, m.edge_km);
    auto [it, inserted] = m.cells.try_emplace(key);
    HexCell& cell = it->second;
    if (inserted) {
      const Eigen::Vector2d c = hex_center(key.first, key.second, m.edge_km);
      cell.q = key.first;
      cell.r = key.second;
      cell.x_km = c.x();
      cell.y_km = c.y();
    }
    cell.soc_sum += o.soc;
    ++cell.count;
  }
  return m;
}

SocCategories low_soc_categories(const HexSocMap& hex, int classes) {
  std::vector<double> means;
  std::set<double> distinct;
  for (const auto& [_, cell] : hex.cells) {
    means.push_back(cell.mean_soc());
    distinct.insert(cell.mean_soc());
  }
  if (static_cast<int>(distinct.size()) < classes)
    fail(ErrorKind::TooFewValues, std::to_string(distinct.size()) + " distinct cell means for " +
                                      std::to_string(classes) + " classes");
  SocCategories out;
  out.breaks = jenks_breaks(means, classes);
  for (const auto& [key, cell] : hex.cells) {
    const int label = classify(cell.mean_soc(), out.breaks);
    out.labels[key] = label;
    if (label == 0) out.lowest.push_back(key);
  }
  return out;
}

std::vector<int> buffer_counts(const std::vector<NodeId>& nodes, const RoadGraph& graph,
                               const std::vector<Charger>& chargers, double buffer_m) {
  if (!(buffer_m > 0.0)) fail(ErrorKind::InvalidArgument, "buffer must be > 0");
  std::vector<Point> sites;
  for (const auto& c : chargers) sites.push_back(graph.position(graph.index_of(c.node_id)));
  std::vector<int> out;
  out.reserve(nodes.size());
  for (NodeId id : nodes) {
    const Point p = graph.position(graph.index_of(id));
    int n = 0;
    for (const auto& s : sites) n += (p - s).norm() * 1000.0 <= buffer_m;
    out.push_back(n);
  }
  return out;
}

RiskReport risk_areas(const std::vector<std::pair<NodeId, double>>& node_soc,
                      const std::vector<Charger>& chargers, const RoadGraph& graph, double buffer_m,
                      std::uint64_t seed, int clusters) {
  RiskReport rep;
  rep.buffer_m = buffer_m;
  std::vector<NodeId> ids;
  for (const auto& [id, _] : node_soc) ids.push_back(id);
  const auto counts = buffer_counts(ids, graph, chargers, buffer_m);

  FeatureMatrix f;
  f.columns = {"charger_count", "mean_soc"};
  f.values.resize(static_cast<Eigen::Index>(ids.size()), 2);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    f.values(static_cast<Eigen::Index>(i), 0) = counts[i];
    f.values(static_cast<Eigen::Index>(i), 1) = node_soc[i].second;
  }
  const FeatureMatrix norm = normalize(f);
  rep.model = kmeans(norm.values, clusters, seed);
  double best = std::numeric_limits<double>::infinity();
  for (int c = 0; c < rep.model.k; ++c) {
    const double score = rep.model.centroids(c, 0) + rep.model.centroids(c, 1);
    if (score < best) {
      best = score;
      rep.high_risk_cluster = c;
    }
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    rep.nodes.push_back({ids[i], counts[i], node_soc[i].second, rep.model.assignments[i]});
    if (rep.model.assignments[i] == rep.high_risk_cluster) rep.high_risk_nodes.push_back(ids[i]);
  }
  return rep;
}

std::vector<std::pair<NodeId, double>> mean_soc_by_node(const std::vector<SocObservation>& obs) {
  std::map<NodeId, std::pair<double, int>> acc;
  for (const auto& o : obs) {
    auto& [sum, n] = acc[o.node];
    sum += o.soc;
    ++n;
  }
  std::vector<std::pair<NodeId, double>> out;
  for (const auto& [id, v] : acc) out.emplace_back(id, v.first / v.second);
  return out;
}

}  // namespace evsim
