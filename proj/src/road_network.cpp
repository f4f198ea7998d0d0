#include "evsim/road_network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

#include "evsim/core.hpp"

namespace evsim {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double tie_tolerance(double scale) { return 1e-9 * std::max(1.0, std::abs(scale)); }

// Canonical first hop from `from` toward the target whose distance field is
// `dist_to_target`: the smallest-index neighbour lying on a shortest path.
template <typename DistFn>
std::size_t canonical_hop(const RoadGraph& graph, std::size_t from, DistFn dist_to_target) {
  const double here = dist_to_target(from);
  const double tol = tie_tolerance(here);
  for (const auto& arc : graph.arcs(from)) {
    if (std::abs(arc.length_mi + dist_to_target(arc.to) - here) <= tol) return arc.to;
  }
  fail(ErrorKind::InternalInconsistency, "no shortest-path successor found");
}

}  // namespace

RoadGraph::RoadGraph(std::vector<Node> nodes, std::vector<Edge> edges,
                     std::vector<ChargerPlacement> chargers)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), chargers_(std::move(chargers)) {
  std::sort(nodes_.begin(), nodes_.end(),
            [](const Node& l, const Node& r) { return l.id < r.id; });
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!std::isfinite(nodes_[i].x_km) || !std::isfinite(nodes_[i].y_km))
      fail(ErrorKind::InvalidGraph, "non-finite coordinate at node " + std::to_string(nodes_[i].id));
    if (!index_.emplace(nodes_[i].id, i).second)
      fail(ErrorKind::InvalidGraph, "duplicate node id " + std::to_string(nodes_[i].id));
  }
  adjacency_.resize(nodes_.size());
  for (const auto& e : edges_) {
    auto ia = index_.find(e.a);
    auto ib = index_.find(e.b);
    if (ia == index_.end() || ib == index_.end())
      fail(ErrorKind::InvalidGraph, "edge references missing node " +
                                        std::to_string(ia == index_.end() ? e.a : e.b));
    if (ia->second == ib->second)
      fail(ErrorKind::InvalidGraph, "self loop at node " + std::to_string(e.a));
    if (!(e.length_mi > 0.0) || !std::isfinite(e.length_mi))
      fail(ErrorKind::InvalidGraph, "edge length must be positive and finite");
    const double euclid_mi =
        (position(ia->second) - position(ib->second)).norm() / kKmPerMile;
    if (e.length_mi < euclid_mi - 1e-9)
      fail(ErrorKind::InvalidGraph, "edge " + std::to_string(e.a) + "-" + std::to_string(e.b) +
                                        " shorter than straight-line distance");
    adjacency_[ia->second].push_back({ib->second, e.length_mi});
    adjacency_[ib->second].push_back({ia->second, e.length_mi});
  }
  for (auto& arcs : adjacency_) {
    std::sort(arcs.begin(), arcs.end(), [](const Arc& l, const Arc& r) {
      return l.to != r.to ? l.to < r.to : l.length_mi < r.length_mi;
    });
  }
  for (const auto& c : chargers_) {
    auto it = index_.find(c.node_id);
    if (it == index_.end())
      fail(ErrorKind::InvalidGraph, "charger on missing node " + std::to_string(c.node_id));
    if (!charger_by_node_.emplace(it->second, c.charger_id).second)
      fail(ErrorKind::InvalidGraph, "two chargers on node " + std::to_string(c.node_id));
    if (!node_by_charger_.emplace(c.charger_id, it->second).second)
      fail(ErrorKind::InvalidGraph, "duplicate charger id " + std::to_string(c.charger_id));
  }
}

std::size_t RoadGraph::index_of(NodeId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) fail(ErrorKind::UnknownNode, "node " + std::to_string(id));
  return it->second;
}

std::optional<ChargerId> RoadGraph::charger_at(std::size_t index) const {
  auto it = charger_by_node_.find(index);
  if (it == charger_by_node_.end()) return std::nullopt;
  return it->second;
}

std::size_t RoadGraph::charger_node(ChargerId id) const {
  auto it = node_by_charger_.find(id);
  if (it == node_by_charger_.end())
    fail(ErrorKind::InvalidArgument, "unknown charger " + std::to_string(id));
  return it->second;
}

std::vector<double> distances_from(const RoadGraph& graph, std::size_t source) {
  std::vector<double> dist(graph.size(), kInf);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> frontier;
  dist[source] = 0.0;
  frontier.emplace(0.0, source);
  while (!frontier.empty()) {
    auto [d, u] = frontier.top();
    frontier.pop();
    if (d > dist[u]) continue;
    for (const auto& arc : graph.arcs(u)) {
      const double nd = d + arc.length_mi;
      if (nd < dist[arc.to]) {
        dist[arc.to] = nd;
        frontier.emplace(nd, arc.to);
      }
    }
  }
  return dist;
}

Path shortest_path(const RoadGraph& graph, NodeId origin, NodeId dest) {
  const std::size_t from = graph.index_of(origin);
  const std::size_t to = graph.index_of(dest);
  const auto to_dest = distances_from(graph, to);
  if (!std::isfinite(to_dest[from]))
    fail(ErrorKind::NoPath, std::to_string(origin) + " -> " + std::to_string(dest));

  Path path;
  path.nodes.push_back(origin);
  std::size_t cur = from;
  while (cur != to) {
    const std::size_t next =
        canonical_hop(graph, cur, [&](std::size_t v) { return to_dest[v]; });
    for (const auto& arc : graph.arcs(cur)) {
      if (arc.to == next) {
        path.total_length_mi += arc.length_mi;
        break;
      }
    }
    path.nodes.push_back(graph.id_of(next));
    cur = next;
  }
  return path;
}

double point_segment_distance(const Point& p, const Point& a, const Point& b) {
  const Point ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

namespace {

double cross(const Point& u, const Point& v) { return u.x() * v.y() - u.y() * v.x(); }

bool segments_intersect(const Point& a0, const Point& a1, const Point& b0, const Point& b1) {
  const Point r = a1 - a0;
  const Point s = b1 - b0;
  const double denom = cross(r, s);
  const Point qp = b0 - a0;
  if (denom == 0.0) return false;  // parallel: handled by endpoint distances
  const double t = cross(qp, s) / denom;
  const double u = cross(qp, r) / denom;
  return t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0;
}

std::vector<Point> polyline(const Path& path, const RoadGraph& graph) {
  std::vector<Point> pts;
  pts.reserve(path.nodes.size());
  for (NodeId id : path.nodes) pts.push_back(graph.position(graph.index_of(id)));
  return pts;
}

}  // namespace

double segment_segment_distance(const Point& a0, const Point& a1, const Point& b0,
                                const Point& b1) {
  if (segments_intersect(a0, a1, b0, b1)) return 0.0;
  return std::min({point_segment_distance(a0, b0, b1), point_segment_distance(a1, b0, b1),
                   point_segment_distance(b0, a0, a1), point_segment_distance(b1, a0, a1)});
}

double distance_to_path(const Point& point, const Path& path, const RoadGraph& graph) {
  if (path.nodes.empty()) fail(ErrorKind::EmptyPath, "distance_to_path on zero-node path");
  const auto pts = polyline(path, graph);
  double best = (point - pts.front()).norm();
  for (std::size_t i = 1; i < pts.size(); ++i)
    best = std::min(best, point_segment_distance(point, pts[i - 1], pts[i]));
  return best * 1000.0;
}

double path_separation(const Path& a, const Path& b, const RoadGraph& graph) {
  if (a.nodes.empty() || b.nodes.empty())
    fail(ErrorKind::EmptyPath, "path_separation on zero-node path");
  const auto pa = polyline(a, graph);
  const auto pb = polyline(b, graph);
  // Degenerate single-node paths become zero-length segments.
  const auto segment = [](const std::vector<Point>& pts, std::size_t i) {
    return pts.size() == 1 ? std::pair{pts[0], pts[0]} : std::pair{pts[i], pts[i + 1]};
  };
  const std::size_t na = std::max<std::size_t>(1, pa.size() - 1);
  const std::size_t nb = std::max<std::size_t>(1, pb.size() - 1);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < na; ++i) {
    const auto [a0, a1] = segment(pa, i);
    for (std::size_t j = 0; j < nb; ++j) {
      const auto [b0, b1] = segment(pb, j);
      best = std::min(best, segment_segment_distance(a0, a1, b0, b1));
      if (best == 0.0) return 0.0;
    }
  }
  return best * 1000.0;
}

std::set<ChargerId> reachable_chargers(const RoadGraph& graph, NodeId position,
                                       double range_mi) {
  const std::size_t from = graph.index_of(position);
  if (!(range_mi >= 0.0)) fail(ErrorKind::InvalidArgument, "range must be >= 0");
  const auto dist = distances_from(graph, from);
  std::set<ChargerId> out;
  for (const auto& c : graph.chargers()) {
    if (dist[graph.index_of(c.node_id)] <= range_mi) out.insert(c.charger_id);
  }
  return out;
}

RouteTable::RouteTable(const RoadGraph& graph)
    : graph_(&graph),
      dist_(static_cast<Eigen::Index>(graph.size()), static_cast<Eigen::Index>(graph.size())) {
  for (std::size_t s = 0; s < graph.size(); ++s) {
    const auto d = distances_from(graph, s);
    for (std::size_t t = 0; t < graph.size(); ++t)
      dist_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) = d[t];
  }
}

std::size_t RouteTable::next_hop(std::size_t from, std::size_t to) const {
  if (from == to) return from;
  if (!std::isfinite(distance(from, to)))
    fail(ErrorKind::NoPath, std::to_string(graph_->id_of(from)) + " -> " +
                                std::to_string(graph_->id_of(to)));
  return canonical_hop(*graph_, from, [&](std::size_t v) { return distance(v, to); });
}

Path RouteTable::path(std::size_t from, std::size_t to) const {
  Path p;
  p.nodes.push_back(graph_->id_of(from));
  std::size_t cur = from;
  while (cur != to) {
    const std::size_t next = next_hop(cur, to);
    for (const auto& arc : graph_->arcs(cur)) {
      if (arc.to == next) {
        p.total_length_mi += arc.length_mi;
        break;
      }
    }
    p.nodes.push_back(graph_->id_of(next));
    cur = next;
  }
  return p;
}

}  // namespace evsim
