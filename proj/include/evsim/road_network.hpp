#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace evsim {

using NodeId = std::int64_t;
using ChargerId = std::int64_t;

/// Planar position in kilometres.
using Point = Eigen::Vector2d;

struct Node {
  NodeId id = 0;
  double x_km = 0.0;
  double y_km = 0.0;
};

struct Edge {
  NodeId a = 0;
  NodeId b = 0;
  double length_mi = 0.0;
};

struct ChargerPlacement {
  NodeId node_id = 0;
  ChargerId charger_id = 0;
};

/// Immutable undirected road graph. Nodes are stored in ascending id order so
/// that dense indices compare the same way ids do.
class RoadGraph {
 public:
  struct Arc {
    std::size_t to;
    double length_mi;
  };

  RoadGraph() = default;
  RoadGraph(std::vector<Node> nodes, std::vector<Edge> edges,
            std::vector<ChargerPlacement> chargers = {});

  std::size_t size() const { return nodes_.size(); }
  bool contains(NodeId id) const { return index_.count(id) != 0; }
  std::size_t index_of(NodeId id) const;
  const Node& node(std::size_t index) const { return nodes_[index]; }
  NodeId id_of(std::size_t index) const { return nodes_[index].id; }
  Point position(std::size_t index) const {
    return {nodes_[index].x_km, nodes_[index].y_km};
  }

  /// Neighbours sorted by index, i.e. by node id.
  std::span<const Arc> arcs(std::size_t index) const { return adjacency_[index]; }

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<ChargerPlacement>& chargers() const { return chargers_; }
  std::optional<ChargerId> charger_at(std::size_t index) const;
  std::size_t charger_node(ChargerId id) const;

 private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<ChargerPlacement> chargers_;
  std::unordered_map<NodeId, std::size_t> index_;
  std::vector<std::vector<Arc>> adjacency_;
  std::unordered_map<std::size_t, ChargerId> charger_by_node_;
  std::unordered_map<ChargerId, std::size_t> node_by_charger_;
};

struct Path {
  std::vector<NodeId> nodes;
  double total_length_mi = 0.0;
};

/// Single-source Dijkstra over dense indices; unreachable entries are +inf.
std::vector<double> distances_from(const RoadGraph& graph, std::size_t source);

/// Minimum-length path; among equal-length paths the lexicographically
/// smallest node sequence is returned.
Path shortest_path(const RoadGraph& graph, NodeId origin, NodeId dest);

/// Minimum Euclidean distance in metres from `point` (km) to the path polyline.
double distance_to_path(const Point& point, const Path& path, const RoadGraph& graph);

/// Minimum distance in metres between two path polylines (0 when they cross).
double path_separation(const Path& a, const Path& b, const RoadGraph& graph);

/// Chargers whose shortest-path distance from `position` is at most `range_mi`.
std::set<ChargerId> reachable_chargers(const RoadGraph& graph, NodeId position,
                                       double range_mi);

double point_segment_distance(const Point& p, const Point& a, const Point& b);
double segment_segment_distance(const Point& a0, const Point& a1, const Point& b0,
                                const Point& b1);

/// All-pairs shortest distances with the same tie-break as `shortest_path`,
/// used by the simulator to route one hop at a time.
class RouteTable {
 public:
  explicit RouteTable(const RoadGraph& graph);

  double distance(std::size_t from, std::size_t to) const {
    return dist_(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(to));
  }
  /// First hop of the canonical shortest path; `from` when from == to.
  std::size_t next_hop(std::size_t from, std::size_t to) const;
  Path path(std::size_t from, std::size_t to) const;
  const RoadGraph& graph() const { return *graph_; }

 private:
  const RoadGraph* graph_;
  Eigen::MatrixXd dist_;
};

}  // namespace evsim
