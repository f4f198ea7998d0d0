#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "evsim/clustering.hpp"
#include "evsim/environment.hpp"
#include "evsim/road_network.hpp"
#include "evsim/scenario.hpp"

namespace evsim {

/// Busy minutes per spatial unit (charger id or cell id).
using UsageMap = std::map<std::int64_t, double>;

/// Pearson correlation of two equal-length vectors.
double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Pearson r over matching keys; KeyMismatch if the key sets differ.
double spatial_correlation(const UsageMap& sim, const UsageMap& ref);

struct UsageSeries {
  double interval_min = 15.0;
  Eigen::VectorXd values;
};

/// r between z_t and x_{t-L} over the overlap, each series centred on its
/// own mean within the overlap.
double temporal_cross_correlation(const Eigen::VectorXd& z, const Eigen::VectorXd& x, int lag);

struct LagScan {
  std::vector<std::pair<int, double>> curve;
  int best_lag = 0;
  double best_r = 0.0;
};

/// Lags in [-max_lag, max_lag]; lags whose overlap has zero variance are skipped.
LagScan lag_scan(const Eigen::VectorXd& z, const Eigen::VectorXd& x, int max_lag);

/// Busy minutes per charger within [from, to); chargers without sessions map to 0.
UsageMap usage_map(const UsagePattern& usage, const std::vector<Charger>& chargers,
                   double from_min = 0.0, double to_min = 1440.0);

/// Number of chargers with at least one active session at each sample instant.
UsageSeries usage_series(const UsagePattern& usage, double interval_min = 15.0,
                         double horizon_min = 1440.0);

inline constexpr double kHexAreaFine = 5.2;
inline constexpr double kHexAreaCoarse = 36.1;

struct HexCell {
  int q = 0;
  int r = 0;
  double x_km = 0.0;
  double y_km = 0.0;
  double soc_sum = 0.0;
  int count = 0;

  double mean_soc() const { return count ? soc_sum / count : 0.0; }
};

/// Flat-top hexagonal binning on the plane.
struct HexSocMap {
  double cell_area_km2 = kHexAreaFine;
  double edge_km = 0.0;
  std::map<std::pair<int, int>, HexCell> cells;
};

double hex_edge_for_area(double cell_area_km2);
/// Axial coordinates of the cell containing (x, y).
std::pair<int, int> hex_cell_of(double x_km, double y_km, double edge_km);
Eigen::Vector2d hex_center(int q, int r, double edge_km);

struct PlanarObservation {
  double x_km = 0.0;
  double y_km = 0.0;
  double soc = 0.0;
};

HexSocMap hex_aggregate(const std::vector<PlanarObservation>& observations, double cell_area_km2);

struct SocCategories {
  std::vector<double> breaks;
  std::map<std::pair<int, int>, int> labels;  // class 0 = lowest SOC
  std::vector<std::pair<int, int>> lowest;
};

SocCategories low_soc_categories(const HexSocMap& hex, int classes = 5);

struct RiskNode {
  NodeId node = 0;
  int charger_count = 0;
  double mean_soc = 0.0;
  int cluster = 0;
};

struct RiskReport {
  double buffer_m = 1000.0;
  std::vector<RiskNode> nodes;
  ClusterModel model;  // fitted on normalised (count, soc)
  int high_risk_cluster = 0;
  std::vector<NodeId> high_risk_nodes;
};

/// Chargers within a Euclidean radius of each node.
std::vector<int> buffer_counts(const std::vector<NodeId>& nodes, const RoadGraph& graph,
                               const std::vector<Charger>& chargers, double buffer_m);

RiskReport risk_areas(const std::vector<std::pair<NodeId, double>>& node_soc,
                      const std::vector<Charger>& chargers, const RoadGraph& graph,
                      double buffer_m, std::uint64_t seed, int clusters = 3);

/// Mean SOC per node from raw pass observations, ordered by node id.
std::vector<std::pair<NodeId, double>> mean_soc_by_node(const std::vector<SocObservation>& obs);

}  // namespace evsim
