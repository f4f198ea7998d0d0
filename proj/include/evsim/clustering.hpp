#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "evsim/scenario.hpp"

namespace evsim {

/// Rows are entities, columns named features. `min`/`max` record the
/// per-column range used by the last normalisation.
struct FeatureMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> columns;
  Eigen::RowVectorXd min;
  Eigen::RowVectorXd max;

  Eigen::Index rows() const { return values.rows(); }
};

/// Min-max scaling of every column to [0, 1]; constant columns map to 0.
FeatureMatrix normalize(const FeatureMatrix& raw);
Eigen::MatrixXd denormalize(const FeatureMatrix& normalized, const Eigen::MatrixXd& scaled);

struct ClusterModel {
  int k = 0;
  Eigen::MatrixXd centroids;  // k x features
  std::vector<int> assignments;
  double inertia = 0.0;
  int iterations = 0;
};

struct KMeansOptions {
  int max_iter = 300;
  /// Independent seeded restarts; the lowest-inertia run wins.
  int n_init = 10;
};

ClusterModel kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                    const KMeansOptions& options = {});

/// Sum of squared distances of each point to its assigned centroid.
double inertia(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
               const std::vector<int>& assignments);

std::vector<std::pair<int, double>> elbow_scan(const Eigen::MatrixXd& points,
                                               const std::vector<int>& k_range, std::uint64_t seed,
                                               const KMeansOptions& options = {});

/// The k maximising the discrete second difference of inertia.
int suggest_elbow(const std::vector<std::pair<int, double>>& scan);

/// Mean silhouette coefficient of a labelling.
double silhouette(const Eigen::MatrixXd& points, const std::vector<int>& labels);

/// Group key: (cluster index 1..k, trip purpose).
using GroupKey = std::pair<int, TripPurpose>;

struct DriverGroups {
  std::map<GroupKey, std::vector<AgentId>> groups;
  ClusterModel model;
  FeatureMatrix features;  // normalised, row order = agent order

  std::vector<GroupKey> keys() const;
  const std::vector<AgentId>& members(const GroupKey& key) const;
  GroupKey group_of(AgentId id) const;
};

std::string group_name(const GroupKey& key);

/// Columns: total trip distance, initial SOC, TCD, CD.
FeatureMatrix driver_features(const std::vector<DriverAgent>& agents);

/// Five-way k-means on the normalised driver features, each cluster split by
/// the purpose of the agent's first trip.
DriverGroups cluster_drivers(const std::vector<DriverAgent>& agents, std::uint64_t seed,
                             int clusters = 5);

/// Exact natural-breaks classification; returns class upper bounds, ascending.
std::vector<double> jenks_breaks(std::vector<double> values, int classes);

/// Class index of `value` under `breaks` (first bound >= value).
int classify(double value, const std::vector<double>& breaks);

}  // namespace evsim
