#include "evsim/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

namespace evsim {

FeatureMatrix normalize(const FeatureMatrix& raw) {
  FeatureMatrix out = raw;
  if (raw.values.rows() == 0) {
    out.min = Eigen::RowVectorXd::Zero(raw.values.cols());
    out.max = out.min;
    return out;
  }
  out.min = raw.values.colwise().minCoeff();
  out.max = raw.values.colwise().maxCoeff();
  for (Eigen::Index j = 0; j < raw.values.cols(); ++j) {
    const double span = out.max(j) - out.min(j);
    if (span > 0.0)
      out.values.col(j) = (raw.values.col(j).array() - out.min(j)) / span;
    else
      out.values.col(j).setZero();
  }
  return out;
}

Eigen::MatrixXd denormalize(const FeatureMatrix& normalized, const Eigen::MatrixXd& scaled) {
  Eigen::MatrixXd out = scaled;
  for (Eigen::Index j = 0; j < scaled.cols(); ++j)
    out.col(j) = scaled.col(j).array() * (normalized.max(j) - normalized.min(j)) + normalized.min(j);
  return out;
}

double inertia(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
               const std::vector<int>& assignments) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    total += (points.row(i) - centroids.row(assignments[i])).squaredNorm();
  return total;
}

namespace {

int nearest(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& p) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

ClusterModel lloyd(const Eigen::MatrixXd& X, int k, Rng& rng, int max_iter) {
  const Eigen::Index n = X.rows();
  ClusterModel m;
  m.k = k;
  // Random distinct rows as starting centroids.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(order[i], order[j]);
  }
  m.centroids.resize(k, X.cols());
  for (int c = 0; c < k; ++c) m.centroids.row(c) = X.row(order[c]);

  m.assignments.assign(static_cast<std::size_t>(n), -1);
  double previous = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = nearest(m.centroids, X.row(i));
      if (c != m.assignments[i]) {
        m.assignments[i] = c;
        changed = true;
      }
    }
    m.iterations = iter + 1;
    if (!changed) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, X.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(m.assignments[i]) += X.row(i);
      ++counts[m.assignments[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        m.centroids.row(c) = sums.row(c) / counts[c];
        continue;
      }
      // Empty cluster: move it onto the point farthest from its centroid.
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = (X.row(i) - m.centroids.row(m.assignments[i])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      m.centroids.row(c) = X.row(far);
      m.assignments[far] = c;
    }
    const double now = inertia(X, m.centroids, m.assignments);
    if (now > previous + 1e-9 * std::max(1.0, previous))
      fail(ErrorKind::InternalInconsistency, "k-means inertia increased");
    previous = now;
  }
  m.inertia = inertia(X, m.centroids, m.assignments);
  return m;
}

}  // namespace

ClusterModel kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                    const KMeansOptions& options) {
  if (k < 1) fail(ErrorKind::InvalidArgument, "k must be >= 1");
  if (k > points.rows())
    fail(ErrorKind::TooFewPoints, "k = " + std::to_string(k) + " exceeds " +
                                      std::to_string(points.rows()) + " points");
  if (!points.allFinite()) fail(ErrorKind::InvalidArgument, "features must be finite");
  ClusterModel best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int run = 0; run < std::max(1, options.n_init); ++run) {
    Rng rng(derive_seed(seed, run));
    ClusterModel m = lloyd(points, k, rng, options.max_iter);
    if (m.inertia < best.inertia) best = std::move(m);
  }
  return best;
}

std::vector<std::pair<int, double>> elbow_scan(const Eigen::MatrixXd& points,
                                               const std::vector<int>& k_range, std::uint64_t seed,
                                               const KMeansOptions& options) {
  if (k_range.empty()) fail(ErrorKind::InvalidArgument, "empty k range");
  std::vector<std::pair<int, double>> out;
  for (int k : k_range) out.emplace_back(k, kmeans(points, k, seed, options).inertia);
  return out;
}

int suggest_elbow(const std::vector<std::pair<int, double>>& scan) {
  if (scan.size() < 3) return scan.empty() ? 0 : scan.front().first;
  int best = scan[1].first;
  double best_d2 = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < scan.size(); ++i) {
    const double d2 = scan[i - 1].second - 2.0 * scan[i].second + scan[i + 1].second;
    if (d2 > best_d2) {
      best_d2 = d2;
      best = scan[i].first;
    }
  }
  return best;
}

double silhouette(const Eigen::MatrixXd& X, const std::vector<int>& labels) {
  const Eigen::Index n = X.rows();
  const int k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      sum[labels[j]] += (X.row(i) - X.row(j)).norm();
      ++count[labels[j]];
    }
    if (count[labels[i]] == 0) continue;  // singleton cluster scores 0
    const double a = sum[labels[i]] / count[labels[i]];
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != labels[i] && count[c] > 0) b = std::min(b, sum[c] / count[c]);
    if (std::isfinite(b) && std::max(a, b) > 0.0) total += (b - a) / std::max(a, b);
  }
  return n > 0 ? total / static_cast<double>(n) : 0.0;
}

std::vector<GroupKey> DriverGroups::keys() const {
  std::vector<GroupKey> out;
  for (const auto& [key, _] : groups) out.push_back(key);
  return out;
}

const std::vector<AgentId>& DriverGroups::members(const GroupKey& key) const {
  auto it = groups.find(key);
  if (it == groups.end()) fail(ErrorKind::InvalidArgument, "unknown group " + group_name(key));
  return it->second;
}

GroupKey DriverGroups::group_of(AgentId id) const {
  for (const auto& [key, ids] : groups)
    if (std::find(ids.begin(), ids.end(), id) != ids.end()) return key;
  fail(ErrorKind::InvalidArgument, "agent " + std::to_string(id) + " is in no group");
}

std::string group_name(const GroupKey& key) {
  return "c" + std::to_string(key.first) + "-" + to_string(key.second);
}

FeatureMatrix driver_features(const std::vector<DriverAgent>& agents) {
  FeatureMatrix f;
  f.columns = {"total_distance_mi", "initial_soc", "tcd", "cd"};
  f.values.resize(static_cast<Eigen::Index>(agents.size()), 4);
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    f.values(r, 0) = agents[i].total_distance_mi();
    f.values(r, 1) = agents[i].soc;
    f.values(r, 2) = agents[i].tcd;
    f.values(r, 3) = agents[i].cd;
  }
  return f;
}

DriverGroups cluster_drivers(const std::vector<DriverAgent>& agents, std::uint64_t seed,
                             int clusters) {
  if (static_cast<int>(agents.size()) < clusters)
    fail(ErrorKind::TooFewPoints, std::to_string(agents.size()) + " agents for " +
                                      std::to_string(clusters) + " clusters");
  for (const auto& a : agents)
    if (a.trips.empty()) fail(ErrorKind::InvalidArgument, "agent without trips");
  DriverGroups g;
  g.features = normalize(driver_features(agents));
  g.model = kmeans(g.features.values, clusters, seed);
  for (int c = 1; c <= clusters; ++c) {
    g.groups[{c, TripPurpose::Work}];
    g.groups[{c, TripPurpose::Leisure}];
  }
  bool work = false, leisure = false;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const TripPurpose p = agents[i].trips.front().purpose;
    (p == TripPurpose::Work ? work : leisure) = true;
    g.groups[{g.model.assignments[i] + 1, p}].push_back(agents[i].agent_id);
  }
  if (!work || !leisure) spdlog::warn("only one trip purpose present; half of the groups are empty");
  return g;
}

std::vector<double> jenks_breaks(std::vector<double> values, int classes) {
  if (classes < 1) fail(ErrorKind::InvalidArgument, "classes must be >= 1");
  if (static_cast<int>(values.size()) < classes)
    fail(ErrorKind::TooFewValues, std::to_string(values.size()) + " values for " +
                                      std::to_string(classes) + " classes");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  // Prefix sums give the within-class squared deviation of any run in O(1).
  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    s1[i + 1] = s1[i] + values[i];
    s2[i + 1] = s2[i] + values[i] * values[i];
  }
  const auto ssd = [&](std::size_t lo, std::size_t hi) {  // [lo, hi)
    const double m = static_cast<double>(hi - lo);
    const double s = s1[hi] - s1[lo];
    return std::max(0.0, (s2[hi] - s2[lo]) - s * s / m);
  };
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t K = static_cast<std::size_t>(classes);
  // cost[c][i]: best split of the first i values into c classes.
  std::vector<std::vector<double>> cost(K + 1, std::vector<double>(n + 1, inf));
  std::vector<std::vector<std::size_t>> cut(K + 1, std::vector<std::size_t>(n + 1, 0));
  cost[0][0] = 0.0;
  for (std::size_t c = 1; c <= K; ++c) {
    for (std::size_t i = c; i <= n; ++i) {
      for (std::size_t j = c - 1; j < i; ++j) {
        if (!std::isfinite(cost[c - 1][j])) continue;
        const double v = cost[c - 1][j] + ssd(j, i);
        if (v < cost[c][i]) {
          cost[c][i] = v;
          cut[c][i] = j;
        }
      }
    }
  }
  std::vector<double> breaks(K);
  std::size_t end = n;
  for (std::size_t c = K; c >= 1; --c) {
    breaks[c - 1] = values[end - 1];
    end = cut[c][end];
  }
  return breaks;
}

int classify(double value, const std::vector<double>& breaks) {
  for (std::size_t i = 0; i < breaks.size(); ++i)
    if (value <= breaks[i]) return static_cast<int>(i);
  return static_cast<int>(breaks.size()) - 1;
}

}  // namespace evsim
