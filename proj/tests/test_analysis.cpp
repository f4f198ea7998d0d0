#include <doctest.h>

#include <set>

#include "evsim/analysis.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace evsim;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::InvalidArgument;
}

/// cols x rows lattice, `spacing_km` apart, 4-neighbour roads.
RoadGraph lattice(int cols, int rows, double spacing_km) {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  const auto id = [cols](int c, int r) { return r * cols + c; };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) nodes.push_back({id(c, r), c * spacing_km, r * spacing_km});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols) edges.push_back({id(c, r), id(c + 1, r), spacing_km / kKmPerMile});
      if (r + 1 < rows) edges.push_back({id(c, r), id(c, r + 1), spacing_km / kKmPerMile});
    }
  return RoadGraph(nodes, edges, {});
}

}  // namespace

TEST_SUITE("analysis") {
  TEST_CASE("pearson examples") {
    CHECK(pearson(vec({1, 2, 3}), vec({2, 4, 7})) == doctest::Approx(0.99339).epsilon(1e-5));
    const Eigen::VectorXd x = vec({0.3, 1.7, -2.0, 5.5});
    CHECK(pearson(x, x) == doctest::Approx(1.0));
    CHECK(pearson(x, -2.0 * x) == doctest::Approx(-1.0));
    CHECK(kind_of([] { pearson(vec({1, 1, 1}), vec({1, 2, 3})); }) == ErrorKind::ZeroVariance);
    CHECK(kind_of([] { pearson(vec({1, 2}), vec({1, 2, 3})); }) == ErrorKind::DimensionMismatch);
    CHECK(kind_of([] { pearson(vec({1}), vec({1})); }) == ErrorKind::TooFewValues);
  }

  TEST_CASE("pearson is invariant to positive affine maps") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd x(30), y(30);
      for (int i = 0; i < 30; ++i) {
        x(i) = rng.normal(0, 1);
        y(i) = x(i) + rng.normal(0, 1);
      }
      const double r = pearson(x, y);
      CHECK(std::abs(r) <= 1.0);
      const Eigen::VectorXd y2 = (3.0 * y).array() + 7.0;
      CHECK(pearson(x, y2) == doctest::Approx(r).epsilon(1e-12));
      CHECK(pearson(y, x) == doctest::Approx(r).epsilon(1e-12));
    }
  }

  TEST_CASE("spatial correlation matches keys") {
    const UsageMap a{{1, 10.0}, {2, 20.0}, {3, 35.0}};
    const UsageMap b{{3, 70.0}, {1, 20.0}, {2, 40.0}};
    CHECK(spatial_correlation(a, b) == doctest::Approx(1.0));
    CHECK(kind_of([&] { spatial_correlation(a, UsageMap{{1, 1.0}, {2, 2.0}, {4, 3.0}}); }) == ErrorKind::KeyMismatch);
    CHECK(kind_of([&] { spatial_correlation(a, UsageMap{{1, 1.0}, {2, 2.0}}); }) == ErrorKind::KeyMismatch);
  }

  TEST_CASE("lag scan recovers a shift") {
    Rng rng(12);
    const int n = 96;
    Eigen::VectorXd x(n), z(n);
    for (int t = 0; t < n; ++t) x(t) = rng.uniform(0, 10);
    for (int t = 0; t < n; ++t) z(t) = t >= 4 ? x(t - 4) : rng.uniform(0, 10);
    CHECK(temporal_cross_correlation(z, x, 4) == doctest::Approx(1.0));
    const LagScan scan = lag_scan(z, x, 8);
    CHECK(scan.best_lag == 4);
    CHECK(scan.best_r == doctest::Approx(1.0));
    CHECK(scan.curve.size() == 17);
    CHECK(temporal_cross_correlation(x, x, 0) == doctest::Approx(1.0));
    CHECK(kind_of([&] { temporal_cross_correlation(z, x, n - 1); }) == ErrorKind::InsufficientOverlap);
  }

  TEST_CASE("lag scan over constant series") {
    const Eigen::VectorXd c = Eigen::VectorXd::Constant(20, 2.0);
    CHECK(kind_of([&] { lag_scan(c, c, 3); }) == ErrorKind::ZeroVariance);
  }

  TEST_CASE("usage map and series") {
    UsagePattern u;
    u.sessions[1] = {{1, 5, 100, 100, 160, 0, false}, {1, 6, 1400, 1400, 1500, 0, false}};
    u.sessions[2] = {{2, 7, 120, 120, 130, 0, false}};
    const std::vector<Charger> chargers{fixtures::charger(1, 0), fixtures::charger(2, 1), fixtures::charger(3, 2)};
    const UsageMap m = usage_map(u, chargers);
    CHECK(m.at(1) == doctest::Approx(60.0 + 40.0));
    CHECK(m.at(2) == doctest::Approx(10.0));
    CHECK(m.at(3) == 0.0);
    CHECK(usage_map(u, chargers, 110, 125).at(1) == doctest::Approx(15.0));

    const UsageSeries s = usage_series(u, 15.0);
    REQUIRE(s.values.size() == 96);
    CHECK(s.values(6) == 0.0);   // 90 min
    CHECK(s.values(7) == 1.0);   // 105 min
    CHECK(s.values(8) == 2.0);   // 120 min
    CHECK(s.values(9) == 1.0);   // 135 min
    CHECK(s.values(11) == 0.0);  // 165 min
    CHECK(s.values(95) == 1.0);
  }

  TEST_CASE("hex cell geometry") {
    const double edge = hex_edge_for_area(kHexAreaFine);
    CHECK(1.5 * std::sqrt(3.0) * edge * edge == doctest::Approx(kHexAreaFine));
    Rng rng(2);
    for (int i = 0; i < 2000; ++i) {
      const double x = rng.uniform(-30, 30), y = rng.uniform(-30, 30);
      const auto [q, r] = hex_cell_of(x, y, edge);
      CHECK(hex_cell_of(hex_center(q, r, edge).x(), hex_center(q, r, edge).y(), edge) == std::make_pair(q, r));
      // the containing cell's centre is the nearest centre
      const Eigen::Vector2d own = hex_center(q, r, edge);
      const double d = std::hypot(x - own.x(), y - own.y());
      CHECK(d <= edge + 1e-9);
      for (int dq = -1; dq <= 1; ++dq)
        for (int dr = -1; dr <= 1; ++dr) {
          const Eigen::Vector2d o = hex_center(q + dq, r + dr, edge);
          CHECK(d <= std::hypot(x - o.x(), y - o.y()) + 1e-9);
        }
    }
  }

  TEST_CASE("uniform observations fill hexes in proportion to area") {
    std::vector<PlanarObservation> obs;
    const double step = 0.05;
    for (double x = 0; x < 30; x += step)
      for (double y = 0; y < 30; y += step) obs.push_back({x, y, 0.5});
    const HexSocMap hex = hex_aggregate(obs, kHexAreaFine);
    const double expected = kHexAreaFine / (step * step);
    int total = 0, interior = 0;
    for (const auto& [key, cell] : hex.cells) {
      total += cell.count;
      CHECK(cell.mean_soc() == doctest::Approx(0.5));
      if (cell.x_km > 4 && cell.x_km < 26 && cell.y_km > 4 && cell.y_km < 26) {
        ++interior;
        CHECK(std::abs(cell.count - expected) <= 0.03 * expected);
      }
    }
    CHECK(total == static_cast<int>(obs.size()));
    CHECK(interior > 50);
  }

  TEST_CASE("single observation makes a single cell") {
    const HexSocMap hex = hex_aggregate({{3.2, -1.1, 0.37}}, kHexAreaCoarse);
    REQUIRE(hex.cells.size() == 1);
    CHECK(hex.cells.begin()->second.mean_soc() == doctest::Approx(0.37));
    CHECK(hex.cells.begin()->second.count == 1);
  }

  TEST_CASE("low soc categories pick out the low mode") {
    std::vector<PlanarObservation> obs;
    const double edge = hex_edge_for_area(kHexAreaFine);
    std::set<std::pair<int, int>> low;
    for (int q = 0; q < 6; ++q)
      for (int r = 0; r < 4; ++r) {
        const Eigen::Vector2d c = hex_center(q, r, edge);
        const bool is_low = q < 2;
        if (is_low) low.insert({q, r});
        obs.push_back({c.x(), c.y(), (is_low ? 0.1 : 0.8) + 0.01 * r});
      }
    const SocCategories cats = low_soc_categories(hex_aggregate(obs, kHexAreaFine), 2);
    CHECK(std::set<std::pair<int, int>>(cats.lowest.begin(), cats.lowest.end()) == low);
    CHECK(cats.breaks.size() == 2);
    CHECK(kind_of([&] { low_soc_categories(hex_aggregate(obs, kHexAreaFine), 9); }) == ErrorKind::TooFewValues);
  }

  TEST_CASE("buffer counts match brute force and grow with the radius") {
    Rng rng(8);
    const RoadGraph g = fixtures::random_graph(rng, 40, 0.1);
    std::vector<NodeId> ids;
    std::vector<oracles::XY> nodes;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ids.push_back(g.id_of(i));
      nodes.push_back(oracles::at(g, g.id_of(i)));
    }
    std::vector<Charger> chargers;
    std::vector<oracles::XY> sites;
    for (int k = 0; k < 8; ++k) {
      const NodeId n = ids[rng.below(ids.size())];
      chargers.push_back(fixtures::charger(k + 1, n));
      sites.push_back(oracles::at(g, n));
    }
    std::vector<int> prev(ids.size(), 0);
    for (double b : {250.0, 500.0, 1000.0, 2000.0, 8000.0}) {
      const auto counts = buffer_counts(ids, g, chargers, b);
      CHECK(counts == oracles::buffer_counts(nodes, sites, b));
      for (std::size_t i = 0; i < counts.size(); ++i) CHECK(counts[i] >= prev[i]);
      prev = counts;
    }
    CHECK(kind_of([&] { buffer_counts(ids, g, chargers, 0.0); }) == ErrorKind::InvalidArgument);
  }

  TEST_CASE("risk areas isolate a charger-free low soc corridor") {
    const int cols = 10, rows = 4;
    const RoadGraph g = lattice(cols, rows, 0.4);
    std::vector<Charger> chargers;
    std::vector<std::pair<NodeId, double>> node_soc;
    std::vector<NodeId> corridor;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        const NodeId id = r * cols + c;
        if (c <= 4) chargers.push_back(fixtures::charger(id + 1, id));
        const bool low = c >= 8;
        if (low) corridor.push_back(id);
        node_soc.push_back({id, low ? 0.08 + 0.01 * r : 0.7 + 0.02 * c});
      }
    std::sort(node_soc.begin(), node_soc.end());
    std::sort(corridor.begin(), corridor.end());
    const RiskReport rep = risk_areas(node_soc, chargers, g, 1000.0, 3);
    std::vector<NodeId> high = rep.high_risk_nodes;
    std::sort(high.begin(), high.end());
    CHECK(high == corridor);
    for (const auto& n : rep.nodes)
      if (n.node % cols >= 8) CHECK(n.charger_count == 0);
  }

  TEST_CASE("mean soc by node") {
    const auto m = mean_soc_by_node({{4, 0.2}, {2, 0.5}, {4, 0.6}});
    REQUIRE(m.size() == 2);
    CHECK(m[0].first == 2);
    CHECK(m[0].second == doctest::Approx(0.5));
    CHECK(m[1].first == 4);
    CHECK(m[1].second == doctest::Approx(0.4));
  }
}
