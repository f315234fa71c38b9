#include "oracles.hpp"

#include "spaorb/datagen.hpp"
#include "spaorb/errors.hpp"
#include "spaorb/features.hpp"

#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <numbers>

using namespace spaorb;
using namespace spaorb::features;

namespace {

Geometry chain(int n, double spacing) { return datagen::structured_geometry(Family::linear_equidistant, n, spacing); }

double max_diff(const Matrix &a, const Matrix &b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  return a.size() ? (a - b).cwiseAbs().maxCoeff() : 0.0;
}

} // namespace

TEST_CASE("graph construction") {
  Matrix two = Matrix::Zero(2, 3);
  two(1, 0) = 3.0;
  const auto c = build_graphs(two, 2.5, 5.0);
  CHECK(c.fine.empty());
  CHECK(c.coarse == std::vector<Edge>{{0, 1}, {1, 0}});
  CHECK(c.complete == std::vector<Edge>{{0, 1}});
  const auto four = build_graphs(chain(4, 1.0).coords, 2.5, 5.0);
  CHECK(four.complete.size() == 6);
  const auto same = build_graphs(chain(6, 1.3).coords, 3.0, 3.0);
  CHECK(same.fine == same.coarse);
  std::mt19937_64 rng(3);
  const auto nested = build_graphs(oracle::random_cluster(8, rng).coords, 2.5, 5.0);
  for (const auto &e : nested.fine) {
    CHECK(std::find(nested.coarse.begin(), nested.coarse.end(), e) != nested.coarse.end());
  }
  CHECK_THROWS_AS(build_graphs(two, 3.0, 2.0), InvalidInput);
}

TEST_CASE("random-walk structural encoding") {
  Matrix path = Matrix::Zero(2, 2);
  path(0, 1) = path(1, 0) = 1;
  const Matrix r = rwse(path, 4);
  for (int i = 0; i < 2; ++i) {
    CHECK(r(i, 0) == 0.0);
    CHECK(r(i, 1) == 1.0);
    CHECK(r(i, 2) == 0.0);
    CHECK(r(i, 3) == 1.0);
  }
  Matrix isolated = Matrix::Zero(3, 3);
  isolated(0, 1) = isolated(1, 0) = 1;
  CHECK(rwse(isolated, 5).row(2).isZero(0.0));
  Matrix triangle = Matrix::Ones(3, 3) - Matrix::Identity(3, 3);
  const Matrix tri = rwse(triangle, 6);
  CHECK(max_diff(tri, oracle::rwse_powers(triangle, 6)) < 1e-15);
  CHECK(tri(0, 1) == doctest::Approx(0.5));

  std::mt19937_64 rng(51);
  const Geometry g = oracle::random_cluster(10, rng);
  const Matrix adj = adjacency(build_graphs(g.coords, 2.5, 5.0).fine, 10);
  const Matrix w = rwse(adj, 8);
  CHECK(max_diff(w, oracle::rwse_powers(adj, 8)) < 1e-14);
  CHECK(w.minCoeff() >= 0.0);
  CHECK(w.maxCoeff() <= 1.0);
}

TEST_CASE("radial basis expansion") {
  const Vector v = rbf_expand(1.0, 20, 0.0, 6.0);
  const double sigma = 6.0 / 20;
  for (int k = 0; k < 20; ++k) {
    const double mu = 6.0 * k / 19;
    CHECK(v(k) == doctest::Approx(std::exp(-(1.0 - mu) * (1.0 - mu) / (2 * sigma * sigma))).epsilon(1e-14));
    CHECK(v(k) > 0.0);
    CHECK(v(k) <= 1.0);
  }
  CHECK(rbf_expand(6.0 * 7 / 19, 20, 0.0, 6.0)(7) == 1.0);
}

TEST_CASE("angular matrix") {
  Matrix line = Matrix::Zero(2, 3);
  line(1, 0) = 2.0;
  CHECK(angular_matrix(line).phi(0, 1) == doctest::Approx(-1.0));
  const Geometry sq = datagen::structured_geometry(Family::ring, 4, 1.0);
  const auto a = angular_matrix(sq.coords);
  for (int i = 0; i < 4; ++i) {
    CHECK(a.phi(i, i) == doctest::Approx(1.0));
    // row off-diagonal values {0, -1, 0}: mean -1/3, variance 2/9
    CHECK(a.diversity(i) == doctest::Approx(2.0 / 9.0).epsilon(1e-12));
    for (int j = 0; j < 4; ++j) {
      CHECK(a.phi(i, j) == a.phi(j, i));
      const double expected = i == j ? 1.0 : ((i + j) % 2 ? 0.0 : -1.0);
      CHECK(std::abs(a.phi(i, j) - expected) < 1e-12);
    }
  }
  // Three atoms on one side of a distant fourth: the three share a direction.
  Matrix bunch(4, 3);
  bunch << 0, 0, 0, 0, 0, 0.001, 0, 0.001, 0, 30, 0, 0;
  const auto b = angular_matrix(bunch);
  CHECK(b.phi(0, 1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("node features of an equidistant chain") {
  const Geometry g = chain(4, 1.0);
  const auto m = datagen::min_weight_matching(g);
  const auto fg = featurize(g, m, FeatureConfig{});
  REQUIRE(fg.node_x.cols() == 20);
  CHECK(fg.node_x.col(0).isOnes(0.0));
  CHECK(fg.node_x(0, 5) == doctest::Approx(1.0));
  CHECK(fg.node_x(3, 5) == doctest::Approx(1.0));
  CHECK(fg.node_x(1, 5) < 1.0);
  CHECK(fg.node_x(2, 5) < 1.0);
  CHECK(fg.node_x(0, 7) == doctest::Approx(1.0)); // partner distance
  CHECK(fg.node_x(0, 1) == doctest::Approx(std::log1p(2.0)));
  CHECK(fg.node_x(0, 2) == doctest::Approx(1.5));
  CHECK(fg.node_x(0, 4) == doctest::Approx(0.5));
  CHECK(fg.node_x(0, 11) == doctest::Approx(1.5));
}

TEST_CASE("isolated nodes take the neutral values") {
  const Geometry g = chain(2, 3.0);
  const auto fg = featurize(g, datagen::min_weight_matching(g), FeatureConfig{});
  CHECK(fg.fine_edges.empty());
  for (int i = 0; i < 2; ++i) {
    CHECK(fg.node_x(i, 1) == 0.0);
    CHECK(fg.node_x(i, 2) == 0.0);
    CHECK(fg.node_x(i, 4) == 1.0);
    CHECK(fg.node_x(i, 5) == 0.0);
    CHECK(fg.node_x.row(i).tail(8).isZero(0.0));
  }
}

TEST_CASE("edge features") {
  const Geometry g = chain(4, 2.0);
  const auto m = datagen::min_weight_matching(g);
  const auto fg = featurize(g, m, FeatureConfig{});
  const int l = 20;
  REQUIRE(fg.pair_edge_x.cols() == l + 9);
  CHECK(fg.pair_edge_x(0, l) == doctest::Approx(0.5)); // 1/d for the (0,1) pair at 2 Å
  CHECK(fg.pair_edge_x(0, l + 3) == doctest::Approx(2.0));
  CHECK(fg.pair_edge_x(0, l + 6) == doctest::Approx(1.0 / std::numbers::sqrt2));
  // (0, 3) are opposite each other through the centroid
  CHECK(fg.pair_edge_x(2, l + 4) == doctest::Approx(-1.0));

  // Directed pair (i, j) vs (j, i): the Givens entry flips sign; every other
  // entry except the source-row angular diversity is shared.
  const auto idx = [&](int i, int j) {
    return std::find(fg.coarse_edges.begin(), fg.coarse_edges.end(), Edge{i, j}) - fg.coarse_edges.begin();
  };
  const auto ij = fg.coarse_edge_x.row(idx(0, 1));
  const auto ji = fg.coarse_edge_x.row(idx(1, 0));
  CHECK(ij(l + 6) == doctest::Approx(1.0 / std::numbers::sqrt2));
  CHECK(ji(l + 6) == doctest::Approx(-1.0 / std::numbers::sqrt2));
  for (int k = 0; k < l + 9; ++k) {
    if (k != l + 5 && k != l + 6) {
      CHECK(ij(k) == ji(k));
    }
  }
  Matrix coincident = Matrix::Zero(2, 3);
  CHECK_THROWS_AS(edge_features(coincident, Matrix::Identity(2, 2), {{0, 1}}, l, 0.0, 6.0), DegenerateEdge);
}

TEST_CASE("pair features") {
  const Geometry g = chain(6, 1.2);
  const auto m = datagen::min_weight_matching(g);
  const auto fg = featurize(g, m, FeatureConfig{});
  REQUIRE(fg.pair_x.cols() == 6);
  for (Eigen::Index k = 0; k < fg.pair_x.rows(); ++k) {
    CHECK(std::abs(fg.pair_x(k, 3)) <= 1.0);
    CHECK(std::abs(fg.pair_x(k, 4)) <= 1.0);
  }
  // consecutive atoms (1, 2): partner of 1 is 0, so partner->1 and 1->2 are parallel
  const auto k12 = std::find(fg.complete_pairs.begin(), fg.complete_pairs.end(), Edge{1, 2}) -
                   fg.complete_pairs.begin();
  const Eigen::Vector3d u = (g.coords.row(1) - g.coords.row(0)).transpose();
  const Eigen::Vector3d v = (g.coords.row(2) - g.coords.row(1)).transpose();
  CHECK(fg.pair_x(k12, 4) == doctest::Approx(u.dot(v) / (u.norm() * v.norm())));
  CHECK(std::abs(fg.pair_x(k12, 4)) == doctest::Approx(1.0));
  CHECK(fg.pair_x(k12, 5) == doctest::Approx(1.2 / 6.0));
}

TEST_CASE("feature widths do not depend on the atom count") {
  std::mt19937_64 rng(52);
  FeatureConfig cfg;
  cfg.t_walk = 5;
  cfg.l_rbf = 7;
  for (int n : {4, 8, 12}) {
    const Geometry g = oracle::random_cluster(n, rng);
    const auto fg = featurize(g, datagen::min_weight_matching(g), cfg);
    CHECK(fg.node_x.cols() == 17);
    CHECK(fg.fine_edge_x.cols() == 16);
    CHECK(fg.pair_x.rows() == n * (n - 1) / 2);
  }
}

TEST_CASE("rigid-motion invariance of every feature") {
  std::mt19937_64 rng(53);
  for (int geom = 0; geom < 20; ++geom) {
    const Geometry g = oracle::random_cluster(4 + 2 * (geom % 4), rng);
    const auto m = datagen::min_weight_matching(g);
    const auto ref = featurize(g, m, FeatureConfig{});
    for (int motion = 0; motion < 100; ++motion) {
      const Geometry moved = Geometry::hydrogens(oracle::rigid_motion(g.coords, rng));
      const auto fg = featurize(moved, m, FeatureConfig{});
      REQUIRE(fg.fine_edges == ref.fine_edges);
      REQUIRE(fg.coarse_edges == ref.coarse_edges);
      REQUIRE(max_diff(fg.node_x, ref.node_x) < 1e-9);
      REQUIRE(max_diff(fg.fine_edge_x, ref.fine_edge_x) < 1e-9);
      REQUIRE(max_diff(fg.coarse_edge_x, ref.coarse_edge_x) < 1e-9);
      REQUIRE(max_diff(fg.pair_edge_x, ref.pair_edge_x) < 1e-9);
      REQUIRE(max_diff(fg.pair_x, ref.pair_x) < 1e-9);
    }
  }
}

TEST_CASE("relabeling atoms permutes rows and edges") {
  std::mt19937_64 rng(54);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 6;
    const Geometry g = oracle::random_cluster(n, rng);
    const auto m = datagen::min_weight_matching(g);
    std::vector<int> sigma(n); // new atom k is old atom sigma[k]
    std::iota(sigma.begin(), sigma.end(), 0);
    std::shuffle(sigma.begin(), sigma.end(), rng);
    std::vector<int> inv(n);
    Matrix c(n, 3);
    for (int k = 0; k < n; ++k) {
      c.row(k) = g.coords.row(sigma[k]);
      inv[sigma[k]] = k;
    }
    datagen::Matching pm;
    for (const auto &[i, j] : m.edges) {
      pm.edges.emplace_back(std::min(inv[i], inv[j]), std::max(inv[i], inv[j]));
    }
    std::sort(pm.edges.begin(), pm.edges.end());
    const auto ref = featurize(g, m, FeatureConfig{});
    const auto fg = featurize(Geometry::hydrogens(c), pm, FeatureConfig{});
    for (int k = 0; k < n; ++k) {
      CHECK((fg.node_x.row(k) - ref.node_x.row(sigma[k])).cwiseAbs().maxCoeff() < 1e-12);
    }
    std::vector<Edge> mapped;
    for (const auto &[i, j] : ref.coarse_edges) {
      mapped.emplace_back(inv[i], inv[j]);
    }
    std::sort(mapped.begin(), mapped.end());
    CHECK(mapped == fg.coarse_edges);
    for (std::size_t e = 0; e < fg.coarse_edges.size(); ++e) {
      const auto [i, j] = fg.coarse_edges[e];
      const auto old = std::find(ref.coarse_edges.begin(), ref.coarse_edges.end(), Edge{sigma[i], sigma[j]}) -
                       ref.coarse_edges.begin();
      // Givens entries may flip sign when relabeling reverses a matched pair's order.
      for (Eigen::Index k = 0; k < fg.coarse_edge_x.cols(); ++k) {
        if (k == fg.coarse_edge_x.cols() - 3) {
          CHECK(std::abs(std::abs(fg.coarse_edge_x(e, k)) - std::abs(ref.coarse_edge_x(old, k))) < 1e-12);
        } else {
          CHECK(std::abs(fg.coarse_edge_x(e, k) - ref.coarse_edge_x(old, k)) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("feature dump keeps the field order") {
  const Geometry g = chain(4, 1.0);
  const auto j = nlohmann::ordered_json::parse(to_json(featurize(g, datagen::min_weight_matching(g), FeatureConfig{})));
  std::vector<std::string> keys;
  for (const auto &[k, v] : j.items()) {
    keys.push_back(k);
  }
  CHECK(keys == std::vector<std::string>{"n", "fine_edges", "coarse_edges", "complete_pairs", "node_x", "fine_edge_x",
                                         "coarse_edge_x", "pair_edge_x", "pair_x", "meta"});
}
