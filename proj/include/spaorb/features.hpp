#pragma once

#include "spaorb/datagen.hpp"
#include "spaorb/geometry.hpp"
#include "spaorb/linalg.hpp"

#include <string>
#include <utility>
#include <vector>

namespace spaorb::features {

using Edge = std::pair<int, int>; // (receiver i, sender j)

struct FeatureConfig {
  int t_walk = 8;
  int l_rbf = 20;
  double rbf_min = 0.0; // Å
  double rbf_max = 6.0; // Å
  double r_fine = 2.5;  // Å
  double r_coarse = 5.0;

  int node_width() const { return 12 + t_walk; }
  int edge_width() const { return l_rbf + 9; }
  static constexpr int pair_width() { return 6; }
};

struct Connectivity {
  std::vector<Edge> fine;   // both orientations, ordered by (i, j)
  std::vector<Edge> coarse; // both orientations, ordered by (i, j)
  std::vector<Edge> complete; // i < j, row-major
};

struct FeatureGraph {
  int n = 0;
  FeatureConfig config;
  std::vector<Edge> fine_edges;
  std::vector<Edge> coarse_edges;
  std::vector<Edge> complete_pairs;
  Matrix node_x;        // N x (12 + T)
  Matrix fine_edge_x;   // |fine| x (L + 9)
  Matrix coarse_edge_x; // |coarse| x (L + 9)
  Matrix pair_edge_x;   // |complete| x (L + 9), the e⁰ features of each i < j pair
  Matrix pair_x;        // |complete| x 6
};

/// Radius graphs use the strict test d < r.
Connectivity build_graphs(const Matrix &coords, double r_fine, double r_coarse);

/// 0/1 adjacency of a directed-both-ways edge list.
Matrix adjacency(const std::vector<Edge> &edges, int n);

/// Column k-1 holds diag(P^k) with P = A D^{-1}; isolated nodes give zero rows.
Matrix rwse(const Matrix &adjacency, int t);

/// Gaussian expansion on l centres spanning [d_min, d_max], σ = (d_max - d_min)/l.
Vector rbf_expand(double r, int l, double d_min, double d_max);

struct AngularInfo {
  Matrix phi;       // cosines at the centroid
  Vector diversity; // off-diagonal row variance
};

AngularInfo angular_matrix(const Matrix &coords);

/// Partner index of every atom under a perfect matching.
std::vector<int> partners(const datagen::Matching &matching, int n);

Matrix node_features(const Matrix &coords, const datagen::Matching &matching, const Matrix &adjacency,
                     const Matrix &pca_projections, const Matrix &rwse_rows);

/// Throws DegenerateEdge when an edge joins (nearly) coincident atoms.
Matrix edge_features(const Matrix &coords, const Matrix &m_init, const std::vector<Edge> &edges, int l,
                     double d_min, double d_max);

Matrix pair_features(const Matrix &coords, const datagen::Matching &matching, const Matrix &pca_projections,
                     const std::vector<Edge> &pairs);

FeatureGraph featurize(const Geometry &geom, const datagen::Matching &matching, const FeatureConfig &cfg);

/// Debug dump; field order mirrors the FeatureGraph layout.
std::string to_json(const FeatureGraph &fg);

} // namespace spaorb::features
