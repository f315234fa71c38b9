#include "spaorb/features.hpp"

#include "spaorb/errors.hpp"

#include <json.hpp>

#include <cmath>

namespace spaorb::features {

namespace {

constexpr double kTinyNorm = 1e-9;

double safe_cosine(const Eigen::Vector3d &u, const Eigen::Vector3d &v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu < kTinyNorm || nv < kTinyNorm) {
    return 0.0;
  }
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

Eigen::Vector3d row3(const Matrix &m, Eigen::Index i) { return m.row(i).transpose(); }

Eigen::Vector3d centroid(const Matrix &coords) { return coords.colwise().mean().transpose(); }

double max_pair_distance(const Matrix &coords) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < coords.rows(); ++j) {
      d = std::max(d, (coords.row(i) - coords.row(j)).norm());
    }
  }
  return std::max(d, 1e-9);
}

nlohmann::ordered_json matrix_json(const Matrix &m) {
  auto out = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::ordered_json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      row.push_back(m(i, k));
    }
    out.push_back(std::move(row));
  }
  return out;
}

nlohmann::ordered_json edges_json(const std::vector<Edge> &edges) {
  auto out = nlohmann::ordered_json::array();
  for (const auto &[i, j] : edges) {
    out.push_back({i, j});
  }
  return out;
}

} // namespace

Connectivity build_graphs(const Matrix &coords, double r_fine, double r_coarse) {
  if (r_fine > r_coarse) {
    throw InvalidInput("build_graphs: r_fine must not exceed r_coarse");
  }
  const int n = static_cast<int>(coords.rows());
  Connectivity c;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        continue;
      }
      const double d = (coords.row(i) - coords.row(j)).norm();
      if (d < r_fine) {
        c.fine.emplace_back(i, j);
      }
      if (d < r_coarse) {
        c.coarse.emplace_back(i, j);
      }
      if (i < j) {
        c.complete.emplace_back(i, j);
      }
    }
  }
  return c;
}

Matrix adjacency(const std::vector<Edge> &edges, int n) {
  Matrix a = Matrix::Zero(n, n);
  for (const auto &[i, j] : edges) {
    a(i, j) = 1.0;
  }
  return a;
}

Matrix rwse(const Matrix &adj, int t) {
  if (t < 1) {
    throw InvalidInput("rwse: walk length must be >= 1");
  }
  const Eigen::Index n = adj.rows();
  const Vector degree = adj.colwise().sum().transpose();
  Matrix p = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (degree(j) > 0.0) {
      p.col(j) = adj.col(j) / degree(j);
    }
  }
  Matrix out = Matrix::Zero(n, t);
  Matrix power = p;
  for (int k = 0; k < t; ++k) {
    out.col(k) = power.diagonal();
    if (k + 1 < t) {
      power = (power * p).eval();
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (degree(i) == 0.0) {
      out.row(i).setZero();
    }
  }
  return out;
}

Vector rbf_expand(double r, int l, double d_min, double d_max) {
  if (l < 2 || !(d_max > d_min)) {
    throw InvalidInput("rbf_expand: need l >= 2 and d_max > d_min");
  }
  const double sigma = (d_max - d_min) / l;
  Vector out(l);
  for (int k = 0; k < l; ++k) {
    const double mu = d_min + (d_max - d_min) * k / (l - 1);
    const double z = (r - mu) / sigma;
    out(k) = std::exp(-0.5 * z * z);
  }
  return out;
}

AngularInfo angular_matrix(const Matrix &coords) {
  const Eigen::Index n = coords.rows();
  const Eigen::Vector3d c = centroid(coords);
  AngularInfo out;
  out.phi = Matrix::Zero(n, n);
  out.diversity = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      out.phi(i, j) = safe_cosine(row3(coords, i) - c, row3(coords, j) - c);
    }
  }
  if (n < 2) {
    return out;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    double mean = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) {
        mean += out.phi(i, j);
      }
    }
    mean /= static_cast<double>(n - 1);
    double var = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) {
        var += (out.phi(i, j) - mean) * (out.phi(i, j) - mean);
      }
    }
    out.diversity(i) = var / static_cast<double>(n - 1);
  }
  return out;
}

std::vector<int> partners(const datagen::Matching &matching, int n) {
  std::vector<int> p(static_cast<std::size_t>(n), -1);
  for (const auto &[i, j] : matching.edges) {
    if (i < 0 || j < 0 || i >= n || j >= n) {
      throw InvalidInput("matching edge outside the atom range");
    }
    p[static_cast<std::size_t>(i)] = j;
    p[static_cast<std::size_t>(j)] = i;
  }
  return p;
}

Matrix node_features(const Matrix &coords, const datagen::Matching &matching, const Matrix &adj,
                     const Matrix &pca_projections, const Matrix &rwse_rows) {
  const int n = static_cast<int>(coords.rows());
  const int t = static_cast<int>(rwse_rows.cols());
  const auto partner = partners(matching, n);
  const Eigen::Vector3d c = centroid(coords);
  Matrix x = Matrix::Zero(n, 12 + t);
  for (int i = 0; i < n; ++i) {
    std::vector<double> dist;
    Eigen::Vector3d dir_sum = Eigen::Vector3d::Zero();
    for (int j = 0; j < n; ++j) {
      if (adj(i, j) != 0.0) {
        const Eigen::Vector3d v = row3(coords, j) - row3(coords, i);
        const double d = v.norm();
        dist.push_back(d);
        if (d > kTinyNorm) {
          dir_sum += v / d;
        }
      }
    }
    double mean = 0.0, stddev = 0.0, ratio = 1.0, asym = 0.0, skew = 0.0;
    if (!dist.empty()) {
      const double k = static_cast<double>(dist.size());
      double lo = dist.front(), hi = dist.front();
      for (double d : dist) {
        mean += d;
        lo = std::min(lo, d);
        hi = std::max(hi, d);
      }
      mean /= k;
      for (double d : dist) {
        stddev += (d - mean) * (d - mean);
      }
      stddev = std::sqrt(stddev / k);
      ratio = hi > 0.0 ? lo / hi : 1.0;
      asym = (dir_sum / k).norm();
      skew = stddev < 1e-12 ? 0.0 : (mean - 0.5 * (lo + hi)) / stddev;
    }
    const int p = partner[static_cast<std::size_t>(i)];
    x(i, 0) = 1.0; // Z for hydrogen
    x(i, 1) = std::log1p(static_cast<double>(dist.size()));
    x(i, 2) = mean;
    x(i, 3) = stddev;
    x(i, 4) = ratio;
    x(i, 5) = asym;
    x(i, 6) = skew;
    x(i, 7) = p >= 0 ? (coords.row(i) - coords.row(p)).norm() : 0.0;
    x(i, 8) = pca_projections(i, 0);
    x(i, 9) = pca_projections(i, 1);
    x(i, 10) = pca_projections(i, 2);
    x(i, 11) = (row3(coords, i) - c).norm();
    for (int k = 0; k < t; ++k) {
      x(i, 12 + k) = rwse_rows(i, k);
    }
  }
  return x;
}

Matrix edge_features(const Matrix &coords, const Matrix &m_init, const std::vector<Edge> &edges, int l,
                     double d_min, double d_max) {
  const auto ang = angular_matrix(coords);
  const Eigen::Vector3d c = centroid(coords);
  const double span = max_pair_distance(coords);
  Matrix e(static_cast<Eigen::Index>(edges.size()), l + 9);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto [i, j] = edges[k];
    const double d = (coords.row(i) - coords.row(j)).norm();
    if (d < 1e-9) {
      throw DegenerateEdge("edge (" + std::to_string(i) + ", " + std::to_string(j) + ") has zero length");
    }
    const auto row = static_cast<Eigen::Index>(k);
    e.row(row).head(l) = rbf_expand(d, l, d_min, d_max).transpose();
    const double ci = (row3(coords, i) - c).norm();
    const double cj = (row3(coords, j) - c).norm();
    e(row, l + 0) = 1.0 / d;
    e(row, l + 1) = std::exp(-d);
    e(row, l + 2) = std::exp(-d * d);
    e(row, l + 3) = d;
    e(row, l + 4) = ang.phi(i, j);
    e(row, l + 5) = ang.diversity(i);
    e(row, l + 6) = m_init(i, j);
    e(row, l + 7) = std::abs(ci - cj) / span;
    e(row, l + 8) = (ci + cj) / (2.0 * span);
  }
  return e;
}

Matrix pair_features(const Matrix &coords, const datagen::Matching &matching, const Matrix &pca_projections,
                     const std::vector<Edge> &pairs) {
  const int n = static_cast<int>(coords.rows());
  const auto partner = partners(matching, n);
  const Eigen::Vector3d c = centroid(coords);
  const double span = max_pair_distance(coords);
  Matrix out(static_cast<Eigen::Index>(pairs.size()), 6);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    const auto row = static_cast<Eigen::Index>(k);
    const Eigen::Vector3d ri = row3(coords, i);
    const Eigen::Vector3d bond = row3(coords, j) - ri;
    for (int a = 0; a < 3; ++a) {
      out(row, a) = std::abs(pca_projections(i, a) - pca_projections(j, a));
    }
    out(row, 3) = safe_cosine(ri - c, bond);
    const int p = partner[static_cast<std::size_t>(i)];
    out(row, 4) = p >= 0 ? safe_cosine(ri - row3(coords, p), bond) : 0.0;
    out(row, 5) = bond.norm() / span;
  }
  return out;
}

FeatureGraph featurize(const Geometry &geom, const datagen::Matching &matching, const FeatureConfig &cfg) {
  const int n = static_cast<int>(geom.size());
  const auto conn = build_graphs(geom.coords, cfg.r_fine, cfg.r_coarse);
  const Matrix adj_fine = adjacency(conn.fine, n);
  const auto pca = linalg::pca_axes(geom.coords);
  const Matrix m_init = datagen::givens_guess(matching, n);

  FeatureGraph fg;
  fg.n = n;
  fg.config = cfg;
  fg.node_x = node_features(geom.coords, matching, adj_fine, pca.projections, rwse(adj_fine, cfg.t_walk));
  fg.fine_edge_x = edge_features(geom.coords, m_init, conn.fine, cfg.l_rbf, cfg.rbf_min, cfg.rbf_max);
  fg.coarse_edge_x = edge_features(geom.coords, m_init, conn.coarse, cfg.l_rbf, cfg.rbf_min, cfg.rbf_max);
  fg.pair_edge_x = edge_features(geom.coords, m_init, conn.complete, cfg.l_rbf, cfg.rbf_min, cfg.rbf_max);
  fg.pair_x = pair_features(geom.coords, matching, pca.projections, conn.complete);
  fg.fine_edges = conn.fine;
  fg.coarse_edges = conn.coarse;
  fg.complete_pairs = conn.complete;
  return fg;
}

std::string to_json(const FeatureGraph &fg) {
  nlohmann::ordered_json j;
  j["n"] = fg.n;
  j["fine_edges"] = edges_json(fg.fine_edges);
  j["coarse_edges"] = edges_json(fg.coarse_edges);
  j["complete_pairs"] = edges_json(fg.complete_pairs);
  j["node_x"] = matrix_json(fg.node_x);
  j["fine_edge_x"] = matrix_json(fg.fine_edge_x);
  j["coarse_edge_x"] = matrix_json(fg.coarse_edge_x);
  j["pair_edge_x"] = matrix_json(fg.pair_edge_x);
  j["pair_x"] = matrix_json(fg.pair_x);
  j["meta"] = {{"r_fine", fg.config.r_fine},   {"r_coarse", fg.config.r_coarse}, {"t_walk", fg.config.t_walk},
               {"l_rbf", fg.config.l_rbf},     {"rbf_min", fg.config.rbf_min},   {"rbf_max", fg.config.rbf_max}};
  return j.dump();
}

} // namespace spaorb::features
