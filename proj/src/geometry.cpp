#include "spaorb/geometry.hpp"

#include "spaorb/errors.hpp"

#include <array>
#include <limits>
#include <utility>

namespace spaorb {

namespace {

constexpr std::array<std::pair<Family, std::string_view>, 7> kFamilyNames = {{
    {Family::linear_equidistant, "linear_equidistant"},
    {Family::linear_random, "linear_random"},
    {Family::planar_equidistant, "planar_equidistant"},
    {Family::planar_random, "planar_random"},
    {Family::ring, "ring"},
    {Family::random_3d, "random_3d"},
    {Family::custom, "custom"},
}};

} // namespace

std::string_view to_string(Family f) {
  for (const auto &[family, name] : kFamilyNames) {
    if (family == f) {
      return name;
    }
  }
  return "custom";
}

Family parse_family(std::string_view name) {
  for (const auto &[family, known] : kFamilyNames) {
    if (known == name) {
      return family;
    }
  }
  throw InvalidInput("unknown geometry family '" + std::string(name) + "'");
}

Geometry Geometry::hydrogens(Matrix coords, Family family, std::uint64_t seed) {
  Geometry g;
  g.elements.assign(static_cast<std::size_t>(coords.rows()), "H");
  g.coords = std::move(coords);
  g.family = family;
  g.seed = seed;
  return g;
}

Matrix distance_matrix(const Matrix &coords) {
  const Eigen::Index n = coords.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = d(j, i) = (coords.row(i) - coords.row(j)).norm();
    }
  }
  return d;
}

Vector nearest_neighbor_distances(const Matrix &coords) {
  const Eigen::Index n = coords.rows();
  Vector out = Vector::Constant(n, std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) {
        out(i) = std::min(out(i), (coords.row(i) - coords.row(j)).norm());
      }
    }
  }
  return out;
}

std::optional<std::string> geometry_violation(const Geometry &geom) {
  const Eigen::Index n = geom.size();
  if (geom.coords.cols() != 3) {
    return "coordinates must have 3 columns";
  }
  if (n < 2 || n > 16 || n % 2 != 0) {
    return "atom count " + std::to_string(n) + " is not even in [2, 16]";
  }
  if (static_cast<Eigen::Index>(geom.elements.size()) != n) {
    return "element list length does not match coordinates";
  }
  for (const auto &e : geom.elements) {
    if (e != "H") {
      return "unsupported element '" + e + "'";
    }
  }
  if (!geom.coords.allFinite()) {
    return "non-finite coordinates";
  }
  const Vector nn = nearest_neighbor_distances(geom.coords);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(nn(i) > kMinNeighborDistance && nn(i) < kMaxNeighborDistance)) {
      return "nearest-neighbor distance " + std::to_string(nn(i)) + " of atom " +
             std::to_string(i) + " outside (0.5, 4.0) Angstrom";
    }
  }
  return std::nullopt;
}

} // namespace spaorb
