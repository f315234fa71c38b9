#pragma once

#include "spaorb/linalg.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spaorb {

inline constexpr double kAngstromToBohr = 1.8897259886;
inline constexpr double kMinNeighborDistance = 0.5; // Å, exclusive
inline constexpr double kMaxNeighborDistance = 4.0; // Å, exclusive

enum class Family {
  linear_equidistant,
  linear_random,
  planar_equidistant,
  planar_random,
  ring,
  random_3d,
  custom,
};

std::string_view to_string(Family f);
Family parse_family(std::string_view name);

struct Geometry {
  Matrix coords; // N x 3, Å
  std::vector<std::string> elements;
  Family family = Family::custom;
  std::uint64_t seed = 0;

  Eigen::Index size() const { return coords.rows(); }

  static Geometry hydrogens(Matrix coords, Family family = Family::custom,
                            std::uint64_t seed = 0);
};

/// Pairwise Euclidean distances (Å).
Matrix distance_matrix(const Matrix &coords);

/// Nearest-neighbor distance per atom (Å); +inf for a single atom.
Vector nearest_neighbor_distances(const Matrix &coords);

/// Empty when the geometry satisfies the dataset invariants (even N in
/// [2, 16], hydrogen only, every nearest-neighbor distance in (0.5, 4.0) Å);
/// otherwise a description of the first violation.
std::optional<std::string> geometry_violation(const Geometry &geom);

} // namespace spaorb
