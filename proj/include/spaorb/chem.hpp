#pragma once

#include "spaorb/geometry.hpp"
#include "spaorb/linalg.hpp"

#include <cstddef>
#include <vector>

namespace spaorb::chem {

/// Dense (pq|rs) tensor in chemists' notation, stored row-major.
class EriTensor {
public:
  EriTensor() = default;
  explicit EriTensor(Eigen::Index n) : n_(n), data_(static_cast<std::size_t>(n * n * n * n), 0.0) {}

  Eigen::Index dim() const { return n_; }

  double &operator()(Eigen::Index p, Eigen::Index q, Eigen::Index r, Eigen::Index s) {
    return data_[index(p, q, r, s)];
  }
  double operator()(Eigen::Index p, Eigen::Index q, Eigen::Index r, Eigen::Index s) const {
    return data_[index(p, q, r, s)];
  }

  std::vector<double> &data() { return data_; }
  const std::vector<double> &data() const { return data_; }

  /// Largest deviation from 8-fold permutational symmetry.
  double symmetry_violation() const;

private:
  std::size_t index(Eigen::Index p, Eigen::Index q, Eigen::Index r, Eigen::Index s) const {
    return static_cast<std::size_t>(((p * n_ + q) * n_ + r) * n_ + s);
  }

  Eigen::Index n_ = 0;
  std::vector<double> data_;
};

enum class BasisLabel { atomic, native, rotated };

struct IntegralSet {
  double e_nn = 0.0; // Hartree
  Matrix h;          // one-electron, Hartree
  EriTensor g;       // (pq|rs), Hartree
  BasisLabel basis = BasisLabel::atomic;

  Eigen::Index size() const { return h.rows(); }
};

/// Boys function F0(t).
double boys_f0(double t);

Matrix overlap_matrix(const Geometry &geom);
Matrix kinetic_matrix(const Geometry &geom);
Matrix nuclear_attraction_matrix(const Geometry &geom);
/// T + V
Matrix core_hamiltonian(const Geometry &geom);
EriTensor eri_tensor(const Geometry &geom);
/// Throws InvalidGeometry when two atoms are closer than 1e-6 Å.
double nuclear_repulsion(const Geometry &geom);

/// All integrals in the atomic-orbital basis.
IntegralSet atomic_integrals(const Geometry &geom);

/// Integrals in the symmetrically orthogonalized basis C = S^{-1/2}.
IntegralSet to_native_basis(const IntegralSet &atomic, const Matrix &overlap);

/// Convenience: atomic integrals followed by Löwdin orthogonalization.
IntegralSet native_integrals(const Geometry &geom);

/// h' = Cᵀ h C, g' = four successive one-index contractions with C. C must be
/// orthogonal; the input must be in an orthonormal basis.
IntegralSet transform_integrals(const IntegralSet &ints, const Matrix &c);

/// Same contraction without the orthogonality precondition.
IntegralSet change_basis(const IntegralSet &ints, const Matrix &c, BasisLabel label);

} // namespace spaorb::chem
