#pragma once

#include "spaorb/datagen.hpp"
#include "spaorb/linalg.hpp"

#include <vector>

namespace spaorb::losses {

struct LossWeights {
  double lambda1 = 0.1; // determinant-overlap weight
  double lambda2 = 0.1; // sign-invariant orbital weight
  double huber_delta = 1.0;

  void validate() const;
};

/// Columns treated as the occupied block: the lower atom index of each edge.
struct OccupiedSelector {
  std::vector<int> occupied_columns;

  static OccupiedSelector from_matching(const datagen::Matching &matching);
};

/// Per-entry Huber value; the kink |r| == δ belongs to the quadratic branch.
double huber_term(double residual, double delta);
double huber_term_derivative(double residual, double delta);

/// Mean Huber over entries. Throws InvalidInput on length mismatch.
double huber_loss(const Vector &pred, const Vector &ref, double delta);

/// 1 - det(M̂_occᵀ M_occ^ref)²
double det_overlap_loss(const Matrix &m_pred, const Matrix &m_ref, const OccupiedSelector &sel);

/// d det_overlap_loss / d m_pred (non-zero only in the occupied columns).
Matrix det_overlap_gradient(const Matrix &m_pred, const Matrix &m_ref, const OccupiedSelector &sel);

/// Mean over columns of min(|c - r|², |c + r|²).
double sign_invariant_orbital_loss(const Matrix &m_pred, const Matrix &m_ref);

Matrix sign_invariant_orbital_gradient(const Matrix &m_pred, const Matrix &m_ref);

struct LossBreakdown {
  double huber = 0.0;
  double det = 0.0;
  double orb = 0.0;
  double total = 0.0;
};

/// L_Huber + λ1 L_det + λ2 L_orb for a single molecule.
LossBreakdown combined_loss(const Vector &a_pred, const Matrix &m_pred, const Vector &a_ref,
                            const Matrix &m_ref, const LossWeights &w, const OccupiedSelector &sel);

/// Cofactor matrix, well defined for singular input.
Matrix cofactor(const Matrix &s);

} // namespace spaorb::losses
