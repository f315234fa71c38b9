#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace spaorb {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

inline constexpr double kOrthogonalityTol = 1e-10;
inline constexpr double kDeterminantTol = 1e-8;
inline constexpr double kBranchTol = 1e-6;
inline constexpr double kLowdinMinEigenvalue = 1e-10;
inline constexpr double kPcaDegenerateSingular = 1e-9;

/// max_ij |(MᵀM - I)_ij|
double orthogonality_residual(const Matrix &m);

/// max_ij |A_ij + A_ji|, diagonal included.
double skew_residual(const Matrix &a);

bool is_special_orthogonal(const Matrix &m);

/// Matrix exponential of a general square matrix by scaling and squaring
/// around a degree-18 Taylor core. Used for skew-symmetric generators and for
/// the block-triangular Fréchet construction in the backward pass.
Matrix expm_general(const Matrix &a);

/// e^A for skew-symmetric A. Throws InvalidInput on non-finite or non-skew input.
Matrix expm_antisymmetric(const Matrix &a);

/// Adjoint of the Fréchet derivative of exp at A applied to G, i.e. the
/// gradient of <G, e^A> with respect to A. Computed as the upper-right block
/// of exp([[Aᵀ, G], [0, Aᵀ]]).
Matrix expm_frechet_adjoint(const Matrix &a, const Matrix &g);

/// Principal logarithm of a special-orthogonal matrix via the real Schur
/// form. Every 2x2 rotation block contributes its angle in (-π, π).
/// Throws BranchBoundary when an angle lies within kBranchTol of π and
/// InvalidInput when the input is not special orthogonal.
Matrix logm_special_orthogonal(const Matrix &m);

/// Row-major (i<j) strictly-upper-triangular entries.
Vector pack_upper(const Matrix &a);

/// Inverse of pack_upper: returns U - Uᵀ where U holds the packed entries.
Matrix unpack_skew(const Vector &upper, Eigen::Index n);

/// Dimension n such that n(n-1)/2 == len. Throws InvalidInput otherwise.
Eigen::Index dimension_from_upper_length(Eigen::Index len);

struct SymmetricEigen {
  Vector values; // ascending
  Matrix vectors;
};

SymmetricEigen symmetric_eigen(const Matrix &s);

/// S^{-1/2} for symmetric positive-definite S. Throws NearLinearDependence
/// when the smallest eigenvalue is <= kLowdinMinEigenvalue.
Matrix lowdin_inverse_sqrt(const Matrix &s);

struct PcaResult {
  Matrix axes;        // 3x3, columns are principal axes (descending variance)
  Matrix projections; // N x 3, min-max normalized to [0, 1]
  Eigen::Vector3d singular_values;
};

/// Principal axes of centroid-centred positions (N x 3).
///
/// Each axis is oriented so that the atom with the largest absolute centred
/// projection lands on the positive side; ties go to the highest atom index.
/// This makes the normalized projections invariant under rigid motions of
/// the input. Degenerate axes give constant 0.5 projections.
PcaResult pca_axes(const Matrix &positions);

} // namespace linalg
} // namespace spaorb
