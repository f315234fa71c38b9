#include "spaorb/linalg.hpp"

#include "spaorb/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <string>

namespace spaorb::linalg {

namespace {

constexpr int kTaylorDegree = 18;
constexpr double kScalingThreshold = 0.5;

void require_square(const Matrix &m, const char *what) {
  if (m.rows() != m.cols()) {
    throw InvalidInput(std::string(what) + ": matrix is not square");
  }
}

void require_finite(const Matrix &m, const char *what) {
  if (!m.allFinite()) {
    throw InvalidInput(std::string(what) + ": non-finite entries");
  }
}

} // namespace

double orthogonality_residual(const Matrix &m) {
  const Matrix r = m.transpose() * m - Matrix::Identity(m.rows(), m.cols());
  return r.cwiseAbs().maxCoeff();
}

double skew_residual(const Matrix &a) {
  return (a + a.transpose()).cwiseAbs().maxCoeff();
}

bool is_special_orthogonal(const Matrix &m) {
  if (m.rows() != m.cols() || !m.allFinite()) {
    return false;
  }
  if (m.rows() == 0) {
    return true;
  }
  return orthogonality_residual(m) < kOrthogonalityTol &&
         std::abs(m.determinant() - 1.0) <= kDeterminantTol;
}

Matrix expm_general(const Matrix &a) {
  require_square(a, "expm");
  require_finite(a, "expm");
  const Eigen::Index n = a.rows();
  if (n == 0) {
    return a;
  }
  const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > kScalingThreshold) {
    squarings = static_cast<int>(std::ceil(std::log2(norm1 / kScalingThreshold)));
  }
  const Matrix x = a / std::ldexp(1.0, squarings);
  const Matrix identity = Matrix::Identity(n, n);
  Matrix p = identity + x / static_cast<double>(kTaylorDegree);
  for (int k = kTaylorDegree - 1; k >= 1; --k) {
    p = identity + (x * p) / static_cast<double>(k);
  }
  for (int s = 0; s < squarings; ++s) {
    p = (p * p).eval();
  }
  return p;
}

Matrix expm_antisymmetric(const Matrix &a) {
  require_square(a, "expm_antisymmetric");
  require_finite(a, "expm_antisymmetric");
  if (a.size() > 0 && skew_residual(a) > 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff())) {
    throw InvalidInput("expm_antisymmetric: input is not skew-symmetric");
  }
  return expm_general(a);
}

Matrix expm_frechet_adjoint(const Matrix &a, const Matrix &g) {
  require_square(a, "expm_frechet_adjoint");
  if (g.rows() != a.rows() || g.cols() != a.cols()) {
    throw InvalidInput("expm_frechet_adjoint: shape mismatch");
  }
  const Eigen::Index n = a.rows();
  Matrix block = Matrix::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = a.transpose();
  block.bottomRightCorner(n, n) = a.transpose();
  block.topRightCorner(n, n) = g;
  return expm_general(block).topRightCorner(n, n);
}

Matrix logm_special_orthogonal(const Matrix &m) {
  require_square(m, "logm_special_orthogonal");
  require_finite(m, "logm_special_orthogonal");
  const Eigen::Index n = m.rows();
  if (n == 0) {
    return m;
  }
  if (orthogonality_residual(m) >= kOrthogonalityTol) {
    throw InvalidInput("logm_special_orthogonal: matrix is not orthogonal");
  }
  if (std::abs(m.determinant() - 1.0) > kDeterminantTol) {
    throw InvalidInput("logm_special_orthogonal: determinant is not +1");
  }

  Eigen::RealSchur<Matrix> schur(m);
  if (schur.info() != Eigen::Success) {
    throw InvalidInput("logm_special_orthogonal: Schur decomposition failed");
  }
  const Matrix &t = schur.matrixT();
  const Matrix &q = schur.matrixU();

  Matrix log_t = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n;) {
    const bool block2 = i + 1 < n && t(i + 1, i) != 0.0;
    if (block2) {
      const double s = 0.5 * (t(i, i + 1) - t(i + 1, i));
      const double c = 0.5 * (t(i, i) + t(i + 1, i + 1));
      const double angle = std::atan2(s, c);
      if (std::numbers::pi - std::abs(angle) < kBranchTol) {
        throw BranchBoundary("logm_special_orthogonal: rotation angle at the principal branch boundary");
      }
      log_t(i, i + 1) = angle;
      log_t(i + 1, i) = -angle;
      i += 2;
    } else {
      if (t(i, i) < 0.0) {
        throw BranchBoundary("logm_special_orthogonal: eigenvalue -1");
      }
      i += 1;
    }
  }
  const Matrix a = q * log_t * q.transpose();
  return 0.5 * (a - a.transpose());
}

Vector pack_upper(const Matrix &a) {
  require_square(a, "pack_upper");
  const Eigen::Index n = a.rows();
  Vector out(n * (n - 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      out(k++) = a(i, j);
    }
  }
  return out;
}

Matrix unpack_skew(const Vector &upper, Eigen::Index n) {
  if (upper.size() != n * (n - 1) / 2) {
    throw InvalidInput("unpack_skew: length does not match n(n-1)/2");
  }
  Matrix a = Matrix::Zero(n, n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      a(i, j) = upper(k);
      a(j, i) = -upper(k);
      ++k;
    }
  }
  return a;
}

Eigen::Index dimension_from_upper_length(Eigen::Index len) {
  Eigen::Index n = 1;
  while (n * (n - 1) / 2 < len) {
    ++n;
  }
  if (n * (n - 1) / 2 != len) {
    throw InvalidInput("upper-triangular length " + std::to_string(len) +
                       " is not a triangular number");
  }
  return n;
}

SymmetricEigen symmetric_eigen(const Matrix &s) {
  require_square(s, "symmetric_eigen");
  require_finite(s, "symmetric_eigen");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(s);
  if (solver.info() != Eigen::Success) {
    throw InvalidInput("symmetric_eigen: solver failed");
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

Matrix lowdin_inverse_sqrt(const Matrix &s) {
  const auto eig = symmetric_eigen(s);
  if (eig.values.size() > 0 && eig.values(0) <= kLowdinMinEigenvalue) {
    throw NearLinearDependence("lowdin_inverse_sqrt: smallest overlap eigenvalue " +
                               std::to_string(eig.values(0)) + " (atoms too close)");
  }
  const Vector inv_sqrt = eig.values.array().rsqrt();
  const Matrix x = eig.vectors * inv_sqrt.asDiagonal() * eig.vectors.transpose();
  return 0.5 * (x + x.transpose());
}

PcaResult pca_axes(const Matrix &positions) {
  if (positions.cols() != 3 || positions.rows() < 1) {
    throw InvalidInput("pca_axes: expected N x 3 positions with N >= 1");
  }
  const Eigen::Index n = positions.rows();
  const Eigen::RowVector3d centroid = positions.colwise().mean();
  const Matrix centred = positions.rowwise() - centroid;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(centred.transpose() * centred);
  PcaResult out;
  out.axes = Matrix::Zero(3, 3);
  out.projections = Matrix::Constant(n, 3, 0.5);
  for (int k = 0; k < 3; ++k) {
    // eigenvalues ascend; axis 0 is the dominant direction
    const int src = 2 - k;
    out.singular_values(k) = std::sqrt(std::max(0.0, solver.eigenvalues()(src)));
    Eigen::Vector3d axis = solver.eigenvectors().col(src);
    if (out.singular_values(k) < kPcaDegenerateSingular) {
      out.axes.col(k) = axis;
      continue;
    }
    Vector proj = centred * axis;
    const double peak = proj.cwiseAbs().maxCoeff();
    Eigen::Index anchor = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(proj(i)) >= peak * (1.0 - 1e-9)) {
        anchor = i;
      }
    }
    if (proj(anchor) < 0.0) {
      axis = -axis;
      proj = -proj;
    }
    out.axes.col(k) = axis;
    const double lo = proj.minCoeff();
    const double hi = proj.maxCoeff();
    if (hi - lo > 1e-12) {
      out.projections.col(k) = (proj.array() - lo) / (hi - lo);
    }
  }
  return out;
}

} // namespace spaorb::linalg
