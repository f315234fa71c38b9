#include "spaorb/losses.hpp"

#include "spaorb/errors.hpp"

#include <cmath>

namespace spaorb::losses {

namespace {

Matrix occupied_block(const Matrix &m, const OccupiedSelector &sel) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(sel.occupied_columns.size()));
  for (std::size_t k = 0; k < sel.occupied_columns.size(); ++k) {
    const int col = sel.occupied_columns[k];
    if (col < 0 || col >= m.cols()) {
      throw InvalidInput("occupied selector column out of range");
    }
    out.col(static_cast<Eigen::Index>(k)) = m.col(col);
  }
  return out;
}

void require_same_shape(const Matrix &a, const Matrix &b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput("loss: predicted and reference matrices differ in shape");
  }
}

} // namespace

void LossWeights::validate() const {
  if (!(lambda1 >= 0.0 && lambda2 >= 0.0 && huber_delta >= 0.0)) {
    throw InvalidInput("loss weights must be non-negative");
  }
}

OccupiedSelector OccupiedSelector::from_matching(const datagen::Matching &matching) {
  OccupiedSelector sel;
  for (const auto &[i, j] : matching.edges) {
    sel.occupied_columns.push_back(std::min(i, j));
  }
  return sel;
}

double huber_term(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double huber_term_derivative(double r, double delta) {
  if (std::abs(r) <= delta) {
    return r;
  }
  return r > 0.0 ? delta : -delta;
}

double huber_loss(const Vector &pred, const Vector &ref, double delta) {
  if (pred.size() != ref.size()) {
    throw InvalidInput("huber_loss: length mismatch");
  }
  if (pred.size() == 0) {
    return 0.0;
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    sum += huber_term(pred(i) - ref(i), delta);
  }
  return sum / static_cast<double>(pred.size());
}

Matrix cofactor(const Matrix &s) {
  const Eigen::Index k = s.rows();
  Matrix cof(k, k);
  if (k == 1) {
    cof(0, 0) = 1.0;
    return cof;
  }
  Matrix minor(k - 1, k - 1);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      for (Eigen::Index r = 0, mr = 0; r < k; ++r) {
        if (r == i) {
          continue;
        }
        for (Eigen::Index c = 0, mc = 0; c < k; ++c) {
          if (c == j) {
            continue;
          }
          minor(mr, mc++) = s(r, c);
        }
        ++mr;
      }
      cof(i, j) = ((i + j) % 2 == 0 ? 1.0 : -1.0) * minor.determinant();
    }
  }
  return cof;
}

double det_overlap_loss(const Matrix &m_pred, const Matrix &m_ref, const OccupiedSelector &sel) {
  require_same_shape(m_pred, m_ref);
  const Matrix s = occupied_block(m_pred, sel).transpose() * occupied_block(m_ref, sel);
  const double det = s.determinant();
  return 1.0 - det * det;
}

Matrix det_overlap_gradient(const Matrix &m_pred, const Matrix &m_ref, const OccupiedSelector &sel) {
  require_same_shape(m_pred, m_ref);
  const Matrix ref_occ = occupied_block(m_ref, sel);
  const Matrix s = occupied_block(m_pred, sel).transpose() * ref_occ;
  const double det = s.determinant();
  // d(det²)/dS = 2 det · cof(S)
  const Matrix d_s = -2.0 * det * cofactor(s);
  const Matrix d_occ = ref_occ * d_s.transpose();
  Matrix grad = Matrix::Zero(m_pred.rows(), m_pred.cols());
  for (std::size_t k = 0; k < sel.occupied_columns.size(); ++k) {
    grad.col(sel.occupied_columns[k]) += d_occ.col(static_cast<Eigen::Index>(k));
  }
  return grad;
}

double sign_invariant_orbital_loss(const Matrix &m_pred, const Matrix &m_ref) {
  require_same_shape(m_pred, m_ref);
  if (m_pred.cols() == 0) {
    return 0.0;
  }
  double sum = 0.0;
  for (Eigen::Index c = 0; c < m_pred.cols(); ++c) {
    sum += std::min((m_pred.col(c) - m_ref.col(c)).squaredNorm(), (m_pred.col(c) + m_ref.col(c)).squaredNorm());
  }
  return sum / static_cast<double>(m_pred.cols());
}

Matrix sign_invariant_orbital_gradient(const Matrix &m_pred, const Matrix &m_ref) {
  require_same_shape(m_pred, m_ref);
  Matrix grad(m_pred.rows(), m_pred.cols());
  const double scale = m_pred.cols() > 0 ? 2.0 / static_cast<double>(m_pred.cols()) : 0.0;
  for (Eigen::Index c = 0; c < m_pred.cols(); ++c) {
    const double minus = (m_pred.col(c) - m_ref.col(c)).squaredNorm();
    const double plus = (m_pred.col(c) + m_ref.col(c)).squaredNorm();
    const double sign = minus <= plus ? -1.0 : 1.0;
    grad.col(c) = scale * (m_pred.col(c) + sign * m_ref.col(c));
  }
  return grad;
}

LossBreakdown combined_loss(const Vector &a_pred, const Matrix &m_pred, const Vector &a_ref,
                            const Matrix &m_ref, const LossWeights &w, const OccupiedSelector &sel) {
  LossBreakdown out;
  out.huber = huber_loss(a_pred, a_ref, w.huber_delta);
  out.det = det_overlap_loss(m_pred, m_ref, sel);
  out.orb = sign_invariant_orbital_loss(m_pred, m_ref);
  out.total = out.huber + w.lambda1 * out.det + w.lambda2 * out.orb;
  return out;
}

} // namespace spaorb::losses
