#include "spaorb/chem.hpp"

#include "spaorb/errors.hpp"
#include "spaorb/sto3g.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace spaorb::chem {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kPi = std::numbers::pi;
constexpr std::size_t kPrimitives = sto3g::kHydrogenExponents.size();

// Contraction weights with primitive normalization folded in and the
// contracted function renormalized to unit self-overlap.
std::array<double, kPrimitives> contraction_weights() {
  std::array<double, kPrimitives> w{};
  for (std::size_t k = 0; k < kPrimitives; ++k) {
    const double a = sto3g::kHydrogenExponents[k];
    w[k] = sto3g::kHydrogenCoefficients[k] * std::pow(2.0 * a / kPi, 0.75);
  }
  double self = 0.0;
  for (std::size_t k = 0; k < kPrimitives; ++k) {
    for (std::size_t l = 0; l < kPrimitives; ++l) {
      const double p = sto3g::kHydrogenExponents[k] + sto3g::kHydrogenExponents[l];
      self += w[k] * w[l] * std::pow(kPi / p, 1.5);
    }
  }
  const double scale = 1.0 / std::sqrt(self);
  for (auto &x : w) {
    x *= scale;
  }
  return w;
}

const std::array<double, kPrimitives> &weights() {
  static const auto w = contraction_weights();
  return w;
}

Matrix bohr_coords(const Geometry &geom) { return geom.coords * kAngstromToBohr; }

double primitive_overlap(double a, double b, double r2) {
  const double p = a + b;
  return std::pow(kPi / p, 1.5) * std::exp(-a * b / p * r2);
}

double primitive_kinetic(double a, double b, double r2) {
  const double mu = a * b / (a + b);
  return mu * (3.0 - 2.0 * mu * r2) * primitive_overlap(a, b, r2);
}

// Attraction to a unit point charge at C, sign included.
double primitive_attraction(double a, double b, const Eigen::Vector3d &ra,
                            const Eigen::Vector3d &rb, const Eigen::Vector3d &rc) {
  const double p = a + b;
  const Eigen::Vector3d rp = (a * ra + b * rb) / p;
  const double rab2 = (ra - rb).squaredNorm();
  return -2.0 * kPi / p * std::exp(-a * b / p * rab2) * boys_f0(p * (rp - rc).squaredNorm());
}

double primitive_eri(double a, double b, double c, double d, const Eigen::Vector3d &ra,
                     const Eigen::Vector3d &rb, const Eigen::Vector3d &rc,
                     const Eigen::Vector3d &rd) {
  const double p = a + b;
  const double q = c + d;
  const Eigen::Vector3d rp = (a * ra + b * rb) / p;
  const Eigen::Vector3d rq = (c * rc + d * rd) / q;
  const double pre = 2.0 * std::pow(kPi, 2.5) / (p * q * std::sqrt(p + q));
  const double e = std::exp(-a * b / p * (ra - rb).squaredNorm() - c * d / q * (rc - rd).squaredNorm());
  return pre * e * boys_f0(p * q / (p + q) * (rp - rq).squaredNorm());
}

template <typename PrimitiveFn>
Matrix contracted_one_electron(const Geometry &geom, PrimitiveFn fn) {
  const Matrix r = bohr_coords(geom);
  const Eigen::Index n = r.rows();
  const auto &w = weights();
  const auto &alpha = sto3g::kHydrogenExponents;
  Matrix out = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const Eigen::Vector3d ri = r.row(i).transpose();
      const Eigen::Vector3d rj = r.row(j).transpose();
      double sum = 0.0;
      for (std::size_t k = 0; k < kPrimitives; ++k) {
        for (std::size_t l = 0; l < kPrimitives; ++l) {
          sum += w[k] * w[l] * fn(alpha[k], alpha[l], ri, rj, r);
        }
      }
      out(i, j) = out(j, i) = sum;
    }
  }
  return out;
}

void require_square_dim(const IntegralSet &ints, const Matrix &c) {
  const Eigen::Index n = ints.size();
  if (c.rows() != n || c.cols() != n || ints.g.dim() != n) {
    throw InvalidInput("transform_integrals: dimension mismatch");
  }
}

} // namespace

double boys_f0(double t) {
  if (t < 1e-7) {
    return 1.0 - t / 3.0;
  }
  const double st = std::sqrt(t);
  return 0.5 * std::sqrt(kPi) / st * std::erf(st);
}

double EriTensor::symmetry_violation() const {
  double worst = 0.0;
  for (Eigen::Index p = 0; p < n_; ++p) {
    for (Eigen::Index q = 0; q < n_; ++q) {
      for (Eigen::Index r = 0; r < n_; ++r) {
        for (Eigen::Index s = 0; s < n_; ++s) {
          const double v = (*this)(p, q, r, s);
          worst = std::max({worst, std::abs(v - (*this)(q, p, r, s)),
                            std::abs(v - (*this)(p, q, s, r)),
                            std::abs(v - (*this)(r, s, p, q))});
        }
      }
    }
  }
  return worst;
}

Matrix overlap_matrix(const Geometry &geom) {
  return contracted_one_electron(geom, [](double a, double b, const Eigen::Vector3d &ri,
                                          const Eigen::Vector3d &rj, const Matrix &) {
    return primitive_overlap(a, b, (ri - rj).squaredNorm());
  });
}

Matrix kinetic_matrix(const Geometry &geom) {
  return contracted_one_electron(geom, [](double a, double b, const Eigen::Vector3d &ri,
                                          const Eigen::Vector3d &rj, const Matrix &) {
    return primitive_kinetic(a, b, (ri - rj).squaredNorm());
  });
}

Matrix nuclear_attraction_matrix(const Geometry &geom) {
  return contracted_one_electron(geom, [](double a, double b, const Eigen::Vector3d &ri,
                                          const Eigen::Vector3d &rj, const Matrix &nuclei) {
    double v = 0.0;
    for (Eigen::Index c = 0; c < nuclei.rows(); ++c) {
      v += primitive_attraction(a, b, ri, rj, nuclei.row(c).transpose());
    }
    return v;
  });
}

Matrix core_hamiltonian(const Geometry &geom) {
  return kinetic_matrix(geom) + nuclear_attraction_matrix(geom);
}

EriTensor eri_tensor(const Geometry &geom) {
  const Matrix r = bohr_coords(geom);
  const Eigen::Index n = r.rows();
  const auto &w = weights();
  const auto &alpha = sto3g::kHydrogenExponents;
  EriTensor g(n);
  for (Eigen::Index p = 0; p < n; ++p) {
    for (Eigen::Index q = 0; q <= p; ++q) {
      const Eigen::Index pq = p * (p + 1) / 2 + q;
      for (Eigen::Index s = 0; s <= p; ++s) {
        for (Eigen::Index t = 0; t <= s; ++t) {
          const Eigen::Index st = s * (s + 1) / 2 + t;
          if (st > pq) {
            continue;
          }
          const Eigen::Vector3d rp = r.row(p).transpose();
          const Eigen::Vector3d rq = r.row(q).transpose();
          const Eigen::Vector3d rs = r.row(s).transpose();
          const Eigen::Vector3d rt = r.row(t).transpose();
          double sum = 0.0;
          for (std::size_t i = 0; i < kPrimitives; ++i) {
            for (std::size_t j = 0; j < kPrimitives; ++j) {
              for (std::size_t k = 0; k < kPrimitives; ++k) {
                for (std::size_t l = 0; l < kPrimitives; ++l) {
                  sum += w[i] * w[j] * w[k] * w[l] *
                         primitive_eri(alpha[i], alpha[j], alpha[k], alpha[l], rp, rq, rs, rt);
                }
              }
            }
          }
          g(p, q, s, t) = g(q, p, s, t) = g(p, q, t, s) = g(q, p, t, s) = sum;
          g(s, t, p, q) = g(t, s, p, q) = g(s, t, q, p) = g(t, s, q, p) = sum;
        }
      }
    }
  }
  return g;
}

double nuclear_repulsion(const Geometry &geom) {
  const Eigen::Index n = geom.size();
  double e = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const double d = (geom.coords.row(a) - geom.coords.row(b)).norm();
      if (d <= 1e-6) {
        throw InvalidGeometry("nuclear_repulsion: atoms " + std::to_string(a) + " and " +
                              std::to_string(b) + " coincide");
      }
      e += 1.0 / (d * kAngstromToBohr);
    }
  }
  return e;
}

IntegralSet atomic_integrals(const Geometry &geom) {
  IntegralSet ints;
  ints.e_nn = nuclear_repulsion(geom);
  ints.h = core_hamiltonian(geom);
  ints.g = eri_tensor(geom);
  ints.basis = BasisLabel::atomic;
  return ints;
}

IntegralSet change_basis(const IntegralSet &ints, const Matrix &c, BasisLabel label) {
  require_square_dim(ints, c);
  const Eigen::Index n = ints.size();
  IntegralSet out;
  out.e_nn = ints.e_nn;
  out.basis = label;
  const Matrix h = c.transpose() * ints.h * c;
  out.h = 0.5 * (h + h.transpose());

  // Each pass contracts the leading index and rotates it to the back:
  // [a][b][c][d] -> [b][c][d][p]. Four passes restore the original order.
  const Eigen::Index rest = n * n * n;
  std::vector<double> cur = ints.g.data();
  std::vector<double> next(cur.size());
  for (int pass = 0; pass < 4; ++pass) {
    Eigen::Map<const RowMajor> src(cur.data(), n, rest);
    Eigen::Map<RowMajor> dst(next.data(), rest, n);
    dst.noalias() = src.transpose() * c;
    std::swap(cur, next);
  }
  out.g = EriTensor(n);
  out.g.data() = std::move(cur);
  return out;
}

IntegralSet transform_integrals(const IntegralSet &ints, const Matrix &c) {
  require_square_dim(ints, c);
  if (!c.allFinite() || (c.size() > 0 && linalg::orthogonality_residual(c) >= linalg::kOrthogonalityTol)) {
    throw InvalidInput("transform_integrals: rotation matrix is not orthogonal");
  }
  return change_basis(ints, c, BasisLabel::rotated);
}

IntegralSet to_native_basis(const IntegralSet &atomic, const Matrix &overlap) {
  const Matrix x = linalg::lowdin_inverse_sqrt(overlap);
  return change_basis(atomic, x, BasisLabel::native);
}

IntegralSet native_integrals(const Geometry &geom) {
  return to_native_basis(atomic_integrals(geom), overlap_matrix(geom));
}

} // namespace spaorb::chem
