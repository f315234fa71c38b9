#include "spaorb/spa.hpp"

#include "spaorb/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>

namespace spaorb::spa {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kMaxDociOrbitals = 12;

void check_dimensions(const HcbCoefficients &c, const PairStructure &ps, const Vector &theta) {
  if (theta.size() != static_cast<Eigen::Index>(ps.pairs.size())) {
    throw InvalidInput("spa: angle count does not match pair count");
  }
  if (c.size() != 2 * theta.size()) {
    throw InvalidInput("spa: coefficient dimension does not match pair structure");
  }
}

Vector occupations(const HcbCoefficients &c, const PairStructure &ps, const Vector &theta) {
  Vector n = Vector::Zero(c.size());
  for (std::size_t k = 0; k < ps.pairs.size(); ++k) {
    const double ct = std::cos(theta(static_cast<Eigen::Index>(k)));
    n(ps.pairs[k].first) = 0.5 * (1.0 + ct);
    n(ps.pairs[k].second) = 0.5 * (1.0 - ct);
  }
  return n;
}

// Mean field on orbital p from every orbital outside p's own pair.
double cross_field(const HcbCoefficients &c, const Vector &n, int p, int partner) {
  double f = c.w.row(p).dot(n);
  f -= c.w(p, p) * n(p);
  f -= c.w(p, partner) * n(partner);
  return f;
}

} // namespace

void PairStructure::validate(Eigen::Index n) const {
  if (static_cast<Eigen::Index>(2 * pairs.size()) != n) {
    throw InvalidInput("pair structure does not cover every orbital exactly once");
  }
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (const auto &[b, a] : pairs) {
    if (b < 0 || a < 0 || b >= n || a >= n || b == a || seen[b] || seen[a]) {
      throw InvalidInput("pair structure is not a partition of the orbitals");
    }
    seen[b] = seen[a] = true;
  }
}

HcbCoefficients hcb_coefficients(const chem::IntegralSet &ints) {
  const Eigen::Index n = ints.size();
  HcbCoefficients c;
  c.e_nn = ints.e_nn;
  c.eps.resize(n);
  c.w = Matrix::Zero(n, n);
  c.k = Matrix::Zero(n, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    c.eps(p) = 2.0 * ints.h(p, p) + ints.g(p, p, p, p);
    for (Eigen::Index q = p + 1; q < n; ++q) {
      const double j = ints.g(p, p, q, q);
      const double k = ints.g(p, q, p, q);
      c.w(p, q) = c.w(q, p) = 4.0 * j - 2.0 * k;
      c.k(p, q) = c.k(q, p) = k;
    }
  }
  return c;
}

double spa_energy(const HcbCoefficients &c, const PairStructure &ps, const Vector &theta) {
  check_dimensions(c, ps, theta);
  const Vector n = occupations(c, ps, theta);
  double e = c.e_nn + c.eps.dot(n);
  // Each unordered cross-pair orbital pair once; intra-pair <n_b n_a> = 0.
  double cross = 0.5 * n.dot(c.w * n);
  for (std::size_t k = 0; k < ps.pairs.size(); ++k) {
    const auto [b, a] = ps.pairs[k];
    cross -= c.w(b, a) * n(b) * n(a);
    e += c.k(b, a) * -std::sin(theta(static_cast<Eigen::Index>(k)));
  }
  return e + cross;
}

Vector spa_gradient(const HcbCoefficients &c, const PairStructure &ps, const Vector &theta) {
  check_dimensions(c, ps, theta);
  const Vector n = occupations(c, ps, theta);
  Vector grad(theta.size());
  for (std::size_t k = 0; k < ps.pairs.size(); ++k) {
    const auto [b, a] = ps.pairs[k];
    const double t = theta(static_cast<Eigen::Index>(k));
    const double half_sin = 0.5 * std::sin(t);
    const double field_b = c.eps(b) + cross_field(c, n, b, a);
    const double field_a = c.eps(a) + cross_field(c, n, a, b);
    grad(static_cast<Eigen::Index>(k)) = -half_sin * field_b + half_sin * field_a - c.k(b, a) * std::cos(t);
  }
  return grad;
}

Vector canonical_angles(const Vector &theta) {
  Vector out(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    double t = std::fmod(theta(i) + std::numbers::pi, kTwoPi);
    if (t < 0.0) {
      t += kTwoPi;
    }
    t -= std::numbers::pi;
    if (t >= std::numbers::pi) {
      t -= kTwoPi;
    }
    out(i) = t;
  }
  return out;
}

ThetaResult minimize_theta(const HcbCoefficients &c, const PairStructure &ps, const Vector &th0,
                           const ThetaOptions &opts) {
  check_dimensions(c, ps, th0);
  if (!th0.allFinite() || !c.eps.allFinite() || !c.w.allFinite() || !c.k.allFinite()) {
    throw InvalidInput("minimize_theta: non-finite input");
  }
  const Eigen::Index m = th0.size();
  Vector theta = th0;
  double energy = spa_energy(c, ps, theta);
  Vector grad = spa_gradient(c, ps, theta);
  int iterations = 0;

  if (grad.norm() < opts.gradient_tol) {
    return {canonical_angles(theta), spa_energy(c, ps, canonical_angles(theta)), 0};
  }

  // Exact sweeps: with the other angles fixed, E(θ_k) = const + β cos θ_k - k_ba sin θ_k.
  const int sweep_cap = std::min(50, opts.max_iterations / 2);
  for (; iterations < sweep_cap; ++iterations) {
    const double before = energy;
    for (Eigen::Index k = 0; k < m; ++k) {
      const Vector n = occupations(c, ps, theta);
      const auto [b, a] = ps.pairs[static_cast<std::size_t>(k)];
      const double field_b = c.eps(b) + cross_field(c, n, b, a);
      const double field_a = c.eps(a) + cross_field(c, n, a, b);
      const double beta = 0.5 * (field_b - field_a);
      theta(k) = std::atan2(c.k(b, a), -beta);
    }
    energy = spa_energy(c, ps, theta);
    if (before - energy < opts.energy_tol * 1e-3) {
      break;
    }
  }

  // BFGS polish.
  grad = spa_gradient(c, ps, theta);
  Matrix hinv = Matrix::Identity(m, m);
  bool scaled = false;
  const double noise = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(energy));
  for (; iterations < opts.max_iterations && grad.norm() >= opts.gradient_tol; ++iterations) {
    Vector dir = -hinv * grad;
    double slope = grad.dot(dir);
    if (slope >= 0.0) {
      hinv.setIdentity();
      dir = -grad;
      slope = grad.dot(dir);
    }
    double step = 1.0;
    bool accepted = false;
    Vector trial;
    double trial_e = 0.0;
    Vector trial_g;
    for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
      trial = theta + step * dir;
      trial_e = spa_energy(c, ps, trial);
      trial_g = spa_gradient(c, ps, trial);
      const bool armijo = trial_e <= energy + 1e-4 * step * slope;
      const bool flat = trial_e <= energy + noise && trial_g.norm() < grad.norm();
      if (armijo || flat) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      break;
    }
    const Vector s = trial - theta;
    const Vector y = trial_g - grad;
    const double sy = s.dot(y);
    if (sy > 1e-300) {
      if (!scaled) {
        hinv *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Matrix id = Matrix::Identity(m, m);
      hinv = (id - rho * s * y.transpose()) * hinv * (id - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    theta = trial;
    energy = trial_e;
    grad = trial_g;
  }

  ThetaResult result{canonical_angles(theta), 0.0, iterations};
  result.energy = spa_energy(c, ps, result.theta);
  if (spa_gradient(c, ps, result.theta).norm() >= opts.gradient_tol) {
    throw ConvergenceFailure<ThetaResult>("minimize_theta: gradient tolerance not reached", result);
  }
  return result;
}

std::vector<std::uint32_t> seniority_zero_configurations(int n_orbitals, int n_pairs) {
  if (n_orbitals < 0 || n_orbitals > kMaxDociOrbitals || n_pairs < 0 || n_pairs > n_orbitals) {
    throw InvalidInput("seniority_zero_configurations: dimension overflow");
  }
  std::vector<std::uint32_t> out;
  for (std::uint32_t mask = 0; mask < (1u << n_orbitals); ++mask) {
    if (std::popcount(mask) == n_pairs) {
      out.push_back(mask);
    }
  }
  return out;
}

Matrix doci_hamiltonian(const HcbCoefficients &c, int n_pairs) {
  const int n = static_cast<int>(c.size());
  const auto configs = seniority_zero_configurations(n, n_pairs);
  const auto dim = static_cast<Eigen::Index>(configs.size());
  std::vector<int> index(std::size_t{1} << n, -1);
  for (Eigen::Index i = 0; i < dim; ++i) {
    index[configs[static_cast<std::size_t>(i)]] = static_cast<int>(i);
  }
  Matrix h = Matrix::Zero(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const std::uint32_t cfg = configs[static_cast<std::size_t>(i)];
    double diag = c.e_nn;
    for (int p = 0; p < n; ++p) {
      if (!(cfg >> p & 1u)) {
        continue;
      }
      diag += c.eps(p);
      for (int q = p + 1; q < n; ++q) {
        if (cfg >> q & 1u) {
          diag += c.w(p, q);
        }
      }
      for (int q = 0; q < n; ++q) {
        if (!(cfg >> q & 1u)) {
          const std::uint32_t moved = (cfg & ~(1u << p)) | (1u << q);
          h(index[moved], i) += c.k(p, q);
        }
      }
    }
    h(i, i) = diag;
  }
  return h;
}

DociResult doci_ground_energy(const HcbCoefficients &c, int n_pairs) {
  const Matrix h = doci_hamiltonian(c, n_pairs);
  const auto eig = linalg::symmetric_eigen(h);
  DociResult out;
  out.energy = eig.values(0);
  out.ground = eig.vectors.col(0);
  out.configurations = seniority_zero_configurations(static_cast<int>(c.size()), n_pairs);
  return out;
}

} // namespace spaorb::spa
