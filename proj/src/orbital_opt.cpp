#include "spaorb/orbital_opt.hpp"

#include "spaorb/errors.hpp"
#include "spaorb/linalg.hpp"

#include <cmath>

namespace spaorb::orbital_opt {

namespace {

struct Iterate {
  Vector a;
  double energy;
  Vector theta;
};

// Armijo backtracking from a unit step, growing the step while it keeps
// improving when the unit step is accepted outright. Returns false when no
// decreasing step was found.
bool line_search(const OrbitalObjective &obj, const Iterate &cur, const Vector &grad, Vector dir,
                 const OuterOptions &opts, Iterate &out) {
  double dmax = dir.cwiseAbs().maxCoeff();
  if (!(dmax > 0.0)) {
    return false;
  }
  if (dmax > opts.max_step) {
    dir *= opts.max_step / dmax;
    dmax = opts.max_step;
  }
  const double slope = grad.dot(dir);
  if (slope >= 0.0) {
    return false;
  }
  auto try_step = [&](double t) {
    const Vector a = cur.a + t * dir;
    auto v = obj.evaluate(a, cur.theta);
    return Iterate{a, v.energy, std::move(v.theta)};
  };

  Iterate best = try_step(1.0);
  if (best.energy <= cur.energy + 1e-4 * slope) {
    double t = 1.0;
    for (int grow = 0; grow < 6; ++grow) {
      t *= 2.0;
      if (t * dmax > 4.0 * opts.max_step) {
        break;
      }
      Iterate bigger = try_step(t);
      if (!(bigger.energy < best.energy)) {
        break;
      }
      best = std::move(bigger);
    }
    out = std::move(best);
    return true;
  }
  double t = 1.0;
  for (int shrink = 0; shrink < 40; ++shrink) {
    t *= 0.5;
    Iterate trial = try_step(t);
    if (trial.energy <= cur.energy + 1e-4 * t * slope) {
      out = std::move(trial);
      return true;
    }
  }
  return false;
}

OrbitalOptResult finish(const OrbitalObjective &obj, const Iterate &cur, int iterations,
                        std::vector<double> trace, double gmax, bool converged) {
  OrbitalOptResult r;
  r.m_oo = linalg::expm_antisymmetric(linalg::unpack_skew(cur.a, obj.dim()));
  r.theta_opt = cur.theta;
  r.e_spa = cur.energy;
  r.outer_iterations = iterations;
  r.energy_trace = std::move(trace);
  r.gradient_max = gmax;
  r.converged = converged;
  return r;
}

Iterate start_iterate(const OrbitalObjective &obj, const Matrix &m_start) {
  if (m_start.rows() != obj.dim() || m_start.cols() != obj.dim()) {
    throw InvalidInput("orbital optimization: start matrix dimension mismatch");
  }
  const Vector a = linalg::pack_upper(linalg::logm_special_orthogonal(m_start));
  auto v = obj.evaluate(a, Vector::Zero(static_cast<Eigen::Index>(obj.pairs().pairs.size())));
  return {a, v.energy, std::move(v.theta)};
}

} // namespace

OrbitalObjective::OrbitalObjective(const chem::IntegralSet &ints_native, spa::PairStructure ps)
    : ints_(ints_native), ps_(std::move(ps)) {
  ps_.validate(ints_.size());
}

OrbitalObjective::Value OrbitalObjective::evaluate(const Vector &a_upper, const Vector &theta_start) const {
  const Matrix m = linalg::expm_antisymmetric(linalg::unpack_skew(a_upper, dim()));
  const auto coeffs = spa::hcb_coefficients(chem::change_basis(ints_, m, chem::BasisLabel::rotated));
  auto r = spa::minimize_theta(coeffs, ps_, theta_start);
  return {r.energy, std::move(r.theta)};
}

Vector OrbitalObjective::gradient(const Vector &a_upper, const Vector &theta_start, double step) const {
  Vector g(a_upper.size());
  Vector probe = a_upper;
  for (Eigen::Index i = 0; i < a_upper.size(); ++i) {
    probe(i) = a_upper(i) + step;
    const double plus = evaluate(probe, theta_start).energy;
    probe(i) = a_upper(i) - step;
    const double minus = evaluate(probe, theta_start).energy;
    probe(i) = a_upper(i);
    g(i) = (plus - minus) / (2.0 * step);
  }
  return g;
}

spa::ThetaResult energy_at(const chem::IntegralSet &ints_native, const spa::PairStructure &ps,
                           const Matrix &m) {
  const auto coeffs = spa::hcb_coefficients(chem::transform_integrals(ints_native, m));
  return spa::minimize_theta(coeffs, ps, Vector::Zero(static_cast<Eigen::Index>(ps.pairs.size())));
}

OrbitalOptResult optimize_orbitals(const chem::IntegralSet &ints_native, const spa::PairStructure &ps,
                                   const Matrix &m_init, const OuterOptions &opts) {
  const OrbitalObjective obj(ints_native, ps);
  Iterate cur = start_iterate(obj, m_init);
  std::vector<double> trace{cur.energy};
  Vector grad = obj.gradient(cur.a, cur.theta, opts.fd_step);
  const Eigen::Index dim = cur.a.size();
  Matrix hinv = Matrix::Identity(dim, dim);
  bool scaled = false;
  int iterations = 0;
  bool converged = grad.size() == 0 || grad.cwiseAbs().maxCoeff() < opts.gradient_tol;

  while (!converged && iterations < opts.max_iterations) {
    Vector dir = -hinv * grad;
    if (grad.dot(dir) >= 0.0) {
      hinv.setIdentity();
      scaled = false;
      dir = -grad;
    }
    Iterate next;
    if (!line_search(obj, cur, grad, dir, opts, next)) {
      if (scaled) {
        // retry once along the plain gradient before giving up
        hinv.setIdentity();
        scaled = false;
        continue;
      }
      break;
    }
    ++iterations;
    const Vector grad_next = obj.gradient(next.a, next.theta, opts.fd_step);
    const Vector s = next.a - cur.a;
    const Vector y = grad_next - grad;
    const double sy = s.dot(y);
    if (sy > 1e-14 * s.norm() * y.norm()) {
      if (!scaled) {
        hinv = Matrix::Identity(dim, dim) * (sy / y.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Matrix id = Matrix::Identity(dim, dim);
      hinv = (id - rho * s * y.transpose()) * hinv * (id - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    cur = std::move(next);
    grad = grad_next;
    trace.push_back(cur.energy);
    converged = grad.cwiseAbs().maxCoeff() < opts.gradient_tol;
  }
  const double gmax = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
  return finish(obj, cur, iterations, std::move(trace), gmax, converged);
}

OrbitalOptResult warm_start_step(const chem::IntegralSet &ints_native, const spa::PairStructure &ps,
                                 const Matrix &m_start, const OuterOptions &opts) {
  const OrbitalObjective obj(ints_native, ps);
  Iterate cur = start_iterate(obj, m_start);
  std::vector<double> trace{cur.energy};
  const Vector grad = obj.gradient(cur.a, cur.theta, opts.fd_step);
  Iterate next;
  if (grad.size() > 0 && line_search(obj, cur, grad, -grad, opts, next)) {
    cur = std::move(next);
    trace.push_back(cur.energy);
  }
  const double gmax = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
  return finish(obj, cur, 1, std::move(trace), gmax, gmax < opts.gradient_tol);
}

} // namespace spaorb::orbital_opt
