#pragma once

#include "spaorb/chem.hpp"
#include "spaorb/spa.hpp"

#include <vector>

namespace spaorb::orbital_opt {

struct OuterOptions {
  int max_iterations = 200;
  double energy_tol = 1e-8;
  double gradient_tol = 1e-6;
  double fd_step = 1e-5;
  double max_step = 0.5; // cap on the max-norm of a trial generator step
};

struct OrbitalOptResult {
  Matrix m_oo;
  Vector theta_opt;
  double e_spa = 0.0;
  int outer_iterations = 0;
  std::vector<double> energy_trace;
  double gradient_max = 0.0;
  bool converged = false;
};

/// f(A) = min_θ E_SPA(θ; ints rotated by e^A), evaluated with the inner
/// solve warm-started from a supplied angle vector.
class OrbitalObjective {
public:
  OrbitalObjective(const chem::IntegralSet &ints_native, spa::PairStructure ps);

  struct Value {
    double energy;
    Vector theta;
  };

  Value evaluate(const Vector &a_upper, const Vector &theta_start) const;

  /// Central finite-difference gradient of f at a_upper, inner solves started
  /// from theta_start.
  Vector gradient(const Vector &a_upper, const Vector &theta_start, double step) const;

  Eigen::Index dim() const { return ints_.size(); }
  const spa::PairStructure &pairs() const { return ps_; }

private:
  const chem::IntegralSet &ints_;
  spa::PairStructure ps_;
};

/// Energy-optimal θ for fixed orbitals m (starting from θ = 0).
spa::ThetaResult energy_at(const chem::IntegralSet &ints_native, const spa::PairStructure &ps,
                           const Matrix &m);

/// Nested minimization over (A, θ) starting at A = logm(m_init). BFGS on the
/// packed generator entries with finite-difference gradients; the inner θ
/// problem is solved to the spa module tolerance at every evaluation.
/// Hitting the iteration cap returns the best iterate with converged = false.
OrbitalOptResult optimize_orbitals(const chem::IntegralSet &ints_native, const spa::PairStructure &ps,
                                   const Matrix &m_init, const OuterOptions &opts = {});

/// Exactly one outer iteration (steepest-descent direction plus line search)
/// from m_start. Never increases the energy.
OrbitalOptResult warm_start_step(const chem::IntegralSet &ints_native, const spa::PairStructure &ps,
                                 const Matrix &m_start, const OuterOptions &opts = {});

} // namespace spaorb::orbital_opt
