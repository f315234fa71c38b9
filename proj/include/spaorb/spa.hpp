#pragma once

#include "spaorb/chem.hpp"
#include "spaorb/linalg.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace spaorb::spa {

/// Seniority-zero (hardcore-boson) Hamiltonian coefficients.
///   eps[p]  = 2 h_pp + (pp|pp)
///   w[p][q] = 4 (pp|qq) - 2 (pq|pq),  p != q
///   k[p][q] = (pq|pq),                p != q
struct HcbCoefficients {
  Vector eps;
  Matrix w;
  Matrix k;
  double e_nn = 0.0;

  Eigen::Index size() const { return eps.size(); }
};

/// One (bonding, antibonding) orbital pair per matching edge, bonding < antibonding.
struct PairStructure {
  std::vector<std::pair<int, int>> pairs;

  /// Throws InvalidInput unless the pairs partition {0..n-1}.
  void validate(Eigen::Index n) const;
};

HcbCoefficients hcb_coefficients(const chem::IntegralSet &ints);

/// SPA product-state energy at fixed angles. Pair k carries amplitudes
/// (cos(θ_k/2), -sin(θ_k/2)) on its (bonding, antibonding) orbitals.
double spa_energy(const HcbCoefficients &c, const PairStructure &ps, const Vector &theta);

/// Analytic dE/dθ.
Vector spa_gradient(const HcbCoefficients &c, const PairStructure &ps, const Vector &theta);

struct ThetaOptions {
  int max_iterations = 500;
  double energy_tol = 1e-10;
  double gradient_tol = 1e-9;
};

struct ThetaResult {
  Vector theta; // canonical range [-π, π)
  double energy = 0.0;
  int iterations = 0;
};

/// Minimizes spa_energy over θ from th0: exact single-angle sweeps (each angle
/// enters as a cos/sin pair) followed by BFGS with the analytic gradient.
/// Throws ConvergenceFailure<ThetaResult> when the budget runs out.
ThetaResult minimize_theta(const HcbCoefficients &c, const PairStructure &ps, const Vector &th0,
                           const ThetaOptions &opts = {});

/// Wraps every angle into [-π, π).
Vector canonical_angles(const Vector &theta);

/// Occupation bitstrings with n_pairs bosons on size() orbitals, ascending.
std::vector<std::uint32_t> seniority_zero_configurations(int n_orbitals, int n_pairs);

/// Dense seniority-zero Hamiltonian (e_nn on the diagonal) over
/// seniority_zero_configurations. Limited to 12 orbitals.
Matrix doci_hamiltonian(const HcbCoefficients &c, int n_pairs);

struct DociResult {
  double energy = 0.0;
  Vector ground;
  std::vector<std::uint32_t> configurations;
};

DociResult doci_ground_energy(const HcbCoefficients &c, int n_pairs);

} // namespace spaorb::spa
