#pragma once

#include <array>

// STO-3G hydrogen 1s contraction (Hehre, Stewart, Pople, J. Chem. Phys. 51,
// 2657 (1969); values as distributed by the EMSL/BSE basis set exchange).
// Coefficients multiply normalized primitive Gaussians.
namespace spaorb::sto3g {

inline constexpr int kVersion = 1;

inline constexpr std::array<double, 3> kHydrogenExponents = {3.42525091, 0.62391373, 0.16885540};
inline constexpr std::array<double, 3> kHydrogenCoefficients = {0.15432897, 0.53532814, 0.44463454};

} // namespace spaorb::sto3g
