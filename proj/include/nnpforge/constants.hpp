// SPDX-License-Identifier: Apache-2.0
//
// Unit system used throughout: length Å, time fs, mass amu, energy kcal/mol,
// temperature K. Every cross-unit conversion lives here and nowhere else.
#pragma once

#include <stdexcept>

namespace nnpforge::units {

// Boltzmann constant, kcal/mol/K.
inline constexpr double kBoltzmann = 0.0019872041;

// Acceleration conversion: (kcal/mol/Å) / amu -> Å/fs².
// 1 kcal/mol/Å = 4184 J/mol / 1e-10 m, 1 amu = 1e-3 kg/mol,
// 1 m/s² = 1e-20 Å/fs².
inline constexpr double kForceToAccel = 4.184e-4;

// Kinetic energy conversion: amu·Å²/fs² -> kcal/mol. Inverse of the above.
inline constexpr double kKineticToKcal = 1.0 / kForceToAccel;

// Coulomb constant, kcal·Å/mol/e².
inline constexpr double kCoulomb = 332.0637;

inline constexpr double kPi = 3.14159265358979323846;

// Standard atomic weights, amu.
inline double atomic_mass(int z) {
  switch (z) {
    case 1: return 1.008;
    case 6: return 12.011;
    case 7: return 14.007;
    case 8: return 15.999;
    default: throw std::invalid_argument("no mass tabulated for element Z=" + std::to_string(z));
  }
}

}  // namespace nnpforge::units
