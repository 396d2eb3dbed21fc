#pragma once

// Unit conversion constants. Internal unit system is SI throughout
// (m, s, Pa, Pa*s, kg/m^3); field units are accepted only at the
// config boundary.

namespace fracflow::units {

inline constexpr double m2_per_mD = 9.869233e-16;
inline constexpr double Pa_per_psi = 6894.757;
inline constexpr double Pas_per_cP = 1.0e-3;

inline double from_mD(double mD) { return mD * m2_per_mD; }
inline double from_psi(double psi) { return psi * Pa_per_psi; }
inline double from_cP(double cP) { return cP * Pas_per_cP; }

} // namespace fracflow::units
