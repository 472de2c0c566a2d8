#pragma once

#include <cmath>

#include "fluxlab/errors.hpp"

namespace fluxlab {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

/// SI constants (CODATA 2018). Grouped so unit conversions have a single home.
struct PhysicalConstants {
    double hbar = 1.054571817e-34;                // J s
    double elementary_charge = 1.602176634e-19;   // C
    double boltzmann = 1.380649e-23;              // J / K
    double vacuum_permittivity = 8.8541878128e-12; // F / m
    double flux_quantum = pi * 1.054571817e-34 / 1.602176634e-19; // Wb, h/2e ~ 2.0678e-15

    double planck() const { return two_pi * hbar; }

    void validate() const {
        if (!(hbar > 0.0 && elementary_charge > 0.0 && boltzmann > 0.0 &&
              vacuum_permittivity > 0.0 && flux_quantum > 0.0))
            throw ParameterError("physical constants must be strictly positive");
        const double phi0 = pi * hbar / elementary_charge;
        if (std::abs(flux_quantum - phi0) > 1e-12 * phi0)
            throw ParameterError("flux quantum inconsistent with pi*hbar/e");
    }
};

// All frequencies cross this boundary in one place: configs carry ordinary
// frequencies (Hz = cycles/s), Hamiltonians and rates are angular (rad/s).
inline double to_angular(double f_hz) { return two_pi * f_hz; }
inline double to_ordinary(double omega_rad_s) { return omega_rad_s / two_pi; }

} // namespace fluxlab
