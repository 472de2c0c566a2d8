#pragma once

#include <cmath>
#include <optional>

#include "fluxlab/constants.hpp"
#include "fluxlab/errors.hpp"
#include "fluxlab/optim.hpp"

namespace fluxlab::electromech {

/// DC-biased vacuum-gap membrane capacitor, SI units throughout.
struct MembraneParams {
    double side_m = 0.0;
    double stress_pa = 0.0;
    double f_m_hz = 0.0;          // mechanical mode frequency
    double mass_kg = 0.0;         // motional mass
    std::optional<double> x_zpf_m;  // tabulated zero-point motion, if given
    double density_kg_m3 = 0.0;
    double gap_m = 0.0;           // electrode separation h
    double electrode_area_m2 = 0.0;
    double capacitance_f = 0.0;
    double bias_v = 0.0;

    void validate() const {
        for (double v : {side_m, stress_pa, f_m_hz, mass_kg, density_kg_m3, gap_m,
                         electrode_area_m2, capacitance_f})
            if (!(v > 0.0)) throw ParameterError("membrane parameters must be positive");
        if (bias_v < 0.0) throw ParameterError("bias voltage must be >= 0");
        if (x_zpf_m && !(*x_zpf_m > 0.0)) throw ParameterError("x_zpf must be positive");
    }

    /// Parallel-plate consistency of the quoted capacitance, warn-only.
    bool capacitance_consistent(const PhysicalConstants& c = {}) const {
        const double parallel_plate = c.vacuum_permittivity * electrode_area_m2 / gap_m;
        return std::abs(capacitance_f - parallel_plate) <= 0.3 * parallel_plate;
    }
};

/// x_zpf = sqrt(hbar / (2 m Omega_m)).
inline double zero_point_motion(double mass_kg, double f_m_hz, const PhysicalConstants& c = {}) {
    if (!(mass_kg > 0.0 && f_m_hz > 0.0)) throw ParameterError("mass and frequency must be positive");
    return std::sqrt(c.hbar / (2.0 * mass_kg * to_angular(f_m_hz)));
}

/// Inverse map, m = hbar / (2 Omega_m x_zpf^2).
inline double mass_from_zero_point(double x_zpf_m, double f_m_hz, const PhysicalConstants& c = {}) {
    return c.hbar / (2.0 * to_angular(f_m_hz) * x_zpf_m * x_zpf_m);
}

struct ZeroPointReport {
    double computed_m = 0.0;
    std::optional<double> tabulated_m;
    double ratio = 1.0;     // tabulated / computed when both exist
    double effective_m = 0.0;  // the value downstream estimates use
};

/// Tabulated value wins when supplied; both are reported side by side.
inline ZeroPointReport zero_point_report(const MembraneParams& p, const PhysicalConstants& c = {}) {
    ZeroPointReport r;
    r.computed_m = zero_point_motion(p.mass_kg, p.f_m_hz, c);
    r.tabulated_m = p.x_zpf_m;
    r.effective_m = p.x_zpf_m.value_or(r.computed_m);
    if (p.x_zpf_m) r.ratio = *p.x_zpf_m / r.computed_m;
    return r;
}

/// Net force on the electrode at separation z under bias V:
/// F = -m Omega_m^2 (z - h) - V^2 eps0 S / (2 z^2).
inline double membrane_force(const MembraneParams& p, double z_m, double bias_v,
                             const PhysicalConstants& c = {}) {
    const double omega_m = to_angular(p.f_m_hz);
    return -p.mass_kg * omega_m * omega_m * (z_m - p.gap_m) -
           bias_v * bias_v * c.vacuum_permittivity * p.electrode_area_m2 / (2.0 * z_m * z_m);
}

struct PullInResult {
    double v_max_analytic = 0.0;   // sqrt(m Omega^2 h^3 / (eps0 S))
    double v_pullin_numeric = 0.0; // bisection on the loss of the stable branch
};

/// The stable equilibrium lives on z in (2h/3, h]; it disappears when the
/// restoring slope at 2h/3 changes sign, found here by bisection in V.
inline PullInResult pull_in_voltage(const MembraneParams& p, const PhysicalConstants& c = {}) {
    p.validate();
    const double omega_m = to_angular(p.f_m_hz);
    PullInResult r;
    r.v_max_analytic = std::sqrt(p.mass_kg * omega_m * omega_m * p.gap_m * p.gap_m * p.gap_m /
                                 (c.vacuum_permittivity * p.electrode_area_m2));
    if (!(membrane_force(p, p.gap_m, 0.0, c) == 0.0))
        throw ParameterError("no equilibrium at zero bias");

    auto has_stable_equilibrium = [&](double v) {
        // force is positive at the inflection separation while a stable root exists
        return membrane_force(p, 2.0 * p.gap_m / 3.0, v, c) > 0.0;
    };
    double lo = 0.0, hi = r.v_max_analytic;
    if (has_stable_equilibrium(hi)) {
        r.v_pullin_numeric = hi;
        return r;
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (has_stable_equilibrium(mid))
            lo = mid;
        else
            hi = mid;
        if ((hi - lo) < 1e-9 * r.v_max_analytic) break;
    }
    r.v_pullin_numeric = 0.5 * (lo + hi);
    return r;
}

/// Stable equilibrium separation for a bias below pull-in, by bisection of the
/// force on (2h/3, h].
inline double equilibrium_separation(const MembraneParams& p, double bias_v,
                                     const PhysicalConstants& c = {}) {
    if (bias_v == 0.0) return p.gap_m;
    const double z_lo = 2.0 * p.gap_m / 3.0;
    if (!(membrane_force(p, z_lo, bias_v, c) > 0.0))
        throw ParameterError("bias beyond pull-in: no stable equilibrium");
    return num::bisect([&](double z) { return membrane_force(p, z, bias_v, c); }, z_lo, p.gap_m,
                       1e-14);
}

/// Charge modulation by the zero-point motion, N_drive = (V_g / 2e) x_zpf dC/dx
/// with dC/dx = C/h; uses the tabulated x_zpf when the table provides one.
inline double charge_modulation(const MembraneParams& p, const PhysicalConstants& c = {}) {
    p.validate();
    const auto pull_in = pull_in_voltage(p, c);
    if (p.bias_v >= pull_in.v_pullin_numeric)
        throw ParameterError("bias voltage exceeds the pull-in threshold");
    const double x_zpf = zero_point_report(p, c).effective_m;
    const double dc_dx = p.capacitance_f / p.gap_m;
    return p.bias_v / (2.0 * c.elementary_charge) * x_zpf * dc_dx;
}

/// Exact parallel-plate derivative, reported next to the C/h approximation.
inline double dc_dx_parallel_plate(const MembraneParams& p, const PhysicalConstants& c = {}) {
    return c.vacuum_permittivity * p.electrode_area_m2 / (p.gap_m * p.gap_m);
}

struct CouplingReport {
    double n_drive = 0.0;
    double omega_r_hz = 0.0;               // Rabi frequency over 2 pi
    double n_min = 0.0;                    // smallest resolvable charge modulation
    double energy_sensitivity_hbar = 0.0;  // delta_q^2 / (2 C) in units of hbar
    bool strong_coupling = false;          // Omega_r T1 > 2 pi
};

/// Figures of merit for a resonant electromechanical coupling:
/// Omega_r = 2 N_drive omega_ge |<e|phi|g>| and N_min = 2 pi / (|<e|phi|g>| omega_ge T1).
inline CouplingReport coupling_figures(double n_drive, double f_ge_hz, double abs_phi_ge,
                                       double T1_s, double capacitance_f, double delta_q_e_sqrt_hz,
                                       const PhysicalConstants& c = {}) {
    if (!(f_ge_hz > 0.0 && abs_phi_ge > 0.0 && T1_s > 0.0 && capacitance_f > 0.0))
        throw ParameterError("coupling figures need positive inputs");
    CouplingReport r;
    r.n_drive = n_drive;
    const double omega_ge = to_angular(f_ge_hz);
    const double omega_r = 2.0 * n_drive * omega_ge * abs_phi_ge;
    r.omega_r_hz = to_ordinary(omega_r);
    r.n_min = two_pi / (abs_phi_ge * omega_ge * T1_s);
    const double dq_coulomb = delta_q_e_sqrt_hz * c.elementary_charge;
    r.energy_sensitivity_hbar = dq_coulomb * dq_coulomb / (2.0 * capacitance_f) / c.hbar;
    r.strong_coupling = omega_r * T1_s > two_pi;
    return r;
}

} // namespace fluxlab::electromech
