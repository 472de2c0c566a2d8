#include <catch2/catch.hpp>

#include <cmath>
#include <complex>

#include "fluxlab/dynamics.hpp"
#include "fluxlab/rng.hpp"

using namespace fluxlab;
using namespace fluxlab::dynamics;
using std::complex;

namespace {

const circuit::CircuitParams kDevice{5.178e9, 0.4144e9, 0.18e9};
const circuit::BasisConfig kBasis{120};

} // namespace

TEST_CASE("steady-state cavity amplitude") {
    const double kappa = two_pi * 2.4e6;
    REQUIRE(std::abs(steady_state_alpha(1.0e6, kappa, 0.0)) == 0.0);

    const auto alpha_res = steady_state_alpha(0.0, kappa, two_pi * 1.0e6);
    REQUIRE(std::abs(alpha_res) == Approx(2.0 * two_pi * 1.0e6 / kappa).epsilon(1e-12));
    REQUIRE(alpha_res.real() == Approx(0.0).margin(1e-12));

    SeqRng rng(11);
    for (int i = 0; i < 10; ++i) {
        const complex<double> eps(1e6 * (rng.next_u01() - 0.5), 1e6 * (rng.next_u01() - 0.5));
        const double delta = 4e6 * (rng.next_u01() - 0.5);
        const auto alpha = steady_state_alpha(delta, kappa, eps);
        REQUIRE(displaced_drift_residual(delta, kappa, eps, alpha) < 1e-12 * std::abs(eps));
    }
    REQUIRE_THROWS_AS(steady_state_alpha(0.0, -1.0, 1.0), ParameterError);
}

TEST_CASE("effective sideband rates: limits and Lorentzian profile") {
    const double kappa = two_pi * 2.4e6;
    const double omega_ge = two_pi * 12e6;
    const double g = two_pi * 0.4e6;

    // parity-forbidden at frustration
    const auto off = effective_loss_rates(0.0, g, 2.0, kappa, omega_ge, -omega_ge, omega_ge);
    REQUIRE(off.rate_plus == 0.0);
    REQUIRE(off.rate_minus == 0.0);

    // resonant with the upper sideband: Delta_R^- = 0
    const double cx = 0.3;
    const auto res = effective_loss_rates(cx, g, 2.0, kappa, 2.0 * omega_ge, 0.0, omega_ge);
    const double coupling = g * cx * 2.0;
    REQUIRE(res.rate_plus == Approx(4.0 * coupling * coupling / kappa).epsilon(1e-12));
    REQUIRE(res.rate_minus < res.rate_plus / 50.0);
    REQUIRE(res.resolved_sideband);
    REQUIRE(res.resolved_sideband_ratio == Approx(10.0).epsilon(1e-12));

    // half height at a sideband detuning of kappa / 2
    const auto half = effective_loss_rates(cx, g, 2.0, kappa, 2.0 * omega_ge, kappa / 2.0, omega_ge);
    REQUIRE(half.rate_plus == Approx(0.5 * res.rate_plus).epsilon(1e-12));

    // exact Lorentzian in the sideband detuning
    for (double d : {0.1, 0.5, 1.0, 3.0}) {
        const auto r = effective_loss_rates(cx, g, 2.0, kappa, 2.0 * omega_ge, d * kappa, omega_ge);
        const double expected = (kappa * kappa / 4.0) / (d * d * kappa * kappa + kappa * kappa / 4.0);
        REQUIRE(r.rate_plus / res.rate_plus == Approx(expected).epsilon(1e-12));
    }
    REQUIRE_THROWS_AS(effective_loss_rates(cx, g, 2.0, -kappa, 0.0, 0.0, omega_ge),
                      ParameterError);
}

TEST_CASE("lindblad: cavity photon decay") {
    const int nc = 5;
    const auto a = destroy(nc);
    const double kappa = two_pi * 2.4e6;
    Eigen::MatrixXcd rho0 = Eigen::MatrixXcd::Zero(nc, nc);
    rho0(1, 1) = 1.0;
    std::vector<double> ts;
    for (int i = 0; i <= 10; ++i) ts.push_back(3e-7 * i / 10.0);
    const auto traj = lindblad_evolve(Eigen::MatrixXcd::Zero(nc, nc).eval(),
                                      {std::sqrt(kappa) * a}, rho0, ts,
                                      {.rtol = 1e-10, .atol = 1e-13});
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double n = (a.adjoint() * a * traj.states[i]).trace().real();
        REQUIRE(n == Approx(std::exp(-kappa * ts[i])).margin(1e-8));
        REQUIRE(check_density_matrix(traj.states[i]).ok());
    }
}

TEST_CASE("lindblad: unitary evolution preserves purity") {
    const int nc = 4;
    const auto a = destroy(nc);
    Eigen::MatrixXcd h = two_pi * 5e6 * (a.adjoint() * a) + two_pi * 1e6 * (a + a.adjoint());
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(nc);
    psi[0] = std::sqrt(0.7);
    psi[1] = std::sqrt(0.3);
    Eigen::MatrixXcd rho0 = psi * psi.adjoint();
    std::vector<double> ts{0.0, 0.4e-6, 0.8e-6};
    const auto traj = lindblad_evolve(h, {}, rho0, ts, {.rtol = 1e-10, .atol = 1e-13});
    for (const auto& rho : traj.states)
        REQUIRE((rho * rho).trace().real() == Approx(1.0).margin(1e-8));
}

TEST_CASE("lindblad: balanced thermal qubit relaxes to the mixed state") {
    const double gamma = 1.0 / (2.0 * 34e-6);
    Eigen::MatrixXcd rho0 = Eigen::MatrixXcd::Zero(2, 2);
    rho0(0, 0) = 1.0;  // |g><g|
    std::vector<double> ts;
    for (int i = 0; i <= 8; ++i) ts.push_back(120e-6 * i / 8.0);
    const auto traj = lindblad_evolve(
        Eigen::MatrixXcd::Zero(2, 2).eval(),
        {std::sqrt(gamma) * sigma_plus(), std::sqrt(gamma) * sigma_minus()}, rho0, ts,
        {.rtol = 1e-10, .atol = 1e-13});
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double sz = (sigma_z() * traj.states[i]).trace().real();
        REQUIRE(sz == Approx(-std::exp(-2.0 * gamma * ts[i])).margin(1e-8));
    }
    REQUIRE(traj.states.back()(0, 0).real() == Approx(0.5).margin(0.02));
}

TEST_CASE("time-dependent generator is integrated correctly") {
    // linearly ramped drive: rotation angle grows as t^2
    const double rate = two_pi * 2e6 / 1e-6;
    auto h_of_t = [&](double t) {
        Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(2, 2);
        h(0, 1) = 0.5 * rate * t;
        h(1, 0) = 0.5 * rate * t;
        return h;
    };
    Eigen::MatrixXcd rho0 = Eigen::MatrixXcd::Zero(2, 2);
    rho0(0, 0) = 1.0;
    std::vector<double> ts{0.0, 2e-8, 4e-8};
    const auto traj = lindblad_evolve(h_of_t, {}, rho0, ts, {.rtol = 1e-11, .atol = 1e-15});
    const double theta1 = 0.25 * rate * ts[1] * ts[1];
    const double theta2 = 0.25 * rate * ts[2] * ts[2];
    REQUIRE(traj.states[1](1, 1).real() ==
            Approx(std::sin(theta1) * std::sin(theta1)).epsilon(1e-6));
    REQUIRE(traj.states[2](1, 1).real() ==
            Approx(std::sin(theta2) * std::sin(theta2)).epsilon(1e-6));
}

TEST_CASE("adiabatic elimination matches the two-mode model in its regime") {
    CoolingCompareConfig cfg;
    cfg.kappa_rad = two_pi * 2.4e6;
    cfg.omega_ge_rad = 5.0 * cfg.kappa_rad;   // resolved sideband, 2w/kappa = 10
    cfg.abs_cx = 0.5;
    cfg.alpha = 1.0;
    cfg.g_rad = cfg.kappa_rad / 10.0;         // kappa / (g cx |alpha|) = 20
    cfg.cavity_dim = 6;
    cfg.duration_s = 30e-6;
    const auto res = sideband_cooling_compare(cfg);
    REQUIRE_FALSE(res.regime_warning);
    REQUIRE(res.report.epsilon == Approx(0.05).epsilon(1e-12));
    REQUIRE(res.full_rate == Approx(res.analytic_rate).epsilon(0.10));
    REQUIRE(res.eff_rate == Approx(res.analytic_rate).epsilon(0.01));
    REQUIRE(res.full_pe.back() > 0.95);

    // lower sideband pumps the qubit down instead
    CoolingCompareConfig down = cfg;
    down.sideband = -1;
    const auto res_dn = sideband_cooling_compare(down);
    REQUIRE(res_dn.full_rate == Approx(res_dn.analytic_rate).epsilon(0.10));
    REQUIRE(res_dn.full_pe.back() < 0.05);

    // outside the declared regime the run continues with a warning attached
    CoolingCompareConfig hot = cfg;
    hot.g_rad = cfg.kappa_rad;  // epsilon = 0.5
    hot.duration_s = 2e-6;
    const auto res_hot = sideband_cooling_compare(hot);
    REQUIRE(res_hot.regime_warning);
    REQUIRE_FALSE(res_hot.warning.empty());
}

TEST_CASE("cooling compare: no drive means flat trajectories") {
    CoolingCompareConfig cfg;
    cfg.kappa_rad = two_pi * 2.4e6;
    cfg.omega_ge_rad = 5.0 * cfg.kappa_rad;
    cfg.abs_cx = 0.5;
    cfg.alpha = 0.0;
    cfg.g_rad = cfg.kappa_rad / 10.0;
    cfg.duration_s = 10e-6;
    cfg.samples = 11;
    const auto res = sideband_cooling_compare(cfg);
    for (double p : res.full_pe) REQUIRE(p == Approx(0.0).margin(1e-9));
    for (double p : res.eff_pe) REQUIRE(p == Approx(0.0).margin(1e-12));
}

TEST_CASE("preparation summaries against the reported cooling performance") {
    const double rate = 1.0 / 1.9e-6;
    const double gamma = 1.0 / 68e-6;
    REQUIRE(prep_time_constant(rate, gamma) == Approx(1.8e-6).epsilon(0.1));
    REQUIRE(prep_fidelity(rate, gamma) == Approx(0.977).epsilon(0.01));
}

TEST_CASE("cooling map: ridges track the sidebands and merge at frustration") {
    std::vector<double> phi_grid;
    for (int i = 0; i <= 10; ++i) phi_grid.push_back(pi + two_pi * (i - 5) * 4e-4);
    std::vector<double> det_grid;
    for (int i = 0; i <= 120; ++i) det_grid.push_back(-18e6 + 36e6 * i / 120.0);
    const double g_alpha = two_pi * 150e6;  // effective drive knob, sets the map contrast
    const double gamma = 1.0 / (2.0 * 34e-6);
    const auto map =
        cooling_map(kDevice, kBasis, phi_grid, det_grid, g_alpha, two_pi * 2.4e6, gamma);
    const std::size_t n_det = det_grid.size();

    auto row_argmax = [&](std::size_t i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < n_det; ++j)
            if (map[i * n_det + j].pop_e > map[i * n_det + best].pop_e) best = j;
        return best;
    };

    // away from frustration the excited ridge sits at Delta_R = +f_ge
    for (std::size_t i : {std::size_t(0), std::size_t(1), std::size_t(9), std::size_t(10)}) {
        const double f_ge = map[i * n_det].f_ge_hz;
        const std::size_t jmax = row_argmax(i);
        REQUIRE(std::abs(det_grid[jmax] - f_ge) < 2.0 * (det_grid[1] - det_grid[0]));
        REQUIRE(map[i * n_det + jmax].pop_e > 0.9);
    }

    // at frustration the coupling vanishes and the row stays thermal
    const std::size_t mid = 5;
    for (std::size_t j = 0; j < n_det; ++j)
        REQUIRE(map[mid * n_det + j].pop_e == Approx(0.5).margin(1e-3));

    // symmetric under flux reflection about pi
    for (std::size_t i = 0; i <= 4; ++i)
        for (std::size_t j = 0; j < n_det; ++j)
            REQUIRE(map[i * n_det + j].pop_e ==
                    Approx(map[(10 - i) * n_det + j].pop_e).margin(1e-6));
}

TEST_CASE("bloch closed form: limits") {
    const double gamma = 1.0 / (2.0 * 34e-6);

    const auto undriven = bloch_closed_form(0.0, 0.0, gamma, 10e-6);
    REQUIRE(undriven.sx == 0.0);
    REQUIRE(undriven.sy == 0.0);
    REQUIRE(undriven.sz == Approx(-std::exp(-2.0 * gamma * 10e-6)).epsilon(1e-12));

    const double wr = two_pi * 1e6;
    const auto pi_pulse = bloch_closed_form(wr, 0.0, 0.0, pi / wr);
    REQUIRE(pi_pulse.sz == Approx(1.0).margin(1e-12));
    REQUIRE_THROWS_AS(bloch_closed_form(wr, 0.0, gamma, -1.0), ParameterError);
}

TEST_CASE("bloch closed form satisfies its equations of motion") {
    SeqRng rng(21);
    for (int trial = 0; trial < 8; ++trial) {
        const double wr = two_pi * 2e6 * rng.next_u01();
        const double de = two_pi * 1e6 * (rng.next_u01() - 0.5);
        const double ga = 3e4 * rng.next_u01();
        const double scale = std::max({std::abs(wr), std::abs(de), 2.0 * ga, 1.0});
        for (int i = 0; i <= 20; ++i) {
            const double t = 30e-6 * i / 20.0;
            const auto s = bloch_closed_form(wr, de, ga, t);
            const auto ds = bloch_closed_form_derivative(wr, de, ga, t);
            const auto rhs = bloch_rhs(wr, de, ga, {s.sx, s.sy, s.sz});
            for (int c = 0; c < 3; ++c) REQUIRE(std::abs(ds[c] - rhs[c]) < 1e-9 * scale);
        }
    }
}

TEST_CASE("bloch closed form against direct integration") {
    SeqRng rng(31);
    double max_dev = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        const double wr = two_pi * (0.2e6 + 1.5e6 * rng.next_u01());
        const double de = two_pi * 0.8e6 * (rng.next_u01() - 0.5);
        const double ga = 1e4 + 4e4 * rng.next_u01();
        const double T1 = 1.0 / (2.0 * ga);
        auto rhs = [&](double, const Eigen::Vector3d& v) {
            const auto d = bloch_rhs(wr, de, ga, {v[0], v[1], v[2]});
            return Eigen::Vector3d(d[0], d[1], d[2]);
        };
        Eigen::Vector3d v(0.0, 0.0, -1.0);
        double t_prev = 0.0;
        for (int i = 1; i <= 15; ++i) {
            const double t = 5.0 * T1 * i / 15.0;
            v = num::integrate_adaptive(rhs, std::move(v), t_prev, t,
                                        {.rtol = 1e-11, .atol = 1e-13});
            const auto s = bloch_closed_form(wr, de, ga, t);
            max_dev = std::max({max_dev, std::abs(v[0] - s.sx), std::abs(v[1] - s.sy),
                                std::abs(v[2] - s.sz)});
            t_prev = t;
        }
    }
    REQUIRE(max_dev < 1e-8);
}

TEST_CASE("bloch norm contracts isotropically at 2 Gamma") {
    const double wr = two_pi * 0.7e6, de = two_pi * 0.3e6, ga = 2.2e4;
    double prev_norm = 1.0, prev_t = 0.0;
    for (int i = 1; i <= 12; ++i) {
        const double t = 40e-6 * i / 12.0;
        const auto s = bloch_closed_form(wr, de, ga, t);
        REQUIRE(s.norm() <= prev_norm * std::exp(-2.0 * ga * (t - prev_t)) * (1.0 + 1e-9));
        REQUIRE(s.norm() == Approx(prev_norm * std::exp(-2.0 * ga * (t - prev_t))).epsilon(1e-9));
        prev_norm = s.norm();
        prev_t = t;
    }
}

TEST_CASE("detector response function") {
    REQUIRE(detector_response_exact(0.0, two_pi * 1.0, 20e-6) == Approx(1.0).epsilon(1e-6));
    REQUIRE(detector_response_sinc(0.0, 20e-6) == 1.0);

    // approximation valid for Omega_r tau_I << 1 across the band
    const double tau_I = 20e-6;
    const double omega_full = two_pi / tau_I;
    const double wr = 0.1 / tau_I;
    // the exact response is a magnitude; compare against |sinc| past its zeros
    for (int i = -30; i <= 30; ++i) {
        const double delta = 3.0 * omega_full * i / 30.0;
        const double exact = detector_response_exact(delta, wr, tau_I);
        const double approx = std::abs(detector_response_sinc(delta, tau_I));
        REQUIRE(std::abs(exact - approx) < 0.01);
    }

    // first zero of the approximate response at the full bandwidth
    REQUIRE(std::abs(detector_response_sinc(omega_full, tau_I)) < 1e-12);
    REQUIRE(std::abs(detector_response_sinc(-omega_full, tau_I)) < 1e-12);
    REQUIRE_THROWS_AS(detector_response_exact(0.0, 1.0, 0.0), ParameterError);
}

TEST_CASE("charge-drive Rabi frequency follows the flux-element slope") {
    const auto sub = DriveSubspace::from_circuit(kDevice, circuit::FluxBias{pi}, kBasis, 2);
    const auto sol = circuit::solve_at(kDevice, circuit::FluxBias{pi}, kBasis, 4);
    const auto ops = circuit::build_operators(kDevice, kBasis);
    const auto m = circuit::matrix_elements(sol, ops, circuit::FluxBias{pi});
    const double f_ge = sol.transition_hz(0, 1);
    const double slope_pred = 2.0 * to_angular(f_ge) * std::abs(m.phi_el(0, 1));

    for (double nd : {0.002, 0.01, 0.02}) {
        const double omega_pred = slope_pred * nd;
        std::vector<double> ts;
        for (int i = 0; i <= 100; ++i) ts.push_back(3.0 * two_pi / omega_pred * i / 100.0);
        const auto pts = rabi_chevron(sub, {nd}, {f_ge}, ts);
        std::vector<double> pe;
        for (const auto& p : pts) pe.push_back(p.pop_e);
        const double fitted = fit_rabi_frequency(ts, pe, omega_pred * 1.07);
        REQUIRE(fitted == Approx(omega_pred).epsilon(0.02));
    }
}

TEST_CASE("rotating-wave approximation holds weakly driven and breaks strongly driven") {
    const auto sub = DriveSubspace::from_circuit(kDevice, circuit::FluxBias{pi}, kBasis, 2);
    const auto sol = circuit::solve_at(kDevice, circuit::FluxBias{pi}, kBasis, 4);
    const auto ops = circuit::build_operators(kDevice, kBasis);
    const auto m = circuit::matrix_elements(sol, ops, circuit::FluxBias{pi});
    const double f_ge = sol.transition_hz(0, 1);
    const double slope = 2.0 * to_angular(f_ge) * std::abs(m.phi_el(0, 1));

    auto rwa_deviation = [&](double nd) {
        const double omega_r = slope * nd;
        std::vector<double> ts;
        for (int i = 1; i <= 60; ++i) ts.push_back(1.5 * two_pi / omega_r * i / 60.0);
        const auto pts = rabi_chevron(sub, {nd}, {f_ge}, ts);
        double dev = 0.0;
        for (std::size_t i = 0; i < ts.size(); ++i)
            dev = std::max(dev, std::abs(pts[i].pop_e - rwa_population(omega_r, 0.0, ts[i])));
        return dev;
    };
    REQUIRE(rwa_deviation(0.003) < 0.02);  // Omega_r / omega_ge ~ 0.02
    REQUIRE(rwa_deviation(0.25) > 0.10);   // Omega_r approaches omega_ge
}

TEST_CASE("chevron: zero amplitude leaves the population frozen, contrast peaks on resonance") {
    const auto sub = DriveSubspace::from_circuit(kDevice, circuit::FluxBias{pi}, kBasis, 2);
    const double f_ge = to_ordinary(sub.omega_rad[1]);
    std::vector<double> ts;
    for (int i = 0; i <= 10; ++i) ts.push_back(2e-6 * i / 10.0);

    const auto frozen = rabi_chevron(sub, {0.0}, {f_ge}, ts);
    for (const auto& p : frozen) REQUIRE(p.pop_e == Approx(0.0).margin(1e-12));

    const double nd = 0.02;
    const double omega_r = 2.0 * to_angular(f_ge) * pi * nd;  // phi_ge ~ pi
    std::vector<double> freqs{f_ge - 0.4e6, f_ge - 0.2e6, f_ge, f_ge + 0.2e6, f_ge + 0.4e6};
    std::vector<double> t_pi{pi / omega_r};
    const auto row = rabi_chevron(sub, {nd}, freqs, t_pi);
    double best = -1.0;
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < freqs.size(); ++j)
        if (row[j].pop_e > best) {
            best = row[j].pop_e;
            best_j = j;
        }
    REQUIRE(best_j == 2);
    REQUIRE(best > 0.9);
}

TEST_CASE("flux ramps: slower is more adiabatic, two-microsecond ramp is clean") {
    double prev = 0.0;
    for (double dur : {0.02e-6, 0.2e-6, 2e-6}) {
        RampSchedule sch{{0.0, dur}, {pi + two_pi * 1.5e-3, pi}};
        const auto res = run_flux_ramp(kDevice, kBasis, sch, 0, 12, 15);
        REQUIRE(res.final_overlap > prev);
        prev = res.final_overlap;
    }
    REQUIRE(prev > 0.95);
}

TEST_CASE("cavity and dissipation parameter types") {
    ReadoutCavityParams cav{5.64e9, 2.4e6, 0.02};
    REQUIRE_NOTHROW(cav.validate());
    REQUIRE(cav.g_hz(5.178e9) == Approx(5.178e9 * 4e-4).epsilon(1e-12));
    REQUIRE(cav.zpf_small());
    ReadoutCavityParams loud = cav;
    loud.phi_zpf_R = 0.2;
    REQUIRE_FALSE(loud.zpf_small());
    ReadoutCavityParams bad = cav;
    bad.kappa_hz = 0.0;
    REQUIRE_THROWS_AS(bad.validate(), ParameterError);

    DrivenCavityConfig drive{std::complex<double>(1e6, 0.0), 5.652e9, 5.64e9};
    REQUIRE(drive.delta_R_rad() == Approx(to_angular(12e6)).epsilon(1e-12));
    REQUIRE(drive.delta_R_minus_rad(12e6) == Approx(0.0).margin(1e-3));
    REQUIRE(drive.delta_R_plus_rad(12e6) == Approx(to_angular(24e6)).epsilon(1e-12));

    const auto diss = QubitDissipation::from_T1(34e-6);
    REQUIRE(diss.T1() == Approx(34e-6).epsilon(1e-12));
    REQUIRE(diss.gamma_phi == Approx(0.5 * diss.gamma).epsilon(1e-12));
    REQUIRE(diss.T2() == Approx(1.0 / (1.5 * diss.gamma)).epsilon(1e-12));
    REQUIRE_THROWS_AS((QubitDissipation{-1.0, 0.0}).validate(), ParameterError);
}

TEST_CASE("cooling rates are converged in the cavity truncation") {
    auto run_dim = [&](int dim) {
        CoolingCompareConfig cfg;
        cfg.kappa_rad = two_pi * 2.4e6;
        cfg.omega_ge_rad = 5.0 * cfg.kappa_rad;
        cfg.abs_cx = 0.5;
        cfg.alpha = 1.0;
        cfg.g_rad = cfg.kappa_rad / 10.0;
        cfg.cavity_dim = dim;
        cfg.duration_s = 20e-6;
        cfg.samples = 41;
        return sideband_cooling_compare(cfg).full_rate;
    };
    REQUIRE(run_dim(6) == Approx(run_dim(8)).epsilon(1e-4));
}

TEST_CASE("lindblad evolution accepts a flux-ramp generator") {
    const auto ops = circuit::build_operators(kDevice, kBasis);
    const auto ref = circuit::solve_at(kDevice, circuit::FluxBias{pi}, kBasis, 8);
    const auto fam = circuit::project_flux_family(kDevice, ops, ref, 8);
    RampSchedule sch{{0.0, 0.2e-6}, {pi + two_pi * 1.5e-3, pi}};

    auto h_of_t = [&](double t) {
        return Eigen::MatrixXcd(fam.at(sch.at(t)).cast<std::complex<double>>());
    };
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es0(fam.at(sch.at(0.0)));
    const Eigen::VectorXcd psi0 = es0.eigenvectors().col(0).cast<std::complex<double>>();
    const auto traj = lindblad_evolve(h_of_t, {}, Eigen::MatrixXcd(psi0 * psi0.adjoint()),
                                      {0.0, 0.1e-6, 0.2e-6}, {.rtol = 1e-9, .atol = 1e-12});

    // density-matrix and pure-state propagations agree on the final overlap
    const auto pure = run_flux_ramp(kDevice, kBasis, sch, 0, 8, 5);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es1(fam.at(pi));
    const Eigen::VectorXcd target = es1.eigenvectors().col(0).cast<std::complex<double>>();
    const double overlap = (target.adjoint() * traj.states.back() * target).real()(0, 0);
    REQUIRE(overlap == Approx(pure.final_overlap).margin(1e-6));
    REQUIRE(check_density_matrix(traj.states.back()).ok());
}
