#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <vector>

#include "fluxlab/circuit.hpp"
#include "fluxlab/constants.hpp"
#include "fluxlab/errors.hpp"
#include "fluxlab/ode.hpp"
#include "fluxlab/optim.hpp"

namespace fluxlab::dynamics {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using std::complex;

// ---------------------------------------------------------------------------
// Cavity and dissipation parameters
// ---------------------------------------------------------------------------

struct ReadoutCavityParams {
    double f_R_hz = 0.0;       // cavity frequency
    double kappa_hz = 0.0;     // linewidth, ordinary frequency (kappa/2pi)
    double phi_zpf_R = 0.0;    // zero-point phase of the readout mode at the junction

    void validate() const {
        if (!(kappa_hz > 0.0)) throw ParameterError("cavity linewidth must be positive");
        if (!(phi_zpf_R >= 0.0)) throw ParameterError("phi_zpf_R must be non-negative");
    }
    /// hbar g = E_J phi_zpf_R^2.
    double g_hz(double E_J_hz) const { return E_J_hz * phi_zpf_R * phi_zpf_R; }
    bool zpf_small() const { return phi_zpf_R <= 0.1; }
};

struct DrivenCavityConfig {
    complex<double> epsilon_d_hz;  // drive amplitude over 2pi
    double f_p_hz = 0.0;           // pump frequency
    double f_R_hz = 0.0;

    double delta_R_rad() const { return to_angular(f_p_hz - f_R_hz); }
    double delta_R_plus_rad(double f_ge_hz) const { return delta_R_rad() + to_angular(f_ge_hz); }
    double delta_R_minus_rad(double f_ge_hz) const { return delta_R_rad() - to_angular(f_ge_hz); }
};

/// alpha = -eps_d / (Delta_R + i kappa/2); cancels the displaced-frame drift.
inline complex<double> steady_state_alpha(double delta_R_rad, double kappa_rad,
                                          complex<double> epsilon_d_rad) {
    if (!(kappa_rad > 0.0)) throw ParameterError("kappa must be positive");
    return -epsilon_d_rad / complex<double>(delta_R_rad, 0.5 * kappa_rad);
}

/// Leftover coefficient on the annihilation operator after displacement; the
/// a^dag coefficient is its conjugate, so one magnitude covers both.
inline double displaced_drift_residual(double delta_R_rad, double kappa_rad,
                                       complex<double> epsilon_d_rad, complex<double> alpha) {
    const complex<double> i(0.0, 1.0);
    const complex<double> coef_a = (kappa_rad / (2.0 * i)) * std::conj(alpha) +
                                   delta_R_rad * std::conj(alpha) + std::conj(epsilon_d_rad);
    return std::abs(coef_a);
}

struct QubitDissipation {
    double gamma = 0.0;      // equal up/down rate, 1/s
    double gamma_phi = 0.0;  // pure dephasing, 1/s

    static QubitDissipation from_gamma(double gamma) { return {gamma, 0.5 * gamma}; }
    static QubitDissipation from_T1(double T1_s) { return from_gamma(1.0 / (2.0 * T1_s)); }

    void validate() const {
        if (gamma < 0.0 || gamma_phi < 0.0) throw ParameterError("dissipation rates must be >= 0");
    }
    double T1() const { return 1.0 / (2.0 * gamma); }
    double T2() const { return 1.0 / (gamma + gamma_phi); }
};

// ---------------------------------------------------------------------------
// Effective sideband loss rates (adiabatic elimination of the driven cavity)
// ---------------------------------------------------------------------------

struct EffectiveLossReport {
    double rate_plus = 0.0;   // |L+|^2 prefactor, pumps |g> -> |e>, 1/s
    double rate_minus = 0.0;  // |L-|^2 prefactor, pumps |e> -> |g>, 1/s
    double epsilon = 0.0;                    // g |c_x| |alpha| / kappa
    bool epsilon_ok = false;                 // expansion parameter <= 0.1
    double g_alpha_over_kappa = 0.0;
    bool kappa_dominates_coupling = false;   // kappa >= 10 g |alpha|
    double resolved_sideband_ratio = 0.0;    // 2 omega_ge / kappa
    bool resolved_sideband = false;          // ratio >= 5

    bool all_flags() const { return epsilon_ok && kappa_dominates_coupling && resolved_sideband; }
};

/// rate_pm = (g |c_x| |alpha|)^2 kappa / (Delta_R^{mp 2} + kappa^2/4). The
/// sigma^+ channel is resonant on the upper sideband where Delta_R^- = 0.
inline EffectiveLossReport effective_loss_rates(double abs_cx, double g_rad,
                                                complex<double> alpha, double kappa_rad,
                                                double delta_R_plus_rad, double delta_R_minus_rad,
                                                double omega_ge_rad) {
    if (!(kappa_rad > 0.0)) throw ParameterError("kappa must be positive");
    const double g_coupling = g_rad * std::abs(abs_cx) * std::abs(alpha);
    EffectiveLossReport r;
    r.rate_plus = g_coupling * g_coupling * kappa_rad /
                  (delta_R_minus_rad * delta_R_minus_rad + 0.25 * kappa_rad * kappa_rad);
    r.rate_minus = g_coupling * g_coupling * kappa_rad /
                   (delta_R_plus_rad * delta_R_plus_rad + 0.25 * kappa_rad * kappa_rad);
    r.epsilon = g_coupling / kappa_rad;
    r.epsilon_ok = r.epsilon <= 0.1;
    r.g_alpha_over_kappa = g_rad * std::abs(alpha) / kappa_rad;
    r.kappa_dominates_coupling = r.g_alpha_over_kappa <= 0.1;
    r.resolved_sideband_ratio = 2.0 * omega_ge_rad / kappa_rad;
    r.resolved_sideband = r.resolved_sideband_ratio >= 5.0;
    return r;
}

inline EffectiveLossReport effective_loss_rates(const circuit::MatrixElements& m, double g_rad,
                                                complex<double> alpha, double kappa_rad,
                                                double delta_R_plus_rad, double delta_R_minus_rad,
                                                double omega_ge_rad) {
    return effective_loss_rates(std::abs(m.cx), g_rad, alpha, kappa_rad, delta_R_plus_rad,
                                delta_R_minus_rad, omega_ge_rad);
}

/// Rate-equation summaries for a single cooling channel against a thermal bath.
inline double prep_time_constant(double rate, double gamma) { return 1.0 / (rate + 2.0 * gamma); }
inline double prep_fidelity(double rate, double gamma) { return rate / (rate + gamma); }

// ---------------------------------------------------------------------------
// Operator helpers on truncated product spaces
// ---------------------------------------------------------------------------

inline MatrixXcd kron(const MatrixXcd& a, const MatrixXcd& b) {
    MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline MatrixXcd destroy(int dim) {
    MatrixXcd a = MatrixXcd::Zero(dim, dim);
    for (int k = 0; k + 1 < dim; ++k) a(k, k + 1) = std::sqrt(static_cast<double>(k + 1));
    return a;
}

inline MatrixXcd sigma_plus() {
    MatrixXcd s = MatrixXcd::Zero(2, 2);
    s(1, 0) = 1.0; // |e><g| with |g> = basis state 0
    return s;
}
inline MatrixXcd sigma_minus() { return sigma_plus().adjoint(); }
inline MatrixXcd sigma_z() {
    MatrixXcd s = MatrixXcd::Zero(2, 2);
    s(0, 0) = -1.0;
    s(1, 1) = 1.0;
    return s;
}

struct DensityCheck {
    double trace_error = 0.0;
    double hermiticity_error = 0.0;
    double min_eigenvalue = 0.0;

    bool ok(double trace_tol = 1e-9, double positivity_tol = 1e-8) const {
        return trace_error < trace_tol && hermiticity_error < trace_tol &&
               min_eigenvalue > -positivity_tol;
    }
};

inline DensityCheck check_density_matrix(const MatrixXcd& rho) {
    DensityCheck c;
    c.trace_error = std::abs(rho.trace() - 1.0);
    c.hermiticity_error = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(0.5 * (rho + rho.adjoint()));
    c.min_eigenvalue = es.eigenvalues().minCoeff();
    return c;
}

// ---------------------------------------------------------------------------
// Lindblad master equation
// ---------------------------------------------------------------------------

struct Trajectory {
    std::vector<double> times;
    std::vector<MatrixXcd> states;
};

namespace detail {

struct LindbladRhs {
    const MatrixXcd* h_static = nullptr;
    std::function<MatrixXcd(double)> h_of_t;
    std::vector<MatrixXcd> loss;
    std::vector<MatrixXcd> loss_dag_loss;

    MatrixXcd operator()(double t, const MatrixXcd& rho) const {
        const complex<double> i(0.0, 1.0);
        MatrixXcd h = h_static ? *h_static : h_of_t(t);
        MatrixXcd drho = -i * (h * rho - rho * h);
        for (std::size_t j = 0; j < loss.size(); ++j) {
            drho += loss[j] * rho * loss[j].adjoint();
            drho -= 0.5 * (loss_dag_loss[j] * rho + rho * loss_dag_loss[j]);
        }
        return drho;
    }
};

inline Trajectory evolve_sampled(const LindbladRhs& rhs, MatrixXcd rho0,
                                 const std::vector<double>& sample_times,
                                 const num::OdeOptions& opt) {
    if (sample_times.empty()) throw ParameterError("lindblad_evolve needs sample times");
    Trajectory traj;
    traj.times = sample_times;
    traj.states.reserve(sample_times.size());
    const double trace0 = std::abs(rho0.trace());
    double t = sample_times.front();
    MatrixXcd rho = std::move(rho0);
    traj.states.push_back(rho);
    for (std::size_t s = 1; s < sample_times.size(); ++s) {
        rho = num::integrate_adaptive(rhs, std::move(rho), t, sample_times[s], opt);
        t = sample_times[s];
        if (std::abs(std::abs(rho.trace()) - trace0) > 1e-6 * std::max(trace0, 1.0))
            throw NumericalError("trace drift exceeds tolerance during Lindblad evolution");
        traj.states.push_back(rho);
    }
    return traj;
}

} // namespace detail

/// Integrate d rho/dt = -i[H(t), rho] + sum_j D_{L_j}(rho), sampling the state
/// at the requested times. Adaptive by default; opt.fixed_step gives bitwise
/// reproducible step sequences.
inline Trajectory lindblad_evolve(const std::function<MatrixXcd(double)>& h_of_t,
                                  const std::vector<MatrixXcd>& loss_ops, MatrixXcd rho0,
                                  const std::vector<double>& sample_times,
                                  const num::OdeOptions& opt = {}) {
    detail::LindbladRhs rhs;
    rhs.h_of_t = h_of_t;
    rhs.loss = loss_ops;
    for (const auto& l : loss_ops) rhs.loss_dag_loss.push_back(l.adjoint() * l);
    return detail::evolve_sampled(rhs, std::move(rho0), sample_times, opt);
}

inline Trajectory lindblad_evolve(const MatrixXcd& h, const std::vector<MatrixXcd>& loss_ops,
                                  MatrixXcd rho0, const std::vector<double>& sample_times,
                                  const num::OdeOptions& opt = {}) {
    detail::LindbladRhs rhs;
    rhs.h_static = &h;
    rhs.loss = loss_ops;
    for (const auto& l : loss_ops) rhs.loss_dag_loss.push_back(l.adjoint() * l);
    return detail::evolve_sampled(rhs, std::move(rho0), sample_times, opt);
}

// ---------------------------------------------------------------------------
// Sideband cooling: full two-mode model vs the eliminated qubit
// ---------------------------------------------------------------------------

struct CoolingCompareConfig {
    double kappa_rad = 0.0;
    double omega_ge_rad = 0.0;
    double g_rad = 0.0;
    double abs_cx = 0.0;
    complex<double> alpha;
    int sideband = +1;               // +1 pumps |e>, -1 pumps |g>
    std::optional<double> delta_R_rad;  // pump detuning from cavity; sideband-resonant if unset
    int cavity_dim = 6;
    double duration_s = 0.0;
    int samples = 81;
    double gamma_thermal = 0.0;      // optional equal up/down qubit rate
};

struct CoolingCompareResult {
    std::vector<double> times;
    std::vector<double> full_pe;
    std::vector<double> eff_pe;
    double full_rate = 0.0;       // fitted, 1/s
    double eff_rate = 0.0;        // fitted on the eliminated model, 1/s
    double analytic_rate = 0.0;   // direct Lorentzian rate, 1/s
    EffectiveLossReport report;
    bool regime_warning = false;
    std::string warning;
};

namespace detail {

inline double fit_exponential_rate(const std::vector<double>& t, const std::vector<double>& y) {
    // y(t) = y_inf + (y0 - y_inf) exp(-r t)
    const double y0 = y.front(), yend = y.back();
    Eigen::VectorXd p(3);
    p << yend, y0, std::max(1.0 / std::max(t.back(), 1e-12), 1e-6);
    auto res = [&](const Eigen::VectorXd& q) {
        Eigen::VectorXd r(t.size());
        for (std::size_t i = 0; i < t.size(); ++i)
            r[i] = q[0] + (q[1] - q[0]) * std::exp(-q[2] * t[i]) - y[i];
        return r;
    };
    const auto fit = num::lm_least_squares(res, p, {.max_iter = 300, .ftol = 1e-14});
    if (!fit.converged) throw FitError("exponential rate fit did not converge");
    return fit.params[2];
}

} // namespace detail

/// Runs the displaced-frame two-mode master equation (resolved-sideband
/// Hamiltonian plus cavity loss) next to the two-level equation with the
/// eliminated loss operator, and fits an exponential rate to each.
inline CoolingCompareResult sideband_cooling_compare(const CoolingCompareConfig& cfg) {
    if (cfg.sideband != 1 && cfg.sideband != -1) throw ParameterError("sideband must be +1 or -1");
    if (!(cfg.duration_s > 0.0)) throw ParameterError("cooling compare needs a positive duration");
    const double delta_R = cfg.delta_R_rad.value_or(cfg.sideband * cfg.omega_ge_rad);
    const double delta_res = delta_R - cfg.sideband * cfg.omega_ge_rad; // detuning from the sideband

    CoolingCompareResult out;
    out.report = effective_loss_rates(cfg.abs_cx, cfg.g_rad, cfg.alpha, cfg.kappa_rad,
                                      delta_R + cfg.omega_ge_rad, delta_R - cfg.omega_ge_rad,
                                      cfg.omega_ge_rad);
    if (!(out.report.resolved_sideband && out.report.epsilon <= 0.05)) {
        out.regime_warning = true;
        out.warning = "outside the declared adiabatic-elimination regime";
    }

    const double rate = cfg.sideband > 0 ? out.report.rate_plus : out.report.rate_minus;
    out.analytic_rate = rate;

    const int nc = cfg.cavity_dim;
    const MatrixXcd a = destroy(nc);
    const MatrixXcd id_c = MatrixXcd::Identity(nc, nc);
    const MatrixXcd id_q = MatrixXcd::Identity(2, 2);
    const MatrixXcd s_pump = cfg.sideband > 0 ? sigma_plus() : sigma_minus();
    const complex<double> g_alpha = cfg.g_rad * cfg.abs_cx * cfg.alpha;

    MatrixXcd h = delta_res * kron(id_q, a.adjoint() * a);
    h += g_alpha * kron(s_pump, a.adjoint());
    h += std::conj(g_alpha) * kron(s_pump.adjoint(), a);

    std::vector<MatrixXcd> loss_full{std::sqrt(cfg.kappa_rad) * kron(id_q, a)};
    std::vector<MatrixXcd> loss_eff{std::sqrt(rate) * s_pump};
    if (cfg.gamma_thermal > 0.0) {
        loss_full.push_back(std::sqrt(cfg.gamma_thermal) * kron(sigma_plus(), id_c));
        loss_full.push_back(std::sqrt(cfg.gamma_thermal) * kron(sigma_minus(), id_c));
        loss_eff.push_back(std::sqrt(cfg.gamma_thermal) * sigma_plus());
        loss_eff.push_back(std::sqrt(cfg.gamma_thermal) * sigma_minus());
    }

    const int start = cfg.sideband > 0 ? 0 : 1; // pump from the opposite pole
    MatrixXcd rho_q = MatrixXcd::Zero(2, 2);
    rho_q(start, start) = 1.0;
    MatrixXcd rho_c = MatrixXcd::Zero(nc, nc);
    rho_c(0, 0) = 1.0;

    out.times.resize(cfg.samples);
    for (int i = 0; i < cfg.samples; ++i)
        out.times[i] = cfg.duration_s * i / (cfg.samples - 1);

    const MatrixXcd pe_full_op = kron((id_q + sigma_z()) * 0.5, id_c);
    const Trajectory full =
        lindblad_evolve(h, loss_full, kron(rho_q, rho_c), out.times, {.rtol = 1e-8, .atol = 1e-12});
    const MatrixXcd h_eff = MatrixXcd::Zero(2, 2);
    const Trajectory eff =
        lindblad_evolve(h_eff, loss_eff, rho_q, out.times, {.rtol = 1e-10, .atol = 1e-14});

    out.full_pe.resize(cfg.samples);
    out.eff_pe.resize(cfg.samples);
    for (int i = 0; i < cfg.samples; ++i) {
        out.full_pe[i] = (pe_full_op * full.states[i]).trace().real();
        out.eff_pe[i] = eff.states[i](1, 1).real();
    }
    if (std::abs(g_alpha) > 0.0) {
        out.full_rate = detail::fit_exponential_rate(out.times, out.full_pe);
        out.eff_rate = detail::fit_exponential_rate(out.times, out.eff_pe);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cooling map over flux and pump detuning
// ---------------------------------------------------------------------------

struct CoolingMapPoint {
    double phi_ext_rad = 0.0;
    double delta_R_hz = 0.0;  // pump detuning from the cavity
    double f_ge_hz = 0.0;
    double pop_e = 0.5;       // steady excited population
    bool ok = false;
    std::string error;
};

/// Steady qubit population from the two sideband rates against a thermal bath,
/// with g|alpha| held constant across the map (drive power re-adjusted per
/// point). Rows scan flux, columns scan pump detuning.
template <class ForEach>
std::vector<CoolingMapPoint> cooling_map_impl(const circuit::CircuitParams& params,
                                              const circuit::BasisConfig& basis,
                                              const std::vector<double>& phi_ext_grid,
                                              const std::vector<double>& delta_R_hz_grid,
                                              double g_alpha_rad, double kappa_rad,
                                              double gamma_thermal, ForEach&& for_each) {
    if (!(kappa_rad > 0.0)) throw ParameterError("kappa must be positive");
    const circuit::OperatorSet ops = circuit::build_operators(params, basis);
    const std::size_t n_flux = phi_ext_grid.size();
    const std::size_t n_det = delta_R_hz_grid.size();
    std::vector<CoolingMapPoint> out(n_flux * n_det);
    for_each(n_flux, [&](std::size_t i) {
        const circuit::FluxBias flux{phi_ext_grid[i]};
        try {
            const auto sol =
                circuit::diagonalize_and_label(circuit::build_hamiltonian(params, flux, ops), 4);
            const auto m = circuit::matrix_elements(sol, ops, flux);
            const double omega_ge = to_angular(sol.transition_hz(0, 1));
            const double coupling = g_alpha_rad * std::abs(m.cx);
            for (std::size_t j = 0; j < n_det; ++j) {
                CoolingMapPoint& pt = out[i * n_det + j];
                pt.phi_ext_rad = flux.phi_ext_rad;
                pt.delta_R_hz = delta_R_hz_grid[j];
                pt.f_ge_hz = sol.transition_hz(0, 1);
                const double delta_R = to_angular(delta_R_hz_grid[j]);
                const double dm = delta_R - omega_ge;
                const double dp = delta_R + omega_ge;
                const double rate_up =
                    coupling * coupling * kappa_rad / (dm * dm + 0.25 * kappa_rad * kappa_rad);
                const double rate_dn =
                    coupling * coupling * kappa_rad / (dp * dp + 0.25 * kappa_rad * kappa_rad);
                const double total = rate_up + rate_dn + 2.0 * gamma_thermal;
                pt.pop_e = total > 0.0 ? (rate_up + gamma_thermal) / total : 0.5;
                pt.ok = true;
            }
        } catch (const Error& err) {
            for (std::size_t j = 0; j < n_det; ++j) {
                out[i * n_det + j].phi_ext_rad = flux.phi_ext_rad;
                out[i * n_det + j].delta_R_hz = delta_R_hz_grid[j];
                out[i * n_det + j].error = err.what();
            }
        }
    });
    return out;
}

inline std::vector<CoolingMapPoint> cooling_map(const circuit::CircuitParams& params,
                                                const circuit::BasisConfig& basis,
                                                const std::vector<double>& phi_ext_grid,
                                                const std::vector<double>& delta_R_hz_grid,
                                                double g_alpha_rad, double kappa_rad,
                                                double gamma_thermal) {
    return cooling_map_impl(params, basis, phi_ext_grid, delta_R_hz_grid, g_alpha_rad, kappa_rad,
                            gamma_thermal, [](std::size_t n, auto&& fn) {
                                for (std::size_t i = 0; i < n; ++i) fn(i);
                            });
}

// ---------------------------------------------------------------------------
// Driven two-level closed forms
// ---------------------------------------------------------------------------

struct BlochState {
    double sx = 0.0, sy = 0.0, sz = -1.0;
    double norm() const { return std::sqrt(sx * sx + sy * sy + sz * sz); }
    complex<double> transverse() const { return 0.5 * complex<double>(sx, sy); }
};

/// Damped Rabi rotation from the south pole: rotation about Delta e_z +
/// Omega_r e_x with isotropic contraction at 2 Gamma.
inline BlochState bloch_closed_form(double omega_r_rad, double delta_rad, double gamma,
                                    double t_s) {
    if (t_s < 0.0) throw ParameterError("bloch_closed_form needs t >= 0");
    const double w2 = omega_r_rad * omega_r_rad + delta_rad * delta_rad;
    const double decay = std::exp(-2.0 * gamma * t_s);
    BlochState s;
    if (w2 <= 0.0) {
        s.sx = 0.0;
        s.sy = 0.0;
        s.sz = -decay;
        return s;
    }
    const double w = std::sqrt(w2);
    const double c = std::cos(w * t_s), sn = std::sin(w * t_s);
    s.sx = decay * (c - 1.0) * delta_rad * omega_r_rad / w2;
    s.sy = decay * sn * omega_r_rad / w;
    s.sz = -decay * (delta_rad * delta_rad + omega_r_rad * omega_r_rad * c) / w2;
    return s;
}

/// Right-hand side of the damped Bloch equations; doubles as the reference
/// model the closed form must satisfy.
inline std::array<double, 3> bloch_rhs(double omega_r_rad, double delta_rad, double gamma,
                                       const std::array<double, 3>& s) {
    return {-delta_rad * s[1] - 2.0 * gamma * s[0],
            -omega_r_rad * s[2] + delta_rad * s[0] - 2.0 * gamma * s[1],
            omega_r_rad * s[1] - 2.0 * gamma * s[2]};
}

/// Analytic time derivative of the closed form, for substitution checks.
inline std::array<double, 3> bloch_closed_form_derivative(double omega_r_rad, double delta_rad,
                                                          double gamma, double t_s) {
    const double w2 = omega_r_rad * omega_r_rad + delta_rad * delta_rad;
    const double decay = std::exp(-2.0 * gamma * t_s);
    if (w2 <= 0.0) return {0.0, 0.0, 2.0 * gamma * decay};
    const double w = std::sqrt(w2);
    const double c = std::cos(w * t_s), sn = std::sin(w * t_s);
    const double dx = decay * (-2.0 * gamma * (c - 1.0) - w * sn) * delta_rad * omega_r_rad / w2;
    const double dy = decay * (-2.0 * gamma * sn + w * c) * omega_r_rad / w;
    const double dz = -decay * (-2.0 * gamma * (delta_rad * delta_rad + omega_r_rad * omega_r_rad * c) -
                                omega_r_rad * omega_r_rad * w * sn) /
                      w2;
    return {dx, dy, dz};
}

inline double sinc(double x) {
    const double px = pi * x;
    if (std::abs(px) < 1e-8) return 1.0 - px * px / 6.0;
    return std::sin(px) / px;
}

/// Exact frequency response of the interrogation: fraction of the transverse
/// component surviving at detuning Delta for a pulse of length tau_I.
inline double detector_response_exact(double delta_rad, double omega_r_rad, double tau_I_s) {
    if (!(tau_I_s > 0.0)) throw ParameterError("detector response needs tau_I > 0");
    const double w2 = omega_r_rad * omega_r_rad + delta_rad * delta_rad;
    if (w2 <= 0.0) return 1.0;
    const double w = std::sqrt(w2);
    const double s_half = sinc(w * tau_I_s / (2.0 * pi));
    const double s_full = sinc(w * tau_I_s / pi);
    return std::sqrt((delta_rad * delta_rad * s_half * s_half +
                      omega_r_rad * omega_r_rad * s_full * s_full) /
                     w2);
}

/// Small-signal approximation sinc(Delta / Omega_full), Omega_full = 2 pi / tau_I.
inline double detector_response_sinc(double delta_rad, double tau_I_s) {
    if (!(tau_I_s > 0.0)) throw ParameterError("detector response needs tau_I > 0");
    const double omega_full = two_pi / tau_I_s;
    return sinc(delta_rad / omega_full);
}

// ---------------------------------------------------------------------------
// Direct charge-drive Rabi dynamics (no rotating-wave approximation)
// ---------------------------------------------------------------------------

/// Level frequencies and charge matrix elements of the lowest few eigenstates;
/// everything the driven dynamics needs from the circuit.
struct DriveSubspace {
    Eigen::VectorXd omega_rad;  // level energies relative to the ground state
    MatrixXcd n_el;             // charge operator in the eigenbasis
    double E_C_hz = 0.0;

    static DriveSubspace from_circuit(const circuit::CircuitParams& params,
                                      const circuit::FluxBias& flux,
                                      const circuit::BasisConfig& basis, int levels) {
        if (levels < 2 || levels > 4)
            throw ParameterError("charge-drive subspace supports 2 to 4 levels");
        const auto ops = circuit::build_operators(params, basis);
        const auto sol =
            circuit::diagonalize_and_label(circuit::build_hamiltonian(params, flux, ops), levels);
        DriveSubspace sub;
        sub.omega_rad = sol.energies_rad.array() - sol.energies_rad[0];
        const MatrixXd asym =
            sol.states.transpose() * ops.charge_asym * sol.states;
        sub.n_el = complex<double>(0.0, 1.0) * asym.cast<complex<double>>();
        sub.E_C_hz = params.E_C_hz;
        return sub;
    }
};

/// Charge-drive amplitude on the number operator for a modulation of N_drive
/// Cooper pairs: the linearized cross term of 4 E_C (n - n_g)^2, normalized so
/// the small-amplitude Rabi rate is Omega_r = 2 N_drive omega_ge |<e|phi|g>|.
inline double charge_drive_amp_rad(double E_C_hz, double n_drive) {
    return to_angular(16.0 * E_C_hz * n_drive);
}

/// Propagates the driven state in the interaction picture of the bare levels;
/// exact up to the level truncation, keeps both rotating and counter-rotating
/// drive terms.
inline VectorXcd evolve_charge_driven(const DriveSubspace& sub, double n_drive, double f_drive_hz,
                                      double t_final_s, VectorXcd psi0,
                                      const num::OdeOptions& opt = {.rtol = 1e-9, .atol = 1e-11}) {
    const double amp = charge_drive_amp_rad(sub.E_C_hz, n_drive);
    const double omega_d = to_angular(f_drive_hz);
    const int n = static_cast<int>(sub.omega_rad.size());
    auto rhs = [&](double t, const VectorXcd& c) {
        VectorXcd dc = VectorXcd::Zero(n);
        const double drive = amp * std::cos(omega_d * t);
        const complex<double> i(0.0, 1.0);
        for (int j = 0; j < n; ++j) {
            complex<double> acc(0.0, 0.0);
            for (int k = 0; k < n; ++k) {
                if (sub.n_el(j, k) == complex<double>(0.0, 0.0)) continue;
                acc += sub.n_el(j, k) *
                       std::exp(i * (sub.omega_rad[j] - sub.omega_rad[k]) * t) * c[k];
            }
            dc[j] = -i * drive * acc;
        }
        return dc;
    };
    return num::integrate_adaptive(rhs, std::move(psi0), 0.0, t_final_s, opt);
}

struct ChevronPoint {
    double n_drive = 0.0;
    double f_drive_hz = 0.0;
    double t_s = 0.0;
    double pop_e = 0.0;
};

/// Population map over drive frequency and duration at each drive amplitude.
/// The duration grid must be ascending; each (amplitude, frequency) trace is
/// one continuous propagation sampled at the requested durations.
template <class ForEach>
std::vector<ChevronPoint> rabi_chevron_impl(const DriveSubspace& sub,
                                            const std::vector<double>& n_drive_grid,
                                            const std::vector<double>& f_drive_hz_grid,
                                            const std::vector<double>& duration_s_grid,
                                            ForEach&& for_each) {
    const std::size_t n_amp = n_drive_grid.size();
    const std::size_t n_f = f_drive_hz_grid.size();
    const std::size_t n_t = duration_s_grid.size();
    for (std::size_t kt = 1; kt < n_t; ++kt)
        if (duration_s_grid[kt] < duration_s_grid[kt - 1])
            throw ParameterError("duration grid must be sorted ascending");
    std::vector<ChevronPoint> out(n_amp * n_f * n_t);
    for_each(n_amp * n_f, [&](std::size_t idx) {
        const std::size_t ia = idx / n_f;
        const std::size_t jf = idx % n_f;
        const double amp = charge_drive_amp_rad(sub.E_C_hz, n_drive_grid[ia]);
        const double omega_d = to_angular(f_drive_hz_grid[jf]);
        const int n = static_cast<int>(sub.omega_rad.size());
        auto rhs = [&](double t, const VectorXcd& c) {
            VectorXcd dc = VectorXcd::Zero(n);
            const double drive = amp * std::cos(omega_d * t);
            const complex<double> i(0.0, 1.0);
            for (int r = 0; r < n; ++r) {
                complex<double> acc(0.0, 0.0);
                for (int k = 0; k < n; ++k) {
                    if (sub.n_el(r, k) == complex<double>(0.0, 0.0)) continue;
                    acc += sub.n_el(r, k) * std::exp(i * (sub.omega_rad[r] - sub.omega_rad[k]) * t) *
                           c[k];
                }
                dc[r] = -i * drive * acc;
            }
            return dc;
        };
        VectorXcd psi = VectorXcd::Zero(n);
        psi[0] = 1.0;
        double t_prev = 0.0;
        for (std::size_t kt = 0; kt < n_t; ++kt) {
            const double t = duration_s_grid[kt];
            if (t > t_prev)
                psi = num::integrate_adaptive(rhs, std::move(psi), t_prev, t,
                                              num::OdeOptions{.rtol = 1e-9, .atol = 1e-11});
            ChevronPoint& pt = out[(ia * n_f + jf) * n_t + kt];
            pt.n_drive = n_drive_grid[ia];
            pt.f_drive_hz = f_drive_hz_grid[jf];
            pt.t_s = t;
            pt.pop_e = std::norm(psi[1]);
            t_prev = t;
        }
    });
    return out;
}

inline std::vector<ChevronPoint> rabi_chevron(const DriveSubspace& sub,
                                              const std::vector<double>& n_drive_grid,
                                              const std::vector<double>& f_drive_hz_grid,
                                              const std::vector<double>& duration_s_grid) {
    return rabi_chevron_impl(sub, n_drive_grid, f_drive_hz_grid, duration_s_grid,
                             [](std::size_t n, auto&& fn) {
                                 for (std::size_t i = 0; i < n; ++i) fn(i);
                             });
}

/// Rabi population in the rotating-wave approximation, for breakdown studies.
inline double rwa_population(double omega_r_rad, double delta_rad, double t_s) {
    const double w2 = omega_r_rad * omega_r_rad + delta_rad * delta_rad;
    if (w2 <= 0.0) return 0.0;
    const double s = std::sin(0.5 * std::sqrt(w2) * t_s);
    return omega_r_rad * omega_r_rad / w2 * s * s;
}

/// Fits P_e(t) = a - b cos(Omega t) on a resonant Rabi trace.
inline double fit_rabi_frequency(const std::vector<double>& t, const std::vector<double>& pe,
                                 double omega_init_rad) {
    Eigen::VectorXd p(3);
    p << 0.5, 0.5, omega_init_rad;
    auto res = [&](const Eigen::VectorXd& q) {
        Eigen::VectorXd r(t.size());
        for (std::size_t i = 0; i < t.size(); ++i)
            r[i] = q[0] - q[1] * std::cos(q[2] * t[i]) - pe[i];
        return r;
    };
    const auto fit = num::lm_least_squares(res, p, {.max_iter = 500, .ftol = 1e-14});
    if (!fit.converged) throw FitError("Rabi frequency fit did not converge");
    return std::abs(fit.params[2]);
}

// ---------------------------------------------------------------------------
// Flux ramps on the projected low-energy subspace
// ---------------------------------------------------------------------------

struct RampSchedule {
    std::vector<double> t_s;          // breakpoints, ascending
    std::vector<double> phi_ext_rad;  // values at the breakpoints

    double at(double t) const {
        if (t_s.size() != phi_ext_rad.size() || t_s.size() < 2)
            throw ParameterError("ramp schedule needs matching breakpoint lists");
        if (t <= t_s.front()) return phi_ext_rad.front();
        if (t >= t_s.back()) return phi_ext_rad.back();
        const auto it = std::upper_bound(t_s.begin(), t_s.end(), t);
        const std::size_t j = static_cast<std::size_t>(it - t_s.begin());
        const double w = (t - t_s[j - 1]) / (t_s[j] - t_s[j - 1]);
        return phi_ext_rad[j - 1] + w * (phi_ext_rad[j] - phi_ext_rad[j - 1]);
    }
};

struct RampResult {
    double final_overlap = 0.0;            // |<target eigenstate | psi(end)>|^2
    std::vector<double> times;
    std::vector<double> instantaneous_overlap;
};

/// Schroedinger evolution through a flux ramp on the lowest `levels` states,
/// reporting the overlap with the instantaneous eigenstate of matching index.
inline RampResult run_flux_ramp(const circuit::CircuitParams& params,
                                const circuit::BasisConfig& basis, const RampSchedule& schedule,
                                int start_index = 0, int levels = 12, int samples = 41,
                                const num::OdeOptions& opt = {.rtol = 1e-9, .atol = 1e-12}) {
    const auto ops = circuit::build_operators(params, basis);
    const auto ref = circuit::solve_at(params, circuit::FluxBias{schedule.phi_ext_rad.back()},
                                       basis, levels);
    const auto fam = circuit::project_flux_family(params, ops, ref, levels);

    auto eigvec = [&](double phi, int index) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(fam.at(phi));
        return Eigen::VectorXd(es.eigenvectors().col(index));
    };

    VectorXcd psi = eigvec(schedule.phi_ext_rad.front(), start_index).cast<complex<double>>();
    auto rhs = [&](double t, const VectorXcd& c) {
        const MatrixXd h = fam.at(schedule.at(t));
        const Eigen::VectorXd hr = h * c.real();
        const Eigen::VectorXd hi = h * c.imag();
        VectorXcd dc(c.size());
        dc.real() = hi;   // -i H c
        dc.imag() = -hr;
        return dc;
    };

    RampResult out;
    out.times.resize(samples);
    out.instantaneous_overlap.resize(samples);
    const double t0 = schedule.t_s.front(), t1 = schedule.t_s.back();
    double t_prev = t0;
    for (int s = 0; s < samples; ++s) {
        const double t = t0 + (t1 - t0) * s / (samples - 1);
        if (s > 0) psi = num::integrate_adaptive(rhs, std::move(psi), t_prev, t, opt);
        const Eigen::VectorXd v = eigvec(schedule.at(t), start_index);
        out.times[s] = t;
        out.instantaneous_overlap[s] = std::norm(v.cast<complex<double>>().dot(psi));
        t_prev = t;
    }
    out.final_overlap = out.instantaneous_overlap.back();
    return out;
}

} // namespace fluxlab::dynamics

