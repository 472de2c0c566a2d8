#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fluxlab/constants.hpp"
#include "fluxlab/errors.hpp"

namespace fluxlab::circuit {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using std::complex;

/// Fluxonium energies in ordinary frequency units (energy divided by h, Hz).
struct CircuitParams {
    double E_J_hz = 0.0;
    double E_C_hz = 0.0;
    double E_L_hz = 0.0;
    std::optional<double> E_JA_hz;     // array junction Josephson energy
    std::optional<double> E_p_hz;      // array junction plasma frequency
    std::optional<int> n_array_junctions;

    void validate() const {
        if (!(E_J_hz > 0.0 && E_C_hz > 0.0 && E_L_hz > 0.0))
            throw ParameterError("circuit energies E_J, E_C, E_L must be positive");
    }

    /// Deep wells with localized doublets: E_J >= 10 E_C and E_J >> E_L.
    bool heavy_fluxonium() const { return E_J_hz >= 10.0 * E_C_hz && E_J_hz >= 10.0 * E_L_hz; }

    /// Negligible array phase slips when E_JA / E_p >= 3; empty if not specified.
    std::optional<bool> array_valid() const {
        if (!E_JA_hz || !E_p_hz) return std::nullopt;
        return *E_JA_hz >= 3.0 * *E_p_hz;
    }
};

struct FluxBias {
    double phi_ext_rad = 0.0;

    static FluxBias from_phi0(double phi_ext_over_phi0) { return {two_pi * phi_ext_over_phi0}; }

    void validate() const {
        if (!std::isfinite(phi_ext_rad)) throw ParameterError("flux bias must be finite");
    }

    /// Reduced to [0, 2pi); reporting convenience only, never fed back in.
    double reduced() const {
        double r = std::fmod(phi_ext_rad, two_pi);
        return r < 0.0 ? r + two_pi : r;
    }
};

/// Harmonic-oscillator basis of the E_J = 0 circuit.
struct BasisConfig {
    int dimension = 120;

    void validate() const {
        if (dimension < 20) throw ParameterError("basis dimension must be at least 20");
    }
};

/// l^2 = sqrt(8 E_C / E_L); ground-state phase spread of the bare oscillator.
inline double oscillator_length_sq(const CircuitParams& p) {
    return std::sqrt(8.0 * p.E_C_hz / p.E_L_hz);
}

/// Phase, charge and displacement operators on the truncated oscillator basis.
/// The charge operator is i * charge_asym with charge_asym real antisymmetric,
/// so every derived Hamiltonian stays real symmetric.
struct OperatorSet {
    int dimension = 0;
    MatrixXd phase;         // phi = l (a + a^dag) / sqrt(2)
    MatrixXd charge_asym;   // n = i (a^dag - a) / (l sqrt(2)) = i * charge_asym
    MatrixXd n_squared;     // n^2, real symmetric PSD
    MatrixXcd displacement; // exp(i phi), from the eigendecomposition of phi

    MatrixXcd charge() const { return complex<double>(0.0, 1.0) * charge_asym; }

    /// cos(phi - phi_ext) = cos(phi_ext) Re W + sin(phi_ext) Im W, real symmetric.
    MatrixXd cos_shifted(double phi_ext) const {
        return std::cos(phi_ext) * displacement.real() + std::sin(phi_ext) * displacement.imag();
    }
};

inline OperatorSet build_operators(const CircuitParams& params, const BasisConfig& basis) {
    params.validate();
    basis.validate();
    const int d = basis.dimension;
    const double l = std::sqrt(oscillator_length_sq(params));

    OperatorSet ops;
    ops.dimension = d;
    ops.phase = MatrixXd::Zero(d, d);
    ops.charge_asym = MatrixXd::Zero(d, d);
    for (int k = 0; k + 1 < d; ++k) {
        const double root = std::sqrt(static_cast<double>(k + 1));
        ops.phase(k, k + 1) = l * root / std::sqrt(2.0);
        ops.phase(k + 1, k) = ops.phase(k, k + 1);
        ops.charge_asym(k + 1, k) = root / (l * std::sqrt(2.0));
        ops.charge_asym(k, k + 1) = -ops.charge_asym(k + 1, k);
    }
    ops.n_squared = ops.charge_asym.transpose() * ops.charge_asym;

    Eigen::SelfAdjointEigenSolver<MatrixXd> es(ops.phase);
    if (es.info() != Eigen::Success)
        throw NumericalError("eigendecomposition of the phase operator failed");
    const MatrixXd& u = es.eigenvectors();
    Eigen::VectorXcd phases(d);
    for (int i = 0; i < d; ++i)
        phases[i] = std::exp(complex<double>(0.0, es.eigenvalues()[i]));
    ops.displacement = u * phases.asDiagonal() * u.transpose();
    return ops;
}

/// H = -E_J Re[e^{-i phi_ext} e^{i phi}] + 4 E_C n^2 + (E_L/2) phi^2, in rad/s.
/// The offset charge n_g is dropped: it only enters through drives.
inline MatrixXd build_hamiltonian(const CircuitParams& params, const FluxBias& flux,
                                  const OperatorSet& ops) {
    flux.validate();
    if (ops.dimension == 0 || ops.phase.rows() != ops.phase.cols())
        throw NumericalError("operator set dimensions inconsistent");
    return to_angular(1.0) *
           (-params.E_J_hz * ops.cos_shifted(flux.phi_ext_rad) +
            4.0 * params.E_C_hz * ops.n_squared +
            0.5 * params.E_L_hz * ops.phase * ops.phase);
}

inline MatrixXd build_hamiltonian(const CircuitParams& params, const FluxBias& flux,
                                  const BasisConfig& basis) {
    return build_hamiltonian(params, flux, build_operators(params, basis));
}

enum Level : int { g = 0, e = 1, f = 2, h = 3 };

/// Lowest-k eigenpairs, ascending, with |g>,|e>,|f>,|h> = columns 0..3 and a
/// deterministic gauge (largest-magnitude coefficient real positive).
struct EigenSolution {
    VectorXd energies_rad;  // ascending, rad/s
    MatrixXd states;        // D x k, orthonormal columns
    double spectral_norm = 0.0;

    int count() const { return static_cast<int>(energies_rad.size()); }
    double energy_hz(int i) const { return to_ordinary(energies_rad[i]); }
    double transition_hz(int lo, int hi) const {
        return to_ordinary(energies_rad[hi] - energies_rad[lo]);
    }
};

inline EigenSolution diagonalize_and_label(const MatrixXd& hamiltonian, int k,
                                           const EigenSolution* previous = nullptr) {
    const auto d = hamiltonian.rows();
    if (k > d) throw ParameterError("requested more eigenpairs than basis states");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(hamiltonian);
    if (es.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "dense symmetric eigensolver failed to converge (dimension " << d << ")";
        throw NumericalError(msg.str());
    }

    EigenSolution sol;
    sol.spectral_norm = std::max(std::abs(es.eigenvalues()[0]), std::abs(es.eigenvalues()[d - 1]));
    sol.energies_rad = es.eigenvalues().head(k);
    sol.states = es.eigenvectors().leftCols(k);

    // Exact crossings: keep vector assignment continuous with the previous
    // flux point inside each degenerate cluster. Transition frequencies are
    // unaffected; only the gauge of the vectors is.
    if (previous && previous->count() >= k && previous->states.rows() == d) {
        const double tol = 1e-12 * std::max(sol.spectral_norm, 1.0);
        int i = 0;
        while (i < k) {
            int j = i + 1;
            while (j < k && sol.energies_rad[j] - sol.energies_rad[j - 1] < tol) ++j;
            if (j - i > 1) {
                for (int a = i; a < j; ++a) {
                    int best = a;
                    double best_ov = std::abs(previous->states.col(a).dot(sol.states.col(a)));
                    for (int b = a + 1; b < j; ++b) {
                        const double ov = std::abs(previous->states.col(a).dot(sol.states.col(b)));
                        if (ov > best_ov) {
                            best = b;
                            best_ov = ov;
                        }
                    }
                    if (best != a) sol.states.col(a).swap(sol.states.col(best));
                }
            }
            i = j;
        }
    }

    for (int c = 0; c < k; ++c) {
        Eigen::Index imax = 0;
        sol.states.col(c).cwiseAbs().maxCoeff(&imax);
        if (sol.states(imax, c) < 0.0) sol.states.col(c) *= -1.0;
    }

    const double res_tol = 1e-9 * std::max(sol.spectral_norm, 1.0);
    for (int c = 0; c < k; ++c) {
        const double res =
            (hamiltonian * sol.states.col(c) - sol.energies_rad[c] * sol.states.col(c)).norm();
        if (res > res_tol) {
            std::ostringstream msg;
            msg << "eigenpair " << c << " residual " << res << " exceeds " << res_tol;
            throw NumericalError(msg.str());
        }
    }
    return sol;
}

/// Transition frequencies among the four labeled levels, ordinary Hz.
struct TransitionTable {
    double phi_ext_rad = 0.0;
    double f_ge = 0.0, f_gf = 0.0, f_gh = 0.0, f_ef = 0.0, f_eh = 0.0, f_fh = 0.0;

    static TransitionTable from(const EigenSolution& sol, const FluxBias& flux) {
        if (sol.count() < 4) throw ParameterError("transition table needs 4 labeled levels");
        TransitionTable t;
        t.phi_ext_rad = flux.phi_ext_rad;
        t.f_ge = sol.transition_hz(g, e);
        t.f_gf = sol.transition_hz(g, f);
        t.f_gh = sol.transition_hz(g, h);
        t.f_ef = sol.transition_hz(e, f);
        t.f_eh = sol.transition_hz(e, h);
        t.f_fh = sol.transition_hz(f, h);
        return t;
    }
};

struct SweepPoint {
    TransitionTable table;
    bool ok = false;
    std::string error;
};

/// Matrix elements of phi, n and cos(phi - phi_ext) among {g, e, f, h}, plus
/// the qubit-subspace projections c0, cx, cz of cos(phi - phi_ext).
struct MatrixElements {
    Eigen::Matrix4cd phi_el;
    Eigen::Matrix4cd charge_el;
    Eigen::Matrix4cd cos_el;
    double c0 = 0.0;
    complex<double> cx;
    double cz = 0.0;
};

inline MatrixElements matrix_elements(const EigenSolution& sol, const OperatorSet& ops,
                                      const FluxBias& flux) {
    if (sol.count() < 4) throw ParameterError("matrix elements need 4 labeled levels");
    const MatrixXd v = sol.states.leftCols(4);
    const MatrixXd beta = ops.cos_shifted(flux.phi_ext_rad);

    MatrixElements m;
    const MatrixXd phi4 = v.transpose() * ops.phase * v;
    const MatrixXd asym4 = v.transpose() * ops.charge_asym * v;
    const MatrixXd cos4 = v.transpose() * beta * v;
    m.phi_el = phi4.cast<complex<double>>();
    m.charge_el = complex<double>(0.0, 1.0) * asym4.cast<complex<double>>();
    m.cos_el = cos4.cast<complex<double>>();
    m.c0 = 0.5 * (cos4(g, g) + cos4(e, e));
    m.cx = m.cos_el(g, e);
    m.cz = 0.5 * (cos4(e, e) - cos4(g, g));
    return m;
}

/// One diagonalization, labeled; the workhorse for single-point queries.
inline EigenSolution solve_at(const CircuitParams& params, const FluxBias& flux,
                              const BasisConfig& basis, int k = 4) {
    const OperatorSet ops = build_operators(params, basis);
    return diagonalize_and_label(build_hamiltonian(params, flux, ops), k);
}

/// ge splitting at the frustration point: E_S / h.
inline double tunnel_splitting_hz(const CircuitParams& params, const BasisConfig& basis) {
    return solve_at(params, FluxBias{pi}, basis, 2).transition_hz(0, 1);
}

/// Flux sweep; points are independent so callers may distribute them over
/// threads. Per-point failures are recorded and the sweep continues.
template <class ForEach>
std::vector<SweepPoint> spectrum_vs_flux_impl(const CircuitParams& params,
                                              const std::vector<double>& phi_ext_grid,
                                              const BasisConfig& basis, ForEach&& for_each) {
    const OperatorSet ops = build_operators(params, basis);
    std::vector<SweepPoint> out(phi_ext_grid.size());
    for_each(phi_ext_grid.size(), [&](std::size_t i) {
        const FluxBias flux{phi_ext_grid[i]};
        try {
            const EigenSolution sol = diagonalize_and_label(build_hamiltonian(params, flux, ops), 4);
            out[i].table = TransitionTable::from(sol, flux);
            out[i].ok = true;
        } catch (const Error& err) {
            out[i].table.phi_ext_rad = flux.phi_ext_rad;
            out[i].error = err.what();
        }
    });
    return out;
}

inline std::vector<SweepPoint> spectrum_vs_flux(const CircuitParams& params,
                                                const std::vector<double>& phi_ext_grid,
                                                const BasisConfig& basis) {
    return spectrum_vs_flux_impl(params, phi_ext_grid, basis,
                                 [](std::size_t n, auto&& fn) {
                                     for (std::size_t i = 0; i < n; ++i) fn(i);
                                 });
}

/// Flux-dependent Hamiltonian family projected on a fixed low-energy subspace,
/// H(phi_ext) = base - E_J (cos(phi_ext) C + sin(phi_ext) S). Cheap enough to
/// rebuild every integrator step during flux ramps.
struct ProjectedFluxFamily {
    MatrixXd base;      // rad/s
    MatrixXd cos_part;  // dimensionless projections of cos(phi), sin(phi)
    MatrixXd sin_part;
    double E_J_rad = 0.0;

    MatrixXd at(double phi_ext) const {
        return base - E_J_rad * (std::cos(phi_ext) * cos_part + std::sin(phi_ext) * sin_part);
    }
};

inline ProjectedFluxFamily project_flux_family(const CircuitParams& params, const OperatorSet& ops,
                                               const EigenSolution& reference, int levels) {
    if (levels > reference.count())
        throw ParameterError("projection needs at least as many reference levels");
    const MatrixXd v = reference.states.leftCols(levels);
    ProjectedFluxFamily fam;
    fam.E_J_rad = to_angular(params.E_J_hz);
    fam.base = to_angular(1.0) * (v.transpose() *
               (4.0 * params.E_C_hz * ops.n_squared + 0.5 * params.E_L_hz * ops.phase * ops.phase) * v);
    fam.cos_part = v.transpose() * ops.displacement.real() * v;
    fam.sin_part = v.transpose() * ops.displacement.imag() * v;
    return fam;
}

} // namespace fluxlab::circuit
