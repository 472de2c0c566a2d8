#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "fluxlab/constants.hpp"
#include "fluxlab/errors.hpp"
#include "fluxlab/optim.hpp"
#include "fluxlab/parallel.hpp"
#include "fluxlab/rng.hpp"

namespace fluxlab::fitting {

// ---------------------------------------------------------------------------
// Synthetic single-shot readout
// ---------------------------------------------------------------------------

/// Dispersive readout model: g and e share one IQ blob, f and h are resolved;
/// a threshold on I yields the boolean "left" outcome with the stated
/// conditional probabilities.
struct ReadoutModel {
    double center_ge_I = 0.0, center_ge_Q = 0.0;
    double center_f_I = 0.0, center_f_Q = 0.0;
    double center_h_I = 0.0, center_h_Q = 0.0;
    double sigma_blob = 1.0;
    double threshold_I = 0.0;
    double p_left_g = 1.0, p_left_e = 1.0, p_left_h = 0.0;

    void validate() const {
        if (!(sigma_blob > 0.0)) throw ParameterError("blob width must be positive");
        for (double p : {p_left_g, p_left_e, p_left_h})
            if (p < 0.0 || p > 1.0) throw ParameterError("conditionals must lie in [0, 1]");
    }

    /// Exact threshold conditional from the Gaussian tail, P[I < threshold].
    double tail_left(double center_I) const {
        return 0.5 * std::erfc((center_I - threshold_I) / (sigma_blob * std::sqrt(2.0)));
    }
};

struct IqSample {
    double I = 0.0, Q = 0.0;
};

/// Populations ordered {g, e, f, h}.
inline std::vector<IqSample> synthesize_iq(const std::array<double, 4>& populations,
                                           const ReadoutModel& model, int n_shots,
                                           std::uint64_t seed) {
    model.validate();
    double total = 0.0;
    for (double p : populations) {
        if (p < -1e-12) throw ParameterError("populations must be non-negative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ParameterError("populations must sum to 1");

    std::array<double, 4> cum{};
    double acc = 0.0;
    for (int s = 0; s < 4; ++s) {
        acc += populations[s];
        cum[s] = acc;
    }
    const double centers_I[4] = {model.center_ge_I, model.center_ge_I, model.center_f_I,
                                 model.center_h_I};
    const double centers_Q[4] = {model.center_ge_Q, model.center_ge_Q, model.center_f_Q,
                                 model.center_h_Q};
    SeqRng rng(seed);
    std::vector<IqSample> out(n_shots);
    for (int k = 0; k < n_shots; ++k) {
        const std::size_t s = rng.next_categorical(cum);
        out[k].I = centers_I[s] + model.sigma_blob * rng.next_normal();
        out[k].Q = centers_Q[s] + model.sigma_blob * rng.next_normal();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Preparation-fidelity calibration fit
// ---------------------------------------------------------------------------

/// Probability of the left detection outcome after a g->h Rabi pulse of angle
/// theta, affine in cos(theta):
///   P = P_g_prep (P[l|g]+P[l|h])/2 + (1-P_g_prep) P[l|e]
///       + P_g_prep cos(theta) (P[l|g]-P[l|h])/2.
inline double rabi_curve_probability(double theta, double p_g_prep, double p_left_g,
                                     double p_left_e, double p_left_h) {
    return p_g_prep * 0.5 * (p_left_g + p_left_h) + (1.0 - p_g_prep) * p_left_e +
           p_g_prep * std::cos(theta) * 0.5 * (p_left_g - p_left_h);
}

struct PrepCalibTruth {
    double p_left_g = 0.95, p_left_e = 0.95, p_left_h = 0.1;
    double p_g_prep_g = 0.9, p_g_prep_e = 0.1;
    static constexpr double p_g_prep_th = 0.5;  // equal thermal populations
};

struct RabiCurveData {
    std::vector<double> theta;
    std::vector<double> p_prep_g;   // measured P[left] per theta, preparation in g
    std::vector<double> p_prep_e;
    std::vector<double> p_prep_th;
    int shots_per_point = 0;        // 0 means noiseless
};

inline RabiCurveData synthesize_rabi_curves(const PrepCalibTruth& truth,
                                            const std::vector<double>& theta_grid,
                                            int shots_per_point, std::uint64_t seed) {
    RabiCurveData d;
    d.theta = theta_grid;
    d.shots_per_point = shots_per_point;
    SeqRng rng(seed);
    auto sample = [&](double p) {
        if (shots_per_point <= 0) return p;
        int hits = 0;
        for (int s = 0; s < shots_per_point; ++s)
            if (rng.next_u01() < p) ++hits;
        return static_cast<double>(hits) / shots_per_point;
    };
    for (double th : theta_grid) {
        d.p_prep_g.push_back(sample(rabi_curve_probability(th, truth.p_g_prep_g, truth.p_left_g,
                                                           truth.p_left_e, truth.p_left_h)));
        d.p_prep_e.push_back(sample(rabi_curve_probability(th, truth.p_g_prep_e, truth.p_left_g,
                                                           truth.p_left_e, truth.p_left_h)));
        d.p_prep_th.push_back(sample(rabi_curve_probability(th, PrepCalibTruth::p_g_prep_th,
                                                            truth.p_left_g, truth.p_left_e,
                                                            truth.p_left_h)));
    }
    return d;
}

struct PrepFidelityFit {
    // point estimates, order {P[l|g], P[l|e], P[l|h], P_g_prep_g, P_g_prep_e}
    std::array<double, 5> params{};
    std::array<double, 5> bootstrap_mean{};
    std::array<double, 5> bootstrap_std{};
    int n_bootstrap = 0;
    double cost = 0.0;
    bool converged = false;
    bool boundary_warning = false;
};

struct PrepFitOptions {
    std::array<double, 5> initial{0.95, 0.95, 0.1, 0.9, 0.1};
    int n_bootstrap = 300;
    std::uint64_t bootstrap_seed = 7;
    int threads = 1;
};

namespace detail {

struct PrepPoint {
    int curve = 0;  // 0: prep g, 1: prep e, 2: thermal
    double theta = 0.0;
    double value = 0.0;
};

inline std::vector<PrepPoint> pool_points(const RabiCurveData& data) {
    const std::size_t n = data.theta.size();
    if (data.p_prep_g.size() != n || data.p_prep_e.size() != n || data.p_prep_th.size() != n)
        throw ParameterError("curve lengths must match the theta grid");
    std::vector<PrepPoint> pts;
    pts.reserve(3 * n);
    for (std::size_t i = 0; i < n; ++i) {
        pts.push_back({0, data.theta[i], data.p_prep_g[i]});
        pts.push_back({1, data.theta[i], data.p_prep_e[i]});
        pts.push_back({2, data.theta[i], data.p_prep_th[i]});
    }
    return pts;
}

inline std::array<double, 5> fit_points(const std::vector<PrepPoint>& pts,
                                        const std::array<double, 5>& initial, double* cost_out,
                                        bool* converged_out) {
    Eigen::VectorXd x(5);
    for (int j = 0; j < 5; ++j) x[j] = num::logit(initial[j]);
    auto residuals = [&](const Eigen::VectorXd& q) {
        const double plg = num::logistic(q[0]);
        const double ple = num::logistic(q[1]);
        const double plh = num::logistic(q[2]);
        const double prep[3] = {num::logistic(q[3]), num::logistic(q[4]),
                                PrepCalibTruth::p_g_prep_th};
        Eigen::VectorXd r(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i)
            r[i] = rabi_curve_probability(pts[i].theta, prep[pts[i].curve], plg, ple, plh) -
                   pts[i].value;
        return r;
    };
    const auto fit = num::lm_least_squares(residuals, x, {.max_iter = 600, .ftol = 1e-10,
                                                          .cost_tol = 1e-24});
    if (cost_out) *cost_out = fit.cost;
    if (converged_out) *converged_out = fit.converged;
    std::array<double, 5> p;
    for (int j = 0; j < 5; ++j) p[j] = num::logistic(fit.params[j]);
    return p;
}

} // namespace detail

/// Joint least squares over the three preparation curves with the thermal
/// constraint pinned, followed by a resample-with-replacement bootstrap for
/// the parameter spreads.
inline PrepFidelityFit fit_rabi_curves(const RabiCurveData& data,
                                       const PrepFitOptions& opt = {}) {
    const auto pts = detail::pool_points(data);
    if (pts.size() < 10) throw FitError("too few points for the preparation fit");
    const double theta_span = *std::max_element(data.theta.begin(), data.theta.end()) -
                              *std::min_element(data.theta.begin(), data.theta.end());
    if (theta_span < two_pi * 0.999)
        throw FitError("theta grid must cover at least one full Rabi period");

    PrepFidelityFit out;
    out.params = detail::fit_points(pts, opt.initial, &out.cost, &out.converged);
    if (!out.converged) throw FitError("preparation fit did not converge");
    for (double p : out.params)
        if (p < 1e-3 || p > 1.0 - 1e-3) out.boundary_warning = true;

    out.n_bootstrap = opt.n_bootstrap;
    std::vector<std::array<double, 5>> samples(opt.n_bootstrap);
    parallel_for(opt.n_bootstrap, opt.threads, [&](std::size_t r) {
        SeqRng rng(counter_hash(opt.bootstrap_seed, r));
        std::vector<detail::PrepPoint> resampled(pts.size());
        for (auto& q : resampled)
            q = pts[static_cast<std::size_t>(rng.next_u01() * pts.size()) % pts.size()];
        samples[r] = detail::fit_points(resampled, out.params, nullptr, nullptr);
    });
    for (int j = 0; j < 5; ++j) {
        double mean = 0.0;
        for (const auto& s : samples) mean += s[j];
        mean /= opt.n_bootstrap;
        double var = 0.0;
        for (const auto& s : samples) var += (s[j] - mean) * (s[j] - mean);
        out.bootstrap_mean[j] = mean;
        out.bootstrap_std[j] = std::sqrt(var / std::max(opt.n_bootstrap - 1, 1));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Thermal-population histogram fit
// ---------------------------------------------------------------------------

struct Histogram {
    std::vector<double> centers;
    std::vector<double> counts;
    double bin_width = 0.0;
};

/// 128 bins spanning the blob centers +- 5 sigma.
inline Histogram histogram_I(const std::vector<IqSample>& samples, const ReadoutModel& model,
                             int bins = 128) {
    const double lo = std::min({model.center_ge_I, model.center_f_I, model.center_h_I}) -
                      5.0 * model.sigma_blob;
    const double hi = std::max({model.center_ge_I, model.center_f_I, model.center_h_I}) +
                      5.0 * model.sigma_blob;
    Histogram h;
    h.bin_width = (hi - lo) / bins;
    h.centers.resize(bins);
    h.counts.assign(bins, 0.0);
    for (int b = 0; b < bins; ++b) h.centers[b] = lo + (b + 0.5) * h.bin_width;
    for (const auto& s : samples) {
        const int b = static_cast<int>((s.I - lo) / h.bin_width);
        if (b >= 0 && b < bins) h.counts[b] += 1.0;
    }
    return h;
}

struct ThermalPopulations {
    double p_ge = 0.0;       // combined g+e population
    double p_fh = 0.0;       // combined f+h population
    bool degenerate_fh = false;
    double centers[3] = {0.0, 0.0, 0.0};
    double sigma = 0.0;
    double cost = 0.0;
};

namespace detail {

inline std::vector<int> find_peaks(const Histogram& h, int min_separation = 8) {
    std::vector<double> smooth(h.counts.size());
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        double s = h.counts[i];
        int n = 1;
        if (i > 0) { s += h.counts[i - 1]; ++n; }
        if (i + 1 < h.counts.size()) { s += h.counts[i + 1]; ++n; }
        smooth[i] = s / n;
    }
    const double peak_min = 0.02 * *std::max_element(smooth.begin(), smooth.end());
    std::vector<int> candidates;
    for (std::size_t i = 1; i + 1 < smooth.size(); ++i)
        if (smooth[i] > peak_min && smooth[i] >= smooth[i - 1] && smooth[i] > smooth[i + 1])
            candidates.push_back(static_cast<int>(i));
    std::sort(candidates.begin(), candidates.end(),
              [&](int a, int b) { return smooth[a] > smooth[b]; });
    std::vector<int> kept;
    for (int c : candidates) {
        bool clash = false;
        for (int k : kept)
            if (std::abs(k - c) < min_separation) clash = true;
        if (!clash) kept.push_back(c);
        if (kept.size() == 3) break;
    }
    return kept;
}

} // namespace detail

/// Triple-Gaussian fit with the f and h peaks constrained to equal area and a
/// common width. Two resolvable side peaks are required; otherwise the fit
/// degrades to a single Gaussian and flags the f/h estimate as degenerate.
inline ThermalPopulations fit_thermal_histogram(const Histogram& hist) {
    if (hist.counts.size() < 16) throw FitError("histogram too coarse for the thermal fit");
    const double total = std::accumulate(hist.counts.begin(), hist.counts.end(), 0.0);
    if (!(total > 0.0)) throw FitError("histogram is empty");
    const auto peaks = detail::find_peaks(hist);
    if (peaks.empty()) throw FitError("no peaks found in the readout histogram");

    const double span = hist.centers.back() - hist.centers.front();
    ThermalPopulations out;

    auto gauss = [](double x, double mu, double sigma) {
        const double z = (x - mu) / sigma;
        return std::exp(-0.5 * z * z) / (sigma * std::sqrt(two_pi));
    };

    if (peaks.size() < 3) {
        // Degenerate case: one dominant blob, side populations within noise.
        Eigen::VectorXd x(3);
        x << hist.centers[peaks[0]], std::log(span / 20.0), std::log(total);
        auto res = [&](const Eigen::VectorXd& q) {
            Eigen::VectorXd r(hist.counts.size());
            const double mu = q[0], sig = std::exp(q[1]), area = std::exp(q[2]);
            for (std::size_t i = 0; i < hist.counts.size(); ++i)
                r[i] = area * hist.bin_width * gauss(hist.centers[i], mu, sig) - hist.counts[i];
            return r;
        };
        const auto fit = num::lm_least_squares(res, x, {.max_iter = 400});
        if (!fit.converged) throw FitError("single-Gaussian fallback did not converge");
        const double area_ge = std::exp(fit.params[2]);
        out.degenerate_fh = true;
        out.centers[0] = fit.params[0];
        out.sigma = std::exp(fit.params[1]);
        out.cost = fit.cost;
        out.p_ge = std::min(area_ge / total, 1.0);
        out.p_fh = std::max(1.0 - out.p_ge, 0.0);
        return out;
    }

    std::array<int, 3> idx{peaks[0], peaks[1], peaks[2]};
    std::sort(idx.begin() + 1, idx.end());  // keep the tallest as the ge blob
    Eigen::VectorXd x(6);
    const double area0 = std::max(hist.counts[idx[0]], 1.0) * 10.0 * hist.bin_width;
    x << hist.centers[idx[0]], hist.centers[idx[1]], hist.centers[idx[2]],
        std::log(span / 30.0), std::log(area0), std::log(std::max(total - area0, 1.0));
    auto res = [&](const Eigen::VectorXd& q) {
        const double mu_ge = q[0], mu_f = q[1], mu_h = q[2];
        const double sig = std::exp(q[3]);
        const double area_ge = std::exp(q[4]);
        const double area_fh = std::exp(q[5]);
        Eigen::VectorXd r(hist.counts.size());
        for (std::size_t i = 0; i < hist.counts.size(); ++i) {
            const double xv = hist.centers[i];
            const double model = hist.bin_width * (area_ge * gauss(xv, mu_ge, sig) +
                                                   0.5 * area_fh * gauss(xv, mu_f, sig) +
                                                   0.5 * area_fh * gauss(xv, mu_h, sig));
            r[i] = model - hist.counts[i];
        }
        return r;
    };
    const auto fit = num::lm_least_squares(res, x, {.max_iter = 600});
    if (!fit.converged) throw FitError("triple-Gaussian fit did not converge");
    const double area_ge = std::exp(fit.params[4]);
    const double area_fh = std::exp(fit.params[5]);
    out.centers[0] = fit.params[0];
    out.centers[1] = fit.params[1];
    out.centers[2] = fit.params[2];
    out.sigma = std::exp(fit.params[3]);
    out.cost = fit.cost;
    out.p_ge = area_ge / (area_ge + area_fh);
    out.p_fh = area_fh / (area_ge + area_fh);
    return out;
}

// ---------------------------------------------------------------------------
// Effective temperatures
// ---------------------------------------------------------------------------

enum class TempMode { manifold_ratio, two_level_prep };

struct TemperatureEstimate {
    double kelvin = 0.0;
    double f_transition_hz = 0.0;
    double ratio = 0.0;     // population ratio actually used
    bool defined = false;   // false for inverted or infinite-temperature inputs
};

/// manifold_ratio: T = h f / (k_B ln(p_ge / p_fh)) from the manifold ratio.
/// two_level_prep: T = h f / (k_B [ln P - ln(1 - P)]) from a preparation
/// probability P.
inline TemperatureEstimate temperature_from_populations(double value, double f_hz, TempMode mode,
                                                        const PhysicalConstants& constants = {}) {
    TemperatureEstimate t;
    t.f_transition_hz = f_hz;
    if (mode == TempMode::manifold_ratio) {
        if (!(value > 0.0)) throw ParameterError("population ratio must be positive");
        t.ratio = value;
    } else {
        if (!(value > 0.0 && value < 1.0))
            throw ParameterError("preparation probability must lie in (0, 1)");
        t.ratio = value / (1.0 - value);
    }
    t.kelvin = constants.planck() * f_hz / (constants.boltzmann * std::log(t.ratio));
    t.defined = std::isfinite(t.kelvin) && t.kelvin > 0.0;
    return t;
}

/// Inverse maps, for round trips and synthetic data.
inline double prep_probability_from_temperature(double kelvin, double f_hz,
                                                const PhysicalConstants& constants = {}) {
    const double x = constants.planck() * f_hz / (constants.boltzmann * kelvin);
    return 1.0 / (1.0 + std::exp(-x));
}
inline double manifold_ratio_from_temperature(double kelvin, double f_hz,
                                              const PhysicalConstants& constants = {}) {
    return std::exp(constants.planck() * f_hz / (constants.boltzmann * kelvin));
}

// ---------------------------------------------------------------------------
// Relaxation and Ramsey fits
// ---------------------------------------------------------------------------

struct T1Fit {
    double T1_s = 0.0;
    double gamma = 0.0;          // 1/(2 T1)
    double asymptote = 0.5;
    double amp_prep_e = 0.0;
    double amp_prep_g = 0.0;
    double cost = 0.0;
};

/// Joint fit of the two relaxation traces, p(t) = a + A_j exp(-2 Gamma t),
/// sharing the rate and the asymptote.
inline T1Fit fit_t1_joint(const std::vector<double>& t_s, const std::vector<double>& pop_prep_e,
                          const std::vector<double>& pop_prep_g) {
    if (t_s.size() != pop_prep_e.size() || t_s.size() != pop_prep_g.size() || t_s.size() < 4)
        throw ParameterError("T1 fit needs matching traces with at least 4 points");
    const double span = t_s.back() - t_s.front();
    Eigen::VectorXd x(4);
    x << 0.5, pop_prep_e.front() - 0.5, pop_prep_g.front() - 0.5, std::log(2.0 / span);
    auto res = [&](const Eigen::VectorXd& q) {
        const double rate = std::exp(q[3]);
        Eigen::VectorXd r(2 * t_s.size());
        for (std::size_t i = 0; i < t_s.size(); ++i) {
            const double decay = std::exp(-rate * t_s[i]);
            r[2 * i] = q[0] + q[1] * decay - pop_prep_e[i];
            r[2 * i + 1] = q[0] + q[2] * decay - pop_prep_g[i];
        }
        return r;
    };
    const auto fit = num::lm_least_squares(res, x, {.max_iter = 500});
    if (!fit.converged) throw FitError("joint T1 fit did not converge");
    T1Fit out;
    const double rate = std::exp(fit.params[3]);  // 2 Gamma
    out.gamma = 0.5 * rate;
    out.T1_s = 1.0 / rate;
    out.asymptote = fit.params[0];
    out.amp_prep_e = fit.params[1];
    out.amp_prep_g = fit.params[2];
    out.cost = fit.cost;
    return out;
}

struct RamseyFit {
    double T2_star_s = 0.0;
    double f_hz = 0.0;
    double amplitude = 0.0;
    double offset = 0.0;
    double phase_rad = 0.0;
    double cost = 0.0;
};

/// Exponentially damped sinusoid, y = offset + A exp(-t/T2*) cos(2 pi f t + phase).
inline RamseyFit fit_ramsey(const std::vector<double>& t_s, const std::vector<double>& y) {
    if (t_s.size() != y.size() || t_s.size() < 8)
        throw ParameterError("Ramsey fit needs at least 8 points");
    const double span = t_s.back() - t_s.front();
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / y.size();

    // coarse frequency scan seeds the nonlinear fit
    double best_f = 0.0, best_power = -1.0;
    const int n_scan = 400;
    const double f_max = 0.5 * (t_s.size() - 1) / span;
    for (int k = 1; k <= n_scan; ++k) {
        const double fk = f_max * k / n_scan;
        std::complex<double> z(0.0, 0.0);
        for (std::size_t i = 0; i < y.size(); ++i)
            z += (y[i] - mean) * std::exp(std::complex<double>(0.0, -two_pi * fk * t_s[i]));
        if (std::norm(z) > best_power) {
            best_power = std::norm(z);
            best_f = fk;
        }
    }
    const double amp0 =
        0.5 * (*std::max_element(y.begin(), y.end()) - *std::min_element(y.begin(), y.end()));

    RamseyFit out;
    double best_cost = std::numeric_limits<double>::infinity();
    for (double phase0 : {0.0, 0.5 * pi, pi, 1.5 * pi}) {
        Eigen::VectorXd x(5);
        x << mean, amp0, std::log(0.5 * span), best_f, phase0;
        auto res = [&](const Eigen::VectorXd& q) {
            Eigen::VectorXd r(t_s.size());
            for (std::size_t i = 0; i < t_s.size(); ++i)
                r[i] = q[0] + q[1] * std::exp(-t_s[i] / std::exp(q[2])) *
                                  std::cos(two_pi * q[3] * t_s[i] + q[4]) -
                       y[i];
            return r;
        };
        const auto fit = num::lm_least_squares(res, x, {.max_iter = 600});
        if (fit.converged && fit.cost < best_cost) {
            best_cost = fit.cost;
            out.offset = fit.params[0];
            out.amplitude = fit.params[1];
            out.T2_star_s = std::exp(fit.params[2]);
            out.f_hz = std::abs(fit.params[3]);
            out.phase_rad = fit.params[4];
            out.cost = fit.cost;
        }
    }
    if (!std::isfinite(best_cost)) throw FitError("Ramsey fit did not converge");
    return out;
}

/// Gamma_phi = 1/T2* - 1/(2 T1); positive whenever dephasing is present.
inline double pure_dephasing_rate(double T1_s, double T2_star_s) {
    return 1.0 / T2_star_s - 1.0 / (2.0 * T1_s);
}

// ---------------------------------------------------------------------------
// Synthetic traces for the demo pipeline
// ---------------------------------------------------------------------------

inline std::vector<double> synthesize_decay_trace(double start_pop, double gamma,
                                                  const std::vector<double>& t_s,
                                                  double noise_sigma, std::uint64_t seed) {
    SeqRng rng(seed);
    std::vector<double> out(t_s.size());
    for (std::size_t i = 0; i < t_s.size(); ++i)
        out[i] = 0.5 + (start_pop - 0.5) * std::exp(-2.0 * gamma * t_s[i]) +
                 noise_sigma * rng.next_normal();
    return out;
}

inline std::vector<double> synthesize_ramsey_trace(double offset, double amplitude, double T2_star,
                                                   double f_hz, const std::vector<double>& t_s,
                                                   double noise_sigma, std::uint64_t seed) {
    SeqRng rng(seed);
    std::vector<double> out(t_s.size());
    for (std::size_t i = 0; i < t_s.size(); ++i)
        out[i] = offset + amplitude * std::exp(-t_s[i] / T2_star) * std::cos(two_pi * f_hz * t_s[i]) +
                 noise_sigma * rng.next_normal();
    return out;
}

} // namespace fluxlab::fitting
