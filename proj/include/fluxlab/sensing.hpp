#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "fluxlab/constants.hpp"
#include "fluxlab/dynamics.hpp"
#include "fluxlab/errors.hpp"
#include "fluxlab/optim.hpp"
#include "fluxlab/parallel.hpp"
#include "fluxlab/rng.hpp"

namespace fluxlab::sensing {

using std::complex;

// ---------------------------------------------------------------------------
// Protocol configuration
// ---------------------------------------------------------------------------

struct ProtocolConfig {
    double tau_I_s = 20e-6;        // interrogation time
    double tau_prep_s = 13e-6;     // preparation + readout time
    int window_length = 1000;      // N, samples per periodogram window
    int padding = 5;               // N_p, zero-padding factor
    int n_windows = 1000;
    double readout_scale = 0.84;   // finite readout efficiency on the signal
    std::uint64_t seed = 1;

    double tau_s() const { return tau_I_s + tau_prep_s; }
    double nyquist_rad() const { return pi / tau_s(); }           // Omega_Ny
    double rbw_rad() const { return two_pi / (window_length * tau_s()); } // Omega_RBW
    int bins() const { return window_length * padding; }
    double bin_spacing_rad() const { return two_pi / (tau_s() * bins()); }
    double omega_full_rad() const { return two_pi / tau_I_s; }    // detector band

    /// Signed bin frequency, centered on [-Omega_Ny, Omega_Ny).
    double bin_freq_rad(int n) const {
        const int m = bins();
        const int s = n >= m / 2 ? n - m : n;
        return s * bin_spacing_rad();
    }
    int wrap_bin(long n) const {
        const long m = bins();
        long r = n % m;
        if (r < 0) r += m;
        return static_cast<int>(r);
    }
    int bin_of_freq(double delta_rad) const {
        return wrap_bin(std::lround(delta_rad / bin_spacing_rad()));
    }
    int circular_bin_distance(int a, int b) const {
        const int m = bins();
        int d = std::abs(a - b) % m;
        return std::min(d, m - d);
    }

    void validate() const {
        if (!(tau_I_s > 0.0) || !(tau_prep_s > 0.0))
            throw ParameterError("protocol times must be positive");
        if (window_length < 2 || window_length % 2 != 0)
            throw ParameterError("window length must be even and >= 2");
        if (padding < 1) throw ParameterError("padding factor must be >= 1");
        if (n_windows < 1) throw ParameterError("need at least one window");
        if (!(readout_scale > 0.0 && readout_scale <= 1.0))
            throw ParameterError("readout scale must be in (0, 1]");
    }
};

struct CalibrationTone {
    double n_drive = 0.0;     // Cooper pairs of charge modulation
    double f_cal_hz = 0.0;    // tone frequency
    double phase_rad = 0.0;

    void validate() const {
        if (n_drive < 0.0) throw ParameterError("drive amplitude must be >= 0");
    }
};

/// Everything the protocol needs to know about the qubit.
struct SensingQubit {
    double f_ge_hz = 1.8e6;
    double abs_phi_ge = pi;   // |<e|phi|g>|
    double gamma = 0.0;       // equal up/down rate, 1/s; T1 = 1/(2 gamma)

    double T1_s() const { return 1.0 / (2.0 * gamma); }
    /// Omega_r = 2 N_drive omega_ge |<e|phi|g>|.
    double omega_r_rad(const CalibrationTone& tone) const {
        return 2.0 * tone.n_drive * to_angular(f_ge_hz) * abs_phi_ge;
    }
    double delta_rad(const CalibrationTone& tone) const {
        return to_angular(f_ge_hz - tone.f_cal_hz);
    }
};

/// Transverse pseudo-spin after the interrogation time, with the tone phase
/// attached: <sigma>_0 in the measurement model.
inline complex<double> transverse_after_interrogation(const ProtocolConfig& cfg,
                                                      const CalibrationTone& tone,
                                                      const SensingQubit& qubit) {
    const auto s = dynamics::bloch_closed_form(qubit.omega_r_rad(tone), qubit.delta_rad(tone),
                                               qubit.gamma, cfg.tau_I_s);
    return s.transverse() * std::exp(complex<double>(0.0, tone.phase_rad));
}

// ---------------------------------------------------------------------------
// Measurement record and telegraph transform
// ---------------------------------------------------------------------------

struct MeasurementRecord {
    std::vector<std::uint8_t> bits;  // m_k, one per shot
    int window_length = 0;
    int n_windows = 0;
    std::uint64_t clipped = 0;       // defensive clipping events; expected 0

    void validate() const {
        if (window_length <= 0 || bits.size() != static_cast<std::size_t>(window_length) * n_windows)
            throw ParameterError("record length must be n_windows * window_length");
    }
};

namespace detail {

/// <m_k> = 1/2 + scale * Re[sigma0 (-i)^k e^{i Delta k tau}].
inline double shot_expectation(complex<double> sigma0_scaled, double delta_tau, long k) {
    static const complex<double> minus_i_pow[4] = {{1, 0}, {0, -1}, {-1, 0}, {0, 1}};
    const complex<double> rot =
        std::exp(complex<double>(0.0, delta_tau * static_cast<double>(k)));
    return 0.5 + (sigma0_scaled * minus_i_pow[k & 3] * rot).real();
}

} // namespace detail

/// One window of Bernoulli draws; shot RNG streams are keyed by
/// (seed, window, shot) so windows can be generated in any order.
inline std::vector<std::uint8_t> simulate_window_bits(const ProtocolConfig& cfg,
                                                      const CalibrationTone& tone,
                                                      const SensingQubit& qubit, int window,
                                                      std::uint64_t* clipped = nullptr) {
    const complex<double> sigma0 = transverse_after_interrogation(cfg, tone, qubit);
    const complex<double> sigma0_scaled = cfg.readout_scale * sigma0;
    if (std::abs(sigma0_scaled) > 0.5 + 1e-12)
        throw ParameterError("measurement model invalid: |<sigma>_0| exceeds 1/2");
    const double delta_tau = qubit.delta_rad(tone) * cfg.tau_s();

    std::vector<std::uint8_t> bits(cfg.window_length);
    for (int j = 0; j < cfg.window_length; ++j) {
        const long k = static_cast<long>(window) * cfg.window_length + j;
        double p = detail::shot_expectation(sigma0_scaled, delta_tau, k);
        if (p < 0.0 || p > 1.0) {
            p = std::clamp(p, 0.0, 1.0);
            if (clipped) ++*clipped;
        }
        bits[j] = counter_u01(cfg.seed, static_cast<std::uint64_t>(window),
                              static_cast<std::uint64_t>(j)) < p
                      ? 1
                      : 0;
    }
    return bits;
}

inline MeasurementRecord simulate_record(const ProtocolConfig& cfg, const CalibrationTone& tone,
                                         const SensingQubit& qubit) {
    cfg.validate();
    tone.validate();
    MeasurementRecord rec;
    rec.window_length = cfg.window_length;
    rec.n_windows = cfg.n_windows;
    rec.bits.reserve(static_cast<std::size_t>(cfg.window_length) * cfg.n_windows);
    for (int w = 0; w < cfg.n_windows; ++w) {
        auto bits = simulate_window_bits(cfg, tone, qubit, w, &rec.clipped);
        rec.bits.insert(rec.bits.end(), bits.begin(), bits.end());
    }
    return rec;
}

struct TelegraphSeries {
    std::vector<complex<double>> sigma;  // i^k (m_k - 1/2)
};

inline complex<double> telegraph_value(std::uint8_t m, long k) {
    static const complex<double> i_pow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    return i_pow[k & 3] * (m ? 0.5 : -0.5);
}

inline TelegraphSeries telegraph_transform(const MeasurementRecord& rec) {
    rec.validate();
    TelegraphSeries out;
    out.sigma.resize(rec.bits.size());
    for (std::size_t k = 0; k < rec.bits.size(); ++k)
        out.sigma[k] = telegraph_value(rec.bits[k], static_cast<long>(k));
    return out;
}

// ---------------------------------------------------------------------------
// Periodograms and Bartlett averaging
// ---------------------------------------------------------------------------

struct Periodogram {
    std::vector<double> S;  // |Z_n|^2 over N_p * N bins, FFT ordering
    double tau_s = 0.0;
    int window_length = 0;
    int padding = 1;
};

/// Zero-padded forward DFT of one window, Z_n = sum_k z_k e^{-2 pi i k n / M},
/// unnormalized; S_n = |Z_n|^2.
inline Periodogram periodogram(const std::vector<complex<double>>& window, int padding,
                               double tau_s) {
    if (window.empty()) throw ParameterError("periodogram window is empty");
    if (padding < 1) throw ParameterError("padding factor must be >= 1");
    const int n = static_cast<int>(window.size());
    const int m = n * padding;
    std::vector<complex<double>> padded(m, complex<double>(0.0, 0.0));
    std::copy(window.begin(), window.end(), padded.begin());
    std::vector<complex<double>> freq(m);
    Eigen::FFT<double> fft;
    fft.fwd(freq, padded);

    Periodogram p;
    p.tau_s = tau_s;
    p.window_length = n;
    p.padding = padding;
    p.S.resize(m);
    for (int k = 0; k < m; ++k) p.S[k] = std::norm(freq[k]);
    return p;
}

/// Flat sampling-noise level of the telegraph series, S_n = N / 4.
inline double sampling_floor(int window_length) { return window_length / 4.0; }

struct SpectrumEstimate {
    std::vector<double> S_mean;        // Bartlett average, raw units
    double tau_s = 0.0;
    int window_length = 0;
    int padding = 1;
    int n_windows = 0;

    // peak analysis
    int peak_bin = -1;
    double peak_freq_rad = 0.0;
    double peak_height = 0.0;          // raw units
    double floor_raw = 0.0;            // mean off-peak level
    double snr = 0.0;                  // sqrt(peak/floor - 1)

    // calibration (empty until calibrate_spectrum)
    std::vector<double> S_ee;          // e^2 / Hz
    double calibration_scale = 0.0;
    double floor_ee = 0.0;
    double delta_q = 0.0;              // e / sqrt(Hz)

    int bins() const { return static_cast<int>(S_mean.size()); }
    double bin_spacing_rad() const { return two_pi / (tau_s * bins()); }
    double bin_freq_rad(int n) const {
        const int m = bins();
        const int s = n >= m / 2 ? n - m : n;
        return s * bin_spacing_rad();
    }
    int mirror_bin(int bin) const {
        long m = bins();
        long r = (m / 2 - static_cast<long>(bin)) % m;
        if (r < 0) r += m;
        return static_cast<int>(r);
    }
};

namespace detail {

/// Peak search runs over the unambiguous half-band |Delta_n| <= Omega_Ny / 2;
/// the mirrored alias family lives in the other half and is excluded from the
/// floor separately.
inline void analyze_peak(SpectrumEstimate& est) {
    const int m = est.bins();
    const double half_band = 0.5 * pi / est.tau_s;
    est.peak_bin = -1;
    est.peak_height = 0.0;
    for (int n = 0; n < m; ++n) {
        if (std::abs(est.bin_freq_rad(n)) > half_band * (1.0 + 1e-12)) continue;
        if (est.peak_bin < 0 || est.S_mean[n] > est.peak_height) {
            est.peak_bin = n;
            est.peak_height = est.S_mean[n];
        }
    }
    est.peak_freq_rad = est.bin_freq_rad(est.peak_bin);

    const int guard = 3 * est.padding;
    const int mirror = est.mirror_bin(est.peak_bin);
    double floor_sum = 0.0;
    int floor_count = 0;
    auto circ = [m](int a, int b) {
        int d = std::abs(a - b) % m;
        return std::min(d, m - d);
    };
    for (int n = 0; n < m; ++n) {
        if (circ(n, est.peak_bin) <= guard || circ(n, mirror) <= guard) continue;
        floor_sum += est.S_mean[n];
        ++floor_count;
    }
    est.floor_raw = floor_count > 0 ? floor_sum / floor_count : 0.0;
    est.snr = est.floor_raw > 0.0
                  ? std::sqrt(std::max(est.peak_height / est.floor_raw - 1.0, 0.0))
                  : 0.0;
}

} // namespace detail

inline SpectrumEstimate bartlett_average(const std::vector<Periodogram>& periodograms) {
    if (periodograms.empty()) throw ParameterError("bartlett_average needs at least one window");
    SpectrumEstimate est;
    est.tau_s = periodograms.front().tau_s;
    est.window_length = periodograms.front().window_length;
    est.padding = periodograms.front().padding;
    est.n_windows = static_cast<int>(periodograms.size());
    est.S_mean.assign(periodograms.front().S.size(), 0.0);
    for (const auto& p : periodograms) {
        if (p.S.size() != est.S_mean.size())
            throw ParameterError("inconsistent periodogram lengths");
        for (std::size_t n = 0; n < p.S.size(); ++n) est.S_mean[n] += p.S[n];
    }
    for (auto& s : est.S_mean) s /= est.n_windows;
    detail::analyze_peak(est);
    return est;
}

/// Full Monte Carlo chain: record -> telegraph -> padded periodograms ->
/// Bartlett mean. Windows are processed in fixed blocks of 32 and reduced in
/// block order, so the result is byte-identical for any thread count.
inline SpectrumEstimate simulate_spectrum(const ProtocolConfig& cfg, const CalibrationTone& tone,
                                          const SensingQubit& qubit, int threads = 1) {
    cfg.validate();
    tone.validate();
    const int m = cfg.bins();
    constexpr int kBlock = 32;
    const int n_blocks = (cfg.n_windows + kBlock - 1) / kBlock;
    std::vector<std::vector<double>> block_sum(n_blocks);

    parallel_for(n_blocks, threads, [&](std::size_t b) {
        std::vector<double> acc(m, 0.0);
        std::vector<complex<double>> window(cfg.window_length);
        std::vector<complex<double>> padded(m);
        std::vector<complex<double>> freq(m);
        Eigen::FFT<double> fft;
        const int w_end = std::min<int>((static_cast<int>(b) + 1) * kBlock, cfg.n_windows);
        for (int w = static_cast<int>(b) * kBlock; w < w_end; ++w) {
            const auto bits = simulate_window_bits(cfg, tone, qubit, w);
            for (int j = 0; j < cfg.window_length; ++j)
                window[j] =
                    telegraph_value(bits[j], static_cast<long>(w) * cfg.window_length + j);
            std::fill(padded.begin(), padded.end(), complex<double>(0.0, 0.0));
            std::copy(window.begin(), window.end(), padded.begin());
            fft.fwd(freq, padded);
            for (int n = 0; n < m; ++n) acc[n] += std::norm(freq[n]);
        }
        block_sum[b] = std::move(acc);
    });

    SpectrumEstimate est;
    est.tau_s = cfg.tau_s();
    est.window_length = cfg.window_length;
    est.padding = cfg.padding;
    est.n_windows = cfg.n_windows;
    est.S_mean.assign(m, 0.0);
    for (int b = 0; b < n_blocks; ++b)
        for (int n = 0; n < m; ++n) est.S_mean[n] += block_sum[b][n];
    for (auto& s : est.S_mean) s /= cfg.n_windows;
    detail::analyze_peak(est);
    return est;
}

// ---------------------------------------------------------------------------
// Analytic lineshape, SNR, calibration
// ---------------------------------------------------------------------------

namespace detail {

/// Ratio sin(u N/4) / sin(u/4) with the N-valued limit at the poles.
inline double dirichlet_ratio_sin(double u, int n_window) {
    const double den = std::sin(0.25 * u);
    if (std::abs(den) < 1e-12)
        return n_window * std::cos(0.25 * u * n_window) / std::cos(0.25 * u);
    return std::sin(0.25 * u * n_window) / den;
}

inline double dirichlet_ratio_cos(double v, int n_window) {
    const double den = std::cos(0.25 * v);
    if (std::abs(den) < 1e-12)
        return -n_window * std::cos(0.25 * v * n_window) / std::sin(0.25 * v);
    return std::sin(0.25 * v * n_window) / den;
}

} // namespace detail

/// Mean-signal lineshape |<Z_n>|^2 at one bin frequency: the two-family
/// expression before any large-N approximation. Peaks of height
/// (sigma0 N / 2)^2 sit at Delta_n = Delta and Delta_n = Omega_Ny - Delta
/// (both mod 2 Omega_Ny).
inline double analytic_lineshape_exact(double sigma0, double delta_rad, double bin_freq_rad,
                                       const ProtocolConfig& cfg) {
    const double ny = cfg.nyquist_rad();
    const int n = cfg.window_length;
    const double u = two_pi * (delta_rad - bin_freq_rad) / ny;
    const double v = two_pi * (delta_rad + bin_freq_rad) / ny;
    const double t_minus = detail::dirichlet_ratio_sin(u, n);
    const double t_plus = detail::dirichlet_ratio_cos(v, n);
    return 0.25 * sigma0 * sigma0 * (t_minus * t_minus + t_plus * t_plus);
}

/// In-band sinc^2 approximation of the main peak.
inline double analytic_lineshape_sinc2(double sigma0, double delta_rad, double bin_freq_rad,
                                       const ProtocolConfig& cfg) {
    const double x = (delta_rad - bin_freq_rad) / cfg.rbw_rad();
    const double s = dynamics::sinc(x);
    const double amp = 0.5 * sigma0 * cfg.window_length;
    return amp * amp * s * s;
}

inline std::vector<double> analytic_lineshape_exact_bins(double sigma0, double delta_rad,
                                                         const ProtocolConfig& cfg) {
    std::vector<double> out(cfg.bins());
    for (int n = 0; n < cfg.bins(); ++n)
        out[n] = analytic_lineshape_exact(sigma0, delta_rad, cfg.bin_freq_rad(n), cfg);
    return out;
}

struct SnrPrediction {
    double sigma0 = 0.0;       // |<sigma>_0| including response and readout scale
    double snr = 0.0;          // sqrt(N) sigma0
    double snr_inband = 0.0;   // sqrt(N) e^{-tau_I/T1} Omega_r tau_I / 2
};

inline SnrPrediction snr_predict(const ProtocolConfig& cfg, const CalibrationTone& tone,
                                 const SensingQubit& qubit) {
    cfg.validate();
    SnrPrediction out;
    out.sigma0 = cfg.readout_scale * std::abs(transverse_after_interrogation(cfg, tone, qubit));
    out.snr = std::sqrt(static_cast<double>(cfg.window_length)) * out.sigma0;
    const double wr = qubit.omega_r_rad(tone);
    out.snr_inband = std::sqrt(static_cast<double>(cfg.window_length)) *
                     std::exp(-cfg.tau_I_s / qubit.T1_s()) * wr * cfg.tau_I_s / 2.0;
    return out;
}

/// Fraction of the sinc^2 power inside the main lobe; the calibration divides
/// by it so that the main-lobe integral represents the full peak power.
inline constexpr double kMainLobeFraction = 0.903;

/// Scales the spectrum so the calibration-peak area equals (2 N_drive)^2,
/// leaving the flat floor in e^2/Hz; delta_q is its square root.
inline void calibrate_spectrum(SpectrumEstimate& est, const CalibrationTone& tone) {
    if (est.peak_bin < 0) detail::analyze_peak(est);
    if (est.snr < 3.0)
        throw CalibrationError("calibration peak not resolvable (SNR < 3)");
    if (!(tone.n_drive > 0.0))
        throw CalibrationError("calibration requires a nonzero tone amplitude");

    const int m = est.bins();
    const double df_hz = 1.0 / (est.tau_s * m);  // bin spacing / 2 pi
    double lobe = 0.0;
    for (int off = -est.padding; off <= est.padding; ++off) {
        const int n = (est.peak_bin + off % m + m) % m;
        lobe += std::max(est.S_mean[n] - est.floor_raw, 0.0);
    }
    const double area = lobe * df_hz / kMainLobeFraction;
    if (!(area > 0.0)) throw CalibrationError("calibration peak has no integrable power");
    const double target = 4.0 * tone.n_drive * tone.n_drive;  // (2 N_drive)^2
    est.calibration_scale = target / area;
    est.S_ee.resize(m);
    for (int n = 0; n < m; ++n) est.S_ee[n] = est.calibration_scale * est.S_mean[n];
    est.floor_ee = est.calibration_scale * est.floor_raw;
    est.delta_q = std::sqrt(est.floor_ee);
}

// ---------------------------------------------------------------------------
// Sensitivity curves
// ---------------------------------------------------------------------------

enum class DutyScenario { ideal, fixed_prep };

/// delta_q^2(tau_I) = 4 tau / (tau_I^2 omega_ge^2 pi^2 e^{-2 tau_I / T1}),
/// tau = tau_I (ideal duty cycle) or tau_I + tau_prep.
inline double delta_q_squared(double tau_I_s, double T1_s, double f_ge_hz, DutyScenario scenario,
                              double tau_prep_s = 0.0) {
    if (!(tau_I_s > 0.0) || !(T1_s > 0.0)) throw ParameterError("times must be positive");
    const double tau = scenario == DutyScenario::ideal ? tau_I_s : tau_I_s + tau_prep_s;
    const double w = to_angular(f_ge_hz);
    return 4.0 * tau / (tau_I_s * tau_I_s * w * w * pi * pi * std::exp(-2.0 * tau_I_s / T1_s));
}

inline double ideal_optimal_tau_I(double T1_s) { return 0.5 * T1_s; }
inline double ideal_min_delta_q_squared(double T1_s, double f_ge_hz) {
    const double w = to_angular(f_ge_hz);
    return 8.0 * std::exp(1.0) / (T1_s * w * w * pi * pi);
}

struct SensitivityCurve {
    DutyScenario scenario = DutyScenario::ideal;
    double T1_s = 0.0;
    double tau_prep_s = 0.0;
    std::vector<double> tau_I_s;
    std::vector<double> delta_q;   // e / sqrt(Hz)
    double tau_I_opt_s = 0.0;
    double delta_q_min = 0.0;
};

inline SensitivityCurve sensitivity_curve(double T1_s, double f_ge_hz, DutyScenario scenario,
                                          double tau_prep_s, int points = 200,
                                          double tau_lo_s = 0.0, double tau_hi_s = 0.0) {
    if (!(T1_s > 0.0)) throw ParameterError("T1 must be positive");
    SensitivityCurve c;
    c.scenario = scenario;
    c.T1_s = T1_s;
    c.tau_prep_s = tau_prep_s;
    const double lo = tau_lo_s > 0.0 ? tau_lo_s : T1_s / 100.0;
    const double hi = tau_hi_s > lo ? tau_hi_s : 5.0 * T1_s;
    c.tau_I_s.resize(points);
    c.delta_q.resize(points);
    for (int i = 0; i < points; ++i) {
        const double t = lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1));
        c.tau_I_s[i] = t;
        c.delta_q[i] = std::sqrt(delta_q_squared(t, T1_s, f_ge_hz, scenario, tau_prep_s));
    }
    auto [t_opt, dq2] = num::golden_minimize(
        [&](double t) { return delta_q_squared(t, T1_s, f_ge_hz, scenario, tau_prep_s); }, lo, hi,
        1e-12);
    c.tau_I_opt_s = t_opt;
    c.delta_q_min = std::sqrt(dq2);
    return c;
}

// ---------------------------------------------------------------------------
// Aliasing of out-of-band tones
// ---------------------------------------------------------------------------

/// Wrap into [-Omega_Ny, Omega_Ny).
inline double wrap_to_band(double x_rad, double nyquist_rad) {
    const double period = 2.0 * nyquist_rad;
    double r = std::fmod(x_rad + nyquist_rad, period);
    if (r < 0.0) r += period;
    return r - nyquist_rad;
}

struct AliasPrediction {
    double delta_rad = 0.0;       // applied tone detuning
    double locus_direct_rad = 0.0;   // Delta mod 2 Omega_Ny
    double locus_mirror_rad = 0.0;   // Omega_Ny - Delta mod 2 Omega_Ny
    int bin_direct = 0;
    int bin_mirror = 0;
};

inline AliasPrediction alias_predict(double delta_rad, const ProtocolConfig& cfg) {
    AliasPrediction p;
    p.delta_rad = delta_rad;
    p.locus_direct_rad = wrap_to_band(delta_rad, cfg.nyquist_rad());
    p.locus_mirror_rad = wrap_to_band(cfg.nyquist_rad() - delta_rad, cfg.nyquist_rad());
    p.bin_direct = cfg.bin_of_freq(p.locus_direct_rad);
    p.bin_mirror = cfg.bin_of_freq(p.locus_mirror_rad);
    return p;
}

struct AliasPoint {
    AliasPrediction predicted;
    int bin_first = -1;     // strongest simulated peak
    int bin_second = -1;    // strongest peak away from the first
    bool matched = false;   // both peaks within one bin of the predicted loci
};

/// Sweeps the tone detuning and checks that the simulated spectrogram peaks
/// land on the two predicted alias families.
inline std::vector<AliasPoint> aliasing_map(const ProtocolConfig& cfg, const CalibrationTone& tone,
                                            const SensingQubit& qubit,
                                            const std::vector<double>& delta_grid_rad,
                                            int threads = 1) {
    std::vector<AliasPoint> out(delta_grid_rad.size());
    parallel_for(delta_grid_rad.size(), threads, [&](std::size_t i) {
        AliasPoint& pt = out[i];
        pt.predicted = alias_predict(delta_grid_rad[i], cfg);
        CalibrationTone t = tone;
        t.f_cal_hz = qubit.f_ge_hz - to_ordinary(delta_grid_rad[i]);
        ProtocolConfig c = cfg;
        c.seed = cfg.seed + i;  // independent records per grid point
        const SpectrumEstimate est = simulate_spectrum(c, t, qubit, 1);

        // full-band peak pair: both alias families are fair game here
        const int m = est.bins();
        pt.bin_first = static_cast<int>(
            std::max_element(est.S_mean.begin(), est.S_mean.end()) - est.S_mean.begin());
        const int guard = 3 * est.padding;
        double best = -1.0;
        for (int n = 0; n < m; ++n) {
            int d = std::abs(n - pt.bin_first) % m;
            if (std::min(d, m - d) <= guard) continue;
            if (est.S_mean[n] > best) {
                best = est.S_mean[n];
                pt.bin_second = n;
            }
        }
        auto circ = [m](int a, int b) {
            int d = std::abs(a - b) % m;
            return std::min(d, m - d);
        };
        const int bd = pt.predicted.bin_direct, bm = pt.predicted.bin_mirror;
        if (circ(bd, bm) <= 2) {
            pt.matched = circ(pt.bin_first, bd) <= 1 || circ(pt.bin_first, bm) <= 1;
        } else {
            const bool direct_first =
                circ(pt.bin_first, bd) <= 1 && circ(pt.bin_second, bm) <= 1;
            const bool mirror_first =
                circ(pt.bin_first, bm) <= 1 && circ(pt.bin_second, bd) <= 1;
            pt.matched = direct_first || mirror_first;
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Packed record file: 8-byte header (magic "QS", u16 N, u32 n_windows), then
// the bits m_k packed LSB-first. Little-endian fields.
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> pack_record(const MeasurementRecord& rec) {
    rec.validate();
    if (rec.window_length > 0xffff)
        throw ParameterError("packed record supports window length up to 65535");
    std::vector<std::uint8_t> out;
    const std::size_t nbits = rec.bits.size();
    out.reserve(8 + (nbits + 7) / 8);
    out.push_back('Q');
    out.push_back('S');
    out.push_back(static_cast<std::uint8_t>(rec.window_length & 0xff));
    out.push_back(static_cast<std::uint8_t>((rec.window_length >> 8) & 0xff));
    for (int b = 0; b < 4; ++b)
        out.push_back(static_cast<std::uint8_t>((static_cast<std::uint32_t>(rec.n_windows) >> (8 * b)) & 0xff));
    std::uint8_t cur = 0;
    for (std::size_t k = 0; k < nbits; ++k) {
        if (rec.bits[k]) cur |= static_cast<std::uint8_t>(1u << (k & 7));
        if ((k & 7) == 7) {
            out.push_back(cur);
            cur = 0;
        }
    }
    if (nbits % 8 != 0) out.push_back(cur);
    return out;
}

inline MeasurementRecord unpack_record(const std::vector<std::uint8_t>& data) {
    if (data.size() < 8 || data[0] != 'Q' || data[1] != 'S')
        throw IoError("not a packed record file");
    MeasurementRecord rec;
    rec.window_length = data[2] | (data[3] << 8);
    std::uint32_t nw = 0;
    for (int b = 0; b < 4; ++b) nw |= static_cast<std::uint32_t>(data[4 + b]) << (8 * b);
    rec.n_windows = static_cast<int>(nw);
    const std::size_t nbits = static_cast<std::size_t>(rec.window_length) * rec.n_windows;
    if (data.size() < 8 + (nbits + 7) / 8) throw IoError("packed record truncated");
    rec.bits.resize(nbits);
    for (std::size_t k = 0; k < nbits; ++k)
        rec.bits[k] = (data[8 + (k >> 3)] >> (k & 7)) & 1u;
    return rec;
}

} // namespace fluxlab::sensing
