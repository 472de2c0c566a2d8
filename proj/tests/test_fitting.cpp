#include <catch2/catch.hpp>

#include <array>
#include <cmath>
#include <numeric>

#include "fluxlab/fitting.hpp"

using namespace fluxlab;
using namespace fluxlab::fitting;

namespace {

// planted readout-calibration truth used across the fitting tests
const PrepCalibTruth kPlanted{0.9404, 0.9587, 0.1099, 0.9767, 0.0231};

std::vector<double> theta_grid(int points = 41, double span = 1.1 * two_pi) {
    std::vector<double> t;
    for (int i = 0; i < points; ++i) t.push_back(span * i / (points - 1));
    return t;
}

} // namespace

TEST_CASE("synthesized IQ shots: single blob statistics") {
    ReadoutModel model;
    model.center_ge_I = -2.0;
    model.center_ge_Q = 1.0;
    model.sigma_blob = 0.7;
    const int n = 40000;
    const auto iq = synthesize_iq({1.0, 0.0, 0.0, 0.0}, model, n, 5);
    double mean_i = 0.0, mean_q = 0.0;
    for (const auto& s : iq) {
        mean_i += s.I;
        mean_q += s.Q;
    }
    mean_i /= n;
    mean_q /= n;
    const double tol = 3.0 * model.sigma_blob / std::sqrt(static_cast<double>(n));
    REQUIRE(std::abs(mean_i - model.center_ge_I) < tol);
    REQUIRE(std::abs(mean_q - model.center_ge_Q) < tol);

    REQUIRE_THROWS_AS(synthesize_iq({0.5, 0.2, 0.0, 0.0}, model, 10, 1), ParameterError);
}

TEST_CASE("merged g/e blob is unimodal; thresholding matches the Gaussian tail") {
    ReadoutModel model;
    model.center_ge_I = -1.5;
    model.center_f_I = 1.5;
    model.center_h_I = 4.5;
    model.sigma_blob = 0.5;
    model.threshold_I = 0.0;

    // equal g and e populations share one blob: a single peak
    const auto iq = synthesize_iq({0.5, 0.5, 0.0, 0.0}, model, 60000, 11);
    const auto hist = histogram_I(iq, model);
    const auto imax = static_cast<std::size_t>(
        std::max_element(hist.counts.begin(), hist.counts.end()) - hist.counts.begin());
    REQUIRE(std::abs(hist.centers[imax] - model.center_ge_I) < 3.0 * hist.bin_width);
    // nothing resembling a second peak beyond three sigma of the blob
    double side_max = 0.0;
    for (std::size_t b = 0; b < hist.counts.size(); ++b)
        if (hist.centers[b] > model.center_ge_I + 3.0 * model.sigma_blob)
            side_max = std::max(side_max, hist.counts[b]);
    REQUIRE(side_max < 0.02 * hist.counts[imax]);

    // threshold conditionals recover the planted Gaussian tails
    for (int state = 0; state < 3; ++state) {
        std::array<double, 4> pops{0.0, 0.0, 0.0, 0.0};
        pops[state == 0 ? 0 : (state == 1 ? 2 : 3)] = 1.0;
        const int n = 50000;
        const auto shots = synthesize_iq(pops, model, n, 17 + state);
        double left = 0.0;
        for (const auto& s : shots)
            if (s.I < model.threshold_I) left += 1.0;
        left /= n;
        const double centers[3] = {model.center_ge_I, model.center_f_I, model.center_h_I};
        const double expect = model.tail_left(centers[state]);
        REQUIRE(std::abs(left - expect) <
                3.0 * std::sqrt(std::max(expect * (1 - expect), 1e-6) / n));
    }
}

TEST_CASE("rabi calibration curve is affine in cos theta with the stated coefficient") {
    for (double p_prep : {0.9767, 0.5, 0.0231}) {
        // extract the cos coefficient by discrete projection
        const auto grid = theta_grid(64, two_pi);
        double a = 0.0, b = 0.0;
        for (std::size_t i = 0; i + 1 < grid.size(); ++i) {  // drop duplicated endpoint
            const double y = rabi_curve_probability(grid[i], p_prep, kPlanted.p_left_g,
                                                    kPlanted.p_left_e, kPlanted.p_left_h);
            a += y;
            b += y * std::cos(grid[i]);
        }
        a /= 63.0;
        b *= 2.0 / 63.0;
        REQUIRE(b == Approx(p_prep * 0.5 * (kPlanted.p_left_g - kPlanted.p_left_h)).margin(1e-12));
        // no other harmonic content: reconstruct and compare pointwise
        for (double th : {0.3, 1.7, 4.4})
            REQUIRE(rabi_curve_probability(th, p_prep, kPlanted.p_left_g, kPlanted.p_left_e,
                                           kPlanted.p_left_h) ==
                    Approx(a + b * std::cos(th)).margin(1e-12));
    }

    // ideal readout: the curve amplitude equals the preparation probability
    const double hi = rabi_curve_probability(0.0, 0.9, 1.0, 1.0, 0.0);
    const double lo = rabi_curve_probability(pi, 0.9, 1.0, 1.0, 0.0);
    REQUIRE(hi - lo == Approx(0.9).margin(1e-12));
}

TEST_CASE("noiseless preparation fit recovers the truth exactly") {
    const auto data = synthesize_rabi_curves(kPlanted, theta_grid(), 0, 0);
    PrepFitOptions opt;
    opt.n_bootstrap = 20;
    const auto fit = fit_rabi_curves(data, opt);
    REQUIRE(fit.converged);
    REQUIRE(fit.cost < 1e-10);
    const double truth[5] = {kPlanted.p_left_g, kPlanted.p_left_e, kPlanted.p_left_h,
                             kPlanted.p_g_prep_g, kPlanted.p_g_prep_e};
    for (int j = 0; j < 5; ++j) REQUIRE(fit.params[j] == Approx(truth[j]).margin(1e-6));
    REQUIRE_FALSE(fit.boundary_warning);
}

TEST_CASE("noisy preparation fit recovers the planted truth within two bootstrap sigma") {
    const auto data = synthesize_rabi_curves(kPlanted, theta_grid(), 5000, 901);
    PrepFitOptions opt;
    opt.n_bootstrap = 300;
    opt.bootstrap_seed = 77;
    const auto fit = fit_rabi_curves(data, opt);
    REQUIRE(fit.converged);
    const double truth[5] = {kPlanted.p_left_g, kPlanted.p_left_e, kPlanted.p_left_h,
                             kPlanted.p_g_prep_g, kPlanted.p_g_prep_e};
    for (int j = 0; j < 5; ++j) {
        REQUIRE(fit.bootstrap_std[j] > 0.0);
        REQUIRE(std::abs(fit.params[j] - truth[j]) < 2.0 * fit.bootstrap_std[j]);
    }
}

TEST_CASE("bootstrap spread shrinks with the number of points") {
    PrepFitOptions opt;
    opt.n_bootstrap = 120;
    const auto fit_small = fit_rabi_curves(synthesize_rabi_curves(kPlanted, theta_grid(25), 800, 3), opt);
    const auto fit_large =
        fit_rabi_curves(synthesize_rabi_curves(kPlanted, theta_grid(100), 800, 3), opt);
    // four times the points: roughly half the spread
    const double r = fit_small.bootstrap_std[0] / fit_large.bootstrap_std[0];
    REQUIRE(r > 1.3);
    REQUIRE(r < 3.0);
}

TEST_CASE("theta grid must span a full period") {
    REQUIRE_THROWS_AS(fit_rabi_curves(synthesize_rabi_curves(kPlanted, theta_grid(21, pi), 0, 0)),
                      FitError);
}

TEST_CASE("thermal histogram: planted populations within two percent") {
    ReadoutModel model;
    model.center_ge_I = -3.0;
    model.center_f_I = 0.0;
    model.center_h_I = 3.0;
    model.sigma_blob = 0.5;
    const auto iq = synthesize_iq({0.45, 0.45, 0.05, 0.05}, model, 200000, 23);
    const auto fit = fit_thermal_histogram(histogram_I(iq, model));
    REQUIRE_FALSE(fit.degenerate_fh);
    REQUIRE(fit.p_ge == Approx(0.9).margin(0.02));
    REQUIRE(fit.p_fh == Approx(0.1).margin(0.02));
    REQUIRE(fit.sigma == Approx(model.sigma_blob).epsilon(0.05));
}

TEST_CASE("thermal histogram: empty side manifold degrades gracefully") {
    ReadoutModel model;
    model.center_ge_I = -3.0;
    model.center_f_I = 0.0;
    model.center_h_I = 3.0;
    model.sigma_blob = 0.5;
    const auto iq = synthesize_iq({0.5, 0.5, 0.0, 0.0}, model, 100000, 29);
    const auto fit = fit_thermal_histogram(histogram_I(iq, model));
    REQUIRE(fit.degenerate_fh);
    REQUIRE(fit.p_fh == Approx(0.0).margin(0.01));
}

TEST_CASE("manifold populations at 59 millikelvin round-trip through the histogram") {
    const double T = 0.059, f_ef = 3.7e9;
    const double ratio = manifold_ratio_from_temperature(T, f_ef);
    const double p_fh = 1.0 / (1.0 + ratio);
    ReadoutModel model;
    model.center_ge_I = -3.0;
    model.center_f_I = 0.0;
    model.center_h_I = 3.0;
    model.sigma_blob = 0.5;
    const auto iq = synthesize_iq({(1 - p_fh) / 2, (1 - p_fh) / 2, p_fh / 2, p_fh / 2}, model,
                                  300000, 31);
    const auto fit = fit_thermal_histogram(histogram_I(iq, model));
    const auto temp =
        temperature_from_populations(fit.p_ge / fit.p_fh, f_ef, TempMode::manifold_ratio);
    REQUIRE(temp.defined);
    REQUIRE(temp.kelvin == Approx(T).epsilon(0.05));
}

TEST_CASE("effective temperature from the preparation probability") {
    const auto t = temperature_from_populations(0.9767, 1.8e6, TempMode::two_level_prep);
    REQUIRE(t.defined);
    REQUIRE(t.kelvin == Approx(23e-6).margin(1e-6));

    // infinite-temperature limit is flagged, not silently returned
    const auto flat = temperature_from_populations(0.5, 1.8e6, TempMode::two_level_prep);
    REQUIRE_FALSE(flat.defined);
    const auto inverted = temperature_from_populations(0.3, 1.8e6, TempMode::two_level_prep);
    REQUIRE_FALSE(inverted.defined);
    REQUIRE(inverted.kelvin < 0.0);
    REQUIRE_THROWS_AS(temperature_from_populations(0.0, 1.8e6, TempMode::manifold_ratio),
                      ParameterError);
}

TEST_CASE("temperature maps are exact inverses and monotonic") {
    for (double T : {23e-6, 1e-3, 0.059, 0.3}) {
        const double p = prep_probability_from_temperature(T, 1.8e6);
        const auto back = temperature_from_populations(p, 1.8e6, TempMode::two_level_prep);
        REQUIRE(back.kelvin == Approx(T).epsilon(1e-10));
    }
    // the manifold ratio overflows for microkelvin inputs at gigahertz
    // transitions; round-trip it where the populations are representable
    for (double T : {0.02, 0.059, 0.3}) {
        const double r = manifold_ratio_from_temperature(T, 3.7e9);
        const auto back2 = temperature_from_populations(r, 3.7e9, TempMode::manifold_ratio);
        REQUIRE(back2.kelvin == Approx(T).epsilon(1e-10));
    }
    double prev = 1e9;
    for (double p : {0.6, 0.7, 0.8, 0.9, 0.99}) {
        const auto t = temperature_from_populations(p, 1.8e6, TempMode::two_level_prep);
        REQUIRE(t.kelvin < prev);
        prev = t.kelvin;
    }
}

TEST_CASE("joint relaxation fit and Ramsey fit recover the planted times") {
    const double T1 = 34e-6, gamma = 1.0 / (2.0 * T1);
    std::vector<double> ts;
    for (int i = 0; i < 120; ++i) ts.push_back(5.0 * T1 * i / 119.0);
    const auto up = synthesize_decay_trace(1.0, gamma, ts, 0.004, 41);
    const auto dn = synthesize_decay_trace(0.0, gamma, ts, 0.004, 42);
    const auto t1fit = fit_t1_joint(ts, up, dn);
    REQUIRE(t1fit.T1_s == Approx(T1).epsilon(0.03));
    REQUIRE(t1fit.asymptote == Approx(0.5).margin(0.01));
    REQUIRE(t1fit.amp_prep_e == Approx(0.5).margin(0.02));
    REQUIRE(t1fit.amp_prep_g == Approx(-0.5).margin(0.02));

    const double T2 = 39.7e-6, f_ram = 1.8e6;
    std::vector<double> tr;
    for (int i = 0; i < 400; ++i) tr.push_back(2.5 * T2 * i / 399.0);
    const auto ram = synthesize_ramsey_trace(0.5, 0.45, T2, f_ram, tr, 0.004, 43);
    const auto rfit = fit_ramsey(tr, ram);
    REQUIRE(rfit.T2_star_s == Approx(T2).epsilon(0.03));
    REQUIRE(rfit.f_hz == Approx(f_ram).epsilon(1e-3));

    // pure dephasing combination lands on the coherence-budget value
    const double gamma_phi = pure_dephasing_rate(t1fit.T1_s, rfit.T2_star_s);
    REQUIRE(gamma_phi == Approx(1.0 / 97e-6).epsilon(0.05));
    REQUIRE(gamma_phi > 0.0);
}

TEST_CASE("noiseless trace fits are exact") {
    const double T1 = 34e-6, gamma = 1.0 / (2.0 * T1);
    std::vector<double> ts;
    for (int i = 0; i < 60; ++i) ts.push_back(4.0 * T1 * i / 59.0);
    const auto up = synthesize_decay_trace(0.977, gamma, ts, 0.0, 1);
    const auto dn = synthesize_decay_trace(0.023, gamma, ts, 0.0, 2);
    const auto t1fit = fit_t1_joint(ts, up, dn);
    REQUIRE(t1fit.T1_s == Approx(T1).epsilon(1e-7));

    std::vector<double> tr;
    for (int i = 0; i < 450; ++i) tr.push_back(100e-6 * i / 449.0);  // above Nyquist of 1.8 MHz
    const auto ram = synthesize_ramsey_trace(0.5, 0.4, 39.7e-6, 1.8e6, tr, 0.0, 3);
    const auto rfit = fit_ramsey(tr, ram);
    REQUIRE(rfit.T2_star_s == Approx(39.7e-6).epsilon(1e-6));
    REQUIRE(rfit.f_hz == Approx(1.8e6).epsilon(1e-9));
}

TEST_CASE("near-ideal readout trips the boundary warning") {
    const PrepCalibTruth ideal{0.9995, 0.9995, 0.0005, 0.9, 0.1};
    const auto data = synthesize_rabi_curves(ideal, theta_grid(), 0, 0);
    PrepFitOptions opt;
    opt.n_bootstrap = 10;
    const auto fit = fit_rabi_curves(data, opt);
    REQUIRE(fit.boundary_warning);
    REQUIRE(fit.params[0] == Approx(0.9995).margin(1e-4));
}
