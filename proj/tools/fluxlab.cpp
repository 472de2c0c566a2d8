// Command-line front end: every subcommand reads one JSON config, writes CSV
// and JSON results plus a run manifest into the output directory.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fluxlab/circuit.hpp"
#include "fluxlab/config.hpp"
#include "fluxlab/constants.hpp"
#include "fluxlab/dynamics.hpp"
#include "fluxlab/electromech.hpp"
#include "fluxlab/fitting.hpp"
#include "fluxlab/io.hpp"
#include "fluxlab/parallel.hpp"
#include "fluxlab/sensing.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fluxlab;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::vector<std::string> overrides;
    std::int64_t seed = -1;
    int threads = 1;
};

struct RunContext {
    config::RunConfig cfg;
    fs::path out;
    int threads = 1;
    std::vector<std::string> outputs;
    std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

    void finish() {
        std::sort(outputs.begin(), outputs.end());
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        io::write_manifest(out, io::config_hash(cfg.doc), cfg.seed, wall, outputs);
    }
};

RunContext make_context(const CommonArgs& args) {
    RunContext ctx;
    ctx.cfg = config::load_config(args.config_path, args.overrides);
    if (args.seed >= 0) {
        ctx.cfg.seed = static_cast<std::uint64_t>(args.seed);
        ctx.cfg.doc["seed"] = ctx.cfg.seed;
    }
    std::string dir = args.out_dir;
    if (dir.empty()) dir = ctx.cfg.output_directory;
    if (dir.empty()) {
        if (const char* env = std::getenv("FLUXLAB_OUT")) dir = env;
    }
    if (dir.empty()) dir = "out";
    ctx.out = dir;
    ctx.threads = std::max(args.threads, 1);
    io::ensure_directory(ctx.out);
    return ctx;
}

struct QubitAtFlux {
    double f_ge_hz = 0.0;
    double abs_phi_ge = 0.0;
    double abs_cx = 0.0;
};

QubitAtFlux qubit_at_flux(const config::CircuitSection& cs, double phi0) {
    const circuit::FluxBias flux = circuit::FluxBias::from_phi0(phi0);
    const auto ops = circuit::build_operators(cs.params, cs.basis);
    const auto sol =
        circuit::diagonalize_and_label(circuit::build_hamiltonian(cs.params, flux, ops), 4);
    const auto m = circuit::matrix_elements(sol, ops, flux);
    return {sol.transition_hz(0, 1), std::abs(m.phi_el(0, 1)), std::abs(m.cx)};
}

// ---------------------------------------------------------------------------

void cmd_spectrum(RunContext& ctx) {
    const auto cs = config::parse_circuit(ctx.cfg.section("circuit"));
    const auto flux = config::parse_flux(ctx.cfg.section("flux"));
    auto sweep = circuit::spectrum_vs_flux_impl(cs.params, flux.phi_ext_rad, cs.basis,
                                                [&](std::size_t n, auto&& fn) {
                                                    parallel_for(n, ctx.threads, fn);
                                                });
    io::CsvWriter csv(ctx.out / "spectrum.csv",
                      {"phi_ext_rad", "f_ge_Hz", "f_gf_Hz", "f_gh_Hz", "f_ef_Hz", "f_eh_Hz",
                       "f_fh_Hz"});
    for (const auto& p : sweep) {
        if (!p.ok) {
            std::cerr << "warning: flux point " << p.table.phi_ext_rad << " failed: " << p.error
                      << "\n";
            continue;
        }
        csv.row({p.table.phi_ext_rad, p.table.f_ge, p.table.f_gf, p.table.f_gh, p.table.f_ef,
                 p.table.f_eh, p.table.f_fh});
    }
    csv.close();
    ctx.outputs.push_back("spectrum.csv");
}

void cmd_matel(RunContext& ctx) {
    const auto cs = config::parse_circuit(ctx.cfg.section("circuit"));
    const auto flux = config::parse_flux(ctx.cfg.section("flux"));
    const auto ops = circuit::build_operators(cs.params, cs.basis);

    struct Row {
        bool ok = false;
        std::vector<double> values;
        std::string error;
    };
    std::vector<Row> rows(flux.phi_ext_rad.size());
    parallel_for(flux.phi_ext_rad.size(), ctx.threads, [&](std::size_t i) {
        const circuit::FluxBias fb{flux.phi_ext_rad[i]};
        try {
            const auto sol =
                circuit::diagonalize_and_label(circuit::build_hamiltonian(cs.params, fb, ops), 4);
            const auto m = circuit::matrix_elements(sol, ops, fb);
            auto& v = rows[i].values;
            v.push_back(fb.phi_ext_rad);
            const std::pair<int, int> pairs[6] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
            for (auto [a, b] : pairs) v.push_back(std::abs(m.phi_el(a, b)));
            for (auto [a, b] : pairs) v.push_back(std::abs(m.charge_el(a, b)));
            for (auto [a, b] : pairs) v.push_back(std::abs(m.cos_el(a, b)));
            v.push_back(m.c0);
            v.push_back(std::abs(m.cx));
            v.push_back(m.cz);
            rows[i].ok = true;
        } catch (const Error& e) {
            rows[i].error = e.what();
        }
    });

    std::vector<std::string> cols{"phi_ext_rad"};
    for (const char* op : {"phi", "n", "cos"})
        for (const char* pair : {"ge", "gf", "gh", "ef", "eh", "fh"})
            cols.push_back(std::string("abs_") + op + "_" + pair);
    cols.insert(cols.end(), {"c0", "abs_cx", "cz"});
    io::CsvWriter csv(ctx.out / "matel.csv", cols);
    for (const auto& r : rows) {
        if (!r.ok) {
            std::cerr << "warning: matrix-element point failed: " << r.error << "\n";
            continue;
        }
        csv.row(r.values);
    }
    csv.close();
    ctx.outputs.push_back("matel.csv");
}

void cmd_cool(RunContext& ctx) {
    const auto cool = config::parse_cool(ctx.cfg.section("cool"));

    if (cool.mode == "ramp") {
        const auto cs = config::parse_circuit(ctx.cfg.section("circuit"));
        dynamics::RampSchedule schedule;
        schedule.t_s = cool.ramp_t_s;
        for (double p : cool.ramp_phi0) schedule.phi_ext_rad.push_back(two_pi * p);
        const auto res = dynamics::run_flux_ramp(cs.params, cs.basis, schedule,
                                                 cool.ramp_start_index, cool.ramp_levels, 41);
        io::CsvWriter csv(ctx.out / "ramp.csv", {"t_s", "phi_ext_rad", "instantaneous_overlap"});
        for (std::size_t i = 0; i < res.times.size(); ++i)
            csv.row({res.times[i], schedule.at(res.times[i]), res.instantaneous_overlap[i]});
        csv.close();
        ctx.outputs.push_back("ramp.csv");
        json summary;
        summary["final_overlap"] = res.final_overlap;
        summary["levels"] = cool.ramp_levels;
        summary["start_index"] = cool.ramp_start_index;
        io::write_json(ctx.out / "ramp_summary.json", summary);
        ctx.outputs.push_back("ramp_summary.json");
        return;
    }

    const auto cavity = config::parse_cavity(ctx.cfg.section("cavity")).cavity;
    const double kappa_rad = to_angular(cavity.kappa_hz);
    double gamma = 0.0;
    if (cool.use_thermal)
        gamma = config::parse_dissipation(ctx.cfg.section("dissipation")).qubit.gamma;

    if (cool.mode == "map") {
        const auto cs = config::parse_circuit(ctx.cfg.section("circuit"));
        std::vector<double> phi_grid, det_grid;
        for (long i = 0; i < cool.flux_points; ++i) {
            const double w = cool.flux_points > 1 ? double(i) / (cool.flux_points - 1) : 0.0;
            phi_grid.push_back(two_pi *
                               (cool.flux_start_phi0 + w * (cool.flux_stop_phi0 - cool.flux_start_phi0)));
        }
        for (long i = 0; i < cool.detuning_points; ++i) {
            const double w = cool.detuning_points > 1 ? double(i) / (cool.detuning_points - 1) : 0.0;
            det_grid.push_back(cool.detuning_start_hz +
                               w * (cool.detuning_stop_hz - cool.detuning_start_hz));
        }
        auto map = dynamics::cooling_map_impl(cs.params, cs.basis, phi_grid, det_grid,
                                              to_angular(cool.g_alpha_hz), kappa_rad, gamma,
                                              [&](std::size_t n, auto&& fn) {
                                                  parallel_for(n, ctx.threads, fn);
                                              });
        io::CsvWriter csv(ctx.out / "cooling_map.csv",
                          {"phi_ext_rad", "delta_R_Hz", "f_ge_Hz", "pop_e"});
        for (const auto& p : map) {
            if (!p.ok) {
                std::cerr << "warning: map point failed: " << p.error << "\n";
                continue;
            }
            csv.row({p.phi_ext_rad, p.delta_R_hz, p.f_ge_hz, p.pop_e});
        }
        csv.close();
        ctx.outputs.push_back("cooling_map.csv");
        return;
    }

    // compare mode
    dynamics::CoolingCompareConfig ccfg;
    ccfg.kappa_rad = kappa_rad;
    if (cool.cx && cool.omega_ge_hz) {
        ccfg.abs_cx = *cool.cx;
        ccfg.omega_ge_rad = to_angular(*cool.omega_ge_hz);
    } else {
        const auto cs = config::parse_circuit(ctx.cfg.section("circuit"));
        const auto q = qubit_at_flux(cs, cool.phi0);
        ccfg.abs_cx = cool.cx.value_or(q.abs_cx);
        ccfg.omega_ge_rad = to_angular(cool.omega_ge_hz.value_or(q.f_ge_hz));
    }
    ccfg.alpha = 1.0;
    ccfg.g_rad = to_angular(cool.g_alpha_hz);  // alpha folded into g
    ccfg.sideband = cool.sideband;
    ccfg.cavity_dim = cool.cavity_dim;
    ccfg.duration_s = cool.duration_s;
    ccfg.samples = cool.samples;
    ccfg.gamma_thermal = gamma;
    const auto res = dynamics::sideband_cooling_compare(ccfg);
    if (res.regime_warning) std::cerr << "warning: " << res.warning << "\n";

    io::CsvWriter csv(ctx.out / "cooling_compare.csv", {"t_s", "pop_e_full", "pop_e_effective"});
    for (std::size_t i = 0; i < res.times.size(); ++i)
        csv.row({res.times[i], res.full_pe[i], res.eff_pe[i]});
    csv.close();
    ctx.outputs.push_back("cooling_compare.csv");

    json summary;
    summary["full_rate_per_s"] = res.full_rate;
    summary["effective_rate_per_s"] = res.eff_rate;
    summary["analytic_rate_per_s"] = res.analytic_rate;
    summary["rate_ratio_full_over_analytic"] =
        res.analytic_rate > 0.0 ? res.full_rate / res.analytic_rate : 0.0;
    summary["epsilon"] = res.report.epsilon;
    summary["resolved_sideband_ratio"] = res.report.resolved_sideband_ratio;
    summary["regime_warning"] = res.regime_warning;
    summary["prep_time_constant_s"] =
        dynamics::prep_time_constant(res.analytic_rate, ccfg.gamma_thermal);
    summary["prep_fidelity"] = dynamics::prep_fidelity(res.analytic_rate, ccfg.gamma_thermal);
    io::write_json(ctx.out / "cooling_summary.json", summary);
    ctx.outputs.push_back("cooling_summary.json");
}

void cmd_chevron(RunContext& ctx) {
    const auto cs = config::parse_circuit(ctx.cfg.section("circuit"));
    const auto ch = config::parse_chevron(ctx.cfg.section("chevron"));
    const auto sub = dynamics::DriveSubspace::from_circuit(
        cs.params, circuit::FluxBias::from_phi0(ch.phi0), cs.basis, ch.levels);
    const auto q = qubit_at_flux(cs, ch.phi0);

    std::vector<double> f_grid, t_grid;
    for (long i = 0; i < ch.f_points; ++i) {
        const double w = ch.f_points > 1 ? double(i) / (ch.f_points - 1) : 0.0;
        f_grid.push_back(ch.f_start_hz + w * (ch.f_stop_hz - ch.f_start_hz));
    }
    for (long i = 0; i < ch.t_points; ++i)
        t_grid.push_back(ch.t_stop_s * double(i) / std::max(ch.t_points - 1, 1L));

    const auto map = dynamics::rabi_chevron_impl(sub, ch.n_drive_values, f_grid, t_grid,
                                                 [&](std::size_t n, auto&& fn) {
                                                     parallel_for(n, ctx.threads, fn);
                                                 });
    io::CsvWriter csv(ctx.out / "chevron.csv", {"n_drive", "f_drive_Hz", "t_s", "pop_e"});
    for (const auto& p : map) csv.row({p.n_drive, p.f_drive_hz, p.t_s, p.pop_e});
    csv.close();
    ctx.outputs.push_back("chevron.csv");

    // resonant Rabi frequency per amplitude and its linear slope
    json fitted = json::array();
    std::vector<double> omegas;
    const double slope_expect = 2.0 * to_angular(q.f_ge_hz) * q.abs_phi_ge;
    for (double nd : ch.n_drive_values) {
        const double omega_pred = slope_expect * nd;
        std::vector<double> ts;
        const double t_final = 3.0 * two_pi / omega_pred;
        for (int i = 0; i <= 120; ++i) ts.push_back(t_final * i / 120.0);
        const auto trace = dynamics::rabi_chevron(sub, {nd}, {q.f_ge_hz}, ts);
        std::vector<double> pe;
        for (const auto& p : trace) pe.push_back(p.pop_e);
        const double omega_fit = dynamics::fit_rabi_frequency(ts, pe, omega_pred);
        omegas.push_back(omega_fit);
        fitted.push_back({{"n_drive", nd}, {"omega_r_rad_per_s", omega_fit},
                          {"omega_r_hz", to_ordinary(omega_fit)}});
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < omegas.size(); ++i) {
        num += omegas[i] * ch.n_drive_values[i];
        den += ch.n_drive_values[i] * ch.n_drive_values[i];
    }
    json summary;
    summary["f_ge_hz"] = q.f_ge_hz;
    summary["abs_phi_ge"] = q.abs_phi_ge;
    summary["resonant_fits"] = fitted;
    summary["slope_rad_per_s_per_pair"] = den > 0.0 ? num / den : 0.0;
    summary["slope_prediction_rad_per_s_per_pair"] = slope_expect;
    io::write_json(ctx.out / "chevron_summary.json", summary);
    ctx.outputs.push_back("chevron_summary.json");
}

void cmd_sense(RunContext& ctx) {
    const auto cs = config::parse_circuit(ctx.cfg.section("circuit"));
    const auto diss = config::parse_dissipation(ctx.cfg.section("dissipation")).qubit;
    auto protocol = config::parse_protocol(
        ctx.cfg.has("protocol") ? ctx.cfg.section("protocol") : json::object(), ctx.cfg.seed);
    const auto tone = config::parse_tone(ctx.cfg.section("tone"));
    const auto sense = config::parse_sense(
        ctx.cfg.has("sense") ? ctx.cfg.section("sense") : json::object());

    const auto q = qubit_at_flux(cs, sense.phi0);
    sensing::SensingQubit qubit{q.f_ge_hz, q.abs_phi_ge, diss.gamma};

    auto est = sensing::simulate_spectrum(protocol, tone, qubit, ctx.threads);
    const auto pred = sensing::snr_predict(protocol, tone, qubit);
    bool calibrated = false;
    if (tone.n_drive > 0.0) {
        sensing::calibrate_spectrum(est, tone);
        calibrated = true;
    }

    io::CsvWriter csv(ctx.out / "sense_spectrum.csv", {"f_Hz", "S_raw", "S_ee_e2_per_Hz"});
    for (int n = 0; n < est.bins(); ++n)
        csv.row({to_ordinary(est.bin_freq_rad(n)), est.S_mean[n],
                 calibrated ? est.S_ee[n] : 0.0});
    csv.close();
    ctx.outputs.push_back("sense_spectrum.csv");

    json summary;
    summary["calibrated"] = calibrated;
    summary["f_ge_hz"] = qubit.f_ge_hz;
    summary["abs_phi_ge"] = qubit.abs_phi_ge;
    summary["omega_r_rad_per_s"] = qubit.omega_r_rad(tone);
    summary["snr_measured"] = est.snr;
    summary["snr_predicted"] = pred.snr;
    summary["snr_predicted_inband"] = pred.snr_inband;
    summary["sigma0"] = pred.sigma0;
    summary["peak_freq_hz"] = to_ordinary(est.peak_freq_rad);
    summary["peak_height_raw"] = est.peak_height;
    summary["floor_raw"] = est.floor_raw;
    summary["sampling_floor_expected"] = sensing::sampling_floor(protocol.window_length);
    if (calibrated) {
        summary["delta_q_e_sqrt_hz"] = est.delta_q;
        summary["floor_ee_e2_per_hz"] = est.floor_ee;
    }
    io::write_json(ctx.out / "sense_summary.json", summary);
    ctx.outputs.push_back("sense_summary.json");

    if (sense.dump_record) {
        const auto rec = sensing::simulate_record(protocol, tone, qubit);
        io::write_bytes(ctx.out / "record.bin", sensing::pack_record(rec));
        ctx.outputs.push_back("record.bin");
    }
}

void cmd_sensitivity(RunContext& ctx) {
    const auto s = config::parse_sensitivity(
        ctx.cfg.has("sensitivity") ? ctx.cfg.section("sensitivity") : json::object());
    double T1 = 0.0;
    if (s.T1_s) {
        T1 = *s.T1_s;
    } else {
        T1 = config::parse_dissipation(ctx.cfg.section("dissipation")).qubit.T1();
    }
    double f_ge = 0.0;
    if (s.f_ge_hz) {
        f_ge = *s.f_ge_hz;
    } else {
        const auto cs = config::parse_circuit(ctx.cfg.section("circuit"));
        f_ge = qubit_at_flux(cs, 0.5).f_ge_hz;
    }
    double tau_prep = s.tau_prep_s.value_or(13e-6);
    if (!s.tau_prep_s && ctx.cfg.has("protocol"))
        tau_prep = config::parse_protocol(ctx.cfg.section("protocol"), 0).tau_prep_s;

    const auto ideal = sensing::sensitivity_curve(T1, f_ge, sensing::DutyScenario::ideal, 0.0,
                                                  s.points, s.tau_lo_s, s.tau_hi_s);
    const auto fixed = sensing::sensitivity_curve(T1, f_ge, sensing::DutyScenario::fixed_prep,
                                                  tau_prep, s.points, s.tau_lo_s, s.tau_hi_s);

    io::CsvWriter csv(ctx.out / "sensitivity.csv",
                      {"tau_I_s", "delta_q_ideal_e_sqrt_hz", "delta_q_fixed_e_sqrt_hz"});
    for (int i = 0; i < s.points; ++i)
        csv.row({ideal.tau_I_s[i], ideal.delta_q[i], fixed.delta_q[i]});
    csv.close();
    ctx.outputs.push_back("sensitivity.csv");

    json summary;
    summary["T1_s"] = T1;
    summary["f_ge_hz"] = f_ge;
    summary["tau_prep_s"] = tau_prep;
    summary["ideal"] = {{"tau_I_opt_s", ideal.tau_I_opt_s}, {"delta_q_min", ideal.delta_q_min}};
    summary["fixed"] = {{"tau_I_opt_s", fixed.tau_I_opt_s}, {"delta_q_min", fixed.delta_q_min}};
    summary["ideal_closed_form"] = {
        {"tau_I_opt_s", sensing::ideal_optimal_tau_I(T1)},
        {"delta_q_min", std::sqrt(sensing::ideal_min_delta_q_squared(T1, f_ge))}};
    io::write_json(ctx.out / "sensitivity_summary.json", summary);
    ctx.outputs.push_back("sensitivity_summary.json");
}

void cmd_fitdemo(RunContext& ctx) {
    const auto d = config::parse_fitdemo(
        ctx.cfg.has("fitdemo") ? ctx.cfg.section("fitdemo") : json::object());
    json out;

    // preparation-fidelity calibration
    {
        std::vector<double> theta;
        for (int i = 0; i < d.theta_points; ++i)
            theta.push_back(two_pi * 1.1 * i / (d.theta_points - 1));
        const auto data =
            fitting::synthesize_rabi_curves(d.truth, theta, d.shots_per_point, ctx.cfg.seed);
        fitting::PrepFitOptions opt;
        opt.n_bootstrap = d.n_bootstrap;
        opt.bootstrap_seed = counter_hash(ctx.cfg.seed, 0xb007);
        opt.threads = ctx.threads;
        const auto fit = fitting::fit_rabi_curves(data, opt);
        const char* names[5] = {"p_left_g", "p_left_e", "p_left_h", "p_g_prep_g", "p_g_prep_e"};
        const double truth[5] = {d.truth.p_left_g, d.truth.p_left_e, d.truth.p_left_h,
                                 d.truth.p_g_prep_g, d.truth.p_g_prep_e};
        json fj;
        for (int j = 0; j < 5; ++j)
            fj[names[j]] = {{"truth", truth[j]},
                            {"fit", fit.params[j]},
                            {"bootstrap_std", fit.bootstrap_std[j]}};
        fj["boundary_warning"] = fit.boundary_warning;
        out["prep_fidelity"] = fj;

        const auto temp = fitting::temperature_from_populations(
            fit.params[3], d.f_ramsey_hz, fitting::TempMode::two_level_prep);
        out["prep_temperature"] = {{"kelvin", temp.kelvin}, {"defined", temp.defined}};
    }

    // thermal histogram and manifold temperature
    {
        const double ratio = fitting::manifold_ratio_from_temperature(d.temperature_K, d.f_ef_hz);
        const double p_fh = 1.0 / (1.0 + ratio);
        const std::array<double, 4> pops{(1.0 - p_fh) / 2.0, (1.0 - p_fh) / 2.0, p_fh / 2.0,
                                         p_fh / 2.0};
        fitting::ReadoutModel model;
        model.center_ge_I = -3.0;
        model.center_f_I = 0.0;
        model.center_h_I = 3.0;
        model.sigma_blob = 0.5;
        const auto iq =
            fitting::synthesize_iq(pops, model, d.thermal_shots, counter_hash(ctx.cfg.seed, 0x717));
        const auto hist = fitting::histogram_I(iq, model);
        const auto tf = fitting::fit_thermal_histogram(hist);
        const auto temp = fitting::temperature_from_populations(tf.p_ge / tf.p_fh, d.f_ef_hz,
                                                                fitting::TempMode::manifold_ratio);
        out["thermal"] = {{"temperature_truth_K", d.temperature_K},
                          {"p_ge_truth", 1.0 - p_fh},
                          {"p_ge_fit", tf.p_ge},
                          {"p_fh_fit", tf.p_fh},
                          {"temperature_fit_K", temp.kelvin},
                          {"degenerate_fh", tf.degenerate_fh}};
    }

    // relaxation and Ramsey
    {
        const double gamma = 1.0 / (2.0 * d.T1_s);
        std::vector<double> ts;
        for (int i = 0; i < d.trace_points; ++i)
            ts.push_back(5.0 * d.T1_s * i / (d.trace_points - 1));
        const auto trace_e = fitting::synthesize_decay_trace(1.0, gamma, ts, d.trace_noise,
                                                             counter_hash(ctx.cfg.seed, 1));
        const auto trace_g = fitting::synthesize_decay_trace(0.0, gamma, ts, d.trace_noise,
                                                             counter_hash(ctx.cfg.seed, 2));
        const auto t1fit = fitting::fit_t1_joint(ts, trace_e, trace_g);

        std::vector<double> tr;
        for (int i = 0; i < 400; ++i) tr.push_back(2.5 * d.T2_star_s * i / 399.0);
        const auto ramsey = fitting::synthesize_ramsey_trace(0.5, 0.45, d.T2_star_s, d.f_ramsey_hz,
                                                             tr, d.trace_noise,
                                                             counter_hash(ctx.cfg.seed, 3));
        const auto rfit = fitting::fit_ramsey(tr, ramsey);
        out["relaxation"] = {{"T1_truth_s", d.T1_s},
                             {"T1_fit_s", t1fit.T1_s},
                             {"T2_star_truth_s", d.T2_star_s},
                             {"T2_star_fit_s", rfit.T2_star_s},
                             {"f_ramsey_truth_hz", d.f_ramsey_hz},
                             {"f_ramsey_fit_hz", rfit.f_hz},
                             {"gamma_phi_per_s",
                              fitting::pure_dephasing_rate(t1fit.T1_s, rfit.T2_star_s)}};
    }

    io::write_json(ctx.out / "fitdemo.json", out);
    ctx.outputs.push_back("fitdemo.json");
}

void cmd_membrane(RunContext& ctx) {
    const auto ms = config::parse_membrane(ctx.cfg.section("membrane"));
    const PhysicalConstants constants;
    constants.validate();

    const auto zp = electromech::zero_point_report(ms.membrane, constants);
    const auto pull = electromech::pull_in_voltage(ms.membrane, constants);
    const double n_drive = electromech::charge_modulation(ms.membrane, constants);
    const auto coupling = electromech::coupling_figures(n_drive, ms.f_ge_hz, ms.abs_phi_ge,
                                                        ms.T1_s, ms.membrane.capacitance_f,
                                                        ms.delta_q_e_sqrt_hz, constants);

    json j;
    j["zero_point"] = {{"computed_m", zp.computed_m},
                       {"tabulated_m", zp.tabulated_m ? json(*zp.tabulated_m) : json(nullptr)},
                       {"ratio_tabulated_over_computed", zp.ratio},
                       {"effective_m", zp.effective_m}};
    j["pull_in"] = {{"v_max_analytic", pull.v_max_analytic},
                    {"v_pullin_numeric", pull.v_pullin_numeric},
                    {"bias_v", ms.membrane.bias_v}};
    j["dc_dx"] = {{"approx_C_over_h", ms.membrane.capacitance_f / ms.membrane.gap_m},
                  {"parallel_plate", electromech::dc_dx_parallel_plate(ms.membrane, constants)}};
    j["capacitance_consistent"] = ms.membrane.capacitance_consistent(constants);
    j["coupling"] = {{"n_drive", coupling.n_drive},
                     {"omega_r_hz", coupling.omega_r_hz},
                     {"n_min", coupling.n_min},
                     {"energy_sensitivity_hbar", coupling.energy_sensitivity_hbar},
                     {"strong_coupling", coupling.strong_coupling}};
    if (!ms.membrane.capacitance_consistent(constants))
        std::cerr << "warning: quoted capacitance deviates from eps0*S/h by more than 30%\n";
    io::write_json(ctx.out / "membrane.json", j);
    ctx.outputs.push_back("membrane.json");
}

int dispatch(const std::string& command, const CommonArgs& args) {
    try {
        RunContext ctx = make_context(args);
        if (command == "spectrum") cmd_spectrum(ctx);
        else if (command == "matel") cmd_matel(ctx);
        else if (command == "cool") cmd_cool(ctx);
        else if (command == "chevron") cmd_chevron(ctx);
        else if (command == "sense") cmd_sense(ctx);
        else if (command == "sensitivity") cmd_sensitivity(ctx);
        else if (command == "fitdemo") cmd_fitdemo(ctx);
        else if (command == "membrane") cmd_membrane(ctx);
        else throw ParameterError("unknown command " + command);
        ctx.finish();
        return 0;
    } catch (const Error& e) {
        json err;
        err["error"] = {{"type", e.kind_name()}, {"message", e.message()}, {"path", e.path()}};
        std::cerr << err.dump() << "\n";
        switch (e.kind()) {
            case ErrorKind::schema: return 2;
            case ErrorKind::io: return 4;
            default: return 3;
        }
    } catch (const std::exception& e) {
        json err;
        err["error"] = {{"type", "internal"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 3;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fluxonium charge-sensing laboratory"};
    app.require_subcommand(1);

    CommonArgs args;
    const std::vector<std::string> commands{"spectrum", "matel",       "cool",    "chevron",
                                            "sense",    "sensitivity", "fitdemo", "membrane"};
    for (const auto& name : commands) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", args.config_path, "JSON run configuration")->required();
        sub->add_option("--out", args.out_dir, "output directory");
        sub->add_option("--seed", args.seed, "override the config seed");
        sub->add_option("--set", args.overrides, "override config values, section.key=value");
        sub->add_option("--threads", args.threads, "worker threads for grids and windows");
    }
    CLI11_PARSE(app, argc, argv);
    return dispatch(app.get_subcommands().front()->get_name(), args);
}
