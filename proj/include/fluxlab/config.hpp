#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fluxlab/circuit.hpp"
#include "fluxlab/constants.hpp"
#include "fluxlab/dynamics.hpp"
#include "fluxlab/electromech.hpp"
#include "fluxlab/errors.hpp"
#include "fluxlab/fitting.hpp"
#include "fluxlab/sensing.hpp"

namespace fluxlab::config {

using nlohmann::json;

/// Strict reader over one JSON object: typed getters record consumed keys and
/// finish() rejects anything left over, with the offending path.
class SectionReader {
public:
    SectionReader(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
        if (!j.is_object()) throw SchemaError("expected an object", path_);
    }

    bool has(const char* key) const { return j_->contains(key); }

    double number(const char* key) {
        require(key);
        return as_number(key);
    }
    double number_or(const char* key, double fallback) {
        if (!has(key)) return fallback;
        return as_number(key);
    }
    std::optional<double> number_opt(const char* key) {
        if (!has(key)) return std::nullopt;
        return as_number(key);
    }
    long integer(const char* key) {
        require(key);
        return as_integer(key);
    }
    long integer_or(const char* key, long fallback) {
        if (!has(key)) return fallback;
        return as_integer(key);
    }
    std::optional<long> integer_opt(const char* key) {
        if (!has(key)) return std::nullopt;
        return as_integer(key);
    }
    std::string string_or(const char* key, const std::string& fallback) {
        if (!has(key)) return fallback;
        consumed_.insert(key);
        const auto& v = (*j_)[key];
        if (!v.is_string()) throw SchemaError("expected a string", path_ + "." + key);
        return v.get<std::string>();
    }
    bool boolean_or(const char* key, bool fallback) {
        if (!has(key)) return fallback;
        consumed_.insert(key);
        const auto& v = (*j_)[key];
        if (!v.is_boolean()) throw SchemaError("expected a boolean", path_ + "." + key);
        return v.get<bool>();
    }
    std::vector<double> number_array(const char* key) {
        require(key);
        consumed_.insert(key);
        const auto& v = (*j_)[key];
        if (!v.is_array()) throw SchemaError("expected an array of numbers", path_ + "." + key);
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw SchemaError("expected a number", path_ + "." + key);
            out.push_back(e.get<double>());
        }
        return out;
    }

    void finish() const {
        for (auto it = j_->begin(); it != j_->end(); ++it)
            if (!consumed_.count(it.key()))
                throw SchemaError("unknown key", path_ + "." + it.key());
    }

private:
    void require(const char* key) {
        if (!has(key)) throw SchemaError("missing required key", path_ + "." + key);
    }
    double as_number(const char* key) {
        consumed_.insert(key);
        const auto& v = (*j_)[key];
        if (!v.is_number()) throw SchemaError("expected a number", path_ + "." + key);
        return v.get<double>();
    }
    long as_integer(const char* key) {
        consumed_.insert(key);
        const auto& v = (*j_)[key];
        if (!v.is_number_integer()) throw SchemaError("expected an integer", path_ + "." + key);
        return v.get<long>();
    }

    const json* j_;
    std::string path_;
    std::set<std::string> consumed_;
};

// ---------------------------------------------------------------------------
// Typed sections
// ---------------------------------------------------------------------------

struct CircuitSection {
    circuit::CircuitParams params;
    circuit::BasisConfig basis;
};

inline CircuitSection parse_circuit(const json& j) {
    SectionReader r(j, "circuit");
    CircuitSection s;
    s.params.E_J_hz = r.number("E_J_hz");
    s.params.E_C_hz = r.number("E_C_hz");
    s.params.E_L_hz = r.number("E_L_hz");
    s.params.E_JA_hz = r.number_opt("E_JA_hz");
    s.params.E_p_hz = r.number_opt("E_p_hz");
    if (auto n = r.integer_opt("n_array_junctions")) s.params.n_array_junctions = static_cast<int>(*n);
    s.basis.dimension = static_cast<int>(r.integer_or("dimension", 120));
    r.finish();
    s.params.validate();
    s.basis.validate();
    return s;
}

struct FluxSection {
    std::vector<double> phi_ext_rad;  // grid in radians
};

inline FluxSection parse_flux(const json& j) {
    SectionReader r(j, "flux");
    FluxSection s;
    if (r.has("values_phi0")) {
        for (double v : r.number_array("values_phi0")) s.phi_ext_rad.push_back(two_pi * v);
    } else {
        const double start = r.number("start_phi0");
        const double stop = r.number("stop_phi0");
        const long points = r.integer("points");
        if (points < 0) throw SchemaError("points must be >= 0", "flux.points");
        for (long i = 0; i < points; ++i) {
            const double w = points > 1 ? static_cast<double>(i) / (points - 1) : 0.0;
            s.phi_ext_rad.push_back(two_pi * (start + w * (stop - start)));
        }
    }
    r.finish();
    return s;
}

struct CavitySection {
    dynamics::ReadoutCavityParams cavity;
};

inline CavitySection parse_cavity(const json& j) {
    SectionReader r(j, "cavity");
    CavitySection s;
    s.cavity.f_R_hz = r.number("f_R_hz");
    s.cavity.kappa_hz = r.number("kappa_hz");
    s.cavity.phi_zpf_R = r.number_or("phi_zpf_R", 0.0);
    r.finish();
    s.cavity.validate();
    return s;
}

struct DissipationSection {
    dynamics::QubitDissipation qubit;
};

inline DissipationSection parse_dissipation(const json& j) {
    SectionReader r(j, "dissipation");
    DissipationSection s;
    const auto T1 = r.number_opt("T1_s");
    const auto gamma = r.number_opt("gamma_per_s");
    if (T1 && gamma) throw SchemaError("give either T1_s or gamma_per_s, not both", "dissipation");
    if (!T1 && !gamma) throw SchemaError("missing required key", "dissipation.T1_s");
    s.qubit.gamma = gamma ? *gamma : 1.0 / (2.0 * *T1);
    s.qubit.gamma_phi = r.number_or("gamma_phi_per_s", 0.5 * s.qubit.gamma);
    r.finish();
    s.qubit.validate();
    return s;
}

inline sensing::ProtocolConfig parse_protocol(const json& j, std::uint64_t seed) {
    SectionReader r(j, "protocol");
    sensing::ProtocolConfig p;
    p.tau_I_s = r.number_or("tau_I_s", 20e-6);
    p.tau_prep_s = r.number_or("tau_prep_s", 13e-6);
    p.window_length = static_cast<int>(r.integer_or("window_length", 1000));
    p.padding = static_cast<int>(r.integer_or("padding", 5));
    p.n_windows = static_cast<int>(r.integer_or("n_windows", 1000));
    p.readout_scale = r.number_or("readout_scale", 0.84);
    p.seed = seed;
    r.finish();
    p.validate();
    return p;
}

inline sensing::CalibrationTone parse_tone(const json& j) {
    SectionReader r(j, "tone");
    sensing::CalibrationTone t;
    t.n_drive = r.number("n_drive");
    t.f_cal_hz = r.number("f_cal_hz");
    t.phase_rad = r.number_or("phase_rad", 0.0);
    r.finish();
    t.validate();
    return t;
}

struct SenseSection {
    double phi0 = 0.5;          // flux point for the qubit, units of Phi_0
    bool dump_record = false;
};

inline SenseSection parse_sense(const json& j) {
    SectionReader r(j, "sense");
    SenseSection s;
    s.phi0 = r.number_or("phi0", 0.5);
    s.dump_record = r.boolean_or("dump_record", false);
    r.finish();
    return s;
}

struct CoolSection {
    std::string mode = "compare";     // compare | map | ramp
    double phi0 = 0.50175;            // cooling flux bias
    std::optional<double> cx;         // override |c_x|; circuit-derived otherwise
    std::optional<double> omega_ge_hz;  // override f_ge; circuit-derived otherwise
    double g_alpha_hz = 0.12e6;       // g |alpha| product
    int sideband = +1;
    double duration_s = 30e-6;
    int cavity_dim = 6;
    int samples = 81;
    bool use_thermal = false;
    // map grids
    double flux_start_phi0 = 0.494, flux_stop_phi0 = 0.506;
    long flux_points = 25;
    double detuning_start_hz = -25e6, detuning_stop_hz = 25e6;
    long detuning_points = 51;
    // flux ramp, piecewise linear breakpoints
    std::vector<double> ramp_t_s{0.0, 2e-6};
    std::vector<double> ramp_phi0{0.50175, 0.5};
    int ramp_levels = 12;
    int ramp_start_index = 0;
};

inline CoolSection parse_cool(const json& j) {
    SectionReader r(j, "cool");
    CoolSection s;
    s.mode = r.string_or("mode", "compare");
    if (s.mode != "compare" && s.mode != "map" && s.mode != "ramp")
        throw SchemaError("mode must be 'compare', 'map', or 'ramp'", "cool.mode");
    s.phi0 = r.number_or("phi0", s.phi0);
    s.cx = r.number_opt("cx");
    s.omega_ge_hz = r.number_opt("omega_ge_hz");
    s.g_alpha_hz = r.number_or("g_alpha_hz", s.g_alpha_hz);
    s.sideband = static_cast<int>(r.integer_or("sideband", +1));
    s.duration_s = r.number_or("duration_s", s.duration_s);
    s.cavity_dim = static_cast<int>(r.integer_or("cavity_dim", s.cavity_dim));
    s.samples = static_cast<int>(r.integer_or("samples", s.samples));
    s.use_thermal = r.boolean_or("use_thermal", false);
    s.flux_start_phi0 = r.number_or("flux_start_phi0", s.flux_start_phi0);
    s.flux_stop_phi0 = r.number_or("flux_stop_phi0", s.flux_stop_phi0);
    s.flux_points = r.integer_or("flux_points", s.flux_points);
    s.detuning_start_hz = r.number_or("detuning_start_hz", s.detuning_start_hz);
    s.detuning_stop_hz = r.number_or("detuning_stop_hz", s.detuning_stop_hz);
    s.detuning_points = r.integer_or("detuning_points", s.detuning_points);
    if (r.has("ramp_t_s")) s.ramp_t_s = r.number_array("ramp_t_s");
    if (r.has("ramp_phi0")) s.ramp_phi0 = r.number_array("ramp_phi0");
    s.ramp_levels = static_cast<int>(r.integer_or("ramp_levels", s.ramp_levels));
    s.ramp_start_index = static_cast<int>(r.integer_or("ramp_start_index", s.ramp_start_index));
    r.finish();
    if (s.ramp_t_s.size() != s.ramp_phi0.size() || s.ramp_t_s.size() < 2)
        throw SchemaError("ramp breakpoint lists must match and hold at least two points",
                          "cool.ramp_t_s");
    return s;
}

struct ChevronSection {
    double phi0 = 0.5;
    int levels = 2;
    std::vector<double> n_drive_values{0.01};
    double f_start_hz = 0.4e6, f_stop_hz = 3.2e6;
    long f_points = 29;
    double t_stop_s = 4e-6;
    long t_points = 41;
};

inline ChevronSection parse_chevron(const json& j) {
    SectionReader r(j, "chevron");
    ChevronSection s;
    s.phi0 = r.number_or("phi0", s.phi0);
    s.levels = static_cast<int>(r.integer_or("levels", s.levels));
    if (r.has("n_drive_values")) s.n_drive_values = r.number_array("n_drive_values");
    s.f_start_hz = r.number_or("f_start_hz", s.f_start_hz);
    s.f_stop_hz = r.number_or("f_stop_hz", s.f_stop_hz);
    s.f_points = r.integer_or("f_points", s.f_points);
    s.t_stop_s = r.number_or("t_stop_s", s.t_stop_s);
    s.t_points = r.integer_or("t_points", s.t_points);
    r.finish();
    return s;
}

struct SensitivitySection {
    std::optional<double> T1_s;
    std::optional<double> f_ge_hz;
    std::optional<double> tau_prep_s;
    int points = 200;
    double tau_lo_s = 0.0, tau_hi_s = 0.0;
};

inline SensitivitySection parse_sensitivity(const json& j) {
    SectionReader r(j, "sensitivity");
    SensitivitySection s;
    s.T1_s = r.number_opt("T1_s");
    s.f_ge_hz = r.number_opt("f_ge_hz");
    s.tau_prep_s = r.number_opt("tau_prep_s");
    s.points = static_cast<int>(r.integer_or("points", s.points));
    s.tau_lo_s = r.number_or("tau_lo_s", 0.0);
    s.tau_hi_s = r.number_or("tau_hi_s", 0.0);
    r.finish();
    return s;
}

struct MembraneSection {
    electromech::MembraneParams membrane;
    double delta_q_e_sqrt_hz = 33e-6;
    double f_ge_hz = 1.8e6;
    double abs_phi_ge = pi;
    double T1_s = 34e-6;
};

inline MembraneSection parse_membrane(const json& j) {
    SectionReader r(j, "membrane");
    MembraneSection s;
    s.membrane.side_m = r.number("side_m");
    s.membrane.stress_pa = r.number("stress_pa");
    s.membrane.f_m_hz = r.number("f_m_hz");
    s.membrane.mass_kg = r.number("mass_kg");
    s.membrane.x_zpf_m = r.number_opt("x_zpf_m");
    s.membrane.density_kg_m3 = r.number("density_kg_m3");
    s.membrane.gap_m = r.number("gap_m");
    s.membrane.electrode_area_m2 = r.number("electrode_area_m2");
    s.membrane.capacitance_f = r.number("capacitance_f");
    s.membrane.bias_v = r.number("bias_v");
    s.delta_q_e_sqrt_hz = r.number_or("delta_q_e_sqrt_hz", s.delta_q_e_sqrt_hz);
    s.f_ge_hz = r.number_or("f_ge_hz", s.f_ge_hz);
    s.abs_phi_ge = r.number_or("abs_phi_ge", s.abs_phi_ge);
    s.T1_s = r.number_or("T1_s", s.T1_s);
    r.finish();
    s.membrane.validate();
    return s;
}

struct FitdemoSection {
    fitting::PrepCalibTruth truth;
    int theta_points = 41;
    int shots_per_point = 5000;
    int n_bootstrap = 300;
    double T1_s = 34e-6;
    double T2_star_s = 39.7e-6;
    double f_ramsey_hz = 1.8e6;
    int trace_points = 120;
    double trace_noise = 0.004;
    double temperature_K = 0.059;
    double f_ef_hz = 3.7e9;
    int thermal_shots = 200000;
};

inline FitdemoSection parse_fitdemo(const json& j) {
    SectionReader r(j, "fitdemo");
    FitdemoSection s;
    s.truth.p_left_g = r.number_or("p_left_g", 0.9404);
    s.truth.p_left_e = r.number_or("p_left_e", 0.9587);
    s.truth.p_left_h = r.number_or("p_left_h", 0.1099);
    s.truth.p_g_prep_g = r.number_or("p_g_prep_g", 0.9767);
    s.truth.p_g_prep_e = r.number_or("p_g_prep_e", 0.0231);
    s.theta_points = static_cast<int>(r.integer_or("theta_points", s.theta_points));
    s.shots_per_point = static_cast<int>(r.integer_or("shots_per_point", s.shots_per_point));
    s.n_bootstrap = static_cast<int>(r.integer_or("n_bootstrap", s.n_bootstrap));
    s.T1_s = r.number_or("T1_s", s.T1_s);
    s.T2_star_s = r.number_or("T2_star_s", s.T2_star_s);
    s.f_ramsey_hz = r.number_or("f_ramsey_hz", s.f_ramsey_hz);
    s.trace_points = static_cast<int>(r.integer_or("trace_points", s.trace_points));
    s.trace_noise = r.number_or("trace_noise", s.trace_noise);
    s.temperature_K = r.number_or("temperature_K", s.temperature_K);
    s.f_ef_hz = r.number_or("f_ef_hz", s.f_ef_hz);
    s.thermal_shots = static_cast<int>(r.integer_or("thermal_shots", s.thermal_shots));
    r.finish();
    return s;
}

// ---------------------------------------------------------------------------
// Top-level document
// ---------------------------------------------------------------------------

struct RunConfig {
    json doc;
    std::uint64_t seed = 1;
    std::string output_directory;  // may be empty

    bool has(const char* section) const { return doc.contains(section); }

    const json& section(const char* name) const {
        if (!doc.contains(name)) throw SchemaError("missing section", name);
        return doc.at(name);
    }
};

inline void apply_override(json& doc, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw SchemaError("override must look like section.key=value", spec);
    const std::string path = spec.substr(0, eq);
    const std::string value = spec.substr(eq + 1);
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::parse_error&) {
        parsed = value;  // bare strings are allowed unquoted
    }
    json* node = &doc;
    std::size_t pos = 0;
    while (true) {
        const auto dot = path.find('.', pos);
        const std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (key.empty()) throw SchemaError("empty key in override path", spec);
        if (dot == std::string::npos) {
            (*node)[key] = parsed;
            break;
        }
        node = &(*node)[key];
        pos = dot + 1;
    }
}

/// Parse + override + validate every section present. Unknown sections and
/// unknown keys inside known sections are rejected with their path.
inline RunConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    RunConfig cfg;
    try {
        in >> cfg.doc;
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("invalid JSON: ") + e.what(), path.string());
    }
    if (!cfg.doc.is_object()) throw SchemaError("config root must be an object", path.string());
    for (const auto& ov : overrides) apply_override(cfg.doc, ov);

    static const std::set<std::string> known{"circuit", "flux",  "cavity",      "dissipation",
                                             "protocol", "tone", "sense",       "cool",
                                             "chevron",  "sensitivity", "membrane", "fitdemo",
                                             "output",   "seed"};
    for (auto it = cfg.doc.begin(); it != cfg.doc.end(); ++it)
        if (!known.count(it.key())) throw SchemaError("unknown section", it.key());

    if (cfg.doc.contains("seed")) {
        if (!cfg.doc["seed"].is_number_integer() || cfg.doc["seed"].get<long long>() < 0)
            throw SchemaError("seed must be a non-negative integer", "seed");
        cfg.seed = cfg.doc["seed"].get<std::uint64_t>();
    }
    if (cfg.doc.contains("output")) {
        SectionReader r(cfg.doc["output"], "output");
        cfg.output_directory = r.string_or("directory", "");
        r.finish();
    }

    // validate whatever is present, so bad keys fail fast for every command
    if (cfg.has("circuit")) parse_circuit(cfg.section("circuit"));
    if (cfg.has("flux")) parse_flux(cfg.section("flux"));
    if (cfg.has("cavity")) parse_cavity(cfg.section("cavity"));
    if (cfg.has("dissipation")) parse_dissipation(cfg.section("dissipation"));
    if (cfg.has("protocol")) parse_protocol(cfg.section("protocol"), cfg.seed);
    if (cfg.has("tone")) parse_tone(cfg.section("tone"));
    if (cfg.has("sense")) parse_sense(cfg.section("sense"));
    if (cfg.has("cool")) parse_cool(cfg.section("cool"));
    if (cfg.has("chevron")) parse_chevron(cfg.section("chevron"));
    if (cfg.has("sensitivity")) parse_sensitivity(cfg.section("sensitivity"));
    if (cfg.has("membrane")) parse_membrane(cfg.section("membrane"));
    if (cfg.has("fitdemo")) parse_fitdemo(cfg.section("fitdemo"));
    return cfg;
}

} // namespace fluxlab::config
