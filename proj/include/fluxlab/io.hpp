#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fluxlab/errors.hpp"

namespace fluxlab::io {

inline constexpr const char* kArtifactVersion = "0.1.0";

/// 17 significant digits round-trip any double exactly.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// FNV-1a over bytes; stable across platforms.
inline std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Hash of the effective configuration: canonical serialization (sorted keys,
/// no whitespace) of the parsed document after overrides.
inline std::string config_hash(const nlohmann::json& effective_config) {
    return hash_hex(fnv1a64(effective_config.dump()));
}

inline void ensure_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw IoError("cannot create output directory " + dir.string());
}

/// Row-oriented CSV with a single header line; numbers carry 17 significant
/// digits so emitted values parse back bit-exactly.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns)
        : path_(path), out_(path) {
        if (!out_) throw IoError("cannot open " + path.string() + " for writing");
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (i) out_ << ',';
            out_ << columns[i];
        }
        out_ << '\n';
        n_columns_ = columns.size();
    }

    void row(const std::vector<double>& values) {
        if (values.size() != n_columns_)
            throw IoError("CSV row width mismatch in " + path_.string());
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) out_ << ',';
            out_ << format_double(values[i]);
        }
        out_ << '\n';
    }

    void close() {
        out_.flush();
        if (!out_) throw IoError("failed writing " + path_.string());
        out_.close();
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t n_columns_ = 0;
};

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty CSV " + path.string());
    std::size_t pos = 0;
    while (pos <= line.size()) {
        const std::size_t next = line.find(',', pos);
        table.columns.push_back(line.substr(pos, next == std::string::npos ? next : next - pos));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        pos = 0;
        while (pos <= line.size()) {
            const std::size_t next = line.find(',', pos);
            row.push_back(std::stod(line.substr(pos, next == std::string::npos ? next : next - pos)));
            if (next == std::string::npos) break;
            pos = next + 1;
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> data(static_cast<std::size_t>(in.tellg()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    return data;
}

/// One manifest per run. wall_time_s varies between runs by nature; all other
/// fields and all data outputs are reproducible byte for byte.
inline void write_manifest(const std::filesystem::path& out_dir, const std::string& cfg_hash,
                           std::uint64_t seed, double wall_time_s,
                           const std::vector<std::string>& outputs) {
    nlohmann::json j;
    j["config_hash"] = cfg_hash;
    j["version"] = kArtifactVersion;
    j["seed"] = seed;
    j["wall_time_s"] = wall_time_s;
    j["outputs"] = outputs;
    write_json(out_dir / "manifest.json", j);
}

} // namespace fluxlab::io
