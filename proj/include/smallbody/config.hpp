#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "smallbody/types.hpp"

#include <json.hpp>

// Run configuration: a single versioned JSON file with every physical
// parameter of the pipeline. Unit conversions happen here and nowhere else.

namespace smallbody {

struct RunConfig {
    int schema_version = 1;
    std::string shape_file;        // OBJ path, or vertex table when faces file set
    std::string shape_faces_file;  // 1-based face index table (radar convention)
    std::string shape_unit = "km";  // km | m

    double density_g_cm3 = 2.1;
    double rotation_period_h = 4.07;
    double u_m_mm_s2 = 0.1;

    std::array<int, 3> grid{10, 10, 10};
    std::array<double, 4> weights{1.0, 1.0, 1.0, 1.0};  // x, z, xdot, zdot
    int stage_cap = 4;
    double d_threshold = 0.01;
    int segments = 6;

    double rel_tol = 1e-12;
    double abs_tol = 1e-12;

    std::string output_dir = "out";
    std::string cache_dir = "cache";
    int threads = 1;
    std::uint64_t seed = 0;

    // demo scenario seeds: equatorial near-circular orbits, body-fixed frame
    std::array<double, 6> initial_orbit_seed{1.4973, 0.0, 0.0061, 0.0, -0.0009, 0.0};
    std::array<double, 6> target_orbit_seed{6.1175, 0.0, 0.0001, 0.0, -0.0025, 0.0};

    std::vector<std::string> warnings;  // plausibility flags collected at parse time

    double density_kg_km3() const { return units::density_to_kg_km3(density_g_cm3); }
    double spin_rate_rad_s() const { return units::period_hours_to_rad_s(rotation_period_h); }
    double u_m_km_s2() const { return units::accel_mm_s2_to_km_s2(u_m_mm_s2); }
    double shape_unit_scale() const {
        if (shape_unit == "km") return 1.0;
        if (shape_unit == "m") return 1e-3;
        throw ParseError("unknown shape unit '" + shape_unit + "' (expected km or m)");
    }
};

namespace detail {

inline void require_positive(double v, const std::string& key) {
    if (!(v > 0.0)) throw ParseError("config key '" + key + "' must be positive, got " +
                                     std::to_string(v));
}

}  // namespace detail

inline RunConfig parse_config_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {
        "schema_version", "shape_file", "shape_faces_file", "shape_unit", "density_g_cm3",
        "rotation_period_h", "u_m_mm_s2", "grid", "weights", "stage_cap", "d_threshold",
        "segments", "rel_tol", "abs_tol", "output_dir", "cache_dir", "threads", "seed",
        "initial_orbit_seed", "target_orbit_seed"};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw ParseError("unknown config key '" + key + "'");
    }

    RunConfig cfg;
    if (j.contains("schema_version")) {
        cfg.schema_version = j.at("schema_version").get<int>();
        if (cfg.schema_version != 1) {
            throw ParseError("unsupported config schema_version " +
                             std::to_string(cfg.schema_version));
        }
    }
    auto get_to = [&j](const char* key, auto& out) {
        if (j.contains(key)) j.at(key).get_to(out);
    };
    get_to("shape_file", cfg.shape_file);
    get_to("shape_faces_file", cfg.shape_faces_file);
    get_to("shape_unit", cfg.shape_unit);
    get_to("density_g_cm3", cfg.density_g_cm3);
    get_to("rotation_period_h", cfg.rotation_period_h);
    get_to("output_dir", cfg.output_dir);
    get_to("cache_dir", cfg.cache_dir);
    get_to("threads", cfg.threads);
    get_to("seed", cfg.seed);
    get_to("stage_cap", cfg.stage_cap);
    get_to("segments", cfg.segments);
    get_to("d_threshold", cfg.d_threshold);
    get_to("rel_tol", cfg.rel_tol);
    get_to("abs_tol", cfg.abs_tol);
    get_to("initial_orbit_seed", cfg.initial_orbit_seed);
    get_to("target_orbit_seed", cfg.target_orbit_seed);

    if (j.contains("u_m_mm_s2")) {
        cfg.u_m_mm_s2 = j.at("u_m_mm_s2").get<double>();
        if (cfg.u_m_mm_s2 < 0.0) throw ParseError("config key 'u_m_mm_s2' must be >= 0");
    }
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        if (g.is_number_integer()) {
            const int n = g.get<int>();
            cfg.grid = {n, n, n};
        } else {
            g.get_to(cfg.grid);
        }
    }
    get_to("weights", cfg.weights);

    detail::require_positive(cfg.density_g_cm3, "density_g_cm3");
    detail::require_positive(cfg.rotation_period_h, "rotation_period_h");
    detail::require_positive(cfg.d_threshold, "d_threshold");
    detail::require_positive(cfg.rel_tol, "rel_tol");
    detail::require_positive(cfg.abs_tol, "abs_tol");
    if (cfg.stage_cap < 1) throw ParseError("config key 'stage_cap' must be >= 1");
    if (cfg.segments < 1) throw ParseError("config key 'segments' must be >= 1");
    if (cfg.threads < 1) throw ParseError("config key 'threads' must be >= 1");
    for (int g : cfg.grid) {
        if (g < 1) throw ParseError("config key 'grid' entries must be >= 1");
    }
    bool any_weight = false;
    for (double w : cfg.weights) {
        if (w < 0.0) throw ParseError("config key 'weights' entries must be >= 0");
        any_weight = any_weight || w > 0.0;
    }
    if (!any_weight) throw ParseError("config key 'weights' must not be all zero");

    // plausibility, not validity: parameters far outside small-body ranges
    if (cfg.density_g_cm3 < 0.3 || cfg.density_g_cm3 > 10.0) {
        cfg.warnings.push_back("density " + std::to_string(cfg.density_g_cm3) +
                               " g/cm^3 is outside the usual small-body range");
    }
    if (cfg.rotation_period_h < 0.5 || cfg.rotation_period_h > 1000.0) {
        cfg.warnings.push_back("rotation period " + std::to_string(cfg.rotation_period_h) +
                               " h is outside the usual small-body range");
    }
    if (cfg.u_m_mm_s2 > 100.0) {
        cfg.warnings.push_back("control bound " + std::to_string(cfg.u_m_mm_s2) +
                               " mm/s^2 is far above low-thrust levels");
    }
    return cfg;
}

/// Parses a config file; an empty file yields all defaults.
inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return parse_config_json(nlohmann::json::object());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError(path + ": config root must be a JSON object");
    return parse_config_json(j);
}

}  // namespace smallbody
