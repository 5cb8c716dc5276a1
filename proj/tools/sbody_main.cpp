// Operator CLI: shape validation, field evaluation, propagation, periodic
// orbits, reachable-set sweeps and transfer planning, driven by a JSON config.
//
// Exit codes: 0 success, 1 usage/config, 2 numerical failure, 3 I/O.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "smallbody/config.hpp"
#include "smallbody/dynamics.hpp"
#include "smallbody/exports.hpp"
#include "smallbody/gravity.hpp"
#include "smallbody/poincare.hpp"
#include "smallbody/procgen.hpp"
#include "smallbody/reachability.hpp"
#include "smallbody/shape_model.hpp"

namespace sb = smallbody;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitIo = 3;

void print_error_json(const std::string& kind, const std::string& message) {
    nlohmann::json j{{"error", kind}, {"message", message}};
    std::cerr << j.dump() << "\n";
}

struct Session {
    sb::RunConfig cfg;
    std::unique_ptr<sb::GravityModel> gravity;
    std::optional<sb::AsteroidParams> params;

    sb::ShapeModel load_raw_shape() const {
        if (cfg.shape_file.empty()) {
            throw sb::ParseError("config has no shape_file (generate one with sbody-genshape)");
        }
        const double scale = cfg.shape_unit_scale();
        if (!cfg.shape_faces_file.empty()) {
            return sb::read_vertex_face_tables_raw(cfg.shape_file, cfg.shape_faces_file, scale);
        }
        return sb::read_obj_raw(cfg.shape_file, scale);
    }

    /// Builds the gravity model, reusing the geometry cache keyed by the
    /// shape content hash when available.
    void build_model() {
        sb::ShapeModel shape = load_raw_shape();
        sb::finalize_shape(shape);
        const auto report = sb::validate_shape(shape);
        for (const auto& issue : report.issues) {
            if (issue.warning) std::cerr << "warning: " << issue.message << "\n";
        }
        const std::uint64_t hash = sb::shape_content_hash(shape);

        char name[32];
        std::snprintf(name, sizeof(name), "%016llx.geom",
                      static_cast<unsigned long long>(hash));
        const fs::path cache_path = fs::path(cfg.cache_dir) / name;

        sb::GeometryCache cache;
        bool cached = false;
        if (fs::exists(cache_path)) {
            try {
                cache = sb::load_geometry_cache(cache_path.string(), hash);
                cached = true;
            } catch (const sb::Error&) {
                cached = false;  // stale or corrupt; recompute below
            }
        }
        if (!cached) {
            cache = sb::precompute_geometry(shape);
            fs::create_directories(cfg.cache_dir);
            sb::save_geometry_cache(cache, hash, cache_path.string());
        }
        gravity = std::make_unique<sb::GravityModel>(std::move(shape), std::move(cache),
                                                     cfg.density_kg_km3());
        params.emplace(*gravity, cfg.spin_rate_rad_s());
    }

    sb::IntegratorOptions integ() const { return {cfg.rel_tol, cfg.abs_tol}; }

    sb::BvpOptions bvp_options() const {
        sb::BvpOptions opt;
        opt.shooting.integ = integ();
        opt.seed = cfg.seed;
        return opt;
    }

    sb::SectionWeights weights() const {
        return {cfg.weights[0], cfg.weights[1], cfg.weights[2], cfg.weights[3]};
    }

    sb::State state_from(const std::array<double, 6>& a) const {
        sb::State s;
        s.r = sb::Vec3(a[0], a[1], a[2]);
        s.v = sb::Vec3(a[3], a[4], a[5]);
        return s;
    }

    sb::PeriodicOrbit correct_orbit(const std::array<double, 6>& seed) const {
        sb::CorrectorOptions copt;
        copt.integ = integ();
        return sb::correct_periodic_orbit(state_from(seed), *params, copt);
    }
};

std::vector<double> parse_csv_numbers(const std::string& text, std::size_t expect) {
    std::vector<double> vals;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    if (vals.size() != expect) {
        throw sb::ParseError("expected " + std::to_string(expect) + " comma-separated values");
    }
    return vals;
}

int run_validate_shape(Session& session) {
    sb::ShapeModel shape = session.load_raw_shape();
    const auto report = sb::validate_shape(shape);
    fs::create_directories(session.cfg.output_dir);
    const fs::path report_path = fs::path(session.cfg.output_dir) / "validation_report.txt";
    std::ofstream out(report_path);
    if (!out) throw sb::IoError("cannot write " + report_path.string());
    out << "vertices: " << shape.vertex_count() << "\nfaces: " << shape.face_count() << "\n";
    if (report.issues.empty()) {
        out << "all invariants hold\n";
    } else {
        out << report.summary();
    }
    std::cout << (report.ok() ? "shape is valid" : "shape FAILED validation") << " ("
              << report.issues.size() << " finding(s)); report: " << report_path.string() << "\n";
    if (!report.ok()) {
        print_error_json("validation", "shape model failed validation");
        return kExitNumerical;
    }
    return kExitOk;
}

int run_gravity(Session& session, const std::string& point_arg) {
    session.build_model();
    const auto vals = parse_csv_numbers(point_arg, 3);
    const sb::Vec3 r(vals[0], vals[1], vals[2]);
    const auto field = session.gravity->evaluate_field(r);
    std::cout.precision(12);
    std::cout << "point_km: " << r.transpose() << "\n"
              << "interior: " << (session.gravity->is_interior(r) ? "yes" : "no") << "\n"
              << "U_km2_s2: " << field.potential << "\n"
              << "gradU_km_s2: " << field.attraction.transpose() << "\n"
              << "gradgradU_s2:\n"
              << field.gradient_matrix << "\n"
              << "laplacian_s2: " << field.laplacian << "\n";
    return kExitOk;
}

int run_propagate(Session& session, const std::string& state_arg, double tf) {
    session.build_model();
    const auto vals = parse_csv_numbers(state_arg, 6);
    sb::State s0;
    s0.r = sb::Vec3(vals[0], vals[1], vals[2]);
    s0.v = sb::Vec3(vals[3], vals[4], vals[5]);

    sb::PropagationOptions popt;
    popt.integ = session.integ();
    const sb::Trajectory traj = sb::propagate(s0, tf, nullptr, *session.params, popt);
    fs::create_directories(session.cfg.output_dir);
    const std::string traj_csv = session.cfg.output_dir + "/trajectory.csv";
    const std::string events_csv = session.cfg.output_dir + "/events.csv";
    sb::write_trajectory_csv(traj, *session.params, traj_csv);
    sb::write_events_csv(traj, events_csv);
    std::cout << "propagated to t = " << traj.final_time() << " s over "
              << traj.steps.size() << " steps; " << traj.events.size()
              << " event(s)\nwrote " << traj_csv << " and " << events_csv << "\n";
    if (traj.collided()) std::cout << "trajectory ended with a collision event\n";
    return kExitOk;
}

int run_periodic(Session& session) {
    session.build_model();
    std::vector<sb::PeriodicOrbit> orbits;
    orbits.push_back(session.correct_orbit(session.cfg.initial_orbit_seed));
    orbits.push_back(session.correct_orbit(session.cfg.target_orbit_seed));
    fs::create_directories(session.cfg.output_dir);
    const std::string catalog = session.cfg.output_dir + "/orbits.csv";
    sb::write_orbit_catalog(orbits, catalog);
    std::cout.precision(12);
    for (std::size_t i = 0; i < orbits.size(); ++i) {
        std::cout << "orbit " << i << ": x0 = [" << orbits[i].initial.vec().transpose()
                  << "], period = " << orbits[i].period
                  << " s, J = " << orbits[i].jacobi << "\n";
    }
    std::cout << "wrote " << catalog << "\n";
    return kExitOk;
}

int run_sweep(Session& session, const std::string& state_arg) {
    session.build_model();
    sb::State x0;
    if (!state_arg.empty()) {
        const auto vals = parse_csv_numbers(state_arg, 6);
        x0.r = sb::Vec3(vals[0], vals[1], vals[2]);
        x0.v = sb::Vec3(vals[3], vals[4], vals[5]);
    } else {
        x0 = session.correct_orbit(session.cfg.initial_orbit_seed).initial;
    }

    sb::SweepOptions sopt;
    sopt.bvp = session.bvp_options();
    sopt.segments = session.cfg.segments;
    sopt.threads = session.cfg.threads;
    const sb::ReachableSet set =
        sb::sweep_reachable_set(x0, session.cfg.grid, session.cfg.u_m_km_s2(), *session.params,
                                sopt);

    const sb::SectionPoint target =
        sb::project_to_section(session.correct_orbit(session.cfg.target_orbit_seed).initial);
    fs::create_directories(session.cfg.output_dir);
    const std::string dir = session.cfg.output_dir;
    sb::write_reachable_set_csv(set, target, session.weights(), dir + "/reachable_set.csv");
    sb::write_section_scatter_csvs(set, dir + "/section_xxdot.csv", dir + "/section_zzdot.csv");
    sb::write_distance_vs_angles_csv(set, target, session.weights(), dir + "/d_vs_phi.csv");
    std::cout << "sweep: " << set.converged_count() << "/" << set.nodes.size()
              << " nodes converged, t_f = " << set.t_f << " s\nwrote " << dir
              << "/reachable_set.csv and section scatters\n";
    return kExitOk;
}

int run_transfer(Session& session) {
    session.build_model();
    const sb::PeriodicOrbit orbit_i = session.correct_orbit(session.cfg.initial_orbit_seed);
    const sb::PeriodicOrbit orbit_t = session.correct_orbit(session.cfg.target_orbit_seed);

    sb::TransferConfig tc;
    tc.u_m = session.cfg.u_m_km_s2();
    tc.grid = session.cfg.grid;
    tc.weights = session.weights();
    tc.stage_cap = session.cfg.stage_cap;
    tc.d_threshold = session.cfg.d_threshold;
    tc.segments = session.cfg.segments;
    tc.threads = session.cfg.threads;
    tc.seed = session.cfg.seed;
    tc.bvp = session.bvp_options();

    const sb::TransferPlan plan = sb::plan_transfer(orbit_i, orbit_t, *session.params, tc);
    const std::string manifest =
        sb::write_transfer_plan(plan, *session.params, tc.weights, session.cfg.output_dir);

    std::cout << "initial distance d = " << plan.initial_distance << "\n";
    const auto distances = plan.stage_distances();
    for (std::size_t s = 0; s < distances.size(); ++s) {
        std::cout << "stage " << s + 1 << ": selected d = " << distances[s] << "\n";
    }
    std::cout << "status: "
              << (plan.status == sb::TransferStatus::TargetReached ? "target reached"
                                                                   : "stage cap exceeded")
              << "\nfinal leg: "
              << (plan.final_leg_converged ? "converged" : "not converged") << "\nwrote "
              << manifest << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"smallbody: polyhedron-gravity astrodynamics and low-thrust transfer design"};
    app.require_subcommand(1);

    std::string config_path;
    std::string output_override, cache_override;
    int threads_override = 0;
    long long seed_override = -1;
    app.add_option("--config", config_path, "JSON run configuration")->envname("SBODY_CONFIG");
    app.add_option("--output", output_override, "output directory")->envname("SBODY_OUTPUT");
    app.add_option("--cache", cache_override, "geometry cache directory")->envname("SBODY_CACHE");
    app.add_option("--threads", threads_override, "sweep worker threads")->envname("SBODY_THREADS");
    app.add_option("--seed", seed_override, "random seed")->envname("SBODY_SEED");

    auto* cmd_validate = app.add_subcommand("validate-shape", "check every shape invariant");
    auto* cmd_gravity = app.add_subcommand("gravity", "evaluate the field at a point");
    std::string point_arg = "10,0,0";
    cmd_gravity->add_option("--point", point_arg, "field point, km (x,y,z)");
    auto* cmd_prop = app.add_subcommand("propagate", "propagate an uncontrolled state");
    std::string state_arg;
    double tf = 0.0;
    cmd_prop->add_option("--state", state_arg, "x,y,z,vx,vy,vz (km, km/s)")->required();
    cmd_prop->add_option("--tf", tf, "final time, s")->required();
    auto* cmd_periodic =
        app.add_subcommand("periodic", "correct the configured periodic-orbit seeds");
    auto* cmd_sweep = app.add_subcommand("sweep", "compute one reachable set");
    std::string sweep_state;
    cmd_sweep->add_option("--state", sweep_state,
                          "departure state (default: corrected initial orbit)");
    auto* cmd_transfer = app.add_subcommand("transfer", "staged transfer between the two orbits");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    Session session;
    try {
        session.cfg = config_path.empty() ? sb::RunConfig{} : sb::parse_config(config_path);
        if (!output_override.empty()) session.cfg.output_dir = output_override;
        if (!cache_override.empty()) session.cfg.cache_dir = cache_override;
        if (threads_override > 0) session.cfg.threads = threads_override;
        if (seed_override >= 0) session.cfg.seed = static_cast<std::uint64_t>(seed_override);
        for (const auto& w : session.cfg.warnings) std::cerr << "warning: " << w << "\n";
    } catch (const std::exception& e) {
        print_error_json("config", e.what());
        return kExitUsage;
    }

    try {
        if (cmd_validate->parsed()) return run_validate_shape(session);
        if (cmd_gravity->parsed()) return run_gravity(session, point_arg);
        if (cmd_prop->parsed()) return run_propagate(session, state_arg, tf);
        if (cmd_periodic->parsed()) return run_periodic(session);
        if (cmd_sweep->parsed()) return run_sweep(session, sweep_state);
        if (cmd_transfer->parsed()) return run_transfer(session);
        return kExitUsage;
    } catch (const sb::IoError& e) {
        print_error_json("io", e.what());
        return kExitIo;
    } catch (const sb::ParseError& e) {
        print_error_json("parse", e.what());
        return kExitIo;
    } catch (const sb::Error& e) {
        print_error_json("numerical", e.what());
        return kExitNumerical;
    } catch (const std::exception& e) {
        print_error_json("internal", e.what());
        return kExitNumerical;
    }
}
