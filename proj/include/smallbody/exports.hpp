#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "smallbody/dynamics.hpp"
#include "smallbody/poincare.hpp"
#include "smallbody/reachability.hpp"
#include "smallbody/types.hpp"

#include <json.hpp>

// Plot-ready CSV/JSON artifacts: trajectories, section scatters, distance
// curves, control histories and the transfer-plan manifest. Numeric output is
// written at full precision so identical runs produce identical bytes.

namespace smallbody {

namespace detail {
inline std::ofstream open_csv(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write: " + path);
    out.precision(17);
    return out;
}
}  // namespace detail

/// Trajectory CSV: t,x,y,z,vx,vy,vz,J (s, km, km/s, km^2/s^2).
inline void write_trajectory_csv(const Trajectory& traj, const AsteroidParams& params,
                                 const std::string& path) {
    auto out = detail::open_csv(path);
    out << "t,x,y,z,vx,vy,vz,J\n";
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        const Vec6& s = traj.states[i];
        out << traj.times[i];
        for (int c = 0; c < 6; ++c) out << "," << s[c];
        out << "," << jacobi_constant(State::from_vec(s, traj.times[i]), params) << "\n";
    }
}

/// Controlled-arc CSV with the same trajectory columns.
inline void write_arc_csv(const std::vector<double>& times, const std::vector<Vec6>& states,
                          const AsteroidParams& params, const std::string& path) {
    auto out = detail::open_csv(path);
    out << "t,x,y,z,vx,vy,vz,J\n";
    for (std::size_t i = 0; i < times.size(); ++i) {
        out << times[i];
        for (int c = 0; c < 6; ++c) out << "," << states[i][c];
        out << "," << jacobi_constant(State::from_vec(states[i], times[i]), params) << "\n";
    }
}

/// Event CSV: crossing index, time and section coordinates per event.
inline void write_events_csv(const Trajectory& traj, const std::string& path) {
    auto out = detail::open_csv(path);
    out << "index,kind,t,x,xdot,z,zdot,ydot_sign\n";
    int index = 0;
    for (const auto& e : traj.events) {
        out << index++ << ","
            << (e.kind == TrajectoryEvent::Kind::SectionCrossing ? "crossing" : "collision") << ","
            << e.t << "," << e.state[0] << "," << e.state[3] << "," << e.state[2] << ","
            << e.state[5] << "," << e.ydot_sign << "\n";
    }
}

/// Reachable-set CSV: phi1,phi2,phi3,converged,x,z,xdot,zdot,J,d.
inline void write_reachable_set_csv(const ReachableSet& set, const SectionPoint& target,
                                    const SectionWeights& weights, const std::string& path) {
    auto out = detail::open_csv(path);
    out << "phi1,phi2,phi3,converged,x,z,xdot,zdot,J,d\n";
    for (const auto& node : set.nodes) {
        out << node.phi[0] << "," << node.phi[1] << "," << node.phi[2] << ","
            << (node.converged ? 1 : 0) << ",";
        if (node.converged) {
            const auto& p = node.solution.terminal;
            out << p.x << "," << p.z << "," << p.xdot << "," << p.zdot << ","
                << node.solution.cost << "," << distance_on_section(p, target, weights) << "\n";
        } else {
            out << "nan,nan,nan,nan,nan,nan\n";
        }
    }
}

/// Two-dimensional section scatters of the converged terminal states.
inline void write_section_scatter_csvs(const ReachableSet& set, const std::string& path_xxdot,
                                       const std::string& path_zzdot) {
    auto out_x = detail::open_csv(path_xxdot);
    auto out_z = detail::open_csv(path_zzdot);
    out_x << "x,xdot\n";
    out_z << "z,zdot\n";
    for (const auto& node : set.nodes) {
        if (!node.converged) continue;
        out_x << node.solution.terminal.x << "," << node.solution.terminal.xdot << "\n";
        out_z << node.solution.terminal.z << "," << node.solution.terminal.zdot << "\n";
    }
}

/// Distance-to-target per grid node: phi1,phi2,phi3,d.
inline void write_distance_vs_angles_csv(const ReachableSet& set, const SectionPoint& target,
                                         const SectionWeights& weights, const std::string& path) {
    auto out = detail::open_csv(path);
    out << "phi1,phi2,phi3,d\n";
    for (const auto& node : set.nodes) {
        out << node.phi[0] << "," << node.phi[1] << "," << node.phi[2] << ",";
        if (node.converged) {
            out << distance_on_section(node.solution.terminal, target, weights) << "\n";
        } else {
            out << "nan\n";
        }
    }
}

/// Control history CSV: t,ux,uy,uz,u_norm.
inline void write_control_history_csv(const BvpSolution& sol, const std::string& path) {
    auto out = detail::open_csv(path);
    out << "t,ux,uy,uz,u_norm\n";
    for (const auto& c : sol.control) {
        out << c.t << "," << c.u.x() << "," << c.u.y() << "," << c.u.z() << "," << c.u.norm()
            << "\n";
    }
}

/// Writes every per-stage artifact of a transfer plan plus a JSON manifest
/// tying them together. Returns the manifest path.
inline std::string write_transfer_plan(const TransferPlan& plan, const AsteroidParams& params,
                                       const SectionWeights& weights, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["schema_version"] = 1;
    manifest["status"] = plan.status == TransferStatus::TargetReached ? "target_reached"
                                                                      : "stage_cap_exceeded";
    manifest["initial_distance"] = plan.initial_distance;
    manifest["target"] = {{"x", plan.target.x},
                          {"z", plan.target.z},
                          {"xdot", plan.target.xdot},
                          {"zdot", plan.target.zdot}};
    manifest["stages"] = nlohmann::json::array();

    for (std::size_t s = 0; s < plan.stages.size(); ++s) {
        const auto& stage = plan.stages[s];
        const std::string tag = "stage" + std::to_string(s + 1);
        const std::string set_csv = tag + "_reachable_set.csv";
        const std::string d_csv = "d_vs_phi_" + tag + ".csv";
        const std::string xx_csv = tag + "_section_xxdot.csv";
        const std::string zz_csv = tag + "_section_zzdot.csv";
        const std::string arc_csv = tag + "_trajectory.csv";
        const std::string ctrl_csv = tag + "_control.csv";

        write_reachable_set_csv(stage.set, plan.target, weights, dir + "/" + set_csv);
        write_distance_vs_angles_csv(stage.set, plan.target, weights, dir + "/" + d_csv);
        write_section_scatter_csvs(stage.set, dir + "/" + xx_csv, dir + "/" + zz_csv);
        const auto& sol = stage.set
                              .nodes[stage.set.linear_index(stage.selected.idx[0],
                                                            stage.selected.idx[1],
                                                            stage.selected.idx[2])]
                              .solution;
        write_arc_csv(sol.arc_times, sol.arc_states, params, dir + "/" + arc_csv);
        write_control_history_csv(sol, dir + "/" + ctrl_csv);

        nlohmann::json js;
        js["index"] = s + 1;
        js["phi"] = {stage.selected.phi[0], stage.selected.phi[1], stage.selected.phi[2]};
        js["distance"] = stage.selected.distance;
        js["t_f"] = stage.set.t_f;
        js["selected_point"] = {{"x", stage.selected.point.x},
                                {"z", stage.selected.point.z},
                                {"xdot", stage.selected.point.xdot},
                                {"zdot", stage.selected.point.zdot}};
        js["reachable_set_csv"] = set_csv;
        js["d_vs_phi_csv"] = d_csv;
        js["section_xxdot_csv"] = xx_csv;
        js["section_zzdot_csv"] = zz_csv;
        js["trajectory_csv"] = arc_csv;
        js["control_csv"] = ctrl_csv;
        manifest["stages"].push_back(js);
    }

    manifest["final_leg"] = {{"attempted", plan.final_leg_attempted},
                             {"converged", plan.final_leg_converged}};
    if (plan.final_leg_attempted && plan.final_leg_converged) {
        write_arc_csv(plan.final_leg.arc_times, plan.final_leg.arc_states, params,
                      dir + "/final_trajectory.csv");
        write_control_history_csv(plan.final_leg, dir + "/final_control.csv");
        manifest["final_leg"]["t_f"] = plan.final_t_f;
        manifest["final_leg"]["trajectory_csv"] = "final_trajectory.csv";
        manifest["final_leg"]["control_csv"] = "final_control.csv";
    } else if (!plan.final_leg_failure.empty()) {
        manifest["final_leg"]["failure"] = plan.final_leg_failure;
    }

    const std::string manifest_path = dir + "/plan.json";
    std::ofstream out(manifest_path);
    if (!out) throw IoError("cannot write: " + manifest_path);
    out << manifest.dump(2) << "\n";
    return manifest_path;
}

}  // namespace smallbody
