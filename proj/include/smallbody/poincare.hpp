#pragma once

#include <fstream>
#include <sstream>
#include <vector>

#include "smallbody/dynamics.hpp"
#include "smallbody/types.hpp"

// The Poincare section y = 0 with coordinates (x, xdot, z, zdot): state
// projection, the return map of the uncontrolled flow, and differential
// correction of periodic orbits.

namespace smallbody {

struct SectionPoint {
    double x = 0.0;     // km
    double xdot = 0.0;  // km/s
    double z = 0.0;     // km
    double zdot = 0.0;  // km/s
    double t_cross = 0.0;
    State full_state;
};

/// Q = diag[1 0 1 1 0 1]: zeroes the y and ydot components.
inline Mat6 section_projection_matrix() {
    Mat6 q = Mat6::Zero();
    q(0, 0) = q(2, 2) = q(3, 3) = q(5, 5) = 1.0;
    return q;
}

inline constexpr double kSectionYTol = 1e-10;  // km

/// Projects a state lying on the section; throws NotOnSectionError when
/// |y| >= 1e-10 km.
inline SectionPoint project_to_section(const State& s) {
    if (std::abs(s.r.y()) >= kSectionYTol) {
        throw NotOnSectionError("state is not on the section: |y| = " +
                                std::to_string(std::abs(s.r.y())) + " km");
    }
    SectionPoint p;
    p.x = s.r.x();
    p.xdot = s.v.x();
    p.z = s.r.z();
    p.zdot = s.v.z();
    p.t_cross = s.t;
    p.full_state = s;
    return p;
}

/// Embeds section coordinates into a full state with y = ydot = 0.
inline State embed_from_section(const SectionPoint& p) {
    State s;
    s.r = Vec3(p.x, 0.0, p.z);
    s.v = Vec3(p.xdot, 0.0, p.zdot);
    s.t = p.t_cross;
    return s;
}

/// One application of the return map: the next transversal crossing of the
/// uncontrolled flow. Throws EscapeError / CollisionError.
inline SectionPoint poincare_map(const SectionPoint& p0, const AsteroidParams& params,
                                 const SectionOptions& opt = {}) {
    auto [traj, crossings] = propagate_to_section(p0.full_state, params, 1, opt);
    (void)traj;
    return project_to_section(crossings.front());
}

struct PeriodicOrbit {
    State initial;    // on the section
    double period = 0.0;  // s
    double jacobi = 0.0;  // km^2/s^2
    Mat6 monodromy = Mat6::Identity();
};

struct CorrectorOptions {
    int max_iter = 40;
    double tol = 1e-10;      // combined km / km/s return-residual norm
    bool free_ydot = false;  // also update the ydot component of the seed
    IntegratorOptions integ;
    SectionOptions section;
};

/// Differential correction of a periodic orbit. The seed must start on the
/// section (y is forced to 0); the corrector updates (x, z, xdot, zdot) and
/// the period by least squares on the full six-state return residual, using
/// the state-transition matrix as the Jacobian. The Jacobi constant is left
/// free, so the corrector picks out the nearby family member.
inline PeriodicOrbit correct_periodic_orbit(const State& guess, const AsteroidParams& params,
                                            const CorrectorOptions& opt = {}) {
    State x0 = guess;
    x0.r.y() = 0.0;
    x0.t = 0.0;

    // free columns of the 6-state seed: x, z, xdot, zdot (optionally ydot)
    std::vector<int> cols = {0, 2, 3, 5};
    if (opt.free_ydot) cols.push_back(4);
    const int n_unknowns = static_cast<int>(cols.size()) + 1;  // + period

    // initial period: second transversal crossing (one crossing per half orbit)
    SectionOptions sect = opt.section;
    sect.prop.integ = opt.integ;
    double period = propagate_to_section(x0, params, 2, sect).second.back().t;

    double best_norm = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < opt.max_iter; ++iter) {
        auto [sf, phi] = propagate_stm(x0, period, params, opt.integ);
        const Vec6 residual = sf.vec() - x0.vec();
        const double norm = residual.norm();
        if (norm < opt.tol) {
            PeriodicOrbit orbit;
            orbit.initial = x0;
            orbit.period = period;
            orbit.jacobi = jacobi_constant(x0, params);
            orbit.monodromy = phi;
            return orbit;
        }

        Eigen::MatrixXd jac(6, n_unknowns);
        const Mat6 phi_minus_i = phi - Mat6::Identity();
        for (int c = 0; c < static_cast<int>(cols.size()); ++c) jac.col(c) = phi_minus_i.col(cols[c]);
        jac.col(n_unknowns - 1) = state_derivative(sf, Vec3::Zero(), params);

        Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeThinU | Eigen::ComputeThinV);
        // near-circular orbits carry an almost-resonant vertical block whose
        // singular value is tiny but meaningful; keep everything above noise
        svd.setThreshold(1e-14);
        Eigen::VectorXd delta = svd.solve(-residual);

        // backtrack if the full step does not reduce the residual
        double alpha = 1.0;
        bool improved = false;
        for (int bt = 0; bt < 10; ++bt) {
            State trial = x0;
            Vec6 tv = trial.vec();
            for (int c = 0; c < static_cast<int>(cols.size()); ++c) tv[cols[c]] += alpha * delta[c];
            trial = State::from_vec(tv);
            const double trial_period = period + alpha * delta[n_unknowns - 1];
            if (trial_period > 0.0) {
                try {
                    const Vec6 rf = propagate_stm(trial, trial_period, params, opt.integ)
                                        .first.vec() - tv;
                    if (rf.norm() < norm) {
                        x0 = trial;
                        period = trial_period;
                        improved = true;
                        break;
                    }
                } catch (const Error&) {
                    // fall through and shrink the step
                }
            }
            alpha *= 0.5;
        }
        if (!improved) {
            std::ostringstream os;
            os << "periodic-orbit corrector stalled at residual " << norm;
            throw NonConvergenceError(os.str());
        }
        best_norm = std::min(best_norm, norm);
    }
    throw NonConvergenceError("periodic-orbit corrector did not converge in " +
                              std::to_string(opt.max_iter) + " iterations (best residual " +
                              std::to_string(best_norm) + ")");
}

// ---------------------------------------------------------------------------
// Periodic-orbit catalog: one CSV record per orbit
// ---------------------------------------------------------------------------

inline void write_orbit_catalog(const std::vector<PeriodicOrbit>& orbits,
                                const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write orbit catalog: " + path);
    out.precision(17);
    out << "x,y,z,vx,vy,vz,period,jacobi\n";
    for (const auto& o : orbits) {
        const Vec6 s = o.initial.vec();
        for (int i = 0; i < 6; ++i) out << s[i] << ",";
        out << o.period << "," << o.jacobi << "\n";
    }
}

/// Reads a catalog written by write_orbit_catalog. `unit_scale` converts the
/// position columns into km (and velocities into km/s) when the catalog was
/// recorded in other length units.
inline std::vector<PeriodicOrbit> read_orbit_catalog(const std::string& path,
                                                     double unit_scale = 1.0) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open orbit catalog: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty catalog");
    std::vector<PeriodicOrbit> orbits;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        double vals[8];
        char comma;
        for (int i = 0; i < 8; ++i) {
            if (!(ls >> vals[i])) throw ParseError(path + ": malformed catalog row: " + line);
            if (i < 7 && !(ls >> comma)) throw ParseError(path + ": malformed catalog row: " + line);
        }
        PeriodicOrbit o;
        Vec6 s;
        for (int i = 0; i < 6; ++i) s[i] = vals[i] * unit_scale;
        o.initial = State::from_vec(s);
        o.period = vals[6];
        o.jacobi = vals[7] * unit_scale * unit_scale;
        orbits.push_back(o);
    }
    return orbits;
}

}  // namespace smallbody
