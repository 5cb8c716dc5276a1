#pragma once

#include <random>
#include <utility>

#include "smallbody/dynamics.hpp"
#include "smallbody/gravity.hpp"
#include "smallbody/procgen.hpp"

// Shared fixtures and independent oracles for the test suites.

namespace testutil {

using namespace smallbody;

// spin rate for a 4.07 h rotation period (the bundled demo scenario)
inline double demo_spin_rate() { return units::period_hours_to_rad_s(4.07); }

/// Unit cube body, density chosen so GM is in the small-asteroid range.
inline const GravityModel& cube_gravity() {
    static const GravityModel model(make_cube(1.0), 1.35e12);
    return model;
}

inline const AsteroidParams& cube_params() {
    static const AsteroidParams params(cube_gravity(), demo_spin_rate());
    return params;
}

/// Reduced-resolution procedural asteroid at the demo density 2.1 g/cm^3.
inline const GravityModel& asteroid_gravity() {
    static const GravityModel model(make_reference_asteroid_1024(), 2.1e12);
    return model;
}

inline const AsteroidParams& asteroid_params() {
    static const AsteroidParams params(asteroid_gravity(), demo_spin_rate());
    return params;
}

inline State demo_initial_seed() {
    State s;
    s.r = Vec3(1.4973, 0.0, 0.0061);
    s.v = Vec3(0.0, -0.0009, 0.0);
    return s;
}

inline State demo_target_seed() {
    State s;
    s.r = Vec3(6.1175, 0.0, 0.0001);
    s.v = Vec3(0.0, -0.0025, 0.0);
    return s;
}

/// Brute-force potential and attraction of a centered cube by midpoint
/// quadrature over cells_per_axis^3 sub-cells: sum of G sigma dV / d terms.
inline std::pair<double, Vec3> cube_field_quadrature(const Vec3& r, int cells_per_axis,
                                                     double side, double g_sigma) {
    const double h = side / cells_per_axis;
    const double dv = h * h * h;
    double u = 0.0;
    Vec3 grad = Vec3::Zero();
    for (int i = 0; i < cells_per_axis; ++i) {
        const double x = -0.5 * side + (i + 0.5) * h;
        for (int j = 0; j < cells_per_axis; ++j) {
            const double y = -0.5 * side + (j + 0.5) * h;
            for (int k = 0; k < cells_per_axis; ++k) {
                const double z = -0.5 * side + (k + 0.5) * h;
                const Vec3 cell(x, y, z);
                const Vec3 dr = cell - r;  // toward the mass element
                const double dist = dr.norm();
                u += dv / dist;
                grad += (dv / (dist * dist * dist)) * dr;
            }
        }
    }
    return {g_sigma * u, g_sigma * grad};
}

/// Deterministic uniform sample in [lo, hi).
inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * ((rng() >> 11) * 0x1.0p-53);
}

/// Random point at a radius in [r_lo, r_hi] from the origin.
inline Vec3 random_shell_point(std::mt19937_64& rng, double r_lo, double r_hi) {
    Vec3 dir;
    do {
        dir = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    } while (dir.squaredNorm() < 1e-6 || dir.squaredNorm() > 1.0);
    dir.normalize();
    return uniform(rng, r_lo, r_hi) * dir;
}

/// Newton root-solve of the rotating-frame equilibrium g(r*) = 0, using the
/// gravity gradient plus centrifugal terms as the Jacobian.
inline Vec3 solve_equilibrium(const AsteroidParams& p, Vec3 r0, int max_iter = 60) {
    const double w2 = p.spin_rate * p.spin_rate;
    for (int i = 0; i < max_iter; ++i) {
        const FieldEvaluation f = p.gravity->evaluate_field(r0);
        const Vec3 g = effective_gravity(r0, f, p);
        if (g.norm() < 1e-16) break;
        Mat3 jac = f.gradient_matrix;
        jac(0, 0) += w2;
        jac(1, 1) += w2;
        r0 -= jac.partialPivLu().solve(g);
    }
    return r0;
}

}  // namespace testutil
