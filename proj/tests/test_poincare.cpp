#include <catch2/catch.hpp>

#include <cstdio>

#include "helpers.hpp"
#include "smallbody/poincare.hpp"

using namespace smallbody;
using testutil::cube_params;

namespace {

State cube_orbit_seed(double x = 1.5) {
    const AsteroidParams& p = cube_params();
    State s;
    s.r = Vec3(x, 0.0, 0.01);
    s.v = Vec3(0.0, -std::sqrt(p.gravity->mu() / x) - p.spin_rate * x, 0.0);
    return s;
}

const PeriodicOrbit& cube_orbit() {
    static const PeriodicOrbit orbit = [] {
        CorrectorOptions opt;
        opt.tol = 1e-11;
        opt.integ = {1e-12, 1e-13};
        return correct_periodic_orbit(cube_orbit_seed(), cube_params(), opt);
    }();
    return orbit;
}

}  // namespace

TEST_CASE("projection keeps (x, xdot, z, zdot)") {
    State s;
    s.r = Vec3(1.0, 0.0, 2.0);
    s.v = Vec3(3.0, 4.0, 5.0);
    const SectionPoint p = project_to_section(s);
    CHECK(p.x == 1.0);
    CHECK(p.xdot == 3.0);
    CHECK(p.z == 2.0);
    CHECK(p.zdot == 5.0);

    s.r.y() = 0.1;
    CHECK_THROWS_AS(project_to_section(s), NotOnSectionError);
}

TEST_CASE("Q zeroes the y and ydot components") {
    Vec6 v;
    v << 1, 2, 3, 4, 5, 6;
    const Vec6 q = section_projection_matrix() * v;
    CHECK(q[0] == 1.0);
    CHECK(q[1] == 0.0);
    CHECK(q[2] == 3.0);
    CHECK(q[3] == 4.0);
    CHECK(q[4] == 0.0);
    CHECK(q[5] == 6.0);
}

TEST_CASE("project then embed then re-project is idempotent") {
    State s;
    s.r = Vec3(1.2, 0.0, -0.3);
    s.v = Vec3(0.1, 0.9, -0.2);
    const SectionPoint p = project_to_section(s);
    const SectionPoint q = project_to_section(embed_from_section(p));
    CHECK(q.x == p.x);
    CHECK(q.xdot == p.xdot);
    CHECK(q.z == p.z);
    CHECK(q.zdot == p.zdot);
}

TEST_CASE("differential correction closes the orbit") {
    const PeriodicOrbit& orbit = cube_orbit();
    REQUIRE(orbit.period > 0.0);

    // independent check by direct propagation
    IntegratorOptions integ{1e-12, 1e-13};
    const auto [sf, phi] = propagate_stm(orbit.initial, orbit.period, cube_params(), integ);
    CHECK((sf.vec() - orbit.initial.vec()).norm() < 1e-8);

    CHECK(std::abs(orbit.monodromy.determinant() - 1.0) < 1e-6);
    int unit_eigenvalues = 0;
    for (const auto& ev : orbit.monodromy.eigenvalues()) {
        if (std::abs(ev - std::complex<double>(1.0, 0.0)) < 1e-4) ++unit_eigenvalues;
    }
    CHECK(unit_eigenvalues >= 2);
    (void)phi;
}

TEST_CASE("corrector recovers from a perturbed seed") {
    State seed = cube_orbit().initial;
    seed.r.x() += 1e-4;
    CorrectorOptions opt;
    opt.tol = 1e-11;
    opt.integ = {1e-12, 1e-13};
    const PeriodicOrbit orbit = correct_periodic_orbit(seed, cube_params(), opt);
    const auto [sf, phi] = propagate_stm(orbit.initial, orbit.period, cube_params(), opt.integ);
    CHECK((sf.vec() - orbit.initial.vec()).norm() < 1e-8);
    (void)phi;
}

TEST_CASE("Jacobi constant is uniform along the corrected orbit") {
    const PeriodicOrbit& orbit = cube_orbit();
    const AsteroidParams& p = cube_params();
    PropagationOptions opt;
    opt.integ = {1e-12, 1e-12};
    const Trajectory traj = propagate(orbit.initial, orbit.period, nullptr, p, opt);
    const double j0 = orbit.jacobi;
    for (std::size_t i = 0; i < traj.times.size(); i += 5) {
        const double j = jacobi_constant(State::from_vec(traj.states[i], traj.times[i]), p);
        CHECK(std::abs(j - j0) / std::abs(j0) < 1e-10);
    }
}

TEST_CASE("the orbit is a fixed point of the doubled return map") {
    const PeriodicOrbit& orbit = cube_orbit();
    SectionOptions opt;
    opt.prop.integ = {1e-12, 1e-12};
    const SectionPoint p0 = project_to_section(orbit.initial);
    const SectionPoint p1 = poincare_map(p0, cube_params(), opt);
    const SectionPoint p2 = poincare_map(p1, cube_params(), opt);
    const double err = std::sqrt(
        std::pow(p2.x - p0.x, 2) + std::pow(p2.xdot - p0.xdot, 2) +
        std::pow(p2.z - p0.z, 2) + std::pow(p2.zdot - p0.zdot, 2));
    CHECK(err < 1e-7);
}

TEST_CASE("the return map stays bounded near the orbit radius") {
    const SectionPoint p0 = project_to_section(cube_orbit_seed());
    const SectionPoint p1 = poincare_map(p0, cube_params());
    CHECK(std::abs(p1.x) > 1.0);
    CHECK(std::abs(p1.x) < 2.0);
}

TEST_CASE("hyperbolic departure raises the escape error") {
    State s = cube_orbit_seed();
    s.v = Vec3(0.0, -0.05, 0.0);  // far above escape speed
    SectionOptions opt;
    opt.max_time = 1.0e5;
    CHECK_THROWS_AS(poincare_map(project_to_section(s), cube_params(), opt), EscapeError);
}

TEST_CASE("orbit catalog round-trips through CSV") {
    const std::string path = std::string(SMALLBODY_TESTDATA_DIR) + "/orbits.csv";
    std::vector<PeriodicOrbit> orbits = {cube_orbit()};
    write_orbit_catalog(orbits, path);
    const auto loaded = read_orbit_catalog(path);
    REQUIRE(loaded.size() == 1);
    CHECK((loaded[0].initial.vec() - orbits[0].initial.vec()).norm() == 0.0);
    CHECK(loaded[0].period == orbits[0].period);
    CHECK(loaded[0].jacobi == orbits[0].jacobi);

    const auto scaled = read_orbit_catalog(path, 1e-3);
    CHECK(scaled[0].initial.r.x() == Approx(1e-3 * orbits[0].initial.r.x()));
    std::remove(path.c_str());
}
