#include <catch2/catch.hpp>

#include <random>

#include "helpers.hpp"
#include "smallbody/gravity.hpp"
#include "smallbody/procgen.hpp"

using namespace smallbody;
using testutil::asteroid_gravity;
using testutil::cube_gravity;

TEST_CASE("per-edge factor formula") {
    // r_i = r_j = 1 km, e_ij = 1 km -> ln 3
    CHECK(edge_factor(1.0, 1.0, 1.0) == Approx(1.0986123).epsilon(1e-7));
}

TEST_CASE("solid-angle factors at the centroid of a regular tetrahedron") {
    const GravityModel model(make_tetrahedron(), 1.0);
    const auto [edge_factors, face_factors] = model.per_element_factors(Vec3::Zero());
    REQUIRE(face_factors.size() == 4);
    for (double w : face_factors) CHECK(w == Approx(constants::pi).epsilon(1e-12));
    REQUIRE(edge_factors.size() == 6);
}

TEST_CASE("far-field solid angles vanish individually and in sum") {
    const GravityModel& cube = cube_gravity();
    const double far = 100.0 * cube.geometry().circumscribing_radius;
    const auto [edge_factors, face_factors] = cube.per_element_factors(Vec3(far, 0.2, -0.1));
    double sum = 0.0;
    for (double w : face_factors) {
        CHECK(std::abs(w) < 1e-3);
        sum += w;
    }
    CHECK(std::abs(sum) < 1e-9);
}

TEST_CASE("field point on an edge raises the singularity error") {
    const GravityModel& cube = cube_gravity();
    // midpoint of the edge from (0.5,-0.5,0.5) to (0.5,0.5,0.5)
    CHECK_THROWS_AS(cube.per_element_factors(Vec3(0.5, 0.0, 0.5)), EdgeSingularityError);
    CHECK_THROWS_AS(cube.evaluate_field(Vec3(0.5, 0.0, 0.5)), EdgeSingularityError);
    CHECK_NOTHROW(cube.evaluate_field(Vec3(0.5 + 1e-6, 0.0, 0.5 + 1e-6)));
}

TEST_CASE("cube potential matches the point mass and the quadrature oracle") {
    const GravityModel model(make_cube(1.0), 1.0);  // sigma = 1 kg/km^3
    const Vec3 r(10.0, 0.0, 0.0);
    const FieldEvaluation field = model.evaluate_field(r);
    const double gm = model.mu();
    CHECK(std::abs(field.potential - gm / 10.0) / (gm / 10.0) < 0.002);

    const auto [u_oracle, grad_oracle] =
        testutil::cube_field_quadrature(r, 100, 1.0, model.g_sigma());
    CHECK(std::abs(field.potential - u_oracle) / u_oracle < 1e-6);
    CHECK((field.attraction - grad_oracle).norm() / grad_oracle.norm() < 1e-6);
}

TEST_CASE("Laplacian identities inside and outside") {
    const GravityModel& cube = cube_gravity();
    const double g_sigma = cube.g_sigma();
    std::mt19937_64 rng(42);

    for (int i = 0; i < 200; ++i) {
        const Vec3 r = testutil::random_shell_point(rng, 1.0, 5.0);
        CHECK(std::abs(cube.evaluate_field(r).laplacian) < 1e-9 * g_sigma);
    }
    const double interior_expect = -4.0 * constants::pi * g_sigma;
    for (int i = 0; i < 200; ++i) {
        const Vec3 r(testutil::uniform(rng, -0.49, 0.49), testutil::uniform(rng, -0.49, 0.49),
                     testutil::uniform(rng, -0.49, 0.49));
        CHECK(std::abs(cube.evaluate_field(r).laplacian - interior_expect) <
              1e-9 * std::abs(interior_expect));
    }
}

TEST_CASE("interior classification matches the analytic box test") {
    const GravityModel& cube = cube_gravity();
    CHECK(cube.is_interior(Vec3::Zero()));
    CHECK_FALSE(cube.is_interior(Vec3(10.0, 10.0, 10.0)));
    std::mt19937_64 rng(7);
    for (int i = 0; i < 10000; ++i) {
        const Vec3 r(testutil::uniform(rng, -2, 2), testutil::uniform(rng, -2, 2),
                     testutil::uniform(rng, -2, 2));
        const bool in_box = std::abs(r.x()) < 0.5 && std::abs(r.y()) < 0.5 && std::abs(r.z()) < 0.5;
        REQUIRE(cube.is_interior(r) == in_box);
    }
}

TEST_CASE("gradient and Hessian agree with finite differences of the potential") {
    const GravityModel& model = asteroid_gravity();
    const double r_min = 1.05 * model.geometry().circumscribing_radius;
    std::mt19937_64 rng(11);
    const double h = 1e-6;

    for (int i = 0; i < 12; ++i) {
        const Vec3 r = testutil::random_shell_point(rng, r_min, 3.0 * r_min);
        const FieldEvaluation field = model.evaluate_field(r);

        for (int c = 0; c < 3; ++c) {
            Vec3 rp = r, rm = r;
            rp[c] += h;
            rm[c] -= h;
            const double fd = (model.evaluate_field(rp).potential -
                               model.evaluate_field(rm).potential) / (2.0 * h);
            CHECK(std::abs(fd - field.attraction[c]) <=
                  1e-6 * std::max(std::abs(field.attraction[c]), 1e-12));
            const Vec3 fd_grad =
                (model.evaluate_field(rp).attraction - model.evaluate_field(rm).attraction) /
                (2.0 * h);
            for (int rr = 0; rr < 3; ++rr) {
                CHECK(std::abs(fd_grad[rr] - field.gradient_matrix(rr, c)) <=
                      1e-5 * std::max(field.gradient_matrix.norm(), 1e-15));
            }
        }
    }
}

TEST_CASE("gradient matrix is symmetric with trace equal to the Laplacian") {
    const GravityModel& model = asteroid_gravity();
    std::mt19937_64 rng(3);
    for (int i = 0; i < 50; ++i) {
        const Vec3 r = testutil::random_shell_point(rng, 1.0, 10.0);
        const FieldEvaluation f = model.evaluate_field(r);
        CHECK((f.gradient_matrix - f.gradient_matrix.transpose()).norm() <=
              1e-12 * f.gradient_matrix.norm());
        CHECK(std::abs(f.gradient_matrix.trace() - f.laplacian) <=
              1e-10 * std::max(std::abs(f.laplacian), f.gradient_matrix.norm()));
    }
}

TEST_CASE("rotating the body and the field point together is an equivariance") {
    ShapeModel cube = make_cube(1.0);
    const Eigen::AngleAxisd rot(0.7, Vec3(1, 2, 3).normalized());
    ShapeModel rotated = cube;
    for (auto& v : rotated.vertices) v = rot * v;

    const GravityModel model_a(std::move(cube), 1.35e12);
    const GravityModel model_b(std::move(rotated), 1.35e12);

    const Vec3 r(1.3, -0.4, 0.8);
    const FieldEvaluation fa = model_a.evaluate_field(r);
    const FieldEvaluation fb = model_b.evaluate_field(rot * r);
    CHECK(std::abs(fa.potential - fb.potential) <= 1e-12 * std::abs(fa.potential));
    CHECK((rot * fa.attraction - fb.attraction).norm() <= 1e-12 * fa.attraction.norm());
    CHECK((rot.toRotationMatrix() * fa.gradient_matrix * rot.toRotationMatrix().transpose() -
           fb.gradient_matrix).norm() <= 1e-12 * fa.gradient_matrix.norm());
}

TEST_CASE("attraction decays to the centroid point mass at quartic order") {
    const GravityModel& model = asteroid_gravity();
    const double r0 = model.geometry().circumscribing_radius;
    const Vec3 dir = Vec3(1.0, 0.6, 0.3).normalized();
    const Vec3 center = model.geometry().center;

    std::vector<double> radii, errors;
    for (double mult : {10.0, 18.0, 32.0, 56.0, 100.0}) {
        const Vec3 r = center + mult * r0 * dir;
        const Vec3 point_mass = -model.mu() * (r - center) / std::pow((r - center).norm(), 3);
        const double err = (model.evaluate_field(r).attraction - point_mass).norm();
        radii.push_back(mult * r0);
        errors.push_back(err);
    }
    // least-squares slope in log-log space
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = static_cast<int>(radii.size());
    for (int i = 0; i < n; ++i) {
        const double lx = std::log(radii[i]);
        const double ly = std::log(errors[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope <= -3.9);
}

TEST_CASE("third-derivative contraction matches finite differences") {
    const GravityModel& model = asteroid_gravity();
    std::mt19937_64 rng(29);
    const double h = 1e-5;
    for (int i = 0; i < 6; ++i) {
        const Vec3 r = testutil::random_shell_point(rng, 1.2, 3.0);
        const Vec3 w(testutil::uniform(rng, -1, 1), testutil::uniform(rng, -1, 1),
                     testutil::uniform(rng, -1, 1));
        const Mat3 analytic = model.gradient_matrix_directional_derivative(r, w);
        Mat3 fd;
        for (int c = 0; c < 3; ++c) {
            Vec3 rp = r, rm = r;
            rp[c] += h;
            rm[c] -= h;
            fd.col(c) = (model.evaluate_field(rp).gradient_matrix -
                         model.evaluate_field(rm).gradient_matrix) *
                        w / (2.0 * h);
        }
        CHECK((analytic - fd).norm() <= 1e-5 * std::max(fd.norm(), 1e-18));
    }
}

TEST_CASE("evaluation is deterministic") {
    const GravityModel& model = asteroid_gravity();
    const Vec3 r(1.7, 0.4, -0.2);
    const FieldEvaluation a = model.evaluate_field(r);
    const FieldEvaluation b = model.evaluate_field(r);
    CHECK(a.potential == b.potential);
    CHECK((a.attraction - b.attraction).norm() == 0.0);
    CHECK((a.gradient_matrix - b.gradient_matrix).norm() == 0.0);
}
