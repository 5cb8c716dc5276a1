#pragma once

#include <cmath>
#include <functional>

#include "smallbody/shape_model.hpp"
#include "smallbody/types.hpp"

// Deterministic procedural shape models: analytic primitives for tests and a
// contact-binary-like asteroid for end-to-end runs. All outputs are closed,
// consistently wound triangle meshes.

namespace smallbody {

/// Regular tetrahedron with vertices at (+-1,+-1,+-1) corners, scaled.
inline ShapeModel make_tetrahedron(double scale = 1.0) {
    ShapeModel shape;
    shape.vertices = {scale * Vec3(1, 1, 1), scale * Vec3(1, -1, -1), scale * Vec3(-1, 1, -1),
                      scale * Vec3(-1, -1, 1)};
    shape.faces = {{1, 3, 2}, {0, 2, 3}, {0, 3, 1}, {0, 1, 2}};
    finalize_shape(shape);
    return shape;
}

/// Axis-aligned cube of the given side length, pre-triangulated (12 faces).
inline ShapeModel make_cube(double side = 1.0, const Vec3& center = Vec3::Zero()) {
    const double h = 0.5 * side;
    ShapeModel shape;
    shape.vertices = {center + Vec3(-h, -h, -h), center + Vec3(h, -h, -h),
                      center + Vec3(h, h, -h),   center + Vec3(-h, h, -h),
                      center + Vec3(-h, -h, h),  center + Vec3(h, -h, h),
                      center + Vec3(h, h, h),    center + Vec3(-h, h, h)};
    shape.faces = {{0, 3, 2}, {0, 2, 1},   // z = -h
                   {4, 5, 6}, {4, 6, 7},   // z = +h
                   {0, 1, 5}, {0, 5, 4},   // y = -h
                   {1, 2, 6}, {1, 6, 5},   // x = +h
                   {2, 3, 7}, {2, 7, 6},   // y = +h
                   {3, 0, 4}, {3, 4, 7}};  // x = -h
    finalize_shape(shape);
    return shape;
}

/// Triangulates a star-shaped surface r(theta, lambda) on a latitude/longitude
/// grid: `lat_rings` latitude bands (poles included) and `lon_steps` meridians
/// give exactly 2 * lon_steps * (lat_rings - 1) faces.
inline ShapeModel make_radius_function_mesh(
    int lat_rings, int lon_steps, const std::function<double(double, double)>& radius) {
    const int L = lat_rings;
    const int M = lon_steps;
    ShapeModel shape;

    auto point = [&](double theta, double lambda) {
        const double r = radius(theta, lambda);
        return Vec3(r * std::sin(theta) * std::cos(lambda), r * std::sin(theta) * std::sin(lambda),
                    r * std::cos(theta));
    };

    shape.vertices.push_back(point(0.0, 0.0));  // north pole
    for (int i = 1; i < L; ++i) {
        const double theta = constants::pi * i / L;
        for (int j = 0; j < M; ++j) {
            shape.vertices.push_back(point(theta, 2.0 * constants::pi * j / M));
        }
    }
    shape.vertices.push_back(point(constants::pi, 0.0));  // south pole

    const int north = 0;
    const int south = static_cast<int>(shape.vertices.size()) - 1;
    auto ring = [M](int i, int j) { return 1 + (i - 1) * M + (j % M); };

    for (int j = 0; j < M; ++j) shape.faces.push_back({north, ring(1, j), ring(1, j + 1)});
    for (int i = 1; i < L - 1; ++i) {
        for (int j = 0; j < M; ++j) {
            const int uj = ring(i, j), uj1 = ring(i, j + 1);
            const int lj = ring(i + 1, j), lj1 = ring(i + 1, j + 1);
            shape.faces.push_back({uj, lj, lj1});
            shape.faces.push_back({uj, lj1, uj1});
        }
    }
    for (int j = 0; j < M; ++j) shape.faces.push_back({ring(L - 1, j), south, ring(L - 1, j + 1)});

    finalize_shape(shape);
    return shape;
}

/// Moves the center of mass to the origin and rescales to the requested
/// volume; topology is untouched.
inline void recenter_and_scale_to_volume(ShapeModel& shape, double target_volume_km3) {
    const Vec3 c = centroid(shape);
    for (auto& v : shape.vertices) v -= c;
    const double v0 = signed_volume(shape);
    const double s = std::cbrt(target_volume_km3 / v0);
    for (auto& v : shape.vertices) v *= s;
}

/// Elongated lumpy contact-binary body, roughly 1.6 x 1.0 x 0.8 km across,
/// volume-matched so that at 2.1 g/cm^3 its GM is ~9.0e-8 km^3/s^2. The
/// resolution presets 4092 and 1024 faces correspond to (lon, lat) grids of
/// (66, 32) and (32, 17).
inline ShapeModel make_reference_asteroid(int lat_rings, int lon_steps,
                                          double target_volume_km3 = 0.6443) {
    auto radius = [](double theta, double lambda) {
        const double st = std::sin(theta);
        const double ux = st * std::cos(lambda);
        const double uy = st * std::sin(lambda);
        const double uz = std::cos(theta);
        const double a = 0.85, b = 0.52, c = 0.43;
        const double r_ell =
            1.0 / std::sqrt((ux / a) * (ux / a) + (uy / b) * (uy / b) + (uz / c) * (uz / c));
        const double st2 = st * st;
        double f = 1.0;
        f += 0.050 * std::sin(3.0 * lambda + 0.9) * st2;
        f += 0.035 * std::cos(2.0 * lambda - 0.4) * st2 * st2;
        f -= 0.070 * std::exp(-(ux / 0.28) * (ux / 0.28)) * st2;  // waist between the lobes
        f += 0.015 * uz * st2 * std::cos(lambda);                 // mild north-south asymmetry
        return r_ell * f;
    };
    ShapeModel shape = make_radius_function_mesh(lat_rings, lon_steps, radius);
    recenter_and_scale_to_volume(shape, target_volume_km3);
    return shape;
}

inline ShapeModel make_reference_asteroid_4092() { return make_reference_asteroid(32, 66); }
inline ShapeModel make_reference_asteroid_1024() { return make_reference_asteroid(17, 32); }

}  // namespace smallbody
