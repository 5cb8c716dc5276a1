#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "smallbody/geometry.hpp"
#include "smallbody/shape_model.hpp"
#include "smallbody/types.hpp"

// Exact constant-density polyhedron gravity field. One pass over the edges
// and faces yields the potential, attraction, gradient matrix and Laplacian
// together; the per-element loop dominates runtime so callers always get all
// four. Evaluation is pure with respect to an immutable model and safe to
// run concurrently at different field points.

namespace smallbody {

struct FieldEvaluation {
    double potential = 0.0;     // km^2/s^2, positive far-field convention
    Vec3 attraction = Vec3::Zero();  // gradient of the potential, km/s^2
    Mat3 gradient_matrix = Mat3::Zero();  // s^-2
    double laplacian = 0.0;     // s^-2
};

/// Per-edge logarithmic factor: ln((ri + rj + e)/(ri + rj - e)) for vertex
/// distances ri, rj and edge length e.
inline double edge_factor(double ri, double rj, double eij) {
    return std::log((ri + rj + eij) / (ri + rj - eij));
}

/// Per-face signed solid-angle factor for the vectors from the field point
/// to the three face vertices. The two-argument arctangent keeps the branch
/// correct when the denominator goes negative.
inline double face_factor(const Vec3& ri, const Vec3& rj, const Vec3& rk) {
    const double li = ri.norm(), lj = rj.norm(), lk = rk.norm();
    const double num = ri.dot(rj.cross(rk));
    const double den = li * lj * lk + li * rj.dot(rk) + lj * rk.dot(ri) + lk * ri.dot(rj);
    return 2.0 * std::atan2(num, den);
}

class GravityModel {
public:
    GravityModel(ShapeModel shape, double density_kg_km3)
        : GravityModel(std::move(shape), precompute_later_tag{}, density_kg_km3) {
        cache_ = precompute_geometry(shape_);
        flatten();
    }

    GravityModel(ShapeModel shape, GeometryCache cache, double density_kg_km3)
        : GravityModel(std::move(shape), precompute_later_tag{}, density_kg_km3) {
        cache_ = std::move(cache);
        flatten();
    }

    const ShapeModel& shape() const { return shape_; }
    const GeometryCache& geometry() const { return cache_; }
    double density() const { return sigma_; }
    double g_sigma() const { return g_sigma_; }      // G*sigma, s^-2
    double mu() const { return mu_; }                // GM, km^3/s^2
    double total_mass() const { return mu_ / constants::G; }

    /// Position-dependent factors for every edge and face. Throws
    /// EdgeSingularityError if the field point lies on an edge segment.
    std::pair<std::vector<double>, std::vector<double>> per_element_factors(const Vec3& r) const {
        auto& w = workspace();
        fill_vertex_offsets(r, w);
        std::vector<double> edge_factors(edge_a_.size());
        std::vector<double> face_factors(face_i_.size());
        for (std::size_t e = 0; e < edge_a_.size(); ++e) {
            edge_factors[e] = edge_term(e, w);
        }
        for (std::size_t f = 0; f < face_i_.size(); ++f) {
            face_factors[f] = face_term(f, w);
        }
        return {std::move(edge_factors), std::move(face_factors)};
    }

    /// Potential, attraction, gradient matrix and Laplacian in one pass.
    FieldEvaluation evaluate_field(const Vec3& r) const {
        auto& w = workspace();
        fill_vertex_offsets(r, w);

        double u_edges = 0.0;
        double gx = 0.0, gy = 0.0, gz = 0.0;
        double hxx = 0.0, hxy = 0.0, hxz = 0.0, hyy = 0.0, hyz = 0.0, hzz = 0.0;

        const double* E = edge_dyads_.data();
        for (std::size_t e = 0; e < edge_a_.size(); ++e, E += 9) {
            const double le = edge_term(e, w);
            const std::size_t a = edge_a_[e];
            const double rx = w.dx[a], ry = w.dy[a], rz = w.dz[a];
            // E * r_e (E symmetric, stored row-major)
            const double ex = E[0] * rx + E[1] * ry + E[2] * rz;
            const double ey = E[3] * rx + E[4] * ry + E[5] * rz;
            const double ez = E[6] * rx + E[7] * ry + E[8] * rz;
            u_edges += (rx * ex + ry * ey + rz * ez) * le;
            gx -= ex * le;
            gy -= ey * le;
            gz -= ez * le;
            hxx += E[0] * le;
            hxy += E[1] * le;
            hxz += E[2] * le;
            hyy += E[4] * le;
            hyz += E[5] * le;
            hzz += E[8] * le;
        }

        double u_faces = 0.0;
        double omega_sum = 0.0;
        const double* N = face_normals_.data();
        for (std::size_t f = 0; f < face_i_.size(); ++f, N += 3) {
            const double wf = face_term(f, w);
            const std::size_t i = face_i_[f];
            const double rx = w.dx[i], ry = w.dy[i], rz = w.dz[i];
            const double nx = N[0], ny = N[1], nz = N[2];
            const double s = nx * rx + ny * ry + nz * rz;  // n . r_f
            u_faces += s * s * wf;
            const double sw = s * wf;
            gx += nx * sw;
            gy += ny * sw;
            gz += nz * sw;
            hxx -= nx * nx * wf;
            hxy -= nx * ny * wf;
            hxz -= nx * nz * wf;
            hyy -= ny * ny * wf;
            hyz -= ny * nz * wf;
            hzz -= nz * nz * wf;
            omega_sum += wf;
        }

        FieldEvaluation out;
        out.potential = 0.5 * g_sigma_ * (u_edges - u_faces);
        out.attraction = g_sigma_ * Vec3(gx, gy, gz);
        out.gradient_matrix << hxx, hxy, hxz, hxy, hyy, hyz, hxz, hyz, hzz;
        out.gradient_matrix *= g_sigma_;
        out.laplacian = -g_sigma_ * omega_sum;
        return out;
    }

    /// Exact directional derivative of the gradient matrix:
    /// M(r, w) = d(grad grad U(r) w)/dr. The gradient matrix depends on the
    /// position only through the per-element scalars, whose gradients are
    /// closed-form, so the third derivative costs one extra element pass.
    Mat3 gradient_matrix_directional_derivative(const Vec3& r, const Vec3& w) const {
        auto& ws = workspace();
        fill_vertex_offsets(r, ws);
        Mat3 out = Mat3::Zero();

        const double* E = edge_dyads_.data();
        for (std::size_t e = 0; e < edge_a_.size(); ++e, E += 9) {
            const std::size_t a = edge_a_[e], b = edge_b_[e];
            const double ra = ws.dist[a], rb = ws.dist[b];
            const double len = edge_len_[e];
            if (ra + rb - len < 1e-12 * len) {
                throw EdgeSingularityError("field point lies on edge " + std::to_string(e) +
                                               " of the shape model",
                                           static_cast<int>(e));
            }
            // grad L_e = 2 e / ((ra+rb)^2 - e^2) * (r_a/ra + r_b/rb)
            const double s = ra + rb;
            const double coeff = 2.0 * len / (s * s - len * len);
            const Vec3 grad_l =
                coeff * (Vec3(ws.dx[a], ws.dy[a], ws.dz[a]) / ra +
                         Vec3(ws.dx[b], ws.dy[b], ws.dz[b]) / rb);
            const Vec3 ew(E[0] * w.x() + E[1] * w.y() + E[2] * w.z(),
                          E[3] * w.x() + E[4] * w.y() + E[5] * w.z(),
                          E[6] * w.x() + E[7] * w.y() + E[8] * w.z());
            out += ew * grad_l.transpose();
        }

        const double* N = face_normals_.data();
        for (std::size_t f = 0; f < face_i_.size(); ++f, N += 3) {
            const std::size_t i = face_i_[f], j = face_j_[f], k = face_k_[f];
            const Vec3 ri(ws.dx[i], ws.dy[i], ws.dz[i]);
            const Vec3 rj(ws.dx[j], ws.dy[j], ws.dz[j]);
            const Vec3 rk(ws.dx[k], ws.dy[k], ws.dz[k]);
            const double a = ws.dist[i], b = ws.dist[j], c = ws.dist[k];
            const double num = ri.dot(rj.cross(rk));
            const double den = a * b * c + a * rj.dot(rk) + b * rk.dot(ri) + c * ri.dot(rj);
            // d atan2(num, den) pieces: all r_* shift by -dr
            const Vec3 grad_num = -(rj.cross(rk) + rk.cross(ri) + ri.cross(rj));
            const Vec3 grad_den = -(ri / a) * (b * c + rj.dot(rk)) -
                                  (rj / b) * (a * c + rk.dot(ri)) -
                                  (rk / c) * (a * b + ri.dot(rj)) - a * (rj + rk) -
                                  b * (rk + ri) - c * (ri + rj);
            const Vec3 grad_w =
                (2.0 / (num * num + den * den)) * (den * grad_num - num * grad_den);
            const Vec3 n(N[0], N[1], N[2]);
            out -= (n * (n.dot(w))) * grad_w.transpose();
        }
        return g_sigma_ * out;
    }

    /// Sum of the per-face solid-angle factors: 0 outside, 4*pi inside.
    double solid_angle_sum(const Vec3& r) const {
        auto& w = workspace();
        fill_vertex_offsets(r, w);
        double omega_sum = 0.0;
        for (std::size_t f = 0; f < face_i_.size(); ++f) omega_sum += face_term(f, w);
        return omega_sum;
    }

    /// True iff the point is inside the body; the 2*pi threshold sits halfway
    /// between the exact exterior (0) and interior (4*pi) values.
    bool is_interior(const Vec3& r) const {
        return std::abs(solid_angle_sum(r)) > 2.0 * constants::pi;
    }

private:
    struct precompute_later_tag {};

    GravityModel(ShapeModel shape, precompute_later_tag, double density_kg_km3)
        : shape_(std::move(shape)), sigma_(density_kg_km3) {
        if (!(sigma_ > 0.0)) throw Error("density must be positive");
    }

    struct Workspace {
        std::vector<double> dx, dy, dz, dist;
    };

    Workspace& workspace() const {
        static thread_local Workspace w;
        return w;
    }

    void fill_vertex_offsets(const Vec3& r, Workspace& w) const {
        const std::size_t nv = vx_.size();
        w.dx.resize(nv);
        w.dy.resize(nv);
        w.dz.resize(nv);
        w.dist.resize(nv);
        for (std::size_t i = 0; i < nv; ++i) {
            const double x = vx_[i] - r.x();
            const double y = vy_[i] - r.y();
            const double z = vz_[i] - r.z();
            w.dx[i] = x;
            w.dy[i] = y;
            w.dz[i] = z;
            w.dist[i] = std::sqrt(x * x + y * y + z * z);
        }
    }

    double edge_term(std::size_t e, const Workspace& w) const {
        const double ra = w.dist[edge_a_[e]];
        const double rb = w.dist[edge_b_[e]];
        const double len = edge_len_[e];
        if (ra + rb - len < 1e-12 * len) {
            throw EdgeSingularityError("field point lies on edge " + std::to_string(e) +
                                           " of the shape model",
                                       static_cast<int>(e));
        }
        return std::log((ra + rb + len) / (ra + rb - len));
    }

    double face_term(std::size_t f, const Workspace& w) const {
        const std::size_t i = face_i_[f], j = face_j_[f], k = face_k_[f];
        const double ix = w.dx[i], iy = w.dy[i], iz = w.dz[i];
        const double jx = w.dx[j], jy = w.dy[j], jz = w.dz[j];
        const double kx = w.dx[k], ky = w.dy[k], kz = w.dz[k];
        const double li = w.dist[i], lj = w.dist[j], lk = w.dist[k];
        const double cx = jy * kz - jz * ky;
        const double cy = jz * kx - jx * kz;
        const double cz = jx * ky - jy * kx;
        const double num = ix * cx + iy * cy + iz * cz;
        const double den = li * lj * lk + li * (jx * kx + jy * ky + jz * kz) +
                           lj * (kx * ix + ky * iy + kz * iz) +
                           lk * (ix * jx + iy * jy + iz * jz);
        return 2.0 * std::atan2(num, den);
    }

    void flatten() {
        if (!(cache_.volume > 0.0)) throw Error("shape volume must be positive");
        g_sigma_ = constants::G * sigma_;
        mu_ = g_sigma_ * cache_.volume;

        const std::size_t nv = shape_.vertices.size();
        vx_.resize(nv);
        vy_.resize(nv);
        vz_.resize(nv);
        for (std::size_t i = 0; i < nv; ++i) {
            vx_[i] = shape_.vertices[i].x();
            vy_[i] = shape_.vertices[i].y();
            vz_[i] = shape_.vertices[i].z();
        }
        const std::size_t ne = shape_.edges.size();
        edge_a_.resize(ne);
        edge_b_.resize(ne);
        edge_len_.resize(ne);
        edge_dyads_.resize(9 * ne);
        for (std::size_t e = 0; e < ne; ++e) {
            edge_a_[e] = shape_.edges[e].a;
            edge_b_[e] = shape_.edges[e].b;
            edge_len_[e] = cache_.edge_length[e];
            const Mat3& E = cache_.edge_dyad[e];
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) edge_dyads_[9 * e + 3 * r + c] = E(r, c);
        }
        const std::size_t nf = shape_.faces.size();
        face_i_.resize(nf);
        face_j_.resize(nf);
        face_k_.resize(nf);
        face_normals_.resize(3 * nf);
        for (std::size_t f = 0; f < nf; ++f) {
            face_i_[f] = shape_.faces[f][0];
            face_j_[f] = shape_.faces[f][1];
            face_k_[f] = shape_.faces[f][2];
            for (int c = 0; c < 3; ++c) face_normals_[3 * f + c] = cache_.face_normal[f][c];
        }
    }

    ShapeModel shape_;
    GeometryCache cache_;
    double sigma_ = 0.0;
    double g_sigma_ = 0.0;
    double mu_ = 0.0;

    std::vector<double> vx_, vy_, vz_;
    std::vector<std::size_t> edge_a_, edge_b_;
    std::vector<double> edge_len_;
    std::vector<double> edge_dyads_;
    std::vector<std::size_t> face_i_, face_j_, face_k_;
    std::vector<double> face_normals_;
};

}  // namespace smallbody
