#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "smallbody/shape_model.hpp"
#include "smallbody/types.hpp"

// Position-independent geometric quantities of a shape model: unit normals,
// face/edge dyads, edge lengths and bulk properties. Computed once per shape
// and immutable afterwards, so field evaluations share them freely across
// threads.

namespace smallbody {

struct GeometryCache {
    std::vector<Vec3> face_normal;      // unit outward normal per face
    std::vector<Mat3> face_dyad;        // F_f = n n^T
    std::vector<Mat3> edge_dyad;        // E_e, symmetric
    std::vector<double> edge_length;    // km
    std::vector<Vec3> edge_normal_fwd;  // unit in-face-plane normal, face_fwd side
    std::vector<Vec3> edge_normal_rev;  // same for face_rev
    double circumscribing_radius = 0.0;  // km
    double volume = 0.0;                 // km^3
    Vec3 center = Vec3::Zero();          // km

    std::size_t face_count() const { return face_normal.size(); }
    std::size_t edge_count() const { return edge_dyad.size(); }
};

/// FNV-1a over the raw vertex coordinates and face indices; identifies the
/// source shape of a serialized cache.
inline std::uint64_t shape_content_hash(const ShapeModel& shape) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& v : shape.vertices) {
        const double c[3] = {v.x(), v.y(), v.z()};
        mix(c, sizeof(c));
    }
    for (const auto& f : shape.faces) {
        const std::int32_t c[3] = {f[0], f[1], f[2]};
        mix(c, sizeof(c));
    }
    return h;
}

/// Precomputes all geometry. Degenerate (near-zero-area) faces are rejected
/// with the offending index; threshold 1e-12 km^2.
inline GeometryCache precompute_geometry(const ShapeModel& shape) {
    GeometryCache cache;
    const int nf = shape.face_count();
    const int ne = shape.edge_count();
    cache.face_normal.resize(nf);
    cache.face_dyad.resize(nf);
    cache.edge_dyad.resize(ne);
    cache.edge_length.resize(ne);
    cache.edge_normal_fwd.resize(ne);
    cache.edge_normal_rev.resize(ne);

    for (int fi = 0; fi < nf; ++fi) {
        const auto& f = shape.faces[fi];
        const Vec3& v1 = shape.vertices[f[0]];
        const Vec3& v2 = shape.vertices[f[1]];
        const Vec3& v3 = shape.vertices[f[2]];
        const Vec3 cross = (v2 - v1).cross(v3 - v2);
        const double area = 0.5 * cross.norm();
        if (area < 1e-12) {
            throw DegenerateFaceError("face " + std::to_string(fi) +
                                          " is degenerate (area " + std::to_string(area) + " km^2)",
                                      fi);
        }
        const Vec3 n = cross.normalized();
        cache.face_normal[fi] = n;
        cache.face_dyad[fi] = n * n.transpose();
    }

    for (int ei = 0; ei < ne; ++ei) {
        const auto& e = shape.edges[ei];
        const Vec3& va = shape.vertices[e.a];
        const Vec3& vb = shape.vertices[e.b];
        cache.edge_length[ei] = (vb - va).norm();

        // Each adjacent face sees the edge in its own traversal direction;
        // the in-plane normal is edge direction crossed with the face normal.
        const Vec3& n_fwd = cache.face_normal[e.face_fwd];
        const Vec3& n_rev = cache.face_normal[e.face_rev];
        const Vec3 m_fwd = ((vb - va).cross(n_fwd)).normalized();
        const Vec3 m_rev = ((va - vb).cross(n_rev)).normalized();
        cache.edge_normal_fwd[ei] = m_fwd;
        cache.edge_normal_rev[ei] = m_rev;
        cache.edge_dyad[ei] = n_fwd * m_fwd.transpose() + n_rev * m_rev.transpose();
    }

    cache.volume = signed_volume(shape);
    cache.center = centroid(shape);
    double max_r2 = 0.0;
    for (const auto& v : shape.vertices) max_r2 = std::max(max_r2, v.squaredNorm());
    cache.circumscribing_radius = std::sqrt(max_r2);
    return cache;
}

// ---------------------------------------------------------------------------
// Binary cache file: magic, format version, content hash of the source shape,
// then raw little-endian doubles in a fixed order.
// ---------------------------------------------------------------------------

namespace detail {
inline constexpr char kGeomMagic[8] = {'S', 'B', 'G', 'E', 'O', 'M', '\0', '\0'};
inline constexpr std::uint32_t kGeomVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}
template <typename T>
void read_pod(std::istream& is, T& value) {
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
}
}  // namespace detail

inline void save_geometry_cache(const GeometryCache& cache, std::uint64_t shape_hash,
                                const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write geometry cache: " + path);
    out.write(detail::kGeomMagic, sizeof(detail::kGeomMagic));
    detail::write_pod(out, detail::kGeomVersion);
    detail::write_pod(out, shape_hash);
    const std::uint64_t nf = cache.face_count();
    const std::uint64_t ne = cache.edge_count();
    detail::write_pod(out, nf);
    detail::write_pod(out, ne);
    auto write_vec3s = [&out](const std::vector<Vec3>& vs) {
        for (const auto& v : vs)
            for (int i = 0; i < 3; ++i) detail::write_pod(out, v[i]);
    };
    auto write_mat3s = [&out](const std::vector<Mat3>& ms) {
        for (const auto& m : ms)
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) detail::write_pod(out, m(r, c));
    };
    write_vec3s(cache.face_normal);
    write_mat3s(cache.face_dyad);
    write_mat3s(cache.edge_dyad);
    for (double len : cache.edge_length) detail::write_pod(out, len);
    write_vec3s(cache.edge_normal_fwd);
    write_vec3s(cache.edge_normal_rev);
    detail::write_pod(out, cache.circumscribing_radius);
    detail::write_pod(out, cache.volume);
    for (int i = 0; i < 3; ++i) detail::write_pod(out, cache.center[i]);
    if (!out) throw IoError("failed writing geometry cache: " + path);
}

/// Loads a cache written by save_geometry_cache, checking magic, version and
/// that the embedded hash matches `expected_shape_hash`.
inline GeometryCache load_geometry_cache(const std::string& path,
                                         std::uint64_t expected_shape_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open geometry cache: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, detail::kGeomMagic, sizeof(magic)) != 0) {
        throw ParseError(path + ": not a geometry cache file");
    }
    std::uint32_t version = 0;
    detail::read_pod(in, version);
    if (version != detail::kGeomVersion) {
        throw ParseError(path + ": unsupported geometry cache version " + std::to_string(version));
    }
    std::uint64_t hash = 0;
    detail::read_pod(in, hash);
    if (hash != expected_shape_hash) {
        throw ParseError(path + ": cache was built from a different shape (hash mismatch)");
    }
    std::uint64_t nf = 0, ne = 0;
    detail::read_pod(in, nf);
    detail::read_pod(in, ne);
    GeometryCache cache;
    cache.face_normal.resize(nf);
    cache.face_dyad.resize(nf);
    cache.edge_dyad.resize(ne);
    cache.edge_length.resize(ne);
    cache.edge_normal_fwd.resize(ne);
    cache.edge_normal_rev.resize(ne);
    auto read_vec3s = [&in](std::vector<Vec3>& vs) {
        for (auto& v : vs)
            for (int i = 0; i < 3; ++i) detail::read_pod(in, v[i]);
    };
    auto read_mat3s = [&in](std::vector<Mat3>& ms) {
        for (auto& m : ms)
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) detail::read_pod(in, m(r, c));
    };
    read_vec3s(cache.face_normal);
    read_mat3s(cache.face_dyad);
    read_mat3s(cache.edge_dyad);
    for (auto& len : cache.edge_length) detail::read_pod(in, len);
    read_vec3s(cache.edge_normal_fwd);
    read_vec3s(cache.edge_normal_rev);
    detail::read_pod(in, cache.circumscribing_radius);
    detail::read_pod(in, cache.volume);
    for (int i = 0; i < 3; ++i) detail::read_pod(in, cache.center[i]);
    if (!in) throw ParseError(path + ": truncated geometry cache");
    return cache;
}

}  // namespace smallbody
