#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "smallbody/types.hpp"

// Triangulated closed-surface shape models: loading, topology indexing and
// validation. A valid model is a watertight genus-0 triangle mesh with
// consistent counterclockwise (outward) winding.

namespace smallbody {

struct ShapeModel {
    std::vector<Vec3> vertices;             // km, body-fixed frame
    std::vector<std::array<int, 3>> faces;  // CCW viewed from outside

    // Undirected edge keyed by its sorted vertex pair. face_fwd traverses
    // a -> b in its winding cycle, face_rev traverses b -> a.
    struct Edge {
        int a = -1;
        int b = -1;
        int face_fwd = -1;
        int face_rev = -1;
    };
    std::vector<Edge> edges;

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int face_count() const { return static_cast<int>(faces.size()); }
    int edge_count() const { return static_cast<int>(edges.size()); }
};

struct ValidationIssue {
    enum class Code {
        FaceIndexOutOfRange,
        DuplicateVertexInFace,
        OpenEdge,            // edge with != 2 adjacent faces
        InconsistentWinding, // directed edge traversed twice in same direction
        EulerCharacteristic, // V - E + F != 2
        NegativeVolume,
        RadiusOutOfRange,    // warning: circumscribing radius outside [0.1, 100] km
    };
    Code code;
    std::string message;
    std::vector<int> elements;  // offending face/edge/vertex indices
    bool warning = false;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;

    bool ok() const {
        return std::none_of(issues.begin(), issues.end(),
                            [](const ValidationIssue& i) { return !i.warning; });
    }
    std::string summary() const {
        std::ostringstream os;
        for (const auto& i : issues) {
            os << (i.warning ? "warning: " : "error: ") << i.message << "\n";
        }
        return os.str();
    }
};

/// Signed volume via the divergence theorem; positive for consistent
/// outward CCW winding.
inline double signed_volume(const ShapeModel& shape) {
    double six_v = 0.0;
    for (const auto& f : shape.faces) {
        const Vec3& v1 = shape.vertices[f[0]];
        const Vec3& v2 = shape.vertices[f[1]];
        const Vec3& v3 = shape.vertices[f[2]];
        six_v += v1.dot(v2.cross(v3));
    }
    return six_v / 6.0;
}

/// Constant-density center of mass.
inline Vec3 centroid(const ShapeModel& shape) {
    double six_v = 0.0;
    Vec3 weighted = Vec3::Zero();
    for (const auto& f : shape.faces) {
        const Vec3& v1 = shape.vertices[f[0]];
        const Vec3& v2 = shape.vertices[f[1]];
        const Vec3& v3 = shape.vertices[f[2]];
        const double det = v1.dot(v2.cross(v3));
        six_v += det;
        weighted += det * (v1 + v2 + v3);  // tetra centroid is (0+v1+v2+v3)/4
    }
    return weighted / (4.0 * six_v);
}

namespace detail {

struct DirectedAdjacency {
    // per undirected edge: faces traversing a->b and b->a (may hold several
    // on defective meshes, which is what the validator reports)
    int a, b;
    std::vector<int> fwd;
    std::vector<int> rev;
};

inline std::vector<DirectedAdjacency> collect_edge_adjacency(const ShapeModel& shape) {
    std::map<std::pair<int, int>, int> index;
    std::vector<DirectedAdjacency> adj;
    for (int fi = 0; fi < shape.face_count(); ++fi) {
        const auto& f = shape.faces[fi];
        for (int c = 0; c < 3; ++c) {
            const int i = f[c];
            const int j = f[(c + 1) % 3];
            if (i == j) continue;  // degenerate, reported elsewhere
            const auto key = std::minmax(i, j);
            auto it = index.find(key);
            if (it == index.end()) {
                it = index.emplace(key, static_cast<int>(adj.size())).first;
                adj.push_back({key.first, key.second, {}, {}});
            }
            auto& e = adj[it->second];
            if (i == e.a)
                e.fwd.push_back(fi);
            else
                e.rev.push_back(fi);
        }
    }
    return adj;
}

}  // namespace detail

/// Diagnostic pass: reports every violated invariant with the offending
/// element indices. Does not throw.
inline ValidationReport validate_shape(const ShapeModel& shape) {
    ValidationReport report;
    const int nv = shape.vertex_count();

    bool indices_ok = true;
    for (int fi = 0; fi < shape.face_count(); ++fi) {
        const auto& f = shape.faces[fi];
        if (f[0] < 0 || f[0] >= nv || f[1] < 0 || f[1] >= nv || f[2] < 0 || f[2] >= nv) {
            report.issues.push_back({ValidationIssue::Code::FaceIndexOutOfRange,
                                     "face " + std::to_string(fi) + " has an out-of-range vertex index",
                                     {fi}});
            indices_ok = false;
        } else if (f[0] == f[1] || f[1] == f[2] || f[2] == f[0]) {
            report.issues.push_back({ValidationIssue::Code::DuplicateVertexInFace,
                                     "face " + std::to_string(fi) + " repeats a vertex index",
                                     {fi}});
            indices_ok = false;
        }
    }
    if (!indices_ok) return report;  // topology below assumes sane indices

    const auto adj = detail::collect_edge_adjacency(shape);
    std::vector<int> open_edges;
    for (int ei = 0; ei < static_cast<int>(adj.size()); ++ei) {
        const auto& e = adj[ei];
        const int total = static_cast<int>(e.fwd.size() + e.rev.size());
        if (e.fwd.size() > 1 || e.rev.size() > 1) {
            // same traversal direction twice: some face is wound against its
            // neighbors; cite the faces involved
            std::vector<int> faces;
            faces.insert(faces.end(), e.fwd.begin(), e.fwd.end());
            faces.insert(faces.end(), e.rev.begin(), e.rev.end());
            report.issues.push_back({ValidationIssue::Code::InconsistentWinding,
                                     "edge (" + std::to_string(e.a) + "," + std::to_string(e.b) +
                                         ") traversed twice in the same direction",
                                     faces});
        } else if (total != 2) {
            report.issues.push_back({ValidationIssue::Code::OpenEdge,
                                     "edge (" + std::to_string(e.a) + "," + std::to_string(e.b) +
                                         ") has " + std::to_string(total) + " adjacent faces",
                                     {ei}});
            open_edges.push_back(ei);
        }
    }

    const int euler = shape.vertex_count() - static_cast<int>(adj.size()) + shape.face_count();
    if (euler != 2) {
        report.issues.push_back({ValidationIssue::Code::EulerCharacteristic,
                                 "Euler characteristic V-E+F = " + std::to_string(euler) +
                                     ", expected 2",
                                 {}});
    }

    if (signed_volume(shape) <= 0.0) {
        report.issues.push_back({ValidationIssue::Code::NegativeVolume,
                                 "signed volume is non-positive; winding is not outward", {}});
    }

    double max_r2 = 0.0;
    for (const auto& v : shape.vertices) max_r2 = std::max(max_r2, v.squaredNorm());
    const double radius = std::sqrt(max_r2);
    if (!shape.vertices.empty() && (radius < 0.1 || radius > 100.0)) {
        ValidationIssue issue{ValidationIssue::Code::RadiusOutOfRange,
                              "circumscribing radius " + std::to_string(radius) +
                                  " km is outside [0.1, 100] km; check the unit convention",
                              {}};
        issue.warning = true;
        report.issues.push_back(issue);
    }
    return report;
}

/// Builds the unique-edge table with both adjacent faces and traversal
/// directions. Requires a valid (watertight, consistently wound) mesh.
inline void build_edge_topology(ShapeModel& shape) {
    const auto adj = detail::collect_edge_adjacency(shape);
    shape.edges.clear();
    shape.edges.reserve(adj.size());
    for (const auto& e : adj) {
        if (e.fwd.size() != 1 || e.rev.size() != 1) {
            throw TopologyError("edge (" + std::to_string(e.a) + "," + std::to_string(e.b) +
                                ") is not shared by exactly two opposingly wound faces");
        }
        shape.edges.push_back({e.a, e.b, e.fwd[0], e.rev[0]});
    }
}

/// Validates and indexes a raw vertex/face soup in place.
inline void finalize_shape(ShapeModel& shape) {
    const auto report = validate_shape(shape);
    if (!report.ok()) {
        throw TopologyError("shape model failed validation:\n" + report.summary());
    }
    build_edge_topology(shape);
}

enum class ShapeFormat {
    Obj,          // ASCII OBJ, `v`/`f` records
    VertexFaceTables,  // whitespace-delimited vertex and 1-based face index tables
};

/// Reads an ASCII OBJ (v/f records only; polygonal faces rejected) without
/// validating or indexing the topology. `unit_scale` multiplies coordinates
/// into km.
inline ShapeModel read_obj_raw(const std::string& path, double unit_scale = 1.0) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open shape file: " + path);
    ShapeModel shape;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z)) {
                throw ParseError(path + ":" + std::to_string(lineno) + ": malformed vertex record");
            }
            shape.vertices.push_back(unit_scale * Vec3(x, y, z));
        } else if (tag == "f") {
            std::array<int, 3> idx{};
            int count = 0;
            std::string tok;
            while (ls >> tok) {
                if (count >= 3) {
                    throw ParseError(path + ":" + std::to_string(lineno) +
                                     ": non-triangular face (only triangle meshes are supported)");
                }
                // accept v, v/vt, v/vt/vn, v//vn
                const auto slash = tok.find('/');
                const std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
                try {
                    idx[count] = std::stoi(head);
                } catch (const std::exception&) {
                    throw ParseError(path + ":" + std::to_string(lineno) + ": malformed face record");
                }
                // OBJ indices are 1-based; negative indices count from the end
                if (idx[count] < 0) idx[count] += static_cast<int>(shape.vertices.size());
                else idx[count] -= 1;
                ++count;
            }
            if (count != 3) {
                throw ParseError(path + ":" + std::to_string(lineno) + ": face with fewer than 3 vertices");
            }
            shape.faces.push_back(idx);
        }
        // other record types (vn, vt, comments, groups) are ignored
    }
    if (shape.faces.empty()) throw ParseError(path + ": no faces found");
    return shape;
}

/// Loads and validates an ASCII OBJ shape model.
inline ShapeModel load_obj(const std::string& path, double unit_scale = 1.0) {
    ShapeModel shape = read_obj_raw(path, unit_scale);
    finalize_shape(shape);
    return shape;
}

/// Reads the radar shape-model convention without validation: one
/// whitespace-delimited vertex table (x y z per line, km) and one face table
/// (i j k per line, 1-based).
inline ShapeModel read_vertex_face_tables_raw(const std::string& vertex_path,
                                              const std::string& face_path,
                                              double unit_scale = 1.0) {
    ShapeModel shape;
    {
        std::ifstream in(vertex_path);
        if (!in) throw IoError("cannot open vertex table: " + vertex_path);
        double x, y, z;
        while (in >> x >> y >> z) shape.vertices.push_back(unit_scale * Vec3(x, y, z));
        if (!in.eof()) throw ParseError(vertex_path + ": malformed vertex table");
    }
    {
        std::ifstream in(face_path);
        if (!in) throw IoError("cannot open face table: " + face_path);
        long long i, j, k;
        while (in >> i >> j >> k) {
            shape.faces.push_back({static_cast<int>(i - 1), static_cast<int>(j - 1),
                                   static_cast<int>(k - 1)});
        }
        if (!in.eof()) throw ParseError(face_path + ": malformed face table");
    }
    if (shape.faces.empty()) throw ParseError(face_path + ": no faces found");
    return shape;
}

/// Loads and validates a vertex/face table pair.
inline ShapeModel load_vertex_face_tables(const std::string& vertex_path,
                                          const std::string& face_path,
                                          double unit_scale = 1.0) {
    ShapeModel shape = read_vertex_face_tables_raw(vertex_path, face_path, unit_scale);
    finalize_shape(shape);
    return shape;
}

/// Writes an ASCII OBJ; used by the model generator and tests.
inline void save_obj(const ShapeModel& shape, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write shape file: " + path);
    out.precision(17);
    for (const auto& v : shape.vertices) out << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
    for (const auto& f : shape.faces)
        out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
    if (!out) throw IoError("failed writing shape file: " + path);
}

}  // namespace smallbody
