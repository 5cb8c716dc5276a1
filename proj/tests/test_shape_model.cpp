#include <catch2/catch.hpp>

#include <cstdio>
#include <fstream>

#include "helpers.hpp"
#include "smallbody/procgen.hpp"
#include "smallbody/shape_model.hpp"

using namespace smallbody;

namespace {
std::string testdata(const std::string& name) {
    return std::string(SMALLBODY_TESTDATA_DIR) + "/" + name;
}
}  // namespace

TEST_CASE("tetrahedron topology satisfies the Euler identity") {
    const ShapeModel tetra = make_tetrahedron();
    REQUIRE(tetra.vertex_count() == 4);
    REQUIRE(tetra.face_count() == 4);
    REQUIRE(tetra.edge_count() == 6);
    CHECK(tetra.vertex_count() - tetra.edge_count() + tetra.face_count() == 2);
    CHECK(validate_shape(tetra).ok());
}

TEST_CASE("triangulated unit cube has 18 edges and unit volume") {
    const ShapeModel cube = make_cube(1.0);
    REQUIRE(cube.vertex_count() == 8);
    REQUIRE(cube.face_count() == 12);
    REQUIRE(cube.edge_count() == 18);
    CHECK(signed_volume(cube) == Approx(1.0).epsilon(1e-14));
    CHECK(centroid(cube).norm() < 1e-14);
}

TEST_CASE("procedural asteroid presets hit the published face counts") {
    const ShapeModel fine = make_reference_asteroid_4092();
    const ShapeModel coarse = make_reference_asteroid_1024();
    CHECK(fine.face_count() == 4092);
    CHECK(coarse.face_count() == 1024);
    CHECK(validate_shape(fine).ok());
    CHECK(validate_shape(coarse).ok());
    CHECK(signed_volume(fine) == Approx(0.6443).epsilon(1e-12));
    CHECK(signed_volume(coarse) == Approx(0.6443).epsilon(1e-12));
    CHECK(centroid(fine).norm() < 1e-12);
}

TEST_CASE("flipping one face is reported as a winding inconsistency") {
    ShapeModel tetra = make_tetrahedron();
    std::swap(tetra.faces[2][0], tetra.faces[2][1]);
    const auto report = validate_shape(tetra);
    REQUIRE_FALSE(report.ok());
    bool cites_face = false;
    for (const auto& issue : report.issues) {
        if (issue.code == ValidationIssue::Code::InconsistentWinding) {
            for (int el : issue.elements) cites_face = cites_face || el == 2;
        }
    }
    CHECK(cites_face);
}

TEST_CASE("deleting one cube face exposes three boundary edges") {
    ShapeModel cube = make_cube(1.0);
    cube.faces.pop_back();
    cube.edges.clear();
    const auto report = validate_shape(cube);
    REQUIRE_FALSE(report.ok());
    int open_edges = 0;
    for (const auto& issue : report.issues) {
        if (issue.code == ValidationIssue::Code::OpenEdge) ++open_edges;
    }
    CHECK(open_edges == 3);
}

TEST_CASE("area-weighted normals of a closed surface sum to zero") {
    for (const ShapeModel& shape : {make_cube(1.0), make_reference_asteroid_1024()}) {
        Vec3 sum = Vec3::Zero();
        double total_area = 0.0;
        for (const auto& f : shape.faces) {
            const Vec3 cross = (shape.vertices[f[1]] - shape.vertices[f[0]])
                                   .cross(shape.vertices[f[2]] - shape.vertices[f[1]]);
            sum += 0.5 * cross;
            total_area += 0.5 * cross.norm();
        }
        CHECK(sum.norm() < 1e-10 * total_area);
    }
}

TEST_CASE("OBJ loader round-trips and validates") {
    const ShapeModel cube = load_obj(testdata("cube.obj"));
    REQUIRE(cube.face_count() == 12);
    REQUIRE(cube.edge_count() == 18);
    CHECK(signed_volume(cube) == Approx(1.0));

    const std::string out = testdata("roundtrip.obj");
    save_obj(cube, out);
    const ShapeModel again = load_obj(out);
    REQUIRE(again.vertex_count() == cube.vertex_count());
    for (int i = 0; i < cube.vertex_count(); ++i) {
        CHECK((again.vertices[i] - cube.vertices[i]).norm() == 0.0);
    }
    std::remove(out.c_str());
}

TEST_CASE("OBJ loader rejects defects") {
    CHECK_THROWS_AS(load_obj(testdata("missing.obj")), IoError);
    CHECK_THROWS_AS(load_obj(testdata("broken.obj")), TopologyError);

    const std::string quad_path = testdata("quad.obj");
    {
        std::ofstream out(quad_path);
        out << "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
    }
    CHECK_THROWS_AS(load_obj(quad_path), ParseError);
    std::remove(quad_path.c_str());

    const std::string bad_vertex = testdata("badv.obj");
    {
        std::ofstream out(bad_vertex);
        out << "v 0 0\nf 1 1 1\n";
    }
    CHECK_THROWS_AS(load_obj(bad_vertex), ParseError);
    std::remove(bad_vertex.c_str());
}

TEST_CASE("vertex/face tables use the 1-based radar convention") {
    const ShapeModel tetra = make_tetrahedron();
    const std::string vpath = testdata("tetra_v.txt");
    const std::string fpath = testdata("tetra_f.txt");
    {
        std::ofstream v(vpath), f(fpath);
        v.precision(17);
        for (const auto& vert : tetra.vertices) {
            v << vert.x() << " " << vert.y() << " " << vert.z() << "\n";
        }
        for (const auto& face : tetra.faces) {
            f << face[0] + 1 << " " << face[1] + 1 << " " << face[2] + 1 << "\n";
        }
    }
    const ShapeModel loaded = load_vertex_face_tables(vpath, fpath);
    REQUIRE(loaded.face_count() == 4);
    CHECK(signed_volume(loaded) == Approx(signed_volume(tetra)));
    std::remove(vpath.c_str());
    std::remove(fpath.c_str());
}

TEST_CASE("out-of-range circumscribing radius is flagged as a warning") {
    const ShapeModel tiny = make_cube(0.01);
    const auto report = validate_shape(tiny);
    CHECK(report.ok());  // warnings do not fail validation
    bool warned = false;
    for (const auto& issue : report.issues) {
        warned = warned || issue.code == ValidationIssue::Code::RadiusOutOfRange;
    }
    CHECK(warned);
}
