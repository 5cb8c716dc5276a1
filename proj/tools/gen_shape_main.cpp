// Writes the bundled procedural asteroid shape model as an ASCII OBJ.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "smallbody/procgen.hpp"
#include "smallbody/shape_model.hpp"

int main(int argc, char** argv) {
    CLI::App app{"smallbody shape-model generator"};
    int faces = 1024;
    int lat = 0, lon = 0;
    double volume = 0.6443;
    std::string out = "asteroid.obj";
    app.add_option("--faces", faces, "face count preset: 4092 or 1024")
        ->check(CLI::IsMember({4092, 1024}));
    app.add_option("--lat", lat, "latitude rings (overrides --faces; requires --lon)");
    app.add_option("--lon", lon, "longitude steps (overrides --faces; requires --lat)");
    app.add_option("--volume", volume, "target volume, km^3")->check(CLI::PositiveNumber);
    app.add_option("-o,--out", out, "output OBJ path");
    CLI11_PARSE(app, argc, argv);

    try {
        smallbody::ShapeModel shape;
        if (lat > 0 && lon > 0) {
            shape = smallbody::make_reference_asteroid(lat, lon, volume);
        } else if (faces == 4092) {
            shape = smallbody::make_reference_asteroid(32, 66, volume);
        } else {
            shape = smallbody::make_reference_asteroid(17, 32, volume);
        }
        smallbody::save_obj(shape, out);
        std::printf("wrote %s: %d vertices, %d faces, volume %.6f km^3\n", out.c_str(),
                    shape.vertex_count(), shape.face_count(), smallbody::signed_volume(shape));
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
