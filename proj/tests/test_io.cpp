#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "boxfit/io.hpp"

using namespace boxfit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("boxfit_io_test_" + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

}  // namespace

TEST_CASE("xyz round trip, unlabeled and labeled") {
    TempDir dir;
    PointCloud cloud;
    cloud.points = {{0.5, -1.25, 3.0}, {1e-7, 2.0, -0.125}};

    fs::path plain = dir.path / "plain.xyz";
    write_xyz(plain, cloud);
    PointCloud back = read_point_cloud(plain);
    REQUIRE(back.size() == 2);
    CHECK_FALSE(back.has_labels());
    for (int i = 0; i < 2; ++i)
        for (int a = 0; a < 3; ++a)
            CHECK(back.points[i][a] == doctest::Approx(cloud.points[i][a]).epsilon(1e-12));

    cloud.labels = {3, 0};
    fs::path labeled = dir.path / "labeled.xyzl";
    write_xyz(labeled, cloud);
    back = read_point_cloud(labeled);
    REQUIRE(back.has_labels());
    CHECK(back.labels == cloud.labels);
}

TEST_CASE("xyz parsing errors") {
    TempDir dir;
    fs::path p = dir.path / "bad.xyz";

    write_text(p, "1 2\n");
    CHECK_THROWS_AS(read_xyz(p), IoError);

    write_text(p, "1 2 3\n4 5 6 7\n");  // mixed label presence
    CHECK_THROWS_AS(read_xyz(p), IoError);

    write_text(p, "1 2 zebra\n");
    CHECK_THROWS_AS(read_xyz(p), IoError);

    CHECK_THROWS_AS(read_xyz(dir.path / "missing.xyz"), IoError);
    CHECK_THROWS_AS(read_point_cloud(dir.path / "cloud.unknown"), IoError);
}

TEST_CASE("ascii ply") {
    TempDir dir;
    fs::path p = dir.path / "cloud.ply";
    write_text(p,
               "ply\n"
               "format ascii 1.0\n"
               "comment made by hand\n"
               "element vertex 3\n"
               "property float x\n"
               "property float y\n"
               "property float z\n"
               "end_header\n"
               "0 0 0\n"
               "1.5 -2 0.25\n"
               "3 3 3\n");
    PointCloud cloud = read_point_cloud(p);
    REQUIRE(cloud.size() == 3);
    CHECK(cloud.points[1].x == doctest::Approx(1.5));
    CHECK(cloud.points[1].y == doctest::Approx(-2.0));
    CHECK(cloud.points[2].z == doctest::Approx(3.0));
}

TEST_CASE("ascii ply with extra properties and faces") {
    TempDir dir;
    fs::path p = dir.path / "mesh.ply";
    write_text(p,
               "ply\n"
               "format ascii 1.0\n"
               "element vertex 2\n"
               "property float x\n"
               "property float y\n"
               "property float z\n"
               "property uchar red\n"
               "element face 1\n"
               "property list uchar int vertex_indices\n"
               "end_header\n"
               "1 2 3 255\n"
               "4 5 6 128\n"
               "3 0 1 0\n");
    PointCloud cloud = read_ply(p);
    REQUIRE(cloud.size() == 2);
    CHECK(cloud.points[0].z == doctest::Approx(3.0));
    CHECK(cloud.points[1].x == doctest::Approx(4.0));
}

TEST_CASE("binary little-endian ply") {
    TempDir dir;
    fs::path p = dir.path / "bin.ply";
    {
        std::ofstream out(p, std::ios::binary);
        out << "ply\nformat binary_little_endian 1.0\nelement vertex 2\n"
               "property float x\nproperty float y\nproperty float z\nend_header\n";
        float vals[6] = {1.0f, 2.0f, 3.0f, -4.5f, 0.0f, 9.25f};
        out.write(reinterpret_cast<const char*>(vals), sizeof(vals));
    }
    PointCloud cloud = read_ply(p);
    REQUIRE(cloud.size() == 2);
    CHECK(cloud.points[0].x == doctest::Approx(1.0));
    CHECK(cloud.points[1].x == doctest::Approx(-4.5));
    CHECK(cloud.points[1].z == doctest::Approx(9.25));
}

TEST_CASE("ply header errors") {
    TempDir dir;
    fs::path p = dir.path / "bad.ply";
    write_text(p, "not a ply\n");
    CHECK_THROWS_AS(read_ply(p), IoError);
    write_text(p, "ply\nformat binary_big_endian 1.0\nelement vertex 1\n"
                  "property float x\nproperty float y\nproperty float z\nend_header\n");
    CHECK_THROWS_AS(read_ply(p), IoError);
}

TEST_CASE("obj round trip") {
    TempDir dir;
    Mesh mesh;
    mesh.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    mesh.faces = {{0, 1, 2}, {0, 2, 3}};
    fs::path p = dir.path / "mesh.obj";
    write_obj(p, mesh);
    Mesh back = read_obj(p);
    REQUIRE(back.vertices.size() == 4);
    REQUIRE(back.faces.size() == 2);
    CHECK(back.faces[1] == std::array<int, 3>{0, 2, 3});
    for (int i = 0; i < 4; ++i)
        for (int a = 0; a < 3; ++a)
            CHECK(back.vertices[i][a] == doctest::Approx(mesh.vertices[i][a]).epsilon(1e-12));
}

TEST_CASE("obj quads triangulate to fans, negative indices resolve") {
    TempDir dir;
    fs::path p = dir.path / "quad.obj";
    write_text(p,
               "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
               "f 1 2 3 4\n"
               "f -4 -3 -2\n");
    Mesh mesh = read_obj(p);
    REQUIRE(mesh.faces.size() == 3);
    CHECK(mesh.faces[0] == std::array<int, 3>{0, 1, 2});
    CHECK(mesh.faces[1] == std::array<int, 3>{0, 2, 3});
    CHECK(mesh.faces[2] == std::array<int, 3>{0, 1, 2});
}

TEST_CASE("write_boxes_obj emits 12 triangles per box and named groups") {
    TempDir dir;
    std::vector<AABox> boxes = {{{0, 0, 0}, {2, 2, 2}}, {{4, 0, 0}, {1, 1, 1}}};
    fs::path p = dir.path / "boxes.obj";
    write_boxes_obj(p, boxes, {"seat", "leg"});

    Mesh mesh = read_obj(p);
    CHECK(mesh.vertices.size() == 16);
    CHECK(mesh.faces.size() == 24);

    std::ifstream in(p);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text.find("g seat") != std::string::npos);
    CHECK(text.find("g leg") != std::string::npos);

    // Vertices are exactly the box corners.
    for (const auto& b : boxes)
        for (int corner = 0; corner < 8; ++corner) {
            Point3 c{(corner & 1) ? b.max(0) : b.min(0), (corner & 2) ? b.max(1) : b.min(1),
                     (corner & 4) ? b.max(2) : b.min(2)};
            bool found = false;
            for (const auto& v : mesh.vertices) found = found || distance(v, c) < 1e-9;
            CHECK(found);
        }
}
