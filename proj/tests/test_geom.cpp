// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "matforge/core/errors.h"
#include "matforge/geom/camera.h"
#include "matforge/geom/gbuffer.h"
#include "matforge/geom/mesh.h"
#include "test_util.h"

using namespace matforge;
using namespace matforge::geom;
using testutil::make_cube_mesh;
using testutil::make_quad_mesh;

namespace {

std::string obj_text(const TriMesh& m) {
    std::ostringstream os;
    for (const Vec3& v : m.vertices) os << "v " << v.x << " " << v.y << " " << v.z << "\n";
    for (const Vec2& t : m.uvs) os << "vt " << t.x << " " << t.y << "\n";
    for (const Vec3& n : m.normals) os << "vn " << n.x << " " << n.y << " " << n.z << "\n";
    for (const Face& f : m.faces) {
        os << "f";
        for (const FaceCorner& c : f)
            os << " " << c.position + 1 << "/" << c.uv + 1 << "/" << c.normal + 1;
        os << "\n";
    }
    return os.str();
}

const char* kTriangleObj =
    "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
    "vt 0 0\nvt 1 0\nvt 0 1\n"
    "vn 0 0 1\n"
    "f 1/1/1 2/2/1 3/3/1\n";

TriMesh random_triangle_mesh(Rng& rng, int tri_count) {
    TriMesh m;
    for (int t = 0; t < tri_count; ++t) {
        int base = int(m.vertices.size());
        Vec3 a{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        Vec3 b{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        Vec3 c{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        Vec3 n = normalize(cross(b - a, c - a));
        if (!std::isfinite(n.x)) n = {0, 0, 1};
        m.vertices.insert(m.vertices.end(), {a, b, c});
        m.normals.push_back(n);
        m.uvs.push_back({rng.uniform(0, 1), rng.uniform(0, 1)});
        Face f;
        for (int i = 0; i < 3; ++i) f[i] = FaceCorner{base + i, int(m.uvs.size()) - 1, t};
        m.faces.push_back(f);
    }
    return m;
}

bool gbuffers_identical(const GBuffer& a, const GBuffer& b) {
    if (a.width != b.width || a.height != b.height) return false;
    if (a.mask.pixels != b.mask.pixels) return false;
    if (a.depth.pixels != b.depth.pixels) return false;
    for (size_t i = 0; i < a.normal.pixels.size(); ++i) {
        if (a.normal.pixels[i].x != b.normal.pixels[i].x ||
            a.normal.pixels[i].y != b.normal.pixels[i].y ||
            a.normal.pixels[i].z != b.normal.pixels[i].z)
            return false;
        if (a.position.pixels[i].x != b.position.pixels[i].x ||
            a.position.pixels[i].y != b.position.pixels[i].y ||
            a.position.pixels[i].z != b.position.pixels[i].z)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("parse_obj reads a v/vt/vn triangle") {
    TriMesh m = parse_obj(kTriangleObj);
    CHECK(m.vertices.size() == 3);
    CHECK(m.faces.size() == 1);
    CHECK(m.uvs.size() == 3);
    CHECK(m.normals.size() == 1);
}

TEST_CASE("parse_obj rejects zero face indices") {
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nvt 0 0\nvn 0 0 1\nf 0/1/1 1/1/1 1/1/1\n"),
                    ParseError);
}

TEST_CASE("parse_obj rejects out-of-range indices") {
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nvt 0 0\nvn 0 0 1\nf 1/1/1 2/1/1 1/1/1\n"),
                    DataError);
}

TEST_CASE("parse_obj requires uv and normal on every corner") {
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"), DataError);
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 3/1\n"),
                    DataError);
}

TEST_CASE("parse_obj normalizes cube into the unit box") {
    TriMesh cube = make_cube_mesh();
    for (Vec3& v : cube.vertices) v = v * 3.5 + Vec3{10, -2, 4};  // denormalized copy
    TriMesh m = parse_obj(obj_text(cube));
    CHECK(m.vertices.size() == 8);
    CHECK(m.faces.size() == 12);
    Vec3 lo{1e30, 1e30, 1e30}, hi{-1e30, -1e30, -1e30};
    for (const Vec3& v : m.vertices) {
        lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
        hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
    }
    CHECK(lo.x == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(lo.y == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(lo.z == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(hi.x == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(hi.y == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(hi.z == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("parse_obj renormalizes normals and counts unknown directives") {
    ObjWarnings w;
    TriMesh m = parse_obj(
        "o thing\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 5\n"
        "usemtl stuff\nf 1/1/1 2/1/1 3/1/1\n",
        &w);
    CHECK(w.skipped_directives == 2);
    CHECK(length(m.normals[0]) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("parse_obj rejects UVs outside the unit square") {
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 1.5\nvn 0 0 1\n"
                              "f 1/1/1 2/1/1 3/1/1\n"),
                    DataError);
}

TEST_CASE("load_mesh reads from disk") {
    std::string dir = testutil::scratch_dir("geom_load");
    std::string path = dir + "/tri.obj";
    std::ofstream(path) << kTriangleObj;
    TriMesh m = load_mesh(path);
    CHECK(m.faces.size() == 1);
    CHECK_THROWS_AS(load_mesh(dir + "/missing.obj"), DataError);
}

TEST_CASE("camera_ring places a single view on +z at the radius") {
    auto cams = camera_ring(1, 3.0, 0.0, 64, 64);
    REQUIRE(cams.size() == 1);
    CHECK(length(cams[0].eye) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(cams[0].eye.z == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(std::abs(cams[0].eye.x) < 1e-12);
    CHECK(length(cams[0].target) < 1e-12);
}

TEST_CASE("camera_ring of four has antipodal azimuth pairs") {
    auto cams = camera_ring(4, 3.0, 0.3, 64, 64);
    REQUIRE(cams.size() == 4);
    for (int k : {0, 1}) {
        const Vec3& a = cams[k].eye;
        const Vec3& b = cams[k + 2].eye;
        CHECK(a.x == doctest::Approx(-b.x).epsilon(1e-9));
        CHECK(a.z == doctest::Approx(-b.z).epsilon(1e-9));
        CHECK(a.y == doctest::Approx(b.y).epsilon(1e-9));
    }
}

TEST_CASE("camera_ring of twelve spaces azimuths thirty degrees apart") {
    auto cams = camera_ring(12, 3.0, 0.0, 64, 64);
    REQUIRE(cams.size() == 12);
    for (int k = 0; k < 12; ++k) {
        const Vec3& a = cams[k].eye;
        const Vec3& b = cams[(k + 1) % 12].eye;
        double cosang = (a.x * b.x + a.z * b.z) /
                        (std::hypot(a.x, a.z) * std::hypot(b.x, b.z));
        CHECK(cosang == doctest::Approx(std::cos(M_PI / 6.0)).epsilon(1e-9));
    }
}

TEST_CASE("camera projects the origin to the image center") {
    Camera cam;
    cam.width = 128;
    cam.height = 128;
    Vec2 pix;
    double depth = 0.0;
    REQUIRE(cam.project({0, 0, 0}, pix, depth));
    CHECK(pix.x == doctest::Approx(64.0).epsilon(1e-9));
    CHECK(pix.y == doctest::Approx(64.0).epsilon(1e-9));
    CHECK(depth == doctest::Approx(3.0).epsilon(1e-12));
    CHECK_FALSE(cam.project({0, 0, 5}, pix, depth));  // behind the near plane
}

TEST_CASE("rasterize_gbuffer covers a facing triangle at the center") {
    TriMesh m;
    m.vertices = {{-1, -1, 0}, {1, -1, 0}, {0, 1, 0}};
    m.normals = {{0, 0, 1}};
    m.uvs = {{0.5, 0.5}};
    m.faces.push_back(Face{FaceCorner{0, 0, 0}, FaceCorner{1, 0, 0}, FaceCorner{2, 0, 0}});
    Camera cam;
    cam.width = 64;
    cam.height = 64;
    GBuffer g = rasterize_gbuffer(m, cam);
    REQUIRE(g.covered(32, 32));
    Vec3 n = g.normal.at(32, 32);
    CHECK(n.x == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(n.y == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(n.z == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(g.depth.at(32, 32) == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(g.eye.z == doctest::Approx(3.0));
}

TEST_CASE("rasterize_gbuffer of an empty mesh covers nothing") {
    GBuffer g = rasterize_gbuffer(TriMesh{}, Camera{});
    CHECK(g.covered_count() == 0);
    for (const Vec3& n : g.normal.pixels) CHECK(length(n) == 0.0);
}

TEST_CASE("rasterize_gbuffer keeps the nearer of two overlapping triangles") {
    TriMesh m;
    auto add_tri = [&](double z, const Vec3& n) {
        int base = int(m.vertices.size());
        m.vertices.insert(m.vertices.end(),
                          {Vec3{-1, -1, z}, Vec3{1, -1, z}, Vec3{0, 1, z}});
        m.normals.push_back(n);
        m.uvs.push_back({0.5, 0.5});
        int ni = int(m.normals.size()) - 1;
        m.faces.push_back(
            Face{FaceCorner{base, ni, ni}, FaceCorner{base + 1, ni, ni},
                 FaceCorner{base + 2, ni, ni}});
    };
    add_tri(-0.5, {0, 0, 1});  // farther from the +z camera
    add_tri(0.5, {0, 0, 1});   // nearer
    Camera cam;
    cam.width = 32;
    cam.height = 32;
    GBuffer g = rasterize_gbuffer(m, cam);
    REQUIRE(g.covered(16, 16));
    CHECK(g.position.at(16, 16).z == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(g.depth.at(16, 16) == doctest::Approx(2.5).epsilon(1e-6));
}

TEST_CASE("rasterize_gbuffer culls back-facing surfaces") {
    TriMesh m;
    m.vertices = {{-1, -1, 0}, {1, -1, 0}, {0, 1, 0}};
    m.normals = {{0, 0, -1}};  // away from the +z camera
    m.uvs = {{0.5, 0.5}};
    m.faces.push_back(Face{FaceCorner{0, 0, 0}, FaceCorner{1, 0, 0}, FaceCorner{2, 0, 0}});
    Camera cam;
    cam.width = 32;
    cam.height = 32;
    GBuffer g = rasterize_gbuffer(m, cam);
    CHECK(g.covered_count() == 0);
}

TEST_CASE("rasterize_gbuffer depth test matches per-triangle rasterization") {
    Rng rng(42, 5);
    Camera cam;
    cam.width = 48;
    cam.height = 48;
    for (int scene = 0; scene < 40; ++scene) {
        TriMesh pair = random_triangle_mesh(rng, 2);
        TriMesh first, second;
        first.vertices = {pair.vertices.begin(), pair.vertices.begin() + 3};
        first.normals = {pair.normals[0]};
        first.uvs = {pair.uvs[0]};
        first.faces = {pair.faces[0]};
        second.vertices = {pair.vertices.begin() + 3, pair.vertices.end()};
        second.normals = {pair.normals[1]};
        second.uvs = {pair.uvs[1]};
        Face f1 = pair.faces[1];
        for (FaceCorner& c : f1) {
            c.position -= 3;
            c.uv -= 1;
            c.normal -= 1;
        }
        second.faces = {f1};

        GBuffer g = rasterize_gbuffer(pair, cam);
        GBuffer ga = rasterize_gbuffer(first, cam);
        GBuffer gb = rasterize_gbuffer(second, cam);
        for (int y = 0; y < cam.height; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                bool ca = ga.covered(x, y), cb = gb.covered(x, y);
                REQUIRE(g.covered(x, y) == (ca || cb));
                if (!(ca || cb)) continue;
                const GBuffer& winner =
                    (!cb || (ca && ga.depth.at(x, y) <= gb.depth.at(x, y))) ? ga : gb;
                REQUIRE(g.depth.at(x, y) == winner.depth.at(x, y));
                REQUIRE(g.position.at(x, y).x == winner.position.at(x, y).x);
            }
        }
    }
}

TEST_CASE("rasterize_gbuffer interpolates flat normals exactly") {
    Rng rng(7, 9);
    Camera cam;
    cam.width = 48;
    cam.height = 48;
    for (int scene = 0; scene < 10; ++scene) {
        TriMesh m = random_triangle_mesh(rng, 1);
        GBuffer g = rasterize_gbuffer(m, cam);
        for (int y = 0; y < cam.height; ++y)
            for (int x = 0; x < cam.width; ++x)
                if (g.covered(x, y)) {
                    Vec3 n = g.normal.at(x, y);
                    Vec3 want = m.normals[0];
                    CHECK(std::abs(n.x - want.x) < 1e-4);
                    CHECK(std::abs(n.y - want.y) < 1e-4);
                    CHECK(std::abs(n.z - want.z) < 1e-4);
                }
    }
}

TEST_CASE("rasterize_gbuffer coverage grows monotonically with geometry") {
    Rng rng(19, 3);
    Camera cam;
    cam.width = 40;
    cam.height = 40;
    for (int scene = 0; scene < 30; ++scene) {
        TriMesh small = random_triangle_mesh(rng, 2);
        TriMesh big = small;
        TriMesh extra = random_triangle_mesh(rng, 1);
        int vbase = int(big.vertices.size());
        int nbase = int(big.normals.size());
        int tbase = int(big.uvs.size());
        big.vertices.insert(big.vertices.end(), extra.vertices.begin(), extra.vertices.end());
        big.normals.insert(big.normals.end(), extra.normals.begin(), extra.normals.end());
        big.uvs.insert(big.uvs.end(), extra.uvs.begin(), extra.uvs.end());
        for (Face f : extra.faces) {
            for (FaceCorner& c : f) {
                c.position += vbase;
                c.uv += tbase;
                c.normal += nbase;
            }
            big.faces.push_back(f);
        }
        GBuffer gs = rasterize_gbuffer(small, cam);
        GBuffer gb = rasterize_gbuffer(big, cam);
        for (size_t i = 0; i < gs.mask.pixels.size(); ++i)
            if (gs.mask.pixels[i]) REQUIRE(gb.mask.pixels[i]);
    }
}

TEST_CASE("rasterize_gbuffer is bit-identical across runs and thread counts") {
    TriMesh cube = make_cube_mesh();
    auto cams = camera_ring(2, 3.0, 0.35, 96, 96);
    GBuffer base = rasterize_gbuffer(cube, cams[0]);

    CHECK(gbuffers_identical(base, rasterize_gbuffer(cube, cams[0])));

    setenv("MATFORGE_THREADS", "1", 1);
    GBuffer one = rasterize_gbuffer(cube, cams[0]);
    setenv("MATFORGE_THREADS", "4", 1);
    GBuffer four = rasterize_gbuffer(cube, cams[0]);
    unsetenv("MATFORGE_THREADS");
    CHECK(gbuffers_identical(one, four));
    CHECK(gbuffers_identical(base, one));
}

TEST_CASE("rasterize_uv_gbuffer covers the whole atlas for a full quad") {
    TriMesh quad = make_quad_mesh();
    GBuffer g = rasterize_uv_gbuffer(quad, 64, 64);
    CHECK(g.covered_count() == 64u * 64u);
    // uv v=0 sits on the bottom image row; positions follow the chart linearly
    int x = 20, y = 11;
    double u = (x + 0.5) / 64.0;
    double v = 1.0 - (y + 0.5) / 64.0;
    Vec3 p = g.position.at(x, y);
    CHECK(p.x == doctest::Approx(2 * u - 1).epsilon(1e-9));
    CHECK(p.y == doctest::Approx(2 * v - 1).epsilon(1e-9));
    Vec3 n = g.normal.at(x, y);
    CHECK(n.z == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("rasterize_uv_gbuffer covers a quarter chart with a one-texel ring") {
    TriMesh quad = make_quad_mesh();
    for (Vec2& t : quad.uvs) t = t * 0.5;
    GBuffer g = rasterize_uv_gbuffer(quad, 64, 64);
    double frac = double(g.covered_count()) / (64.0 * 64.0);
    CHECK(std::abs(double(g.covered_count()) - 0.25 * 64 * 64) <= 4.0 * 33.0);
    CHECK(frac > 0.2);
    CHECK(frac < 0.3);
}

TEST_CASE("rasterize_uv_gbuffer of an empty mesh covers nothing") {
    GBuffer g = rasterize_uv_gbuffer(TriMesh{}, 32, 32);
    CHECK(g.covered_count() == 0);
}

TEST_CASE("rasterize_uv_gbuffer resolves chart overlap first-face-wins") {
    TriMesh two = make_quad_mesh();  // quad at z=0 owns the chart
    TriMesh back = make_quad_mesh();
    for (Vec3& v : back.vertices) v.z = 0.5;
    int vbase = int(two.vertices.size());
    int tbase = int(two.uvs.size());
    int nbase = int(two.normals.size());
    two.vertices.insert(two.vertices.end(), back.vertices.begin(), back.vertices.end());
    two.uvs.insert(two.uvs.end(), back.uvs.begin(), back.uvs.end());
    two.normals.insert(two.normals.end(), back.normals.begin(), back.normals.end());
    for (Face f : back.faces) {
        for (FaceCorner& c : f) {
            c.position += vbase;
            c.uv += tbase;
            c.normal += nbase;
        }
        two.faces.push_back(f);
    }
    GBuffer g = rasterize_uv_gbuffer(two, 32, 32);
    CHECK(g.uv_overlap_count > 0);
    CHECK(g.position.at(16, 16).z == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rasterize_uv_gbuffer is deterministic across thread counts") {
    TriMesh cube = make_cube_mesh();
    setenv("MATFORGE_THREADS", "1", 1);
    GBuffer one = rasterize_uv_gbuffer(cube, 128, 128);
    setenv("MATFORGE_THREADS", "4", 1);
    GBuffer four = rasterize_uv_gbuffer(cube, 128, 128);
    unsetenv("MATFORGE_THREADS");
    CHECK(gbuffers_identical(one, four));
    CHECK(one.covered_count() > 0);
}
