// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "matforge/geom/gbuffer.h"

#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "matforge/core/parallel.h"

namespace matforge::geom {

namespace {

struct Vertex {
    Vec3 view;  // camera-frame position (only used pre-projection)
    Vec3 world;
    Vec3 normal;
    Vec2 uv;
};

struct ScreenVertex {
    Vec2 screen;
    double depth = 0.0;  // positive view depth; 1.0 for UV-space rasterization
    Vec3 world;
    Vec3 normal;
    Vec2 uv;
};

struct ScreenTriangle {
    ScreenVertex v[3];
    int ymin = 0, ymax = -1;  // inclusive pixel-row span
    int xmin = 0, xmax = -1;
};

double orient2d(const Vec2& a, const Vec2& b, const Vec2& c) {
    return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

// With positive orient2d area (screen y down): a top edge is horizontal and
// runs +x, a left edge runs -y.
bool edge_is_top_left(const Vec2& a, const Vec2& b) {
    double ex = b.x - a.x;
    double ey = b.y - a.y;
    return (ey == 0.0 && ex > 0.0) || ey < 0.0;
}

bool inside_edge(double w, const Vec2& a, const Vec2& b) {
    return w > 0.0 || (w == 0.0 && edge_is_top_left(a, b));
}

void finish_bounds(ScreenTriangle& tri, int width, int height) {
    double xmin = tri.v[0].screen.x, xmax = xmin;
    double ymin = tri.v[0].screen.y, ymax = ymin;
    for (int i = 1; i < 3; ++i) {
        xmin = std::min(xmin, tri.v[i].screen.x);
        xmax = std::max(xmax, tri.v[i].screen.x);
        ymin = std::min(ymin, tri.v[i].screen.y);
        ymax = std::max(ymax, tri.v[i].screen.y);
    }
    // Pixel centers sit at half-integers.
    tri.xmin = std::max(0, int(std::floor(xmin - 0.5)));
    tri.xmax = std::min(width - 1, int(std::ceil(xmax - 0.5)));
    tri.ymin = std::max(0, int(std::floor(ymin - 0.5)));
    tri.ymax = std::min(height - 1, int(std::ceil(ymax - 0.5)));
}

// Ensures positive signed area; returns false for degenerate triangles.
bool orient_triangle(ScreenTriangle& tri) {
    double area = orient2d(tri.v[0].screen, tri.v[1].screen, tri.v[2].screen);
    if (area == 0.0 || !std::isfinite(area)) return false;
    if (area < 0.0) std::swap(tri.v[1], tri.v[2]);
    return true;
}

// Clips the triangle against view depth >= near. Appends 0-2 triangles.
void clip_near(const Vertex (&in)[3], double near_plane,
               std::vector<std::array<Vertex, 3>>& out) {
    Vertex poly[4];
    int count = 0;
    auto depth_of = [](const Vertex& v) { return -v.view.z; };
    for (int i = 0; i < 3; ++i) {
        const Vertex& a = in[i];
        const Vertex& b = in[(i + 1) % 3];
        double da = depth_of(a), db = depth_of(b);
        bool ina = da >= near_plane, inb = db >= near_plane;
        if (ina) poly[count++] = a;
        if (ina != inb) {
            double t = (near_plane - da) / (db - da);
            Vertex m;
            m.view = lerp(a.view, b.view, t);
            m.world = lerp(a.world, b.world, t);
            m.normal = lerp(a.normal, b.normal, t);
            m.uv = {a.uv.x + (b.uv.x - a.uv.x) * t, a.uv.y + (b.uv.y - a.uv.y) * t};
            poly[count++] = m;
        }
    }
    for (int i = 2; i < count; ++i) {
        out.push_back({poly[0], poly[i - 1], poly[i]});
    }
}

}  // namespace

GBuffer rasterize_gbuffer(const TriMesh& mesh, const Camera& camera) {
    camera.validate();
    GBuffer g = GBuffer::make(camera.width, camera.height);
    g.eye = camera.eye;
    if (mesh.empty()) return g;

    Vec3 right, upv, back;
    camera.basis(right, upv, back);
    double sy = 1.0 / std::tan(camera.vertical_fov * 0.5);
    double sx = sy * double(camera.height) / double(camera.width);

    // Transform + clip + project every face up front; per-row rasterization
    // walks the resulting list in face order.
    std::vector<std::array<Vertex, 3>> clipped;
    clipped.reserve(mesh.faces.size());
    for (const Face& face : mesh.faces) {
        Vertex tri[3];
        for (int i = 0; i < 3; ++i) {
            const FaceCorner& c = face[i];
            Vec3 world = mesh.vertices[c.position];
            Vec3 d = world - camera.eye;
            tri[i].view = {dot(d, right), dot(d, upv), dot(d, back)};
            tri[i].world = world;
            tri[i].normal = mesh.normals[c.normal];
            tri[i].uv = mesh.uvs[c.uv];
        }
        clip_near(tri, camera.near_plane, clipped);
    }

    std::vector<ScreenTriangle> tris;
    tris.reserve(clipped.size());
    for (const auto& c : clipped) {
        ScreenTriangle tri;
        for (int i = 0; i < 3; ++i) {
            const Vertex& v = c[i];
            double depth = -v.view.z;
            tri.v[i].screen = {(sx * v.view.x / depth + 1.0) * 0.5 * camera.width,
                               (1.0 - sy * v.view.y / depth) * 0.5 * camera.height};
            tri.v[i].depth = depth;
            tri.v[i].world = v.world;
            tri.v[i].normal = v.normal;
            tri.v[i].uv = v.uv;
        }
        if (!orient_triangle(tri)) continue;
        finish_bounds(tri, camera.width, camera.height);
        if (tri.ymin > tri.ymax || tri.xmin > tri.xmax) continue;
        tris.push_back(tri);
    }

    Image1 zbuf(camera.width, camera.height, std::numeric_limits<double>::infinity());
    const Vec3 eye = camera.eye;
    parallel_for_rows(camera.height, [&](int64_t y) {
        double py = double(y) + 0.5;
        for (const ScreenTriangle& tri : tris) {
            if (y < tri.ymin || y > tri.ymax) continue;
            const Vec2 s0 = tri.v[0].screen, s1 = tri.v[1].screen, s2 = tri.v[2].screen;
            double area = orient2d(s0, s1, s2);
            for (int x = tri.xmin; x <= tri.xmax; ++x) {
                Vec2 p{double(x) + 0.5, py};
                double w0 = orient2d(s1, s2, p);
                double w1 = orient2d(s2, s0, p);
                double w2 = orient2d(s0, s1, p);
                if (!inside_edge(w0, s1, s2) || !inside_edge(w1, s2, s0) ||
                    !inside_edge(w2, s0, s1)) {
                    continue;
                }
                double l0 = w0 / area, l1 = w1 / area, l2 = w2 / area;
                double inv_d = l0 / tri.v[0].depth + l1 / tri.v[1].depth + l2 / tri.v[2].depth;
                if (!(inv_d > 0.0)) continue;
                double depth = 1.0 / inv_d;
                if (depth < camera.near_plane || depth > camera.far_plane) continue;
                if (!(depth < zbuf.at(x, int(y)))) continue;

                double c0 = l0 / tri.v[0].depth * depth;
                double c1 = l1 / tri.v[1].depth * depth;
                double c2 = l2 / tri.v[2].depth * depth;
                Vec3 normal = tri.v[0].normal * c0 + tri.v[1].normal * c1 + tri.v[2].normal * c2;
                double nlen = length(normal);
                if (!(nlen > 1e-12)) continue;
                normal = normal / nlen;
                Vec3 world = tri.v[0].world * c0 + tri.v[1].world * c1 + tri.v[2].world * c2;
                if (dot(normal, world - eye) >= 0.0) continue;  // back-facing

                zbuf.at(x, int(y)) = depth;
                g.normal.at(x, int(y)) = normal;
                g.position.at(x, int(y)) = world;
                g.uv.at(x, int(y)) = {tri.v[0].uv.x * c0 + tri.v[1].uv.x * c1 + tri.v[2].uv.x * c2,
                                      tri.v[0].uv.y * c0 + tri.v[1].uv.y * c1 + tri.v[2].uv.y * c2};
                g.depth.at(x, int(y)) = depth;
                g.mask.at(x, int(y)) = 1;
            }
        }
    });
    return g;
}

GBuffer rasterize_uv_gbuffer(const TriMesh& mesh, int width, int height) {
    GBuffer g = GBuffer::make(width, height);
    if (mesh.empty()) return g;

    std::vector<ScreenTriangle> tris;
    tris.reserve(mesh.faces.size());
    for (const Face& face : mesh.faces) {
        ScreenTriangle tri;
        for (int i = 0; i < 3; ++i) {
            const FaceCorner& c = face[i];
            Vec2 uv = mesh.uvs[c.uv];
            // v = 0 maps to the bottom image row.
            tri.v[i].screen = {uv.x * width, (1.0 - uv.y) * height};
            tri.v[i].depth = 1.0;
            tri.v[i].world = mesh.vertices[c.position];
            tri.v[i].normal = mesh.normals[c.normal];
            tri.v[i].uv = uv;
        }
        if (!orient_triangle(tri)) continue;
        finish_bounds(tri, width, height);
        if (tri.ymin > tri.ymax || tri.xmin > tri.xmax) continue;
        tris.push_back(tri);
    }

    std::atomic<int> overlaps{0};
    parallel_for_rows(height, [&](int64_t y) {
        double py = double(y) + 0.5;
        int row_overlaps = 0;
        for (const ScreenTriangle& tri : tris) {
            if (y < tri.ymin || y > tri.ymax) continue;
            const Vec2 s0 = tri.v[0].screen, s1 = tri.v[1].screen, s2 = tri.v[2].screen;
            double area = orient2d(s0, s1, s2);
            for (int x = tri.xmin; x <= tri.xmax; ++x) {
                Vec2 p{double(x) + 0.5, py};
                double w0 = orient2d(s1, s2, p);
                double w1 = orient2d(s2, s0, p);
                double w2 = orient2d(s0, s1, p);
                if (!inside_edge(w0, s1, s2) || !inside_edge(w1, s2, s0) ||
                    !inside_edge(w2, s0, s1)) {
                    continue;
                }
                if (g.mask.at(x, int(y))) {
                    ++row_overlaps;  // first face wins
                    continue;
                }
                double l0 = w0 / area, l1 = w1 / area, l2 = w2 / area;
                Vec3 normal =
                    tri.v[0].normal * l0 + tri.v[1].normal * l1 + tri.v[2].normal * l2;
                double nlen = length(normal);
                if (!(nlen > 1e-12)) continue;
                g.normal.at(x, int(y)) = normal / nlen;
                g.position.at(x, int(y)) =
                    tri.v[0].world * l0 + tri.v[1].world * l1 + tri.v[2].world * l2;
                g.uv.at(x, int(y)) = {
                    tri.v[0].uv.x * l0 + tri.v[1].uv.x * l1 + tri.v[2].uv.x * l2,
                    tri.v[0].uv.y * l0 + tri.v[1].uv.y * l1 + tri.v[2].uv.y * l2};
                g.mask.at(x, int(y)) = 1;
            }
        }
        if (row_overlaps) overlaps.fetch_add(row_overlaps, std::memory_order_relaxed);
    });
    g.uv_overlap_count = overlaps.load();
    return g;
}

}  // namespace matforge::geom
