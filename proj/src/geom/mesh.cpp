// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "matforge/geom/mesh.h"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "matforge/core/errors.h"

namespace matforge::geom {

namespace {

bool parse_double(const std::string& tok, double& out) {
    try {
        size_t pos = 0;
        out = std::stod(tok, &pos);
        return pos == tok.size() && std::isfinite(out);
    } catch (const std::exception&) {
        return false;
    }
}

// "a/b/c" with all three fields present and 1-based.
FaceCorner parse_corner(const std::string& tok, size_t nv, size_t nt, size_t nn, int line) {
    int idx[3] = {0, 0, 0};
    size_t start = 0;
    for (int field = 0; field < 3; ++field) {
        size_t slash = tok.find('/', start);
        std::string part = tok.substr(start, slash == std::string::npos ? std::string::npos
                                                                        : slash - start);
        if (part.empty()) {
            throw ParseError("mesh lacks UV/normal attributes (face corner '" + tok +
                             "' must be v/vt/vn)", line);
        }
        try {
            size_t pos = 0;
            idx[field] = std::stoi(part, &pos);
            if (pos != part.size()) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw ParseError("bad face index '" + part + "'", line);
        }
        if (field < 2) {
            if (slash == std::string::npos) {
                throw ParseError("mesh lacks UV/normal attributes (face corner '" + tok +
                                 "' must be v/vt/vn)", line);
            }
            start = slash + 1;
        } else if (slash != std::string::npos) {
            throw ParseError("too many fields in face corner '" + tok + "'", line);
        }
    }
    size_t counts[3] = {nv, nt, nn};
    const char* names[3] = {"vertex", "uv", "normal"};
    FaceCorner corner;
    int* out[3] = {&corner.position, &corner.uv, &corner.normal};
    for (int field = 0; field < 3; ++field) {
        if (idx[field] < 1 || size_t(idx[field]) > counts[field]) {
            throw ParseError(std::string("face ") + names[field] + " index " +
                             std::to_string(idx[field]) + " out of range [1, " +
                             std::to_string(counts[field]) + "]", line);
        }
        *out[field] = idx[field] - 1;
    }
    return corner;
}

}  // namespace

TriMesh parse_obj(const std::string& text, ObjWarnings* warnings) {
    TriMesh mesh;
    std::istringstream stream(text);
    std::string line;
    int line_number = 0;
    while (std::getline(stream, line)) {
        ++line_number;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string directive;
        if (!(ls >> directive)) continue;

        if (directive == "v" || directive == "vn") {
            std::string xs, ys, zs;
            if (!(ls >> xs >> ys >> zs)) {
                throw ParseError("'" + directive + "' needs three coordinates", line_number);
            }
            Vec3 v;
            if (!parse_double(xs, v.x) || !parse_double(ys, v.y) || !parse_double(zs, v.z)) {
                throw ParseError("bad coordinate in '" + directive + "'", line_number);
            }
            (directive == "v" ? mesh.vertices : mesh.normals).push_back(v);
        } else if (directive == "vt") {
            std::string us, vs;
            if (!(ls >> us >> vs)) {
                throw ParseError("'vt' needs two coordinates", line_number);
            }
            Vec2 uv;
            if (!parse_double(us, uv.x) || !parse_double(vs, uv.y)) {
                throw ParseError("bad coordinate in 'vt'", line_number);
            }
            if (uv.x < 0.0 || uv.x > 1.0 || uv.y < 0.0 || uv.y > 1.0) {
                throw ParseError("uv (" + us + ", " + vs + ") outside [0,1]^2", line_number);
            }
            mesh.uvs.push_back(uv);
        } else if (directive == "f") {
            std::vector<std::string> corners;
            std::string tok;
            while (ls >> tok) corners.push_back(tok);
            if (corners.size() != 3) {
                throw ParseError("faces must be triangles, got " +
                                 std::to_string(corners.size()) + " corners", line_number);
            }
            Face face;
            for (int i = 0; i < 3; ++i) {
                face[i] = parse_corner(corners[i], mesh.vertices.size(), mesh.uvs.size(),
                                       mesh.normals.size(), line_number);
            }
            mesh.faces.push_back(face);
        } else {
            if (warnings) warnings->skipped_directives++;
        }
    }

    if (!mesh.faces.empty()) {
        if (mesh.uvs.empty() || mesh.normals.empty()) {
            throw DataError("mesh lacks UV/normal attributes");
        }
    }
    finalize_mesh(mesh);
    return mesh;
}

TriMesh load_mesh(const std::string& path, ObjWarnings* warnings) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw DataError("cannot open mesh file: " + path);
    std::ostringstream buf;
    buf << file.rdbuf();
    return parse_obj(buf.str(), warnings);
}

void finalize_mesh(TriMesh& mesh) {
    for (Vec3& n : mesh.normals) {
        double len = length(n);
        if (!(len > 1e-12) || !std::isfinite(len)) {
            throw DataError("mesh normal has length " + std::to_string(len) +
                            ", cannot renormalize");
        }
        n = n / len;
    }
    for (const Vec2& uv : mesh.uvs) {
        if (uv.x < 0.0 || uv.x > 1.0 || uv.y < 0.0 || uv.y > 1.0) {
            throw DataError("mesh uv outside [0,1]^2");
        }
    }
    for (const Face& face : mesh.faces) {
        for (const FaceCorner& c : face) {
            if (c.position < 0 || size_t(c.position) >= mesh.vertices.size() ||
                c.uv < 0 || size_t(c.uv) >= mesh.uvs.size() ||
                c.normal < 0 || size_t(c.normal) >= mesh.normals.size()) {
                throw DataError("face index out of range");
            }
        }
    }

    if (mesh.vertices.empty()) return;
    Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()};
    Vec3 hi = -lo;
    for (const Vec3& v : mesh.vertices) {
        lo = min(lo, v);
        hi = max(hi, v);
    }
    Vec3 center = (lo + hi) * 0.5;
    Vec3 extent = (hi - lo) * 0.5;
    double radius = max_component(extent);
    double scale = radius > 0.0 ? 1.0 / radius : 1.0;
    for (Vec3& v : mesh.vertices) v = (v - center) * scale;
}

}  // namespace matforge::geom
