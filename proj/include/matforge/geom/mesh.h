// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include "matforge/core/vec.h"

namespace matforge::geom {

/// One face corner: indices into the position / uv / normal arrays.
struct FaceCorner {
    int position = 0;
    int uv = 0;
    int normal = 0;
};

using Face = std::array<FaceCorner, 3>;

/// Indexed triangle mesh. Positions are normalized into [-1,1]^3 at load
/// time; normals are unit length; UVs lie in [0,1]^2.
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<Vec3> normals;
    std::vector<Vec2> uvs;
    std::vector<Face> faces;

    bool empty() const { return faces.empty(); }
};

struct ObjWarnings {
    int skipped_directives = 0;
};

/// Parses the OBJ subset (v / vn / vt / f with triangular a/b/c faces,
/// 1-based indices, # comments). Unknown directives are counted and skipped.
/// The mesh is validated, normals renormalized, and positions rescaled so the
/// bounding box fits in [-1,1]^3 centered at the origin.
TriMesh load_mesh(const std::string& path, ObjWarnings* warnings = nullptr);

/// Same parser over an in-memory buffer; used by fixtures and tests.
TriMesh parse_obj(const std::string& text, ObjWarnings* warnings = nullptr);

/// Validation + renormalization + bounding-box rescale, exposed for meshes
/// built procedurally.
void finalize_mesh(TriMesh& mesh);

}  // namespace matforge::geom
