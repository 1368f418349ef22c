// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "matforge/core/image.h"
#include "matforge/geom/camera.h"
#include "matforge/geom/mesh.h"

namespace matforge::geom {

/// Per-pixel geometry attributes. Uncovered pixels hold zeros in every
/// channel. Normals are unit length in the world frame; depth is positive
/// view-space distance (or unused for UV-space buffers).
struct GBuffer {
    int width = 0;
    int height = 0;
    Image3 normal;
    Image3 position;
    Image<Vec2> uv;
    Image1 depth;
    ImageMask mask;

    Vec3 eye{0.0, 0.0, 0.0};   // camera position; shading derives view rays from it
    int uv_overlap_count = 0;  // texels contested by a second UV chart

    static GBuffer make(int w, int h) {
        GBuffer g;
        g.width = w;
        g.height = h;
        g.normal = Image3(w, h);
        g.position = Image3(w, h);
        g.uv = Image<Vec2>(w, h);
        g.depth = Image1(w, h);
        g.mask = ImageMask(w, h, 0);
        return g;
    }

    bool covered(int x, int y) const { return mask.at(x, y) != 0; }
    size_t covered_count() const {
        size_t n = 0;
        for (uint8_t m : mask.pixels) n += (m != 0);
        return n;
    }
};

/// Perspective rasterization with per-pixel z-test. Back-facing surfaces
/// (interpolated normal pointing away from the camera) are discarded.
/// Deterministic for fixed inputs regardless of MATFORGE_THREADS.
GBuffer rasterize_gbuffer(const TriMesh& mesh, const Camera& camera);

/// Rasterizes faces into the UV atlas: uv coordinates act as 2D positions,
/// world position and normal are written per texel. Overlapping charts are
/// resolved first-face-wins; contested texels are counted.
GBuffer rasterize_uv_gbuffer(const TriMesh& mesh, int width, int height);

}  // namespace matforge::geom
