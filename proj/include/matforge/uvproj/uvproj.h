// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "matforge/core/image.h"
#include "matforge/diffusion/diffusion.h"
#include "matforge/dit/model.h"
#include "matforge/geom/camera.h"
#include "matforge/geom/gbuffer.h"
#include "matforge/geom/mesh.h"
#include "matforge/render/render.h"

namespace matforge::uvproj {

/// UV-space texture with per-texel coverage. Scalar maps (roughness, metallic,
/// and each normal component) live in the Vec3 channels with channels=1 using
/// only x; uncovered texels hold zero.
struct TextureMap {
    Image3 data;
    ImageMask mask;
    int channels = 3;

    TextureMap() = default;
    TextureMap(int resolution, int channel_count)
        : data(resolution, resolution), mask(resolution, resolution, 0),
          channels(channel_count) {}

    int width() const { return data.width; }
    int height() const { return data.height; }
    bool covered(int x, int y) const { return mask.at(x, y) != 0; }
    int covered_count() const;
};

/// Cameras with the material images and G-buffers rendered from them.
struct ViewSet {
    std::vector<geom::Camera> cameras;
    std::vector<render::MaterialMaps> images;
    std::vector<geom::GBuffer> gbuffers;

    size_t count() const { return cameras.size(); }
    void validate() const;
};

struct BackprojectParams {
    double eps_face = 0.1;  // reject views with n.view below this
    double eps_z = 1e-3;    // depth agreement threshold, normalized by far-near
    double blend_power = 2.0;
};

struct BakedTextures {
    TextureMap albedo;
    TextureMap roughness;
    TextureMap metallic;
};

/// Projects every covered UV texel into each view; accepts views that see the
/// texel front-on and depth-consistently, then blends their bilinear samples
/// with convex (n.view)^k weights. Texels no view accepts keep mask=false.
BakedTextures backproject(const geom::TriMesh& mesh, const ViewSet& views,
                          int uv_resolution, const BackprojectParams& params = {});

/// Pull-push fill: builds an average pyramid from covered texels and fills
/// every uncovered texel from the coarser levels. Covered texels pass through
/// bitwise; the result's mask is all-true. A map with no coverage at all comes
/// back unchanged (all zero, mask all-false) as the empty flag.
TextureMap fill_holes(const TextureMap& t);

/// UV-space normal map: rasterize_uv_gbuffer's normals as a 3-channel map.
TextureMap bake_uv_normal(const geom::TriMesh& mesh, int uv_resolution);

/// One sampling model per material branch, already conditioned on that
/// branch's coarse latent and the shared normal latent.
using RefineModel = std::function<diffusion::VPredictor(
    dit::Branch branch, const Tensor& coarse_latent, const Tensor& normal_latent)>;

/// Diffusion-refines the coarse maps: each branch's texture is resized to the
/// latent grid, sampled with the model conditioned on it plus the UV normal
/// latent, resized back, clamped to material ranges, and masked to the atlas.
BakedTextures refine_texture(const BakedTextures& coarse, const TextureMap& uv_normal,
                             const RefineModel& model,
                             const diffusion::NoiseSchedule& schedule,
                             int sample_steps, const diffusion::GuidanceSchedule& guidance,
                             int latent_res, uint64_t seed);

/// refine_texture with the real MR-DiT: conditioned calls carry the text
/// tokens, unconditioned calls carry none.
BakedTextures refine_texture_with_params(const BakedTextures& coarse,
                                         const TextureMap& uv_normal,
                                         const dit::ReferenceTokens& text,
                                         const dit::DitParams& params,
                                         const diffusion::NoiseSchedule& schedule,
                                         int sample_steps,
                                         const diffusion::GuidanceSchedule& guidance,
                                         uint64_t seed);

/// Files `<stem>.albedo.pfm`, `<stem>.roughness.pfm`, `<stem>.metallic.pfm`,
/// and the shared coverage `<stem>.mask.png`.
void save_textures(const std::string& stem, const BakedTextures& baked);
BakedTextures load_textures(const std::string& stem);

}  // namespace matforge::uvproj
