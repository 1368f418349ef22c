// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "matforge/brdf/brdf.h"
#include "matforge/core/image.h"
#include "matforge/geom/gbuffer.h"
#include "matforge/io/config.h"

namespace matforge::render {

using geom::GBuffer;
using io::LossNorm;

struct PointLight {
    Vec3 position;
    double intensity = 1.0;
    Vec3 color{1.0, 1.0, 1.0};
};

/// Pre-integrated distant light used for environment relighting.
struct DirectionalLight {
    Vec3 direction;  // unit, surface toward light
    Vec3 radiance;
};

/// Per-pixel material channels; the three maps share one resolution.
struct MaterialMaps {
    Image3 albedo;
    Image1 roughness;
    Image1 metallic;

    bool same_size() const {
        return albedo.width == roughness.width && albedo.height == roughness.height &&
               albedo.width == metallic.width && albedo.height == metallic.height;
    }
    int width() const { return albedo.width; }
    int height() const { return albedo.height; }
};

struct RadianceImage {
    Image3 rgb;
    ImageMask mask;
};

struct LightParams {
    int count_min = 3;
    int count_max = 10;
    double intensity_min = 1.0;
    double intensity_max = 10.0;
    double shell_min = 2.0;
    double shell_max = 4.0;
};

/// Random point lights: count uniform in {count_min..count_max}, positions
/// uniform on a spherical shell around the origin, intensities uniform,
/// white color. Deterministic in the seed.
std::vector<PointLight> sample_lights(uint64_t seed, const LightParams& params = {});

/// FNV-1a over the raw light data; lets tests assert two renders consumed
/// the identical list.
uint64_t light_list_hash(const std::vector<PointLight>& lights);

/// Direct illumination with inverse-square falloff (distance clamped >= 0.1).
/// Lights below the horizon of n or with the viewer below it contribute zero.
Vec3 shade_pixel(const Vec3& normal, const Vec3& position, const Vec3& eye,
                 const brdf::MaterialSample& mat,
                 const std::vector<PointLight>& lights, bool with_specular = true);

/// MaterialSample read from the maps at a pixel, roughness clamped to its
/// valid range.
brdf::MaterialSample material_at(const MaterialMaps& maps, int x, int y);

/// Shades every covered G-buffer pixel from per-pixel materials; masked
/// pixels stay zero. Map resolution must equal the G-buffer's.
RadianceImage render_image(const GBuffer& g, const MaterialMaps& maps,
                           const std::vector<PointLight>& lights,
                           bool with_specular = true);

/// Rendered-image loss between predicted and ground-truth materials under one
/// shared light list, plus analytic gradients w.r.t. the predicted maps.
struct PbrLossResult {
    double loss = 0.0;
    Image3 d_albedo;
    Image1 d_roughness;
    Image1 d_metallic;
    uint64_t pred_light_hash = 0;  // hash of the list each render consumed
    uint64_t gt_light_hash = 0;
};

PbrLossResult pbr_loss(const MaterialMaps& pred, const MaterialMaps& gt,
                       const GBuffer& g, const std::vector<PointLight>& lights,
                       LossNorm norm = LossNorm::kL1);

/// Renders the mesh with UV-space material maps under point lights. Materials
/// are bilinearly sampled at each pixel's UV.
RadianceImage relight(const geom::TriMesh& mesh, const MaterialMaps& uv_maps,
                      const geom::Camera& camera,
                      const std::vector<PointLight>& lights);

/// Lat-long radiance environment.
struct EnvironmentMap {
    Image3 latlong;
};

/// Stratified luminance-importance sampling of the environment into
/// directional lights; deterministic in the seed.
std::vector<DirectionalLight> sample_environment(const EnvironmentMap& env,
                                                 int sample_count, uint64_t seed);

RadianceImage relight_env(const geom::TriMesh& mesh, const MaterialMaps& uv_maps,
                          const geom::Camera& camera, const EnvironmentMap& env,
                          int sample_count, uint64_t seed);

}  // namespace matforge::render
