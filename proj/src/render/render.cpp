// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "matforge/render/render.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

#include "matforge/core/parallel.h"
#include "matforge/core/rng.h"

namespace matforge::render {

namespace {

constexpr double kMinLightDistance = 0.1;
constexpr uint64_t kLightStream = 0x11675;

double square(double v) { return v * v; }

double luminance(const Vec3& c) { return 0.2126 * c.x + 0.7152 * c.y + 0.0722 * c.z; }

void hash_double(uint64_t& h, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (i * 8)) & 0xff;
        h *= 0x100000001b3ull;
    }
}

}  // namespace

std::vector<PointLight> sample_lights(uint64_t seed, const LightParams& params) {
    Rng rng(seed, kLightStream);
    uint32_t span = uint32_t(params.count_max - params.count_min + 1);
    int count = params.count_min + int(rng.uniform_u32(span));
    std::vector<PointLight> lights(count);
    for (PointLight& light : lights) {
        Vec3 dir = rng.unit_vector();
        double radius = rng.uniform(params.shell_min, params.shell_max);
        light.position = dir * radius;
        light.intensity = rng.uniform(params.intensity_min, params.intensity_max);
        light.color = {1.0, 1.0, 1.0};
    }
    return lights;
}

uint64_t light_list_hash(const std::vector<PointLight>& lights) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const PointLight& l : lights) {
        hash_double(h, l.position.x);
        hash_double(h, l.position.y);
        hash_double(h, l.position.z);
        hash_double(h, l.intensity);
        hash_double(h, l.color.x);
        hash_double(h, l.color.y);
        hash_double(h, l.color.z);
    }
    return h;
}

Vec3 shade_pixel(const Vec3& normal, const Vec3& position, const Vec3& eye,
                 const brdf::MaterialSample& mat,
                 const std::vector<PointLight>& lights, bool with_specular) {
    Vec3 wo = eye - position;
    double wo_len = length(wo);
    if (wo_len < 1e-12) return {0.0, 0.0, 0.0};
    wo = wo / wo_len;
    if (dot(normal, wo) <= 0.0) return {0.0, 0.0, 0.0};

    Vec3 radiance{0.0, 0.0, 0.0};
    for (const PointLight& light : lights) {
        Vec3 to_light = light.position - position;
        double dist = length(to_light);
        if (dist < 1e-12) continue;
        Vec3 wi = to_light / dist;
        double cos_i = dot(normal, wi);
        if (cos_i <= 0.0) continue;
        double falloff = light.intensity / square(std::max(dist, kMinLightDistance));
        Vec3 f = brdf_eval({normal, wi, wo}, mat, with_specular);
        radiance = radiance + f * light.color * (falloff * cos_i);
    }
    return radiance;
}

brdf::MaterialSample material_at(const MaterialMaps& maps, int x, int y) {
    brdf::MaterialSample mat;
    mat.albedo = maps.albedo.at(x, y);
    mat.roughness = std::clamp(maps.roughness.at(x, y), brdf::kMinRoughness, 1.0);
    mat.metallic = maps.metallic.at(x, y);
    return mat;
}

RadianceImage render_image(const GBuffer& g, const MaterialMaps& maps,
                           const std::vector<PointLight>& lights,
                           bool with_specular) {
    if (!maps.same_size() || maps.width() != g.width || maps.height() != g.height) {
        throw std::invalid_argument("render_image: map resolution must match G-buffer");
    }
    RadianceImage out;
    out.rgb = Image3(g.width, g.height);
    out.mask = g.mask;
    parallel_for_rows(g.height, [&](int64_t y) {
        for (int x = 0; x < g.width; ++x) {
            if (!g.covered(x, int(y))) continue;
            out.rgb.at(x, int(y)) =
                shade_pixel(g.normal.at(x, int(y)), g.position.at(x, int(y)), g.eye,
                            material_at(maps, x, int(y)), lights, with_specular);
        }
    });
    return out;
}

PbrLossResult pbr_loss(const MaterialMaps& pred, const MaterialMaps& gt,
                       const GBuffer& g, const std::vector<PointLight>& lights,
                       LossNorm norm) {
    if (!pred.same_size() || !gt.same_size() ||
        pred.width() != gt.width() || pred.height() != gt.height() ||
        pred.width() != g.width || pred.height() != g.height) {
        throw std::invalid_argument("pbr_loss: map and G-buffer shapes must match");
    }
    size_t covered = g.covered_count();
    if (covered == 0) throw std::invalid_argument("pbr_loss: no covered pixels");

    PbrLossResult result;
    result.d_albedo = Image3(g.width, g.height);
    result.d_roughness = Image1(g.width, g.height);
    result.d_metallic = Image1(g.width, g.height);
    result.pred_light_hash = light_list_hash(lights);
    result.gt_light_hash = light_list_hash(lights);

    double inv_n = 1.0 / (double(covered) * 3.0);
    std::vector<double> row_loss(g.height, 0.0);

    parallel_for_rows(g.height, [&](int64_t y) {
        double loss = 0.0;
        for (int x = 0; x < g.width; ++x) {
            if (!g.covered(x, int(y))) continue;
            Vec3 n = g.normal.at(x, int(y));
            Vec3 p = g.position.at(x, int(y));
            Vec3 wo = g.eye - p;
            double wo_len = length(wo);
            if (wo_len < 1e-12) continue;
            wo = wo / wo_len;
            if (dot(n, wo) <= 0.0) continue;  // both renders are zero here

            brdf::MaterialSample mp = material_at(pred, x, int(y));
            Vec3 r_pred{0.0, 0.0, 0.0};
            Vec3 da{0.0, 0.0, 0.0}, dr{0.0, 0.0, 0.0}, dm{0.0, 0.0, 0.0};
            for (const PointLight& light : lights) {
                Vec3 to_light = light.position - p;
                double dist = length(to_light);
                if (dist < 1e-12) continue;
                Vec3 wi = to_light / dist;
                double cos_i = dot(n, wi);
                if (cos_i <= 0.0) continue;
                double falloff =
                    light.intensity / square(std::max(dist, kMinLightDistance));
                Vec3 w = light.color * (falloff * cos_i);
                brdf::ShadingPoint sp{n, wi, wo};
                r_pred = r_pred + brdf_eval(sp, mp) * w;
                brdf::BrdfGrad bg = brdf_grad(sp, mp);
                da = da + bg.d_albedo * w;
                dr = dr + bg.d_roughness * w;
                dm = dm + bg.d_metallic * w;
            }
            Vec3 r_gt = shade_pixel(n, p, g.eye, material_at(gt, x, int(y)), lights);
            Vec3 diff = r_pred - r_gt;

            Vec3 factor;
            if (norm == LossNorm::kL1) {
                loss += (std::abs(diff.x) + std::abs(diff.y) + std::abs(diff.z)) * inv_n;
                auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
                factor = {sgn(diff.x) * inv_n, sgn(diff.y) * inv_n, sgn(diff.z) * inv_n};
            } else {
                loss += dot(diff, diff) * inv_n;
                factor = diff * (2.0 * inv_n);
            }
            result.d_albedo.at(x, int(y)) = factor * da;
            result.d_roughness.at(x, int(y)) = dot(factor, dr);
            result.d_metallic.at(x, int(y)) = dot(factor, dm);
        }
        row_loss[y] = loss;
    });
    for (double l : row_loss) result.loss += l;
    return result;
}

namespace {

Vec3 shade_pixel_directional(const Vec3& normal, const Vec3& position, const Vec3& eye,
                             const brdf::MaterialSample& mat,
                             const std::vector<DirectionalLight>& lights) {
    Vec3 wo = eye - position;
    double wo_len = length(wo);
    if (wo_len < 1e-12) return {0.0, 0.0, 0.0};
    wo = wo / wo_len;
    if (dot(normal, wo) <= 0.0) return {0.0, 0.0, 0.0};

    Vec3 radiance{0.0, 0.0, 0.0};
    for (const DirectionalLight& light : lights) {
        double cos_i = dot(normal, light.direction);
        if (cos_i <= 0.0) continue;
        Vec3 f = brdf_eval({normal, light.direction, wo}, mat);
        radiance = radiance + f * light.radiance * cos_i;
    }
    return radiance;
}

brdf::MaterialSample sample_uv_material(const MaterialMaps& maps, const Vec2& uv) {
    double v_img = 1.0 - uv.y;
    Vec3 albedo = sample_bilinear(maps.albedo, uv.x, v_img);
    double roughness = sample_bilinear(maps.roughness, uv.x, v_img);
    double metallic = sample_bilinear(maps.metallic, uv.x, v_img);
    brdf::MaterialSample mat;
    mat.albedo = clamp(albedo, 0.0, 1.0);
    mat.roughness = std::clamp(roughness, brdf::kMinRoughness, 1.0);
    mat.metallic = std::clamp(metallic, 0.0, 1.0);
    return mat;
}

template <typename ShadeFn>
RadianceImage relight_common(const geom::TriMesh& mesh, const MaterialMaps& uv_maps,
                             const geom::Camera& camera, const ShadeFn& shade) {
    if (!uv_maps.same_size() || uv_maps.width() <= 0) {
        throw std::invalid_argument("relight: material maps must be non-empty and equal size");
    }
    GBuffer g = geom::rasterize_gbuffer(mesh, camera);
    RadianceImage out;
    out.rgb = Image3(g.width, g.height);
    out.mask = g.mask;
    parallel_for_rows(g.height, [&](int64_t y) {
        for (int x = 0; x < g.width; ++x) {
            if (!g.covered(x, int(y))) continue;
            brdf::MaterialSample mat = sample_uv_material(uv_maps, g.uv.at(x, int(y)));
            out.rgb.at(x, int(y)) =
                shade(g.normal.at(x, int(y)), g.position.at(x, int(y)), g.eye, mat);
        }
    });
    return out;
}

}  // namespace

RadianceImage relight(const geom::TriMesh& mesh, const MaterialMaps& uv_maps,
                      const geom::Camera& camera,
                      const std::vector<PointLight>& lights) {
    return relight_common(mesh, uv_maps, camera,
                          [&](const Vec3& n, const Vec3& p, const Vec3& eye,
                              const brdf::MaterialSample& mat) {
                              return shade_pixel(n, p, eye, mat, lights);
                          });
}

std::vector<DirectionalLight> sample_environment(const EnvironmentMap& env,
                                                 int sample_count, uint64_t seed) {
    const Image3& map = env.latlong;
    if (map.empty()) throw std::invalid_argument("sample_environment: empty map");
    if (sample_count < 1) throw std::invalid_argument("sample_environment: need samples");

    // Per-pixel mass = luminance * sin(theta); rows near the poles subtend
    // less solid angle.
    std::vector<double> cdf(map.count());
    double total = 0.0;
    for (int y = 0; y < map.height; ++y) {
        double sin_theta = std::sin((double(y) + 0.5) / map.height * std::numbers::pi);
        for (int x = 0; x < map.width; ++x) {
            total += luminance(map.at(x, y)) * sin_theta;
            cdf[size_t(y) * map.width + x] = total;
        }
    }
    if (total <= 0.0) return {};  // black environment contributes nothing

    double cell_solid_angle_base =
        (2.0 * std::numbers::pi / map.width) * (std::numbers::pi / map.height);

    Rng rng(seed, 0x3141);
    std::vector<DirectionalLight> lights;
    lights.reserve(sample_count);
    for (int i = 0; i < sample_count; ++i) {
        double u = (double(i) + rng.uniform()) / sample_count * total;
        size_t idx = size_t(
            std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        if (idx >= cdf.size()) idx = cdf.size() - 1;
        int x = int(idx % map.width);
        int y = int(idx / map.width);

        double theta = (double(y) + 0.5) / map.height * std::numbers::pi;
        double phi = (double(x) + 0.5) / map.width * 2.0 * std::numbers::pi -
                     std::numbers::pi;
        Vec3 dir{std::sin(theta) * std::sin(phi), std::cos(theta),
                 std::sin(theta) * std::cos(phi)};

        double mass = luminance(map.at(x, y)) * std::sin(theta);
        if (mass <= 0.0) continue;  // numerically possible at cdf boundaries
        double solid_angle = cell_solid_angle_base * std::sin(theta);
        // MC weight: L * d_omega * total / (mass * N)
        Vec3 radiance = map.at(x, y) * (solid_angle * total / (mass * sample_count));
        lights.push_back({dir, radiance});
    }
    return lights;
}

RadianceImage relight_env(const geom::TriMesh& mesh, const MaterialMaps& uv_maps,
                          const geom::Camera& camera, const EnvironmentMap& env,
                          int sample_count, uint64_t seed) {
    std::vector<DirectionalLight> lights = sample_environment(env, sample_count, seed);
    return relight_common(mesh, uv_maps, camera,
                          [&](const Vec3& n, const Vec3& p, const Vec3& eye,
                              const brdf::MaterialSample& mat) {
                              return shade_pixel_directional(n, p, eye, mat, lights);
                          });
}

}  // namespace matforge::render
