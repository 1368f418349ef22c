// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "matforge/uvproj/uvproj.h"

#include <algorithm>
#include <cmath>

#include "matforge/brdf/brdf.h"
#include "matforge/core/errors.h"
#include "matforge/core/parallel.h"
#include "matforge/io/pfm.h"
#include "matforge/io/png.h"

namespace matforge::uvproj {

namespace {

Image3 resize_bilinear(const Image3& src, int w, int h) {
    Image3 out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double u = (x + 0.5) / w;
            double v = (y + 0.5) / h;
            out.at(x, y) = sample_bilinear(src, u, v);
        }
    }
    return out;
}

Tensor encode_texture(const TextureMap& t, int latent_res) {
    Image3 resized = resize_bilinear(t.data, latent_res, latent_res);
    if (t.channels == 1) {
        Image1 scalar(latent_res, latent_res);
        for (int y = 0; y < latent_res; ++y) {
            for (int x = 0; x < latent_res; ++x) scalar.at(x, y) = resized.at(x, y).x;
        }
        return dit::ToyCodec::encode_scalar(scalar);
    }
    return dit::ToyCodec::encode_albedo(resized);
}

TextureMap decode_refined(const Tensor& latent, const TextureMap& like,
                          const ImageMask& atlas, double lo, double hi) {
    int res = like.width();
    Image3 img;
    if (like.channels == 1) {
        Image1 scalar = dit::ToyCodec::decode_scalar(latent);
        img = Image3(scalar.width, scalar.height);
        for (int y = 0; y < scalar.height; ++y) {
            for (int x = 0; x < scalar.width; ++x) {
                img.at(x, y) = Vec3(std::clamp(scalar.at(x, y), lo, hi), 0.0, 0.0);
            }
        }
    } else {
        img = dit::ToyCodec::decode_albedo(latent);
        for (Vec3& p : img.pixels) p = clamp(p, lo, hi);
    }
    TextureMap out(res, like.channels);
    Image3 full = resize_bilinear(img, res, res);
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            if (atlas.at(x, y)) {
                out.data.at(x, y) = full.at(x, y);
                out.mask.at(x, y) = 1;
            }
        }
    }
    if (like.channels == 1) {
        for (Vec3& p : out.data.pixels) p = Vec3(p.x, 0.0, 0.0);
    }
    return out;
}

}  // namespace

int TextureMap::covered_count() const {
    int n = 0;
    for (uint8_t m : mask.pixels) n += m ? 1 : 0;
    return n;
}

void ViewSet::validate() const {
    if (cameras.empty()) throw DataError("view set is empty");
    if (images.size() != cameras.size() || gbuffers.size() != cameras.size()) {
        throw DataError("view set cameras, images, and gbuffers must align");
    }
    for (size_t i = 0; i < cameras.size(); ++i) {
        if (!images[i].same_size() || images[i].width() != cameras[i].width ||
            images[i].height() != cameras[i].height) {
            throw DataError("view image resolution must match its camera");
        }
        if (gbuffers[i].width != cameras[i].width ||
            gbuffers[i].height != cameras[i].height) {
            throw DataError("view gbuffer resolution must match its camera");
        }
    }
}

BakedTextures backproject(const geom::TriMesh& mesh, const ViewSet& views,
                          int uv_resolution, const BackprojectParams& params) {
    if (mesh.uvs.empty()) throw DataError("mesh has no UV coordinates");
    views.validate();
    geom::GBuffer atlas = geom::rasterize_uv_gbuffer(mesh, uv_resolution, uv_resolution);

    BakedTextures baked{TextureMap(uv_resolution, 3), TextureMap(uv_resolution, 1),
                        TextureMap(uv_resolution, 1)};
    parallel_for_rows(uv_resolution, [&](int y) {
        for (int x = 0; x < uv_resolution; ++x) {
            if (!atlas.covered(x, y)) continue;
            Vec3 p = atlas.position.at(x, y);
            Vec3 n = atlas.normal.at(x, y);
            Vec3 albedo_sum(0.0);
            double rough_sum = 0.0, metal_sum = 0.0, weight_sum = 0.0;
            for (size_t v = 0; v < views.count(); ++v) {
                const geom::Camera& cam = views.cameras[v];
                Vec2 pix;
                double depth;
                if (!cam.project(p, pix, depth)) continue;
                if (pix.x < 0.0 || pix.x >= cam.width || pix.y < 0.0 ||
                    pix.y >= cam.height) {
                    continue;
                }
                Vec3 view_dir = normalize(cam.eye - p);
                double ndv = dot(n, view_dir);
                if (ndv <= params.eps_face) continue;
                const geom::GBuffer& g = views.gbuffers[v];
                int px = std::clamp(int(std::floor(pix.x)), 0, g.width - 1);
                int py = std::clamp(int(std::floor(pix.y)), 0, g.height - 1);
                if (!g.covered(px, py)) continue;
                double normalized_gap = std::abs(depth - g.depth.at(px, py)) /
                                        (cam.far_plane - cam.near_plane);
                if (normalized_gap >= params.eps_z) continue;
                double w = std::pow(ndv, params.blend_power);
                double u = pix.x / cam.width;
                double vv = pix.y / cam.height;
                const render::MaterialMaps& maps = views.images[v];
                albedo_sum = albedo_sum + sample_bilinear(maps.albedo, u, vv) * w;
                rough_sum += sample_bilinear(maps.roughness, u, vv) * w;
                metal_sum += sample_bilinear(maps.metallic, u, vv) * w;
                weight_sum += w;
            }
            if (weight_sum <= 0.0) continue;
            baked.albedo.data.at(x, y) = albedo_sum / weight_sum;
            baked.roughness.data.at(x, y) = Vec3(rough_sum / weight_sum, 0.0, 0.0);
            baked.metallic.data.at(x, y) = Vec3(metal_sum / weight_sum, 0.0, 0.0);
            baked.albedo.mask.at(x, y) = 1;
            baked.roughness.mask.at(x, y) = 1;
            baked.metallic.mask.at(x, y) = 1;
        }
    });
    return baked;
}

TextureMap fill_holes(const TextureMap& t) {
    if (t.covered_count() == 0) return t;
    TextureMap out = t;
    int res = t.width();

    struct Level {
        Image3 value;
        Image1 weight;
    };
    std::vector<Level> pyramid;
    pyramid.push_back({t.data, Image1(res, res)});
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            pyramid[0].weight.at(x, y) = t.covered(x, y) ? 1.0 : 0.0;
            if (!t.covered(x, y)) pyramid[0].value.at(x, y) = Vec3(0.0);
        }
    }
    while (pyramid.back().value.width > 1 || pyramid.back().value.height > 1) {
        const Level& prev = pyramid.back();
        int w = (prev.value.width + 1) / 2;
        int h = (prev.value.height + 1) / 2;
        Level next{Image3(w, h), Image1(w, h)};
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                Vec3 sum(0.0);
                double wsum = 0.0;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        int sx = 2 * x + dx, sy = 2 * y + dy;
                        if (!prev.value.contains(sx, sy)) continue;
                        double pw = prev.weight.at(sx, sy);
                        sum = sum + prev.value.at(sx, sy) * pw;
                        wsum += pw;
                    }
                }
                if (wsum > 0.0) {
                    next.value.at(x, y) = sum / wsum;
                    next.weight.at(x, y) = 1.0;
                }
            }
        }
        pyramid.push_back(std::move(next));
    }
    for (size_t k = pyramid.size() - 1; k-- > 0;) {
        Level& fine = pyramid[k];
        const Level& coarse = pyramid[k + 1];
        for (int y = 0; y < fine.value.height; ++y) {
            for (int x = 0; x < fine.value.width; ++x) {
                if (fine.weight.at(x, y) > 0.0) continue;
                double u = (x + 0.5) / fine.value.width;
                double v = (y + 0.5) / fine.value.height;
                fine.value.at(x, y) = sample_bilinear(coarse.value, u, v);
                fine.weight.at(x, y) = 1.0;
            }
        }
    }
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            if (!t.covered(x, y)) out.data.at(x, y) = pyramid[0].value.at(x, y);
            out.mask.at(x, y) = 1;
        }
    }
    if (t.channels == 1) {
        for (Vec3& p : out.data.pixels) p = Vec3(p.x, 0.0, 0.0);
    }
    return out;
}

TextureMap bake_uv_normal(const geom::TriMesh& mesh, int uv_resolution) {
    if (mesh.uvs.empty()) throw DataError("mesh has no UV coordinates");
    geom::GBuffer atlas = geom::rasterize_uv_gbuffer(mesh, uv_resolution, uv_resolution);
    TextureMap out(uv_resolution, 3);
    for (int y = 0; y < uv_resolution; ++y) {
        for (int x = 0; x < uv_resolution; ++x) {
            if (!atlas.covered(x, y)) continue;
            out.data.at(x, y) = atlas.normal.at(x, y);
            out.mask.at(x, y) = 1;
        }
    }
    return out;
}

BakedTextures refine_texture(const BakedTextures& coarse, const TextureMap& uv_normal,
                             const RefineModel& model,
                             const diffusion::NoiseSchedule& schedule,
                             int sample_steps,
                             const diffusion::GuidanceSchedule& guidance,
                             int latent_res, uint64_t seed) {
    Tensor normal_latent = encode_texture(uv_normal, latent_res);
    const ImageMask& atlas = uv_normal.mask;
    auto refine_one = [&](const TextureMap& t, dit::Branch branch, double lo,
                          double hi) {
        Tensor coarse_latent = encode_texture(t, latent_res);
        diffusion::VPredictor pred = model(branch, coarse_latent, normal_latent);
        Tensor refined = diffusion::sample(pred, schedule, coarse_latent.shape,
                                           sample_steps, guidance,
                                           seed + uint64_t(int(branch)));
        return decode_refined(refined, t, atlas, lo, hi);
    };
    BakedTextures out;
    out.albedo = refine_one(coarse.albedo, dit::Branch::kAlbedo, 0.0, 1.0);
    out.roughness =
        refine_one(coarse.roughness, dit::Branch::kRoughness, brdf::kMinRoughness, 1.0);
    out.metallic = refine_one(coarse.metallic, dit::Branch::kMetallic, 0.0, 1.0);
    return out;
}

BakedTextures refine_texture_with_params(const BakedTextures& coarse,
                                         const TextureMap& uv_normal,
                                         const dit::ReferenceTokens& text,
                                         const dit::DitParams& params,
                                         const diffusion::NoiseSchedule& schedule,
                                         int sample_steps,
                                         const diffusion::GuidanceSchedule& guidance,
                                         uint64_t seed) {
    dit::ReferenceTokens empty;
    RefineModel model = [&](dit::Branch, const Tensor& coarse_latent,
                            const Tensor& normal_latent) -> diffusion::VPredictor {
        return [&, coarse_latent, normal_latent](const Tensor& x_t, int t,
                                                 bool conditioned) {
            dit::LatentStack z(1, 1, x_t.shape[0], x_t.shape[1], x_t.shape[2]);
            z.data.data = x_t.data;
            dit::LatentStack tc = z, tn = z;
            tc.data.data = coarse_latent.data;
            tn.data.data = normal_latent.data;
            dit::LatentStack v = dit::mrdit_forward(z, tc, tn,
                                                    conditioned ? text : empty, t,
                                                    params);
            Tensor out = x_t;
            out.data = v.data.data;
            return out;
        };
    };
    return refine_texture(coarse, uv_normal, model, schedule, sample_steps, guidance,
                          params.dims.latent_res, seed);
}

void save_textures(const std::string& stem, const BakedTextures& baked) {
    io::write_pfm(stem + ".albedo.pfm", baked.albedo.data);
    auto scalar_of = [](const TextureMap& t) {
        Image1 img(t.width(), t.height());
        for (int y = 0; y < t.height(); ++y) {
            for (int x = 0; x < t.width(); ++x) img.at(x, y) = t.data.at(x, y).x;
        }
        return img;
    };
    io::write_pfm(stem + ".roughness.pfm", scalar_of(baked.roughness));
    io::write_pfm(stem + ".metallic.pfm", scalar_of(baked.metallic));
    io::Png8 mask;
    mask.width = baked.albedo.width();
    mask.height = baked.albedo.height();
    mask.channels = 1;
    mask.pixels.resize(size_t(mask.width) * mask.height);
    for (size_t i = 0; i < mask.pixels.size(); ++i) {
        mask.pixels[i] = baked.albedo.mask.pixels[i] ? 255 : 0;
    }
    io::write_png(stem + ".mask.png", mask);
}

BakedTextures load_textures(const std::string& stem) {
    Image3 albedo = io::read_pfm_rgb(stem + ".albedo.pfm");
    Image1 rough = io::read_pfm_gray(stem + ".roughness.pfm");
    Image1 metal = io::read_pfm_gray(stem + ".metallic.pfm");
    io::Png8 maskpng = io::read_png(stem + ".mask.png");
    if (maskpng.channels != 1 || maskpng.width != albedo.width ||
        maskpng.height != albedo.height || rough.width != albedo.width ||
        metal.width != albedo.width) {
        throw DataError("texture set at " + stem + " is inconsistent");
    }
    BakedTextures out{TextureMap(albedo.width, 3), TextureMap(albedo.width, 1),
                      TextureMap(albedo.width, 1)};
    for (int y = 0; y < albedo.height; ++y) {
        for (int x = 0; x < albedo.width; ++x) {
            uint8_t m = maskpng.pixels[size_t(y) * albedo.width + x] > 127 ? 1 : 0;
            out.albedo.mask.at(x, y) = m;
            out.roughness.mask.at(x, y) = m;
            out.metallic.mask.at(x, y) = m;
            if (!m) continue;
            out.albedo.data.at(x, y) = albedo.at(x, y);
            out.roughness.data.at(x, y) = Vec3(rough.at(x, y), 0.0, 0.0);
            out.metallic.data.at(x, y) = Vec3(metal.at(x, y), 0.0, 0.0);
        }
    }
    return out;
}

}  // namespace matforge::uvproj
