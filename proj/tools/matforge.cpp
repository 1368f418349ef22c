// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "matforge/brdf/brdf.h"
#include "matforge/core/errors.h"
#include "matforge/core/rng.h"
#include "matforge/diffusion/diffusion.h"
#include "matforge/dit/model.h"
#include "matforge/dit/params.h"
#include "matforge/dit/train.h"
#include "matforge/geom/camera.h"
#include "matforge/geom/gbuffer.h"
#include "matforge/geom/mesh.h"
#include "matforge/io/config.h"
#include "matforge/io/pfm.h"
#include "matforge/io/png.h"
#include "matforge/render/render.h"
#include "matforge/uvproj/uvproj.h"

namespace fs = std::filesystem;
using namespace matforge;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct CommonFlags {
    std::string config_path;
    std::string out_dir = "out";
    int64_t seed = -1;
    int views = -1;
    int steps = -1;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_views = true,
                bool with_steps = true) {
    cmd->add_option("--config", f.config_path, "Pipeline config file");
    cmd->add_option("--seed", f.seed, "Seed override");
    cmd->add_option("--out", f.out_dir, "Output directory");
    if (with_views) cmd->add_option("--views", f.views, "View count override");
    if (with_steps) cmd->add_option("--steps", f.steps, "Step count override");
}

io::PipelineConfig load_config(const CommonFlags& f) {
    io::PipelineConfig cfg;
    if (!f.config_path.empty()) cfg = io::PipelineConfig::load(f.config_path);
    if (f.seed >= 0) cfg.seed = uint64_t(f.seed);
    if (f.views > 0) cfg.view_count = f.views;
    cfg.validate();
    return cfg;
}

dit::ModelDims dims_from_config(const io::PipelineConfig& cfg) {
    dit::ModelDims dims;
    dims.dim = cfg.model_dim;
    dims.heads = cfg.model_heads;
    dims.trunk_blocks = cfg.trunk_blocks;
    dims.branch_blocks = cfg.branch_blocks;
    dims.patch = cfg.patch_size;
    dims.latent_res = cfg.latent_resolution;
    dims.latent_channels = 3;
    dims.views = cfg.view_count;
    dims.validate();
    return dims;
}

render::LightParams light_params(const io::PipelineConfig& cfg) {
    render::LightParams lp;
    lp.count_min = cfg.light_count_min;
    lp.count_max = cfg.light_count_max;
    lp.intensity_min = cfg.light_intensity_min;
    lp.intensity_max = cfg.light_intensity_max;
    lp.shell_min = cfg.light_shell_min;
    lp.shell_max = cfg.light_shell_max;
    return lp;
}

std::vector<geom::Camera> ring_cameras(const io::PipelineConfig& cfg, int count,
                                       int resolution) {
    return geom::camera_ring(count, cfg.camera_radius,
                             cfg.camera_elevation_deg * kPi / 180.0, resolution,
                             resolution);
}

std::string view_stem(const std::string& dir, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "view%02d", index);
    return (fs::path(dir) / buf).string();
}

geom::TriMesh load_mesh_checked(const std::string& path) {
    if (!fs::exists(path)) throw DataError("mesh file not found: " + path);
    return geom::load_mesh(path);
}

Image1 scalar_channel(const Image3& img) {
    Image1 out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) out.at(x, y) = img.at(x, y).x;
    }
    return out;
}

void write_mask_png(const std::string& path, const ImageMask& mask) {
    io::Png8 png;
    png.width = mask.width;
    png.height = mask.height;
    png.channels = 1;
    png.pixels.resize(mask.pixels.size());
    for (size_t i = 0; i < mask.pixels.size(); ++i) {
        png.pixels[i] = mask.pixels[i] ? 255 : 0;
    }
    io::write_png(path, png);
}

/// Unit cube with one UV chart per face; the self-check fixture.
geom::TriMesh make_cube_mesh() {
    geom::TriMesh mesh;
    mesh.vertices = {Vec3(-1, -1, -1), Vec3(1, -1, -1), Vec3(1, 1, -1), Vec3(-1, 1, -1),
                     Vec3(-1, -1, 1),  Vec3(1, -1, 1),  Vec3(1, 1, 1),  Vec3(-1, 1, 1)};
    mesh.normals = {Vec3(0, 0, 1),  Vec3(0, 0, -1), Vec3(1, 0, 0),
                    Vec3(-1, 0, 0), Vec3(0, 1, 0),  Vec3(0, -1, 0)};
    const int quads[6][4] = {{4, 5, 6, 7}, {1, 0, 3, 2}, {5, 1, 2, 6},
                             {0, 4, 7, 3}, {7, 6, 2, 3}, {0, 1, 5, 4}};
    for (int i = 0; i < 6; ++i) {
        double cx = (i % 3) * 0.33 + 0.05, cy = (i / 3) * 0.33 + 0.05;
        int base = int(mesh.uvs.size());
        mesh.uvs.push_back(Vec2(cx, cy));
        mesh.uvs.push_back(Vec2(cx + 0.23, cy));
        mesh.uvs.push_back(Vec2(cx + 0.23, cy + 0.23));
        mesh.uvs.push_back(Vec2(cx, cy + 0.23));
        const int* q = quads[i];
        mesh.faces.push_back(geom::Face{geom::FaceCorner{q[0], base, i},
                                        geom::FaceCorner{q[1], base + 1, i},
                                        geom::FaceCorner{q[2], base + 2, i}});
        mesh.faces.push_back(geom::Face{geom::FaceCorner{q[0], base, i},
                                        geom::FaceCorner{q[2], base + 2, i},
                                        geom::FaceCorner{q[3], base + 3, i}});
    }
    geom::finalize_mesh(mesh);
    return mesh;
}

/// Deterministic reference materials derived from mesh geometry; stands in
/// for a captured dataset at toy scale.
render::MaterialMaps synth_materials(const geom::GBuffer& g) {
    render::MaterialMaps maps;
    maps.albedo = Image3(g.width, g.height);
    maps.roughness = Image1(g.width, g.height);
    maps.metallic = Image1(g.width, g.height);
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            if (!g.covered(x, y)) continue;
            Vec3 n = g.normal.at(x, y);
            Vec3 p = g.position.at(x, y);
            maps.albedo.at(x, y) = clamp((n + Vec3(1.0)) * 0.5, 0.0, 1.0);
            maps.roughness.at(x, y) = 0.3 + 0.4 * std::clamp(0.5 * (n.z + 1.0), 0.0, 1.0);
            maps.metallic.at(x, y) = std::clamp(0.5 * (p.x + 1.0), 0.0, 1.0);
        }
    }
    return maps;
}

dit::TrainBatch build_batch(const geom::TriMesh& mesh, const io::PipelineConfig& cfg,
                            const dit::ModelDims& dims, const std::string& prompt) {
    std::vector<geom::Camera> cams = ring_cameras(cfg, dims.views, dims.latent_res);
    dit::TrainBatch batch;
    int r = dims.latent_res;
    batch.x0_albedo = dit::LatentStack(1, dims.views, 3, r, r);
    batch.x0_roughness = dit::LatentStack(1, dims.views, 3, r, r);
    batch.x0_metallic = dit::LatentStack(1, dims.views, 3, r, r);
    batch.normals = dit::LatentStack(1, dims.views, 3, r, r);
    for (int v = 0; v < dims.views; ++v) {
        geom::GBuffer g = geom::rasterize_gbuffer(mesh, cams[v]);
        render::MaterialMaps maps = synth_materials(g);
        batch.x0_albedo.set_view(0, v, dit::ToyCodec::encode_albedo(maps.albedo));
        batch.x0_roughness.set_view(0, v, dit::ToyCodec::encode_scalar(maps.roughness));
        batch.x0_metallic.set_view(0, v, dit::ToyCodec::encode_scalar(maps.metallic));
        batch.normals.set_view(0, v, dit::ToyCodec::encode_albedo(g.normal));
        batch.gbuffers.push_back(std::move(g));
        batch.gt_maps.push_back(std::move(maps));
    }
    batch.ref.text_tokens = dit::text_reference_tokens(prompt, 2, dims.dim, cfg.seed);
    return batch;
}

/// Decoded, range-clamped material maps from one view's three branch latents.
render::MaterialMaps decode_materials(const Tensor& albedo, const Tensor& roughness,
                                      const Tensor& metallic) {
    render::MaterialMaps maps;
    maps.albedo = dit::ToyCodec::decode_albedo(albedo);
    for (Vec3& p : maps.albedo.pixels) p = clamp(p, 0.0, 1.0);
    maps.roughness = dit::ToyCodec::decode_scalar(roughness);
    for (double& v : maps.roughness.pixels) {
        v = std::clamp(v, brdf::kMinRoughness, 1.0);
    }
    maps.metallic = dit::ToyCodec::decode_scalar(metallic);
    for (double& v : maps.metallic.pixels) v = std::clamp(v, 0.0, 1.0);
    return maps;
}

// ---------------------------------------------------------------------------
// gbuffer

int cmd_gbuffer(const CommonFlags& flags, const std::string& mesh_path) {
    io::PipelineConfig cfg = load_config(flags);
    geom::TriMesh mesh = load_mesh_checked(mesh_path);
    fs::create_directories(flags.out_dir);
    std::vector<geom::Camera> cams =
        ring_cameras(cfg, cfg.view_count, cfg.view_resolution);
    for (int v = 0; v < cfg.view_count; ++v) {
        geom::GBuffer g = geom::rasterize_gbuffer(mesh, cams[v]);
        std::string stem = view_stem(flags.out_dir, v);
        io::write_pfm(stem + ".normal.pfm", g.normal);
        io::write_pfm(stem + ".position.pfm", g.position);
        write_mask_png(stem + ".mask.png", g.mask);
        std::printf("view %02d: %zu covered pixels\n", v, g.covered_count());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// train-toy

int cmd_train_toy(const CommonFlags& flags, const std::string& dataset_dir) {
    io::PipelineConfig cfg = load_config(flags);
    fs::path mesh_path = fs::path(dataset_dir) / "sample.obj";
    if (!fs::exists(mesh_path)) {
        throw DataError("dataset is missing sample.obj: " + dataset_dir);
    }
    std::string prompt = "toy material";
    fs::path prompt_path = fs::path(dataset_dir) / "prompt.txt";
    if (fs::exists(prompt_path)) {
        std::ifstream in(prompt_path);
        std::getline(in, prompt);
    }
    geom::TriMesh mesh = load_mesh_checked(mesh_path.string());

    dit::ModelDims dims = dims_from_config(cfg);
    dit::TrainBatch batch = build_batch(mesh, cfg, dims, prompt);
    diffusion::NoiseSchedule schedule =
        diffusion::make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end, cfg.zero_snr);

    fs::create_directories(flags.out_dir);
    fs::path params_path = fs::path(flags.out_dir) / "params.mft";
    dit::DitParams params;
    dit::AdamState adam;
    if (fs::exists(params_path)) {
        dit::load_train_state(params_path.string(), params, adam);
        if (params.variant != dit::ModelVariant::kMgDit) {
            throw DataError("params archive is not a generation model");
        }
        std::printf("resuming from %s at step %d\n", params_path.string().c_str(),
                    int(adam.step));
    } else {
        params = dit::init_mgdit_params(dims, cfg.seed);
    }

    dit::TrainOptions topts;
    topts.v_norm = cfg.v_norm;
    topts.pbr_norm = cfg.pbr_norm;
    topts.v_weight = cfg.v_weight;
    topts.pbr_weight = cfg.pbr_weight;
    topts.lights = light_params(cfg);

    dit::AdamConfig acfg;
    acfg.lr = cfg.learning_rate;
    acfg.beta1 = cfg.adam_beta1;
    acfg.beta2 = cfg.adam_beta2;
    acfg.eps = cfg.adam_eps;
    acfg.grad_clip = cfg.grad_clip;

    int steps = flags.steps > 0 ? flags.steps : cfg.train_steps;
    std::ofstream csv(fs::path(flags.out_dir) / "loss.csv");
    csv << "step,v_albedo,v_roughness,v_metallic,pbr,total\n";
    double first = 0.0, last = 0.0;
    for (int i = 0; i < steps; ++i) {
        int global_step = adam.step;
        uint64_t step_seed = cfg.resample_noise ? cfg.seed + uint64_t(global_step)
                                                : cfg.seed;
        dit::TrainResult r = dit::train_step(batch, params, schedule, topts, step_seed);
        dit::adam_update(params, adam, r.grads, acfg);
        char row[256];
        std::snprintf(row, sizeof(row), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      global_step, r.loss.v_albedo, r.loss.v_roughness,
                      r.loss.v_metallic, r.loss.pbr, r.loss.total);
        csv << row;
        if (i == 0) first = r.loss.total;
        last = r.loss.total;
        if (i % 100 == 0 || i == steps - 1) {
            std::printf("step %d: total=%.6f (v=%.6f/%.6f/%.6f pbr=%.6f, t=%d)\n",
                        global_step, r.loss.total, r.loss.v_albedo, r.loss.v_roughness,
                        r.loss.v_metallic, r.loss.pbr, r.loss.timestep);
            std::fflush(stdout);
        }
    }
    dit::save_train_state(params_path.string(), params, adam);
    std::printf("trained %d steps: first=%.6f last=%.6f (%.1f%% reduction)\n", steps,
                first, last, 100.0 * (1.0 - last / first));
    return 0;
}

// ---------------------------------------------------------------------------
// sample

/// Branch-major packing of the joint multi-view state into one tensor so the
/// generic sampler can walk all three branches together.
Tensor pack_stacks(const dit::LatentStack& a, const dit::LatentStack& r,
                   const dit::LatentStack& m) {
    int64_t f = a.views(), c = a.channels(), h = a.height(), w = a.width();
    Tensor out({3 * f * c, h, w});
    const dit::LatentStack* stacks[3] = {&a, &r, &m};
    size_t plane = size_t(c * h * w);
    for (int b = 0; b < 3; ++b) {
        for (int64_t v = 0; v < f; ++v) {
            Tensor view = stacks[b]->view(0, v);
            std::copy(view.data.begin(), view.data.end(),
                      out.data.begin() + (size_t(b) * f + v) * plane);
        }
    }
    return out;
}

void unpack_stacks(const Tensor& packed, dit::LatentStack& a, dit::LatentStack& r,
                   dit::LatentStack& m) {
    int64_t f = a.views(), c = a.channels(), h = a.height(), w = a.width();
    dit::LatentStack* stacks[3] = {&a, &r, &m};
    size_t plane = size_t(c * h * w);
    for (int b = 0; b < 3; ++b) {
        for (int64_t v = 0; v < f; ++v) {
            Tensor view({c, h, w});
            std::copy(packed.data.begin() + (size_t(b) * f + v) * plane,
                      packed.data.begin() + (size_t(b) * f + v + 1) * plane,
                      view.data.begin());
            stacks[b]->set_view(0, v, view);
        }
    }
}

int cmd_sample(const CommonFlags& flags, const std::string& mesh_path,
               const std::string& params_path, const std::string& prompt) {
    io::PipelineConfig cfg = load_config(flags);
    geom::TriMesh mesh = load_mesh_checked(mesh_path);
    dit::DitParams params = dit::load_params(params_path);
    if (params.variant != dit::ModelVariant::kMgDit) {
        throw DataError("params archive is not a generation model");
    }
    const dit::ModelDims& dims = params.dims;
    if (flags.views > 0 && flags.views != dims.views) {
        throw DataError("--views must match the model's view count");
    }

    std::vector<geom::Camera> cams = ring_cameras(cfg, dims.views, dims.latent_res);
    dit::LatentStack normals(1, dims.views, 3, dims.latent_res, dims.latent_res);
    for (int v = 0; v < dims.views; ++v) {
        geom::GBuffer g = geom::rasterize_gbuffer(mesh, cams[v]);
        normals.set_view(0, v, dit::ToyCodec::encode_albedo(g.normal));
    }
    dit::ReferenceTokens cond;
    cond.text_tokens = dit::text_reference_tokens(prompt, 2, dims.dim, cfg.seed);
    dit::ReferenceTokens uncond;

    diffusion::NoiseSchedule schedule =
        diffusion::make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end, cfg.zero_snr);
    diffusion::GuidanceSchedule guidance;
    guidance.base_scale = cfg.guidance_base;
    guidance.power = cfg.guidance_power;
    int steps = flags.steps > 0 ? flags.steps : cfg.sample_steps;
    if (steps > cfg.timesteps) throw ConfigError("--steps must be <= schedule.timesteps");

    int r = dims.latent_res;
    diffusion::VPredictor model = [&](const Tensor& x_t, int t, bool conditioned) {
        dit::LatentStack xa(1, dims.views, 3, r, r), xr = xa, xm = xa;
        unpack_stacks(x_t, xa, xr, xm);
        dit::MgDitOutput out = dit::mgdit_forward(xa, xr, xm, normals,
                                                  conditioned ? cond : uncond, t, params);
        return pack_stacks(out.v_albedo, out.v_roughness, out.v_metallic);
    };
    Tensor x0 = diffusion::sample(model, schedule, {3 * dims.views * 3, r, r}, steps,
                                  guidance, cfg.seed);

    dit::LatentStack xa(1, dims.views, 3, r, r), xr = xa, xm = xa;
    unpack_stacks(x0, xa, xr, xm);
    fs::create_directories(flags.out_dir);
    for (int v = 0; v < dims.views; ++v) {
        render::MaterialMaps maps =
            decode_materials(xa.view(0, v), xr.view(0, v), xm.view(0, v));
        std::string stem = view_stem(flags.out_dir, v);
        io::write_pfm(stem + ".albedo.pfm", maps.albedo);
        io::write_pfm(stem + ".roughness.pfm", maps.roughness);
        io::write_pfm(stem + ".metallic.pfm", maps.metallic);
    }
    std::printf("sampled %d views x 3 materials in %d steps\n", dims.views, steps);
    return 0;
}

// ---------------------------------------------------------------------------
// bake

int cmd_bake(const CommonFlags& flags, const std::string& mesh_path,
             const std::string& views_dir) {
    io::PipelineConfig cfg = load_config(flags);
    geom::TriMesh mesh = load_mesh_checked(mesh_path);

    std::vector<std::string> stems;
    for (int v = 0;; ++v) {
        std::string stem = view_stem(views_dir, v);
        if (!fs::exists(stem + ".albedo.pfm")) break;
        stems.push_back(stem);
    }
    if (stems.empty()) {
        throw DataError("no view images (view00.albedo.pfm ...) in " + views_dir);
    }
    if (flags.views > 0 && size_t(flags.views) != stems.size()) {
        throw DataError("--views does not match the view images present");
    }

    uvproj::ViewSet views;
    for (const std::string& stem : stems) {
        render::MaterialMaps maps;
        maps.albedo = io::read_pfm_rgb(stem + ".albedo.pfm");
        maps.roughness = io::read_pfm_gray(stem + ".roughness.pfm");
        maps.metallic = io::read_pfm_gray(stem + ".metallic.pfm");
        if (!maps.same_size()) throw DataError("view maps disagree in size: " + stem);
        views.images.push_back(std::move(maps));
    }
    int res = views.images[0].width();
    views.cameras = ring_cameras(cfg, int(stems.size()), res);
    for (size_t v = 0; v < stems.size(); ++v) {
        views.gbuffers.push_back(geom::rasterize_gbuffer(mesh, views.cameras[v]));
    }

    uvproj::BackprojectParams bp;
    bp.eps_face = cfg.bake_eps_face;
    bp.eps_z = cfg.bake_eps_z;
    bp.blend_power = cfg.bake_blend_power;
    uvproj::BakedTextures baked = uvproj::backproject(mesh, views, cfg.uv_resolution, bp);
    int covered = baked.albedo.covered_count();

    uvproj::TextureMap atlas = uvproj::bake_uv_normal(mesh, cfg.uv_resolution);
    uvproj::BakedTextures filled;
    filled.albedo = uvproj::fill_holes(baked.albedo);
    filled.roughness = uvproj::fill_holes(baked.roughness);
    filled.metallic = uvproj::fill_holes(baked.metallic);
    filled.albedo.mask = atlas.mask;
    filled.roughness.mask = atlas.mask;
    filled.metallic.mask = atlas.mask;

    fs::create_directories(flags.out_dir);
    std::string stem = (fs::path(flags.out_dir) / "material").string();
    uvproj::save_textures(stem, filled);
    std::printf("baked %d/%d atlas texels from %zu views -> %s.*\n", covered,
                atlas.covered_count(), stems.size(), stem.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// refine

int cmd_refine(const CommonFlags& flags, const std::string& textures_stem,
               const std::string& mesh_path, const std::string& params_path,
               const std::string& prompt) {
    io::PipelineConfig cfg = load_config(flags);
    geom::TriMesh mesh = load_mesh_checked(mesh_path);
    uvproj::BakedTextures coarse = uvproj::load_textures(textures_stem);
    dit::DitParams params = dit::load_params(params_path);
    if (params.variant != dit::ModelVariant::kMrDit) {
        throw DataError("params archive is not a refinement model");
    }

    uvproj::TextureMap uv_normal =
        uvproj::bake_uv_normal(mesh, coarse.albedo.width());
    dit::ReferenceTokens text;
    text.text_tokens = dit::text_reference_tokens(prompt, 2, params.dims.dim, cfg.seed);

    diffusion::NoiseSchedule schedule =
        diffusion::make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end, cfg.zero_snr);
    diffusion::GuidanceSchedule guidance;
    guidance.base_scale = cfg.guidance_base;
    guidance.power = cfg.guidance_power;
    int steps = flags.steps > 0 ? flags.steps : cfg.sample_steps;
    if (steps > cfg.timesteps) throw ConfigError("--steps must be <= schedule.timesteps");

    uvproj::BakedTextures refined = uvproj::refine_texture_with_params(
        coarse, uv_normal, text, params, schedule, steps, guidance, cfg.seed);

    fs::create_directories(flags.out_dir);
    std::string stem = (fs::path(flags.out_dir) / "material").string();
    uvproj::save_textures(stem, refined);
    std::printf("refined %dx%d textures in %d steps -> %s.*\n", coarse.albedo.width(),
                coarse.albedo.height(), steps, stem.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// relight

int cmd_relight(const CommonFlags& flags, const std::string& mesh_path,
                const std::string& textures_stem, const std::string& env_path,
                int env_samples, int view_index) {
    io::PipelineConfig cfg = load_config(flags);
    geom::TriMesh mesh = load_mesh_checked(mesh_path);
    uvproj::BakedTextures baked = uvproj::load_textures(textures_stem);
    render::MaterialMaps uv_maps;
    uv_maps.albedo = baked.albedo.data;
    uv_maps.roughness = scalar_channel(baked.roughness.data);
    uv_maps.metallic = scalar_channel(baked.metallic.data);

    std::vector<geom::Camera> cams =
        ring_cameras(cfg, cfg.view_count, cfg.view_resolution);
    if (view_index < 0 || view_index >= cfg.view_count) {
        throw ConfigError("--view-index out of range");
    }
    const geom::Camera& cam = cams[view_index];

    render::RadianceImage img;
    if (!env_path.empty()) {
        render::EnvironmentMap env;
        env.latlong = io::read_pfm_rgb(env_path);
        img = render::relight_env(mesh, uv_maps, cam, env, env_samples, cfg.seed);
    } else {
        std::vector<render::PointLight> lights =
            render::sample_lights(cfg.seed, light_params(cfg));
        img = render::relight(mesh, uv_maps, cam, lights);
    }

    fs::create_directories(flags.out_dir);
    std::string stem = (fs::path(flags.out_dir) / "relight").string();
    io::write_pfm(stem + ".pfm", img.rgb);
    io::write_png_rgb(stem + ".png", img.rgb);
    std::printf("relit view %d -> %s.png\n", view_index, stem.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct CheckReport {
    double worst = 0.0;
    double tol = 0.0;
    int checked = 0;
    bool pass() const { return checked > 0 && worst < tol; }
};

double rel_err(double analytic, double numeric) {
    double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
    return std::abs(analytic - numeric) / denom;
}

CheckReport gradcheck_brdf(uint64_t seed) {
    CheckReport rep;
    rep.tol = 1e-4;
    Rng rng(seed, 0xb4d);
    const double h = 1e-6;
    for (int i = 0; i < 1000; ++i) {
        brdf::ShadingPoint sp;
        sp.n = Vec3(0.0, 0.0, 1.0);
        auto hemi = [&]() {
            double z = 0.05 + 0.9 * rng.uniform();
            double phi = 2.0 * kPi * rng.uniform();
            double s = std::sqrt(std::max(0.0, 1.0 - z * z));
            return Vec3(s * std::cos(phi), s * std::sin(phi), z);
        };
        sp.wi = hemi();
        sp.wo = hemi();
        brdf::MaterialSample mat;
        mat.albedo = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
        mat.roughness = 0.1 + 0.85 * rng.uniform();
        mat.metallic = 0.05 + 0.9 * rng.uniform();
        brdf::BrdfGrad grad = brdf::brdf_grad(sp, mat);
        if (grad.subgradient) continue;

        auto eval = [&](const brdf::MaterialSample& m) { return brdf::brdf_eval(sp, m); };
        for (int c = 0; c < 3; ++c) {
            brdf::MaterialSample lo = mat, hi = mat;
            (&lo.albedo.x)[c] -= h;
            (&hi.albedo.x)[c] += h;
            Vec3 up = eval(hi), down = eval(lo);
            double fd = ((&up.x)[c] - (&down.x)[c]) / (2.0 * h);
            rep.worst = std::max(rep.worst, rel_err((&grad.d_albedo.x)[c], fd));
        }
        {
            brdf::MaterialSample lo = mat, hi = mat;
            lo.roughness -= h;
            hi.roughness += h;
            if (brdf::brdf_grad(sp, lo).subgradient || brdf::brdf_grad(sp, hi).subgradient)
                continue;
            Vec3 fd = (eval(hi) - eval(lo)) / (2.0 * h);
            for (int c = 0; c < 3; ++c) {
                rep.worst = std::max(rep.worst, rel_err((&grad.d_roughness.x)[c], (&fd.x)[c]));
            }
        }
        {
            brdf::MaterialSample lo = mat, hi = mat;
            lo.metallic -= h;
            hi.metallic += h;
            Vec3 fd = (eval(hi) - eval(lo)) / (2.0 * h);
            for (int c = 0; c < 3; ++c) {
                rep.worst = std::max(rep.worst, rel_err((&grad.d_metallic.x)[c], (&fd.x)[c]));
            }
        }
        ++rep.checked;
    }
    return rep;
}

CheckReport gradcheck_render(uint64_t seed) {
    CheckReport rep;
    rep.tol = 1e-4;
    Rng rng(seed, 0x7e4d);
    int res = 8;
    geom::GBuffer g = geom::GBuffer::make(res, res);
    g.eye = Vec3(0.0, 0.0, 3.0);
    render::MaterialMaps pred, gt;
    pred.albedo = Image3(res, res);
    pred.roughness = Image1(res, res);
    pred.metallic = Image1(res, res);
    gt = pred;
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            g.mask.at(x, y) = 1;
            Vec3 n(0.2 * (rng.uniform() - 0.5), 0.2 * (rng.uniform() - 0.5), 1.0);
            g.normal.at(x, y) = normalize(n);
            g.position.at(x, y) = Vec3(0.2 * (x - res / 2), 0.2 * (y - res / 2), 0.0);
            pred.albedo.at(x, y) = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
            pred.roughness.at(x, y) = 0.15 + 0.7 * rng.uniform();
            pred.metallic.at(x, y) = 0.1 + 0.8 * rng.uniform();
            gt.albedo.at(x, y) = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
            gt.roughness.at(x, y) = 0.15 + 0.7 * rng.uniform();
            gt.metallic.at(x, y) = 0.1 + 0.8 * rng.uniform();
        }
    }
    std::vector<render::PointLight> lights = render::sample_lights(seed);
    io::LossNorm norm = io::LossNorm::kL2;
    render::PbrLossResult res0 = render::pbr_loss(pred, gt, g, lights, norm);
    const double h = 1e-6;
    for (int i = 0; i < 40; ++i) {
        int x = int(rng.uniform_u32(uint32_t(res)));
        int y = int(rng.uniform_u32(uint32_t(res)));
        int channel = int(rng.uniform_u32(5));
        auto poke = [&](render::MaterialMaps& m, double delta) {
            if (channel < 3) {
                (&m.albedo.at(x, y).x)[channel] += delta;
            } else if (channel == 3) {
                m.roughness.at(x, y) += delta;
            } else {
                m.metallic.at(x, y) += delta;
            }
        };
        double analytic = channel < 3   ? (&res0.d_albedo.at(x, y).x)[channel]
                          : channel == 3 ? res0.d_roughness.at(x, y)
                                         : res0.d_metallic.at(x, y);
        poke(pred, h);
        double up = render::pbr_loss(pred, gt, g, lights, norm).loss;
        poke(pred, -2.0 * h);
        double down = render::pbr_loss(pred, gt, g, lights, norm).loss;
        poke(pred, h);
        double fd = (up - down) / (2.0 * h);
        rep.worst = std::max(rep.worst, rel_err(analytic, fd));
        ++rep.checked;
    }
    return rep;
}

CheckReport gradcheck_diffusion(uint64_t seed) {
    CheckReport rep;
    rep.tol = 1e-6;
    Rng rng(seed, 0xa15);
    diffusion::NoiseSchedule s = diffusion::make_schedule(1000, 1e-4, 0.02, true);
    for (int i = 0; i < 200; ++i) {
        Tensor x0({4, 4}), eps({4, 4});
        for (double& v : x0.data) v = rng.normal();
        for (double& v : eps.data) v = rng.normal();
        int t = int(rng.uniform_u32(999));
        Tensor x_t = diffusion::q_sample(x0, eps, s, t);
        Tensor v = diffusion::v_target(x0, eps, s, t);
        Tensor x0_hat = diffusion::x0_from_v(x_t, v, s, t);
        Tensor eps_hat = diffusion::eps_from_v(x_t, v, s, t);
        for (size_t k = 0; k < x0.data.size(); ++k) {
            rep.worst = std::max(rep.worst, std::abs(x0_hat.data[k] - x0.data[k]));
            rep.worst = std::max(rep.worst, std::abs(eps_hat.data[k] - eps.data[k]));
        }
        ++rep.checked;
    }
    rep.worst = std::max(rep.worst, std::abs(s.alpha_bar.back()));
    return rep;
}

CheckReport gradcheck_dit(uint64_t seed) {
    CheckReport rep;
    rep.tol = 1e-3;
    dit::ModelDims dims;
    dims.dim = 8;
    dims.heads = 2;
    dims.trunk_blocks = 1;
    dims.branch_blocks = 1;
    dims.patch = 2;
    dims.latent_res = 4;
    dims.views = 2;

    io::PipelineConfig cfg;
    cfg.view_count = dims.views;
    cfg.seed = seed;
    dit::TrainBatch batch = build_batch(make_cube_mesh(), cfg, dims, "gradcheck");
    diffusion::NoiseSchedule schedule = diffusion::make_schedule(100, 1e-4, 0.02, true);
    dit::DitParams params = dit::init_mgdit_params(dims, seed);
    dit::TrainOptions topts;
    topts.force_timestep = 37;

    // Zero-initialized unembeds block upstream gradients; a few optimizer
    // steps make the finite-difference probe meaningful.
    dit::AdamState adam;
    dit::AdamConfig acfg;
    acfg.lr = 1e-2;
    for (int i = 0; i < 30; ++i) {
        dit::TrainResult r = dit::train_step(batch, params, schedule, topts, seed + i);
        dit::adam_update(params, adam, r.grads, acfg);
    }

    dit::TrainResult base = dit::train_step(batch, params, schedule, topts, seed);
    Rng rng(seed, 0xfd);
    const double h = 1e-4;
    int probes = 0;
    for (auto& [name, grad] : base.grads) {
        if (probes >= 40) break;
        if (grad.data.empty()) continue;
        size_t k = rng.uniform_u32(uint32_t(grad.data.size()));
        double analytic = grad.data[k];
        if (std::abs(analytic) < 1e-6) continue;
        Tensor& tensor = params.tensors.at(name);
        double saved = tensor.data[k];
        tensor.data[k] = saved + h;
        double up = dit::train_step(batch, params, schedule, topts, seed).loss.total;
        tensor.data[k] = saved - h;
        double down = dit::train_step(batch, params, schedule, topts, seed).loss.total;
        tensor.data[k] = saved;
        double fd = (up - down) / (2.0 * h);
        rep.worst = std::max(rep.worst, rel_err(analytic, fd));
        ++rep.checked;
        ++probes;
    }
    return rep;
}

int cmd_gradcheck(const CommonFlags& flags, const std::string& module) {
    uint64_t seed = flags.seed >= 0 ? uint64_t(flags.seed) : 0;
    CheckReport rep;
    if (module == "brdf") {
        rep = gradcheck_brdf(seed);
    } else if (module == "render") {
        rep = gradcheck_render(seed);
    } else if (module == "diffusion") {
        rep = gradcheck_diffusion(seed);
    } else {
        rep = gradcheck_dit(seed);
    }
    std::printf("gradcheck %s: %d checks, max error %.3e (tol %.1e): %s\n",
                module.c_str(), rep.checked, rep.worst, rep.tol,
                rep.pass() ? "PASS" : "FAIL");
    return rep.pass() ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"matforge: toy two-stage material generation pipeline"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string mesh_path, dataset_dir, params_path, views_dir, textures_stem;
    std::string prompt = "toy material";
    std::string env_path;
    int env_samples = 64;
    int view_index = 0;

    CLI::App* c_gbuffer = app.add_subcommand("gbuffer", "Rasterize per-view G-buffers");
    c_gbuffer->add_option("mesh", mesh_path, "OBJ mesh")->required();
    add_common(c_gbuffer, flags, true, false);

    CLI::App* c_train = app.add_subcommand("train-toy", "Train the toy generator");
    c_train->add_option("dataset", dataset_dir, "Dataset dir (sample.obj, prompt.txt)")
        ->required();
    add_common(c_train, flags, true, true);

    CLI::App* c_sample = app.add_subcommand("sample", "Generate per-view materials");
    c_sample->add_option("mesh", mesh_path, "OBJ mesh")->required();
    c_sample->add_option("--params", params_path, "Trained params archive")->required();
    c_sample->add_option("--prompt", prompt, "Text prompt");
    add_common(c_sample, flags, true, true);

    CLI::App* c_bake = app.add_subcommand("bake", "Back-project view materials to UV");
    c_bake->add_option("mesh", mesh_path, "OBJ mesh")->required();
    c_bake->add_option("views_dir", views_dir, "Dir with view00.albedo.pfm ...")
        ->required();
    add_common(c_bake, flags, true, false);

    CLI::App* c_refine = app.add_subcommand("refine", "Diffusion-refine UV textures");
    c_refine->add_option("textures", textures_stem, "Texture stem (material)")->required();
    c_refine->add_option("mesh", mesh_path, "OBJ mesh")->required();
    c_refine->add_option("--params", params_path, "Refinement params archive")->required();
    c_refine->add_option("--prompt", prompt, "Text prompt");
    add_common(c_refine, flags, false, true);

    CLI::App* c_relight = app.add_subcommand("relight", "Render UV textures under lights");
    c_relight->add_option("mesh", mesh_path, "OBJ mesh")->required();
    c_relight->add_option("textures", textures_stem, "Texture stem (material)")->required();
    c_relight->add_option("--env", env_path, "Lat-long environment PFM");
    c_relight->add_option("--env-samples", env_samples, "Environment light count");
    c_relight->add_option("--view-index", view_index, "Ring camera index");
    add_common(c_relight, flags, true, false);

    CLI::App* c_gradcheck = app.add_subcommand("gradcheck", "Numerical check suites");
    std::string module;
    c_gradcheck->add_option("module", module, "brdf | render | diffusion | dit")
        ->required()
        ->check(CLI::IsMember({"brdf", "render", "diffusion", "dit"}));
    c_gradcheck->add_option("--seed", flags.seed, "Seed override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (c_gbuffer->parsed()) return cmd_gbuffer(flags, mesh_path);
        if (c_train->parsed()) return cmd_train_toy(flags, dataset_dir);
        if (c_sample->parsed()) return cmd_sample(flags, mesh_path, params_path, prompt);
        if (c_bake->parsed()) return cmd_bake(flags, mesh_path, views_dir);
        if (c_refine->parsed()) {
            return cmd_refine(flags, textures_stem, mesh_path, params_path, prompt);
        }
        if (c_relight->parsed()) {
            return cmd_relight(flags, mesh_path, textures_stem, env_path, env_samples,
                               view_index);
        }
        if (c_gradcheck->parsed()) return cmd_gradcheck(flags, module);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
