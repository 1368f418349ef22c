// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "matforge/diffusion/diffusion.h"
#include "matforge/dit/model.h"
#include "matforge/dit/params.h"
#include "matforge/geom/gbuffer.h"
#include "matforge/render/render.h"

namespace matforge::dit {

/// One training example: clean per-branch latents plus everything needed to
/// render them. Batch size must be 1; views index the remaining vectors.
struct TrainBatch {
    LatentStack x0_albedo;
    LatentStack x0_roughness;
    LatentStack x0_metallic;
    LatentStack normals;
    ReferenceTokens ref;
    std::vector<geom::GBuffer> gbuffers;
    std::vector<render::MaterialMaps> gt_maps;
};

struct TrainOptions {
    io::LossNorm v_norm = io::LossNorm::kL1;
    io::LossNorm pbr_norm = io::LossNorm::kL1;
    double v_weight = 1.0;
    double pbr_weight = 1.0;
    bool use_positions = true;
    render::LightParams lights;
    /// Timestep override for tests; -1 samples uniformly from [0, T).
    int force_timestep = -1;
};

struct LossBreakdown {
    double v_albedo = 0.0;
    double v_roughness = 0.0;
    double v_metallic = 0.0;
    double pbr = 0.0;
    double total = 0.0;
    int timestep = 0;
};

struct TrainResult {
    LossBreakdown loss;
    std::map<std::string, Tensor> grads;
};

/// Scalar loss over the rendered prediction; decodes the three branch latents
/// into clamped material maps internally. Gradients pass through the clamps
/// inside their ranges and vanish outside; the scalar branches train channel 0
/// only.
ad::Var pbr_loss_node(ad::Tape& tape, ad::Var albedo_latent, ad::Var roughness_latent,
                      ad::Var metallic_latent, const geom::GBuffer& g,
                      const render::MaterialMaps& gt,
                      const std::vector<render::PointLight>& lights, io::LossNorm norm);

/// Model injection point: builds the forward graph for the already-noised
/// latents. train_step uses build_mgdit_graph; tests may substitute oracles.
using ForwardFn = std::function<MgDitGraph(ad::Tape& tape, const LatentStack& x_albedo,
                                           const LatentStack& x_roughness,
                                           const LatentStack& x_metallic, int t)>;

TrainResult train_step_impl(const TrainBatch& batch,
                            const diffusion::NoiseSchedule& schedule,
                            const TrainOptions& opts, uint64_t seed, ForwardFn forward);

TrainResult train_step(const TrainBatch& batch, const DitParams& params,
                       const diffusion::NoiseSchedule& schedule,
                       const TrainOptions& opts, uint64_t seed);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double grad_clip = 1.0;
};

/// First and second moments keyed like the parameters; step counts completed
/// updates. Everything is held in f32-representable values so archived state
/// resumes bit-exactly.
struct AdamState {
    int64_t step = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
};

/// Clips the global gradient norm, applies one Adam update, then rounds the
/// parameters and moments through f32.
void adam_update(DitParams& params, AdamState& state,
                 const std::map<std::string, Tensor>& grads, const AdamConfig& cfg);

void save_train_state(const std::string& path, const DitParams& params,
                      const AdamState& state);
void load_train_state(const std::string& path, DitParams& params, AdamState& state);

}  // namespace matforge::dit
