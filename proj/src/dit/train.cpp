// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "matforge/dit/train.h"

#include <cmath>
#include <stdexcept>

#include "matforge/brdf/brdf.h"
#include "matforge/core/errors.h"
#include "matforge/core/rng.h"

namespace matforge::dit {

namespace {

using ad::Tape;
using ad::Var;

constexpr uint64_t kTimestepStream = 0x7261;
constexpr uint64_t kNoiseStream = 0x6e73;

void check_batch(const TrainBatch& batch) {
    const LatentStack& a = batch.x0_albedo;
    if (a.data.rank() != 5 || a.batch() != 1) {
        throw std::invalid_argument("train batch must hold exactly one element");
    }
    if (batch.x0_roughness.data.shape != a.data.shape ||
        batch.x0_metallic.data.shape != a.data.shape ||
        batch.normals.data.shape != a.data.shape) {
        throw std::invalid_argument("train batch stacks must share one shape");
    }
    size_t f = size_t(a.views());
    if (batch.gbuffers.size() != f || batch.gt_maps.size() != f) {
        throw std::invalid_argument("train batch needs one gbuffer and gt map per view");
    }
}

LatentStack sample_noise(const LatentStack& like, Rng& rng) {
    LatentStack eps(like.data.shape[0], like.data.shape[1], like.data.shape[2],
                    like.data.shape[3], like.data.shape[4]);
    for (double& v : eps.data.data) v = rng.normal();
    return eps;
}

LatentStack q_sample_stack(const LatentStack& x0, const LatentStack& eps,
                           const diffusion::NoiseSchedule& s, int t) {
    LatentStack out = x0;
    out.data = diffusion::q_sample(x0.data, eps.data, s, t);
    return out;
}

}  // namespace

Var pbr_loss_node(Tape& tape, Var albedo_latent, Var roughness_latent,
                  Var metallic_latent, const geom::GBuffer& g,
                  const render::MaterialMaps& gt,
                  const std::vector<render::PointLight>& lights, io::LossNorm norm) {
    const Tensor& av = tape.value(albedo_latent);
    const Tensor& rv = tape.value(roughness_latent);
    const Tensor& mv = tape.value(metallic_latent);
    int h = g.height, w = g.width;
    std::vector<int64_t> want{3, h, w};
    if (av.shape != want || rv.shape != want || mv.shape != want) {
        throw std::invalid_argument("pbr_loss_node: latents must be (3," +
                                    std::to_string(h) + "," + std::to_string(w) + ")");
    }

    render::MaterialMaps pred;
    pred.albedo = Image3(w, h);
    pred.roughness = Image1(w, h);
    pred.metallic = Image1(w, h);
    auto at = [&](const Tensor& t, int c, int x, int y) {
        return t.data[(int64_t(c) * h + y) * w + x];
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            pred.albedo.at(x, y) =
                clamp(Vec3(at(av, 0, x, y), at(av, 1, x, y), at(av, 2, x, y)), 0.0, 1.0);
            pred.roughness.at(x, y) =
                std::clamp(at(rv, 0, x, y), brdf::kMinRoughness, 1.0);
            pred.metallic.at(x, y) = std::clamp(at(mv, 0, x, y), 0.0, 1.0);
        }
    }

    render::PbrLossResult res = render::pbr_loss(pred, gt, g, lights, norm);
    Tensor value({1});
    value.data[0] = res.loss;

    return tape.make_node(
        std::move(value),
        [albedo_latent, roughness_latent, metallic_latent, res, h, w](
            Tape& t, const Tensor& out_grad) {
            double g0 = out_grad.data[0];
            const Tensor& a = t.value(albedo_latent);
            const Tensor& r = t.value(roughness_latent);
            const Tensor& m = t.value(metallic_latent);
            Tensor ga(a.shape), gr(r.shape), gm(m.shape);
            auto at = [&](const Tensor& tt, int c, int x, int y) {
                return tt.data[(int64_t(c) * h + y) * w + x];
            };
            auto put = [&](Tensor& tt, int c, int x, int y, double v) {
                tt.data[(int64_t(c) * h + y) * w + x] = v;
            };
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    for (int c = 0; c < 3; ++c) {
                        double raw = at(a, c, x, y);
                        if (raw >= 0.0 && raw <= 1.0) {
                            put(ga, c, x, y, g0 * res.d_albedo.at(x, y)[c]);
                        }
                    }
                    double rr = at(r, 0, x, y);
                    if (rr >= brdf::kMinRoughness && rr <= 1.0) {
                        put(gr, 0, x, y, g0 * res.d_roughness.at(x, y));
                    }
                    double mm = at(m, 0, x, y);
                    if (mm >= 0.0 && mm <= 1.0) {
                        put(gm, 0, x, y, g0 * res.d_metallic.at(x, y));
                    }
                }
            }
            t.accumulate(albedo_latent, ga);
            t.accumulate(roughness_latent, gr);
            t.accumulate(metallic_latent, gm);
        });
}

TrainResult train_step_impl(const TrainBatch& batch,
                            const diffusion::NoiseSchedule& schedule,
                            const TrainOptions& opts, uint64_t seed, ForwardFn forward) {
    check_batch(batch);
    int t = opts.force_timestep;
    if (t < 0) {
        Rng trng(seed, kTimestepStream);
        t = int(trng.uniform_u32(uint32_t(schedule.steps)));
    } else if (t >= schedule.steps) {
        throw std::out_of_range("forced timestep outside schedule");
    }

    Rng nrng(seed, kNoiseStream);
    LatentStack eps_a = sample_noise(batch.x0_albedo, nrng);
    LatentStack eps_r = sample_noise(batch.x0_roughness, nrng);
    LatentStack eps_m = sample_noise(batch.x0_metallic, nrng);
    LatentStack xt_a = q_sample_stack(batch.x0_albedo, eps_a, schedule, t);
    LatentStack xt_r = q_sample_stack(batch.x0_roughness, eps_r, schedule, t);
    LatentStack xt_m = q_sample_stack(batch.x0_metallic, eps_m, schedule, t);

    std::vector<render::PointLight> lights = render::sample_lights(seed, opts.lights);

    Tape tape;
    MgDitGraph graph = forward(tape, xt_a, xt_r, xt_m, t);

    int64_t f = batch.x0_albedo.views();
    double inv_f = 1.0 / double(f);
    std::vector<double> view_weights(size_t(f), inv_f);
    bool v_l1 = opts.v_norm == io::LossNorm::kL1;

    const std::array<const LatentStack*, 3> x0s{&batch.x0_albedo, &batch.x0_roughness,
                                                &batch.x0_metallic};
    const std::array<const LatentStack*, 3> epss{&eps_a, &eps_r, &eps_m};
    std::array<Var, 3> v_losses;
    std::array<std::vector<Var>, 3> x0_hats;
    for (int bi = 0; bi < 3; ++bi) {
        std::vector<Var> per_view;
        for (int64_t fv = 0; fv < f; ++fv) {
            Tensor v_tgt = diffusion::v_target(x0s[bi]->view(0, fv),
                                               epss[bi]->view(0, fv), schedule, t);
            per_view.push_back(tape.mean_norm(graph.outputs[bi][fv], v_tgt, v_l1));
            x0_hats[bi].push_back(tape.lincomb(graph.inputs[bi][fv],
                                               schedule.sqrt_alpha_bar[size_t(t)],
                                               graph.outputs[bi][fv],
                                               -schedule.sqrt_one_minus_alpha_bar[size_t(t)]));
        }
        v_losses[bi] = tape.weighted_sum(per_view, view_weights);
    }

    std::vector<Var> pbr_views;
    for (int64_t fv = 0; fv < f; ++fv) {
        pbr_views.push_back(pbr_loss_node(
            tape, x0_hats[0][fv], x0_hats[1][fv], x0_hats[2][fv],
            batch.gbuffers[size_t(fv)], batch.gt_maps[size_t(fv)], lights,
            opts.pbr_norm));
    }
    Var pbr = tape.weighted_sum(pbr_views, view_weights);

    Var total = tape.weighted_sum(
        {v_losses[0], v_losses[1], v_losses[2], pbr},
        {opts.v_weight, opts.v_weight, opts.v_weight, opts.pbr_weight});
    tape.backward(total);

    TrainResult result;
    result.loss.v_albedo = tape.value(v_losses[0]).data[0];
    result.loss.v_roughness = tape.value(v_losses[1]).data[0];
    result.loss.v_metallic = tape.value(v_losses[2]).data[0];
    result.loss.pbr = tape.value(pbr).data[0];
    result.loss.total = tape.value(total).data[0];
    result.loss.timestep = t;
    for (const auto& [name, var] : graph.param_vars) {
        result.grads.emplace(name, tape.grad(var));
    }
    return result;
}

TrainResult train_step(const TrainBatch& batch, const DitParams& params,
                       const diffusion::NoiseSchedule& schedule,
                       const TrainOptions& opts, uint64_t seed) {
    return train_step_impl(
        batch, schedule, opts, seed,
        [&](Tape& tape, const LatentStack& xa, const LatentStack& xr,
            const LatentStack& xm, int t) {
            return build_mgdit_graph(tape, xa, xr, xm, batch.normals, batch.ref, t,
                                     params, 0, opts.use_positions);
        });
}

void adam_update(DitParams& params, AdamState& state,
                 const std::map<std::string, Tensor>& grads, const AdamConfig& cfg) {
    double norm_sq = 0.0;
    for (const auto& [name, tensor] : params.tensors) {
        auto it = grads.find(name);
        if (it == grads.end()) continue;
        for (double v : it->second.data) norm_sq += v * v;
    }
    double norm = std::sqrt(norm_sq);
    double clip = cfg.grad_clip > 0.0 && norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;

    state.step += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
    double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
    for (auto& [name, tensor] : params.tensors) {
        auto it = grads.find(name);
        if (it == grads.end()) continue;
        check_same_shape(tensor, it->second, "adam_update");
        Tensor& m = state.m.try_emplace(name, tensor.shape).first->second;
        Tensor& v = state.v.try_emplace(name, tensor.shape).first->second;
        for (size_t i = 0; i < tensor.data.size(); ++i) {
            double g = it->second.data[i] * clip;
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g * g;
            double mhat = m.data[i] / bc1;
            double vhat = v.data[i] / bc2;
            tensor.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        quantize_f32(tensor);
        quantize_f32(m);
        quantize_f32(v);
    }
}

void save_train_state(const std::string& path, const DitParams& params,
                      const AdamState& state) {
    DitParams all = params;
    for (const auto& [name, tensor] : state.m) {
        all.tensors.emplace("adam.m." + name, tensor);
    }
    for (const auto& [name, tensor] : state.v) {
        all.tensors.emplace("adam.v." + name, tensor);
    }
    Tensor step({1});
    step.data[0] = double(state.step);
    all.tensors.emplace("adam.step", step);
    save_params(path, all);
}

void load_train_state(const std::string& path, DitParams& params, AdamState& state) {
    DitParams all = load_params_raw(path);
    params.variant = all.variant;
    params.dims = all.dims;
    params.tensors.clear();
    state = AdamState{};
    for (auto& [name, tensor] : all.tensors) {
        if (name == "adam.step") {
            state.step = int64_t(tensor.data.at(0));
        } else if (name.rfind("adam.m.", 0) == 0) {
            state.m.emplace(name.substr(7), std::move(tensor));
        } else if (name.rfind("adam.v.", 0) == 0) {
            state.v.emplace(name.substr(7), std::move(tensor));
        } else {
            params.tensors.emplace(name, std::move(tensor));
        }
    }
}

}  // namespace matforge::dit
