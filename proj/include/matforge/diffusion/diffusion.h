// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "matforge/core/tensor.h"
#include "matforge/io/config.h"

namespace matforge::diffusion {

using io::LossNorm;

/// Forward-process tables over T discrete timesteps.
struct NoiseSchedule {
    int steps = 0;  // T
    std::vector<double> beta;
    std::vector<double> alpha_bar;
    std::vector<double> sqrt_alpha_bar;
    std::vector<double> sqrt_one_minus_alpha_bar;
};

/// Linear beta schedule. With zero_snr the cumulative signal level
/// sqrt(alpha_bar) is rescaled affinely so the terminal entry is exactly zero
/// while the first entry is preserved; the beta table keeps its pre-rescale
/// values.
NoiseSchedule make_schedule(int T, double beta_start, double beta_end, bool zero_snr);

/// Test/tooling constructor from an explicit alpha_bar table.
NoiseSchedule schedule_from_alpha_bar(const std::vector<double>& alpha_bar);

/// x_t = sqrt(ab_t) x0 + sqrt(1-ab_t) eps.
Tensor q_sample(const Tensor& x0, const Tensor& eps, const NoiseSchedule& s, int t);

/// v_t = sqrt(ab_t) eps - sqrt(1-ab_t) x0.
Tensor v_target(const Tensor& x0, const Tensor& eps, const NoiseSchedule& s, int t);

/// x0 = sqrt(ab_t) x_t - sqrt(1-ab_t) v.
Tensor x0_from_v(const Tensor& x_t, const Tensor& v, const NoiseSchedule& s, int t);

/// eps = sqrt(1-ab_t) x_t + sqrt(ab_t) v.
Tensor eps_from_v(const Tensor& x_t, const Tensor& v, const NoiseSchedule& s, int t);

/// Mean elementwise error between prediction and target.
double v_loss(const Tensor& v_pred, const Tensor& v_tgt, LossNorm norm = LossNorm::kL1);

/// Combined objective: weighted sum of the per-branch v losses and the
/// rendered-material loss.
double total_loss(const std::array<double, 3>& v_losses, double pbr,
                  double v_weight = 1.0, double pbr_weight = 1.0);

/// Cosine ramp from 1 at the first sampler step to base_scale at the last.
struct GuidanceSchedule {
    double base_scale = 6.0;
    double power = 5.0;
    int steps = 50;

    double scale(int k) const;
};

/// v_uncond + scale * (v_cond - v_uncond).
Tensor cfg_combine(const Tensor& v_uncond, const Tensor& v_cond, double scale);

/// Denoiser interface: (x_t, timestep, conditioned) -> v.
using VPredictor = std::function<Tensor(const Tensor& x_t, int t, bool conditioned)>;

/// Deterministic sampling: start from seeded unit Gaussian noise at the
/// terminal timestep, walk a uniform steps-point sub-grid of [0, T-1]
/// (terminal inclusive); at each step predict v with CFG, convert to the
/// x0/eps estimates, and re-noise to the next grid point. The final output is
/// the last x0 estimate.
Tensor sample(const VPredictor& model, const NoiseSchedule& schedule,
              const std::vector<int64_t>& shape, int steps,
              const GuidanceSchedule& guidance, uint64_t seed);

/// The noise tensor `sample` starts from; exposed so callers can reproduce or
/// inspect a run's trajectory.
Tensor sample_initial_noise(const std::vector<int64_t>& shape, uint64_t seed);

}  // namespace matforge::diffusion
