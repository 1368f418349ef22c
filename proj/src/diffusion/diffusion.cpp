// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "matforge/diffusion/diffusion.h"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "matforge/core/rng.h"

namespace matforge::diffusion {

namespace {

constexpr uint64_t kSampleNoiseStream = 0xd1ff;

void check_t(const NoiseSchedule& s, int t) {
    if (t < 0 || t >= s.steps) {
        throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " +
                                std::to_string(s.steps) + ")");
    }
}

Tensor affine_combine(const Tensor& a, double ca, const Tensor& b, double cb) {
    check_same_shape(a, b);
    Tensor out;
    out.shape = a.shape;
    out.data.resize(a.data.size());
    for (size_t i = 0; i < a.data.size(); ++i) {
        out.data[i] = ca * a.data[i] + cb * b.data[i];
    }
    return out;
}

void finalize_tables(NoiseSchedule& s, bool zero_snr) {
    size_t n = s.alpha_bar.size();
    s.sqrt_alpha_bar.resize(n);
    for (size_t t = 0; t < n; ++t) s.sqrt_alpha_bar[t] = std::sqrt(s.alpha_bar[t]);

    if (zero_snr) {
        // Shift-and-scale the signal level so the last entry hits zero exactly
        // and the first is unchanged, then rebuild alpha_bar from it.
        double s0 = s.sqrt_alpha_bar.front();
        double sT = s.sqrt_alpha_bar.back();
        double scale = s0 / (s0 - sT);
        for (size_t t = 0; t < n; ++t) {
            s.sqrt_alpha_bar[t] = (s.sqrt_alpha_bar[t] - sT) * scale;
        }
        s.sqrt_alpha_bar.back() = 0.0;
        for (size_t t = 0; t < n; ++t) {
            s.alpha_bar[t] = s.sqrt_alpha_bar[t] * s.sqrt_alpha_bar[t];
        }
    }

    s.sqrt_one_minus_alpha_bar.resize(n);
    for (size_t t = 0; t < n; ++t) {
        s.sqrt_one_minus_alpha_bar[t] = std::sqrt(1.0 - s.alpha_bar[t]);
    }
}

}  // namespace

NoiseSchedule make_schedule(int T, double beta_start, double beta_end, bool zero_snr) {
    if (T < 2) throw std::invalid_argument("schedule needs T >= 2");
    if (!(beta_start > 0.0) || !(beta_end >= beta_start) || !(beta_end < 1.0)) {
        throw std::invalid_argument("schedule needs 0 < beta_start <= beta_end < 1");
    }
    NoiseSchedule s;
    s.steps = T;
    s.beta.resize(T);
    s.alpha_bar.resize(T);
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        s.beta[t] = beta_start + (beta_end - beta_start) * double(t) / double(T - 1);
        prod *= 1.0 - s.beta[t];
        s.alpha_bar[t] = prod;
    }
    finalize_tables(s, zero_snr);
    return s;
}

NoiseSchedule schedule_from_alpha_bar(const std::vector<double>& alpha_bar) {
    if (alpha_bar.size() < 2) throw std::invalid_argument("schedule needs T >= 2");
    NoiseSchedule s;
    s.steps = int(alpha_bar.size());
    s.alpha_bar = alpha_bar;
    s.beta.assign(alpha_bar.size(), 0.0);
    for (size_t t = 0; t < alpha_bar.size(); ++t) {
        double prev = t == 0 ? 1.0 : alpha_bar[t - 1];
        s.beta[t] = prev > 0.0 ? 1.0 - alpha_bar[t] / prev : 1.0;
    }
    finalize_tables(s, false);
    return s;
}

Tensor q_sample(const Tensor& x0, const Tensor& eps, const NoiseSchedule& s, int t) {
    check_t(s, t);
    return affine_combine(x0, s.sqrt_alpha_bar[t], eps, s.sqrt_one_minus_alpha_bar[t]);
}

Tensor v_target(const Tensor& x0, const Tensor& eps, const NoiseSchedule& s, int t) {
    check_t(s, t);
    return affine_combine(eps, s.sqrt_alpha_bar[t], x0, -s.sqrt_one_minus_alpha_bar[t]);
}

Tensor x0_from_v(const Tensor& x_t, const Tensor& v, const NoiseSchedule& s, int t) {
    check_t(s, t);
    return affine_combine(x_t, s.sqrt_alpha_bar[t], v, -s.sqrt_one_minus_alpha_bar[t]);
}

Tensor eps_from_v(const Tensor& x_t, const Tensor& v, const NoiseSchedule& s, int t) {
    check_t(s, t);
    return affine_combine(x_t, s.sqrt_one_minus_alpha_bar[t], v, s.sqrt_alpha_bar[t]);
}

double v_loss(const Tensor& v_pred, const Tensor& v_tgt, LossNorm norm) {
    check_same_shape(v_pred, v_tgt);
    if (v_pred.data.empty()) return 0.0;
    double sum = 0.0;
    for (size_t i = 0; i < v_pred.data.size(); ++i) {
        double d = v_pred.data[i] - v_tgt.data[i];
        sum += norm == LossNorm::kL1 ? std::abs(d) : d * d;
    }
    return sum / double(v_pred.data.size());
}

double total_loss(const std::array<double, 3>& v_losses, double pbr,
                  double v_weight, double pbr_weight) {
    return v_weight * (v_losses[0] + v_losses[1] + v_losses[2]) + pbr_weight * pbr;
}

double GuidanceSchedule::scale(int k) const {
    if (k < 0 || k >= steps) throw std::out_of_range("guidance step outside [0, steps)");
    if (steps <= 1) return 1.0;
    double ramp = (1.0 - std::cos(std::numbers::pi * double(k) / double(steps - 1))) * 0.5;
    return 1.0 + (base_scale - 1.0) * std::pow(ramp, power);
}

Tensor cfg_combine(const Tensor& v_uncond, const Tensor& v_cond, double scale) {
    check_same_shape(v_uncond, v_cond);
    Tensor out;
    out.shape = v_uncond.shape;
    out.data.resize(v_uncond.data.size());
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = v_uncond.data[i] + scale * (v_cond.data[i] - v_uncond.data[i]);
    }
    return out;
}

Tensor sample_initial_noise(const std::vector<int64_t>& shape, uint64_t seed) {
    Tensor x(shape);
    Rng rng(seed, kSampleNoiseStream);
    for (double& v : x.data) v = rng.normal();
    return x;
}

Tensor sample(const VPredictor& model, const NoiseSchedule& schedule,
              const std::vector<int64_t>& shape, int steps,
              const GuidanceSchedule& guidance, uint64_t seed) {
    if (steps < 1) throw std::invalid_argument("sample needs steps >= 1");
    if (steps > schedule.steps) {
        throw std::invalid_argument("sample steps exceed schedule timesteps");
    }

    // Uniform sub-grid over [0, T-1], terminal inclusive.
    std::vector<int> grid(steps);
    for (int k = 0; k < steps; ++k) {
        grid[k] = steps == 1
                      ? schedule.steps - 1
                      : int(std::lround(double(k) * double(schedule.steps - 1) /
                                        double(steps - 1)));
    }

    GuidanceSchedule g = guidance;
    g.steps = steps;

    Tensor x = sample_initial_noise(shape, seed);
    for (int k = steps - 1; k >= 0; --k) {
        int t = grid[k];
        Tensor v_cond = model(x, t, true);
        check_same_shape(x, v_cond);
        Tensor v_uncond = model(x, t, false);
        Tensor v = cfg_combine(v_uncond, v_cond, g.scale(k));

        Tensor x0_hat = x0_from_v(x, v, schedule, t);
        if (k == 0) return x0_hat;

        Tensor eps_hat = eps_from_v(x, v, schedule, t);
        int t_next = grid[k - 1];
        x = affine_combine(x0_hat, schedule.sqrt_alpha_bar[t_next], eps_hat,
                           schedule.sqrt_one_minus_alpha_bar[t_next]);
    }
    return x;  // unreachable; steps >= 1 returns inside the loop
}

}  // namespace matforge::diffusion
