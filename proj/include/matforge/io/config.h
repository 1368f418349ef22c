// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace matforge::io {

/// Sectioned key=value text config. `#` and `;` start comments; keys live
/// under the most recent `[section]` header. Duplicate keys are rejected.
struct ConfigFile {
    std::map<std::string, std::map<std::string, std::string>> sections;

    static ConfigFile parse(const std::string& text);
    static ConfigFile load(const std::string& path);

    const std::string* find(const std::string& section, const std::string& key) const;
};

/// Loss norm selector shared by the v-loss and the rendered-material loss.
enum class LossNorm { kL1, kL2 };

/// Every tunable the pipeline commands read. Defaults reproduce the reference
/// configuration; validate() rejects out-of-range values naming the field.
struct PipelineConfig {
    // [schedule]
    int timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    bool zero_snr = true;

    // [sampler]
    int sample_steps = 50;
    double guidance_base = 6.0;
    double guidance_power = 5.0;

    // [views]
    int view_count = 12;
    int view_resolution = 256;
    double camera_radius = 3.0;
    double camera_elevation_deg = 20.0;

    // [texture]
    int uv_resolution = 256;

    // [bake]
    double bake_eps_face = 0.1;
    double bake_eps_z = 1e-3;
    double bake_blend_power = 2.0;

    // [lights]
    int light_count_min = 3;
    int light_count_max = 10;
    double light_intensity_min = 1.0;
    double light_intensity_max = 10.0;
    double light_shell_min = 2.0;
    double light_shell_max = 4.0;

    // [loss]
    LossNorm pbr_norm = LossNorm::kL1;
    LossNorm v_norm = LossNorm::kL1;
    double pbr_weight = 1.0;
    double v_weight = 1.0;
    bool alpha_bar_weighting = false;

    // [model]
    int model_dim = 64;
    int model_heads = 4;
    int trunk_blocks = 2;
    int branch_blocks = 1;
    int patch_size = 4;
    int latent_resolution = 32;

    // [train]
    int train_steps = 200;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.95;
    double adam_eps = 1e-8;
    double grad_clip = 1.0;
    bool resample_noise = false;

    // [run]
    uint64_t seed = 0;

    /// Applies a parsed file over the defaults. Unknown fields and malformed
    /// values raise ConfigError naming the offending section.key.
    static PipelineConfig from_file(const ConfigFile& file);
    static PipelineConfig load(const std::string& path);

    /// Range checks for every field; throws ConfigError naming the field.
    void validate() const;
};

}  // namespace matforge::io
