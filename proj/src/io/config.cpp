// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "matforge/io/config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "matforge/core/errors.h"

namespace matforge::io {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
    ConfigFile file;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        size_t comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw ParseError("malformed section header", line_number);
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) throw ParseError("empty section name", line_number);
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("expected key = value", line_number);
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError("empty key", line_number);
        auto [it, inserted] = file.sections[section].emplace(key, value);
        if (!inserted) {
            throw ParseError("duplicate key " + section + "." + key, line_number);
        }
    }
    return file;
}

ConfigFile ConfigFile::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

const std::string* ConfigFile::find(const std::string& section,
                                    const std::string& key) const {
    auto s = sections.find(section);
    if (s == sections.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    return &k->second;
}

namespace {

// Binds each known section.key to a typed setter; from_file walks the file
// and rejects anything unbound.
struct FieldTable {
    std::map<std::string, std::function<void(const std::string&, const std::string&)>> set;

    static void fail(const std::string& field, const std::string& want,
                     const std::string& got) {
        throw ConfigError("config field " + field + ": expected " + want + ", got '" +
                          got + "'");
    }

    void bind_int(const std::string& field, int* slot) {
        set[field] = [field, slot](const std::string&, const std::string& v) {
            try {
                size_t used = 0;
                long value = std::stol(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
                *slot = int(value);
            } catch (const std::logic_error&) {
                fail(field, "integer", v);
            }
        };
    }

    void bind_u64(const std::string& field, uint64_t* slot) {
        set[field] = [field, slot](const std::string&, const std::string& v) {
            try {
                size_t used = 0;
                unsigned long long value = std::stoull(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
                *slot = uint64_t(value);
            } catch (const std::logic_error&) {
                fail(field, "unsigned integer", v);
            }
        };
    }

    void bind_double(const std::string& field, double* slot) {
        set[field] = [field, slot](const std::string&, const std::string& v) {
            try {
                size_t used = 0;
                double value = std::stod(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
                *slot = value;
            } catch (const std::logic_error&) {
                fail(field, "number", v);
            }
        };
    }

    void bind_bool(const std::string& field, bool* slot) {
        set[field] = [field, slot](const std::string&, const std::string& v) {
            if (v == "true" || v == "1" || v == "yes" || v == "on") {
                *slot = true;
            } else if (v == "false" || v == "0" || v == "no" || v == "off") {
                *slot = false;
            } else {
                fail(field, "boolean", v);
            }
        };
    }

    void bind_norm(const std::string& field, LossNorm* slot) {
        set[field] = [field, slot](const std::string&, const std::string& v) {
            if (v == "l1") {
                *slot = LossNorm::kL1;
            } else if (v == "l2") {
                *slot = LossNorm::kL2;
            } else {
                fail(field, "l1 or l2", v);
            }
        };
    }
};

}  // namespace

PipelineConfig PipelineConfig::from_file(const ConfigFile& file) {
    PipelineConfig c;
    FieldTable t;
    t.bind_int("schedule.timesteps", &c.timesteps);
    t.bind_double("schedule.beta_start", &c.beta_start);
    t.bind_double("schedule.beta_end", &c.beta_end);
    t.bind_bool("schedule.zero_snr", &c.zero_snr);

    t.bind_int("sampler.steps", &c.sample_steps);
    t.bind_double("sampler.guidance_base", &c.guidance_base);
    t.bind_double("sampler.guidance_power", &c.guidance_power);

    t.bind_int("views.count", &c.view_count);
    t.bind_int("views.resolution", &c.view_resolution);
    t.bind_double("views.radius", &c.camera_radius);
    t.bind_double("views.elevation_deg", &c.camera_elevation_deg);

    t.bind_int("texture.resolution", &c.uv_resolution);

    t.bind_double("bake.eps_face", &c.bake_eps_face);
    t.bind_double("bake.eps_z", &c.bake_eps_z);
    t.bind_double("bake.blend_power", &c.bake_blend_power);

    t.bind_int("lights.count_min", &c.light_count_min);
    t.bind_int("lights.count_max", &c.light_count_max);
    t.bind_double("lights.intensity_min", &c.light_intensity_min);
    t.bind_double("lights.intensity_max", &c.light_intensity_max);
    t.bind_double("lights.shell_min", &c.light_shell_min);
    t.bind_double("lights.shell_max", &c.light_shell_max);

    t.bind_norm("loss.pbr_norm", &c.pbr_norm);
    t.bind_norm("loss.v_norm", &c.v_norm);
    t.bind_double("loss.pbr_weight", &c.pbr_weight);
    t.bind_double("loss.v_weight", &c.v_weight);
    t.bind_bool("loss.alpha_bar_weighting", &c.alpha_bar_weighting);

    t.bind_int("model.dim", &c.model_dim);
    t.bind_int("model.heads", &c.model_heads);
    t.bind_int("model.trunk_blocks", &c.trunk_blocks);
    t.bind_int("model.branch_blocks", &c.branch_blocks);
    t.bind_int("model.patch_size", &c.patch_size);
    t.bind_int("model.latent_resolution", &c.latent_resolution);

    t.bind_int("train.steps", &c.train_steps);
    t.bind_double("train.learning_rate", &c.learning_rate);
    t.bind_double("train.adam_beta1", &c.adam_beta1);
    t.bind_double("train.adam_beta2", &c.adam_beta2);
    t.bind_double("train.adam_eps", &c.adam_eps);
    t.bind_double("train.grad_clip", &c.grad_clip);
    t.bind_bool("train.resample_noise", &c.resample_noise);

    t.bind_u64("run.seed", &c.seed);

    for (const auto& [section, entries] : file.sections) {
        for (const auto& [key, value] : entries) {
            std::string field = section + "." + key;
            auto it = t.set.find(field);
            if (it == t.set.end()) {
                throw ConfigError("unknown config field " + field);
            }
            it->second(field, value);
        }
    }
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    return from_file(ConfigFile::load(path));
}

void PipelineConfig::validate() const {
    auto require = [](bool ok, const std::string& field, const std::string& rule) {
        if (!ok) throw ConfigError("config field " + field + " out of range: " + rule);
    };
    require(timesteps >= 2, "schedule.timesteps", "must be >= 2");
    require(beta_start > 0.0, "schedule.beta_start", "must be > 0");
    require(beta_end >= beta_start, "schedule.beta_end", "must be >= beta_start");
    require(beta_end < 1.0, "schedule.beta_end", "must be < 1");

    require(sample_steps >= 1, "sampler.steps", "must be >= 1");
    require(guidance_base >= 1.0, "sampler.guidance_base", "must be >= 1");
    require(guidance_power > 0.0, "sampler.guidance_power", "must be > 0");

    require(view_count >= 1, "views.count", "must be >= 1");
    require(view_resolution >= 1, "views.resolution", "must be >= 1");
    require(camera_radius > 1.0, "views.radius",
            "must be > 1 (outside the unit-normalized mesh)");
    require(camera_elevation_deg > -90.0 && camera_elevation_deg < 90.0,
            "views.elevation_deg", "must be in (-90, 90)");

    require(uv_resolution >= 1, "texture.resolution", "must be >= 1");

    require(bake_eps_face >= 0.0 && bake_eps_face < 1.0, "bake.eps_face",
            "must be in [0, 1)");
    require(bake_eps_z > 0.0, "bake.eps_z", "must be > 0");
    require(bake_blend_power >= 0.0, "bake.blend_power", "must be >= 0");

    require(light_count_min >= 1, "lights.count_min", "must be >= 1");
    require(light_count_max >= light_count_min, "lights.count_max",
            "must be >= count_min");
    require(light_intensity_min > 0.0, "lights.intensity_min", "must be > 0");
    require(light_intensity_max >= light_intensity_min, "lights.intensity_max",
            "must be >= intensity_min");
    require(light_shell_min > 1.0, "lights.shell_min",
            "must be > 1 (outside the unit-normalized mesh)");
    require(light_shell_max >= light_shell_min, "lights.shell_max",
            "must be >= shell_min");

    require(pbr_weight >= 0.0, "loss.pbr_weight", "must be >= 0");
    require(v_weight >= 0.0, "loss.v_weight", "must be >= 0");

    require(model_dim >= 1, "model.dim", "must be >= 1");
    require(model_heads >= 1, "model.heads", "must be >= 1");
    require(model_dim % model_heads == 0, "model.heads", "must divide model.dim");
    require(trunk_blocks >= 1, "model.trunk_blocks", "must be >= 1");
    require(branch_blocks >= 1, "model.branch_blocks", "must be >= 1");
    require(patch_size >= 1, "model.patch_size", "must be >= 1");
    require(latent_resolution >= 1, "model.latent_resolution", "must be >= 1");
    require(latent_resolution % patch_size == 0, "model.patch_size",
            "must divide model.latent_resolution");

    require(train_steps >= 1, "train.steps", "must be >= 1");
    require(learning_rate > 0.0, "train.learning_rate", "must be > 0");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "train.adam_beta1",
            "must be in [0, 1)");
    require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "train.adam_beta2",
            "must be in [0, 1)");
    require(adam_eps > 0.0, "train.adam_eps", "must be > 0");
    require(grad_clip > 0.0, "train.grad_clip", "must be > 0");

    require(sample_steps <= timesteps, "sampler.steps", "must be <= schedule.timesteps");
}

}  // namespace matforge::io
