// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "matforge/dit/params.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "matforge/core/errors.h"
#include "matforge/core/rng.h"

namespace matforge::dit {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'M', 'F', 'T', 'E', 'N', 'S', 'O', 'R'};

void add_gaussian(DitParams& p, Rng& rng, const std::string& name,
                  std::vector<int64_t> shape, int64_t fan_in) {
    Tensor t(shape);
    double s = 1.0 / std::sqrt(double(fan_in));
    for (double& v : t.data) v = rng.normal() * s;
    p.tensors.emplace(name, std::move(t));
}

void add_zeros(DitParams& p, const std::string& name, std::vector<int64_t> shape) {
    p.tensors.emplace(name, Tensor(std::move(shape)));
}

void add_linear(DitParams& p, Rng& rng, const std::string& prefix, int64_t din,
                int64_t dout, bool zero = false) {
    if (zero) {
        add_zeros(p, prefix + ".w", {din, dout});
        add_zeros(p, prefix + ".b", {dout});
    } else {
        add_gaussian(p, rng, prefix + ".w", {din, dout}, din);
        add_zeros(p, prefix + ".b", {dout});
    }
}

void add_attention(DitParams& p, Rng& rng, const std::string& prefix, int64_t d) {
    for (const char* part : {"q", "k", "v", "o"}) {
        add_gaussian(p, rng, prefix + ".w" + part, {d, d}, d);
        add_zeros(p, prefix + ".b" + part, {d});
    }
}

void add_mlp(DitParams& p, Rng& rng, const std::string& prefix, int64_t d) {
    add_linear(p, rng, prefix + ".mlp1", d, 4 * d);
    add_linear(p, rng, prefix + ".mlp2", 4 * d, d);
}

void add_branch_block(DitParams& p, Rng& rng, const std::string& prefix, int64_t d) {
    add_attention(p, rng, prefix + ".att", d);
    add_mlp(p, rng, prefix, d);
}

DitParams init_common(const ModelDims& dims, uint64_t seed, ModelVariant variant) {
    dims.validate();
    DitParams p;
    p.variant = variant;
    p.dims = dims;
    Rng rng(seed, 0xd17);
    int64_t d = dims.dim;
    int64_t c = dims.latent_channels;
    int64_t pf = dims.patch_features();

    add_gaussian(p, rng, "geo.conv.w", {c, c, 3, 3}, c * 9);
    add_zeros(p, "geo.conv.b", {c});
    add_linear(p, rng, "embed", pf, d);
    add_linear(p, rng, "unembed", d, pf, /*zero=*/true);
    add_linear(p, rng, "temb.mlp", d, d);

    int sublayers = variant == ModelVariant::kMgDit ? 3 : 2;
    for (int i = 0; i < dims.trunk_blocks; ++i) {
        std::string pre = "trunk" + std::to_string(i);
        add_linear(p, rng, pre + ".mod", d, 2 * sublayers * d, /*zero=*/true);
        if (variant == ModelVariant::kMgDit) add_attention(p, rng, pre + ".app", d);
        add_attention(p, rng, pre + ".glb", d);
        add_mlp(p, rng, pre, d);
    }
    return p;
}

void write_u64_le(std::ostream& out, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (unsigned char)(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64_le(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

void write_f32_le(std::ostream& out, float f) {
    uint32_t bits = std::bit_cast<uint32_t>(f);
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (unsigned char)(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

float read_f32_le(const unsigned char* b) {
    uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= uint32_t(b[i]) << (8 * i);
    return std::bit_cast<float>(bits);
}

Tensor scalar_tensor(double v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
}

}  // namespace

void ModelDims::validate() const {
    if (dim < 1 || heads < 1 || trunk_blocks < 1 || branch_blocks < 0 || patch < 1 ||
        latent_res < 1 || latent_channels < 1 || views < 1) {
        throw DataError("model dims must be positive");
    }
    if (dim % heads != 0) throw DataError("model dim must be divisible by heads");
    if (latent_res % patch != 0) {
        throw DataError("latent resolution must be divisible by patch size");
    }
}

Tensor& DitParams::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("missing parameter tensor: " + name);
    return it->second;
}

const Tensor& DitParams::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("missing parameter tensor: " + name);
    return it->second;
}

DitParams init_mgdit_params(const ModelDims& dims, uint64_t seed) {
    DitParams p = init_common(dims, seed, ModelVariant::kMgDit);
    Rng rng(seed, 0xb4a);
    int64_t d = dims.dim;
    for (const char* branch : {"albedo", "roughness", "metallic"}) {
        for (const char* side : {"in", "out"}) {
            std::string base = std::string(side) + "." + branch;
            add_linear(p, rng, base + ".proj", d, d);
            for (int j = 0; j < dims.branch_blocks; ++j) {
                add_branch_block(p, rng, base + ".blk" + std::to_string(j), d);
            }
        }
    }
    return p;
}

DitParams init_mrdit_params(const ModelDims& dims, uint64_t seed) {
    DitParams p = init_common(dims, seed, ModelVariant::kMrDit);
    Rng rng(seed, 0xb4b);
    int64_t d = dims.dim;
    add_linear(p, rng, "in.main.proj", d, d);
    add_linear(p, rng, "out.main.proj", d, d);
    return p;
}

void quantize_f32(Tensor& t) {
    for (double& v : t.data) v = double(float(v));
}

void save_tensor_archive(const std::string& path,
                         const std::map<std::string, Tensor>& tensors) {
    json manifest = json::array();
    uint64_t offset = 0;
    for (const auto& [name, tensor] : tensors) {
        manifest.push_back({{"name", name}, {"shape", tensor.shape}, {"offset", offset}});
        offset += uint64_t(tensor.numel()) * 4;
    }
    std::string mtext = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out.write(kMagic, 8);
    write_u64_le(out, mtext.size());
    out.write(mtext.data(), std::streamsize(mtext.size()));
    for (const auto& [name, tensor] : tensors) {
        for (double v : tensor.data) write_f32_le(out, float(v));
    }
    if (!out) throw DataError("write failed for " + path);
}

std::map<std::string, Tensor> load_tensor_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) {
        throw DataError("not a tensor archive: " + path);
    }
    uint64_t mlen = read_u64_le(in);
    std::string mtext(mlen, '\0');
    in.read(mtext.data(), std::streamsize(mlen));
    if (!in) throw DataError("truncated manifest in " + path);

    json manifest;
    try {
        manifest = json::parse(mtext);
    } catch (const json::exception& e) {
        throw DataError("bad manifest in " + path + ": " + e.what());
    }

    std::vector<unsigned char> blob(std::istreambuf_iterator<char>(in), {});
    std::map<std::string, Tensor> tensors;
    for (const auto& entry : manifest) {
        std::string name = entry.at("name").get<std::string>();
        std::vector<int64_t> shape = entry.at("shape").get<std::vector<int64_t>>();
        uint64_t offset = entry.at("offset").get<uint64_t>();
        Tensor t(shape);
        uint64_t bytes = uint64_t(t.numel()) * 4;
        if (offset + bytes > blob.size()) {
            throw DataError("tensor " + name + " extends past blob in " + path);
        }
        for (int64_t i = 0; i < t.numel(); ++i) {
            t.data[i] = double(read_f32_le(blob.data() + offset + uint64_t(i) * 4));
        }
        tensors.emplace(std::move(name), std::move(t));
    }
    return tensors;
}

void save_params(const std::string& path, const DitParams& params) {
    std::map<std::string, Tensor> all = params.tensors;
    all.emplace("meta.variant", scalar_tensor(double(int(params.variant))));
    all.emplace("meta.dim", scalar_tensor(params.dims.dim));
    all.emplace("meta.heads", scalar_tensor(params.dims.heads));
    all.emplace("meta.trunk_blocks", scalar_tensor(params.dims.trunk_blocks));
    all.emplace("meta.branch_blocks", scalar_tensor(params.dims.branch_blocks));
    all.emplace("meta.patch", scalar_tensor(params.dims.patch));
    all.emplace("meta.latent_res", scalar_tensor(params.dims.latent_res));
    all.emplace("meta.latent_channels", scalar_tensor(params.dims.latent_channels));
    all.emplace("meta.views", scalar_tensor(params.dims.views));
    save_tensor_archive(path, all);
}

DitParams load_params_raw(const std::string& path) {
    std::map<std::string, Tensor> all = load_tensor_archive(path);
    auto take_meta = [&](const std::string& name) {
        auto it = all.find(name);
        if (it == all.end()) throw DataError("params archive missing " + name);
        double v = it->second.data.at(0);
        all.erase(it);
        return v;
    };
    DitParams p;
    p.variant = ModelVariant(int(take_meta("meta.variant")));
    p.dims.dim = int(take_meta("meta.dim"));
    p.dims.heads = int(take_meta("meta.heads"));
    p.dims.trunk_blocks = int(take_meta("meta.trunk_blocks"));
    p.dims.branch_blocks = int(take_meta("meta.branch_blocks"));
    p.dims.patch = int(take_meta("meta.patch"));
    p.dims.latent_res = int(take_meta("meta.latent_res"));
    p.dims.latent_channels = int(take_meta("meta.latent_channels"));
    p.dims.views = int(take_meta("meta.views"));
    p.dims.validate();
    p.tensors = std::move(all);
    return p;
}

DitParams load_params(const std::string& path) {
    DitParams p = load_params_raw(path);
    // Train-state archives carry optimizer moments alongside the model.
    std::erase_if(p.tensors,
                  [](const auto& kv) { return kv.first.rfind("adam.", 0) == 0; });
    return p;
}

}  // namespace matforge::dit
