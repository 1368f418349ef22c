// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "matforge/core/tensor.h"

namespace matforge::dit {

enum class ModelVariant { kMgDit = 0, kMrDit = 1 };

struct ModelDims {
    int dim = 64;
    int heads = 4;
    int trunk_blocks = 2;
    int branch_blocks = 1;
    int patch = 4;
    int latent_res = 32;
    int latent_channels = 3;
    int views = 4;

    int tokens_per_view() const {
        int side = latent_res / patch;
        return side * side;
    }
    int patch_features() const { return latent_channels * patch * patch; }
    void validate() const;
};

/// Named parameter tensors plus the dimensions they were built for. The map is
/// ordered by name; every traversal (init, optimizer, archive) uses that order.
struct DitParams {
    ModelVariant variant = ModelVariant::kMgDit;
    ModelDims dims;
    std::map<std::string, Tensor> tensors;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return tensors.count(name) != 0; }
};

/// Gaussian init scaled by 1/sqrt(fan_in); unembed and modulation tensors start
/// at zero so a fresh model predicts zero and ignores the timestep.
DitParams init_mgdit_params(const ModelDims& dims, uint64_t seed);
DitParams init_mrdit_params(const ModelDims& dims, uint64_t seed);

/// Rounds every entry through 32-bit float. Training applies this after each
/// optimizer step so saved archives resume bit-exactly.
void quantize_f32(Tensor& t);

/// Archive layout: "MFTENSOR" magic, u64 little-endian manifest byte length,
/// JSON manifest [{name, shape, offset}], then a packed little-endian f32 blob.
void save_tensor_archive(const std::string& path,
                         const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> load_tensor_archive(const std::string& path);

/// Params archive adds meta.* scalars (dims and variant) to the tensor map.
void save_params(const std::string& path, const DitParams& params);
/// Loads model parameters only; optimizer entries in a train-state archive are
/// dropped so the result plugs straight into the forward pass.
DitParams load_params(const std::string& path);
/// Same parse keeping every non-meta entry; train-state loading reads the
/// optimizer tensors out of the returned map.
DitParams load_params_raw(const std::string& path);

}  // namespace matforge::dit
