// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "matforge/core/image.h"
#include "matforge/core/tensor.h"
#include "matforge/dit/ad.h"
#include "matforge/dit/params.h"

namespace matforge::dit {

/// Multi-view latent batch, shape (b, f, c, h, w). With the identity codec the
/// latents are material images; attention ops also accept token stacks where c
/// plays the role of the embedding width.
struct LatentStack {
    Tensor data;

    LatentStack() = default;
    explicit LatentStack(Tensor t);
    LatentStack(int64_t b, int64_t f, int64_t c, int64_t h, int64_t w);

    int64_t batch() const { return data.shape[0]; }
    int64_t views() const { return data.shape[1]; }
    int64_t channels() const { return data.shape[2]; }
    int64_t height() const { return data.shape[3]; }
    int64_t width() const { return data.shape[4]; }

    /// Copies element (b, f) out as a (c, h, w) tensor, and back in.
    Tensor view(int64_t b, int64_t f) const;
    void set_view(int64_t b, int64_t f, const Tensor& v);
};

/// Conditioning tokens shared by every view; either matrix may have zero rows.
struct ReferenceTokens {
    Tensor image_tokens{std::vector<int64_t>{0, 0}};  // (n_i, d)
    Tensor text_tokens{std::vector<int64_t>{0, 0}};   // (n_t, d)
};

/// Identity latent codec: albedo maps straight to the 3 channels; scalar maps
/// replicate across channels on encode and read channel 0 on decode.
struct ToyCodec {
    static Tensor encode_albedo(const Image3& img);
    static Image3 decode_albedo(const Tensor& latent);
    static Tensor encode_scalar(const Image1& img);
    static Image1 decode_scalar(const Tensor& latent);
};

/// Fixed random-projection tokenizers; no learned weights.
Tensor text_reference_tokens(const std::string& text, int count, int dim,
                             uint64_t seed);
Tensor image_reference_tokens(const Image3& img, int count, int dim, uint64_t seed);

/// Sinusoidal embedding of a scalar position; odd dims get a final unpaired sin.
Tensor sinusoidal_embedding(double pos, int dim);
/// Per-token 3D sinusoidal positions over (view, row, col); shape
/// (views * rows * cols, dim) split into three near-equal coordinate chunks.
Tensor position_table(int views, int rows, int cols, int dim);

/// x_g = G(n) + x with G a learnable per-view 3x3 convolution.
LatentStack inject_geometry(const LatentStack& x, const LatentStack& n,
                            const DitParams& params);

/// Per-view attention: queries from view tokens, keys/values from
/// view tokens concatenated with image then text reference tokens.
LatentStack appearance_attention(const LatentStack& x, const ReferenceTokens& ref,
                                 const DitParams& params,
                                 const std::string& prefix = "trunk0.app");

/// Joint attention over text tokens, image tokens, and every view's tokens
/// (with 3D sinusoidal positions unless disabled); reference outputs dropped.
LatentStack global_3d_attention(const LatentStack& x, const ReferenceTokens& ref,
                                const DitParams& params,
                                const std::string& prefix = "trunk0.glb",
                                bool use_positions = true);

enum class Branch { kAlbedo = 0, kRoughness = 1, kMetallic = 2 };
const char* branch_name(Branch b);

/// Branch input projection (no residual) followed by that branch's blocks.
LatentStack branch_forward(const LatentStack& x, Branch branch,
                           const DitParams& params);

/// Elementwise sum of the three branch outputs.
LatentStack fuse_branches(const LatentStack& a, const LatentStack& r,
                          const LatentStack& m);

struct MgDitOutput {
    LatentStack v_albedo;
    LatentStack v_roughness;
    LatentStack v_metallic;
};

MgDitOutput mgdit_forward(const LatentStack& x_albedo, const LatentStack& x_roughness,
                          const LatentStack& x_metallic, const LatentStack& normals,
                          const ReferenceTokens& ref, int t, const DitParams& params,
                          bool use_positions = true);

/// Refinement variant: z + encode(T_c) + G(T_n) through trunk blocks without
/// appearance attention; texture latents must already be at latent resolution.
LatentStack mrdit_forward(const LatentStack& z, const LatentStack& coarse,
                          const LatentStack& uv_normal, const ReferenceTokens& text,
                          int t, const DitParams& params, bool use_positions = true);

/// Tape-level graph for one batch element; training reads gradients from the
/// parameter leaves after backward().
struct MgDitGraph {
    std::map<std::string, ad::Var> param_vars;
    // Indexed [branch][view]; inputs are the x_t leaves, outputs the (c,h,w)
    // v-predictions.
    std::array<std::vector<ad::Var>, 3> inputs;
    std::array<std::vector<ad::Var>, 3> outputs;
};

MgDitGraph build_mgdit_graph(ad::Tape& tape, const LatentStack& x_albedo,
                             const LatentStack& x_roughness,
                             const LatentStack& x_metallic, const LatentStack& normals,
                             const ReferenceTokens& ref, int t, const DitParams& params,
                             int batch_index, bool use_positions = true);

struct MrDitGraph {
    std::map<std::string, ad::Var> param_vars;
    ad::Var input;   // z leaf, (c,h,w)
    ad::Var output;  // v-prediction, (c,h,w)
};

MrDitGraph build_mrdit_graph(ad::Tape& tape, const LatentStack& z,
                             const LatentStack& coarse, const LatentStack& uv_normal,
                             const ReferenceTokens& text, int t, const DitParams& params,
                             int batch_index, bool use_positions = true);

}  // namespace matforge::dit
