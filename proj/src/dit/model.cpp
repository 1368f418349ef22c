// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "matforge/dit/model.h"

#include <cmath>
#include <stdexcept>

#include "matforge/core/errors.h"
#include "matforge/core/rng.h"

namespace matforge::dit {

namespace {

using ad::Tape;
using ad::Var;

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// (c,h,w) image layout <-> (h*w, c) token matrix.
Tensor chw_to_tokens(const Tensor& v) {
    int64_t c = v.shape[0], h = v.shape[1], w = v.shape[2];
    Tensor out({h * w, c});
    for (int64_t cc = 0; cc < c; ++cc) {
        for (int64_t i = 0; i < h * w; ++i) {
            out.data[i * c + cc] = v.data[cc * h * w + i];
        }
    }
    return out;
}

Tensor tokens_to_chw(const Tensor& m, int64_t c, int64_t h, int64_t w) {
    Tensor out({c, h, w});
    for (int64_t cc = 0; cc < c; ++cc) {
        for (int64_t i = 0; i < h * w; ++i) {
            out.data[cc * h * w + i] = m.data[i * c + cc];
        }
    }
    return out;
}

bool nonzero_rows(const Tensor& t) { return t.rank() == 2 && t.shape[0] > 0; }

/// Builds forward graphs on a tape; parameter leaves are created once per name
/// so gradients accumulate across every use site.
class GraphBuilder {
public:
    GraphBuilder(Tape& tape, const DitParams& params) : tape_(tape), params_(params) {}

    Var param(const std::string& name) {
        auto it = leaves_.find(name);
        if (it != leaves_.end()) return it->second;
        Var v = tape_.leaf(params_.at(name));
        leaves_.emplace(name, v);
        return v;
    }

    Var reshape(Var v, std::vector<int64_t> shape) {
        Tensor val = tape_.value(v);
        val.shape = std::move(shape);
        return tape_.make_node(std::move(val), [v](Tape& t, const Tensor& g) {
            Tensor gg = g;
            gg.shape = t.value(v).shape;
            t.accumulate(v, gg);
        });
    }

    Var attention(Var q_src, Var kv_src, const std::string& prefix) {
        Var q = tape_.linear(q_src, param(prefix + ".wq"), param(prefix + ".bq"));
        Var k = tape_.linear(kv_src, param(prefix + ".wk"), param(prefix + ".bk"));
        Var v = tape_.linear(kv_src, param(prefix + ".wv"), param(prefix + ".bv"));
        int64_t d = params_.dims.dim;
        int64_t heads = params_.dims.heads;
        int64_t hd = d / heads;
        double inv_sqrt = 1.0 / std::sqrt(double(hd));
        std::vector<Var> outs;
        for (int64_t h = 0; h < heads; ++h) {
            Var qh = tape_.slice_cols(q, h * hd, (h + 1) * hd);
            Var kh = tape_.slice_cols(k, h * hd, (h + 1) * hd);
            Var vh = tape_.slice_cols(v, h * hd, (h + 1) * hd);
            Var scores = tape_.scale(tape_.matmul_nt(qh, kh), inv_sqrt);
            Var probs = tape_.softmax_rows(scores);
            outs.push_back(tape_.matmul(probs, vh));
        }
        Var merged = heads == 1 ? outs[0] : tape_.concat_cols(outs);
        return tape_.linear(merged, param(prefix + ".wo"), param(prefix + ".bo"));
    }

    Var mlp(Var x, const std::string& prefix) {
        Var h = tape_.linear(x, param(prefix + ".mlp1.w"), param(prefix + ".mlp1.b"));
        h = tape_.gelu(h);
        return tape_.linear(h, param(prefix + ".mlp2.w"), param(prefix + ".mlp2.b"));
    }

    Var branch_block(Var x, const std::string& prefix) {
        Var h = tape_.layernorm_rows(x);
        x = tape_.add(x, attention(h, h, prefix + ".att"));
        h = tape_.layernorm_rows(x);
        return tape_.add(x, mlp(h, prefix));
    }

    Var branch_side(Var tokens, const std::string& side, const std::string& branch) {
        std::string base = side + "." + branch;
        Var x = tape_.linear(tokens, param(base + ".proj.w"), param(base + ".proj.b"));
        for (int j = 0; j < params_.dims.branch_blocks; ++j) {
            x = branch_block(x, base + ".blk" + std::to_string(j));
        }
        return x;
    }

    /// Timestep conditioning vector shared by every trunk block's modulation.
    Var timestep_hidden(int t) {
        Tensor emb = sinusoidal_embedding(double(t), params_.dims.dim);
        emb.shape = {1, params_.dims.dim};
        Var e = tape_.leaf(std::move(emb));
        Var h = tape_.linear(e, param("temb.mlp.w"), param("temb.mlp.b"));
        return tape_.gelu(h);
    }

    struct TrunkRefs {
        Var image{};
        Var text{};
        bool has_image = false;
        bool has_text = false;
    };

    TrunkRefs ref_leaves(const ReferenceTokens& ref) {
        TrunkRefs r;
        if (nonzero_rows(ref.image_tokens)) {
            if (ref.image_tokens.shape[1] != params_.dims.dim) {
                throw std::invalid_argument("image token width != model dim");
            }
            r.image = tape_.leaf(ref.image_tokens);
            r.has_image = true;
        }
        if (nonzero_rows(ref.text_tokens)) {
            if (ref.text_tokens.shape[1] != params_.dims.dim) {
                throw std::invalid_argument("text token width != model dim");
            }
            r.text = tape_.leaf(ref.text_tokens);
            r.has_text = true;
        }
        return r;
    }

    Var appearance_site(Var view_tokens, const TrunkRefs& refs,
                        const std::string& prefix) {
        std::vector<Var> kv{view_tokens};
        if (refs.has_image) kv.push_back(refs.image);
        if (refs.has_text) kv.push_back(refs.text);
        Var kv_seq = kv.size() == 1 ? kv[0] : tape_.concat_rows(kv);
        return attention(view_tokens, kv_seq, prefix);
    }

    /// Returns per-view attention outputs; inputs are the (already normed and
    /// modulated) view token matrices.
    std::vector<Var> global_site(const std::vector<Var>& view_tokens,
                                 const TrunkRefs& refs, const std::string& prefix,
                                 Var positions, bool use_positions) {
        std::vector<Var> seq;
        int64_t ref_rows = 0;
        if (refs.has_text) {
            seq.push_back(refs.text);
            ref_rows += tape_.value(refs.text).shape[0];
        }
        if (refs.has_image) {
            seq.push_back(refs.image);
            ref_rows += tape_.value(refs.image).shape[0];
        }
        int64_t hw = tape_.value(view_tokens[0]).shape[0];
        for (size_t f = 0; f < view_tokens.size(); ++f) {
            Var v = view_tokens[f];
            if (use_positions) {
                Var pos = tape_.slice_rows(positions, int64_t(f) * hw,
                                           int64_t(f + 1) * hw);
                v = tape_.add(v, pos);
            }
            seq.push_back(v);
        }
        Var joint = seq.size() == 1 ? seq[0] : tape_.concat_rows(seq);
        Var out = attention(joint, joint, prefix);
        std::vector<Var> per_view;
        for (size_t f = 0; f < view_tokens.size(); ++f) {
            per_view.push_back(tape_.slice_rows(out, ref_rows + int64_t(f) * hw,
                                                ref_rows + int64_t(f + 1) * hw));
        }
        return per_view;
    }

    std::vector<Var> trunk_block(std::vector<Var> views, const TrunkRefs& refs,
                                 const std::string& prefix, Var temb, Var positions,
                                 bool use_positions, bool with_appearance) {
        int64_t d = params_.dims.dim;
        Var mod = tape_.linear(temb, param(prefix + ".mod.w"), param(prefix + ".mod.b"));
        auto piece = [&](int i) {
            return reshape(tape_.slice_cols(mod, i * d, (i + 1) * d), {d});
        };
        int si = 0;
        if (with_appearance) {
            Var s = piece(2 * si), b = piece(2 * si + 1);
            ++si;
            for (Var& v : views) {
                Var h = tape_.scale_shift_rows(tape_.layernorm_rows(v), s, b);
                v = tape_.add(v, appearance_site(h, refs, prefix + ".app"));
            }
        }
        {
            Var s = piece(2 * si), b = piece(2 * si + 1);
            ++si;
            std::vector<Var> normed;
            for (Var v : views) {
                normed.push_back(tape_.scale_shift_rows(tape_.layernorm_rows(v), s, b));
            }
            std::vector<Var> att =
                global_site(normed, refs, prefix + ".glb", positions, use_positions);
            for (size_t f = 0; f < views.size(); ++f) {
                views[f] = tape_.add(views[f], att[f]);
            }
        }
        {
            Var s = piece(2 * si), b = piece(2 * si + 1);
            for (Var& v : views) {
                Var h = tape_.scale_shift_rows(tape_.layernorm_rows(v), s, b);
                v = tape_.add(v, mlp(h, prefix));
            }
        }
        return views;
    }

    std::map<std::string, Var> take_leaves() { return std::move(leaves_); }

    Tape& tape() { return tape_; }
    const ModelDims& dims() const { return params_.dims; }

private:
    Tape& tape_;
    const DitParams& params_;
    std::map<std::string, Var> leaves_;
};

void check_stack(const LatentStack& s, const char* what) {
    if (s.data.rank() != 5) {
        throw std::invalid_argument(std::string(what) + ": latent stack must be rank-5, got " +
                                    shape_string(s.data.shape));
    }
    for (int64_t dim : s.data.shape) {
        if (dim < 1) {
            throw std::invalid_argument(std::string(what) + ": latent dims must be >= 1");
        }
    }
}

void check_same_stack(const LatentStack& a, const LatentStack& b, const char* what) {
    if (a.data.shape != b.data.shape) {
        throw std::invalid_argument(std::string(what) + ": stack shape mismatch " +
                                    shape_string(a.data.shape) + " vs " +
                                    shape_string(b.data.shape));
    }
}

}  // namespace

LatentStack::LatentStack(Tensor t) : data(std::move(t)) {
    check_stack(*this, "LatentStack");
}

LatentStack::LatentStack(int64_t b, int64_t f, int64_t c, int64_t h, int64_t w)
    : data({b, f, c, h, w}) {
    check_stack(*this, "LatentStack");
}

Tensor LatentStack::view(int64_t b, int64_t f) const {
    int64_t c = channels(), h = height(), w = width();
    Tensor out({c, h, w});
    const double* src = data.data.data() + ((b * views() + f) * c) * h * w;
    std::copy(src, src + c * h * w, out.data.begin());
    return out;
}

void LatentStack::set_view(int64_t b, int64_t f, const Tensor& v) {
    int64_t c = channels(), h = height(), w = width();
    if (v.shape != std::vector<int64_t>{c, h, w}) {
        throw std::invalid_argument("set_view: shape mismatch " + shape_string(v.shape));
    }
    double* dst = data.data.data() + ((b * views() + f) * c) * h * w;
    std::copy(v.data.begin(), v.data.end(), dst);
}

Tensor ToyCodec::encode_albedo(const Image3& img) {
    Tensor t({3, img.height, img.width});
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const Vec3& p = img.at(x, y);
            for (int c = 0; c < 3; ++c) {
                t.data[(c * img.height + y) * img.width + x] = p[c];
            }
        }
    }
    return t;
}

Image3 ToyCodec::decode_albedo(const Tensor& latent) {
    int h = int(latent.shape[1]), w = int(latent.shape[2]);
    Image3 img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.at(x, y) = Vec3(latent.data[(0 * h + y) * w + x],
                                latent.data[(1 * h + y) * w + x],
                                latent.data[(2 * h + y) * w + x]);
        }
    }
    return img;
}

Tensor ToyCodec::encode_scalar(const Image1& img) {
    Tensor t({3, img.height, img.width});
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                t.data[(c * img.height + y) * img.width + x] = img.at(x, y);
            }
        }
    }
    return t;
}

Image1 ToyCodec::decode_scalar(const Tensor& latent) {
    int h = int(latent.shape[1]), w = int(latent.shape[2]);
    Image1 img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.at(x, y) = latent.data[(0 * h + y) * w + x];
        }
    }
    return img;
}

Tensor text_reference_tokens(const std::string& text, int count, int dim,
                             uint64_t seed) {
    Tensor t({count, dim});
    Rng rng(fnv1a(text) ^ seed, 0x7e27);
    for (double& v : t.data) v = rng.normal();
    return t;
}

Tensor image_reference_tokens(const Image3& img, int count, int dim, uint64_t seed) {
    Tensor t({count, dim});
    if (count == 0) return t;
    if (img.width < 1 || img.height < 1) {
        throw std::invalid_argument("image_reference_tokens: empty image");
    }
    Rng rng(seed, 0x1347);
    std::vector<double> proj(size_t(3) * dim);
    for (double& v : proj) v = rng.normal() / std::sqrt(3.0);
    for (int i = 0; i < count; ++i) {
        int y0 = int(int64_t(i) * img.height / count);
        int y1 = int(int64_t(i + 1) * img.height / count);
        if (y1 <= y0) y1 = y0 + 1;
        Vec3 avg(0.0);
        int n = 0;
        for (int y = y0; y < y1 && y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                avg = avg + img.at(x, y);
                ++n;
            }
        }
        avg = avg / double(std::max(n, 1));
        for (int j = 0; j < dim; ++j) {
            t.data[int64_t(i) * dim + j] = avg.x * proj[size_t(0) * dim + j] +
                                           avg.y * proj[size_t(1) * dim + j] +
                                           avg.z * proj[size_t(2) * dim + j];
        }
    }
    return t;
}

Tensor sinusoidal_embedding(double pos, int dim) {
    Tensor t({dim});
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double freq = std::pow(10000.0, -double(i) / double(half));
        t.data[2 * i] = std::sin(pos * freq);
        t.data[2 * i + 1] = std::cos(pos * freq);
    }
    if (dim % 2 == 1 && dim > 0) t.data[dim - 1] = std::sin(pos / 10000.0);
    return t;
}

Tensor position_table(int views, int rows, int cols, int dim) {
    int c1 = dim / 3, c2 = dim / 3;
    int c0 = dim - c1 - c2;
    Tensor t({int64_t(views) * rows * cols, dim});
    for (int f = 0; f < views; ++f) {
        for (int y = 0; y < rows; ++y) {
            for (int x = 0; x < cols; ++x) {
                int64_t row = (int64_t(f) * rows + y) * cols + x;
                Tensor ef = sinusoidal_embedding(f, c0);
                Tensor ey = sinusoidal_embedding(y, c1);
                Tensor ex = sinusoidal_embedding(x, c2);
                double* dst = t.data.data() + row * dim;
                std::copy(ef.data.begin(), ef.data.end(), dst);
                std::copy(ey.data.begin(), ey.data.end(), dst + c0);
                std::copy(ex.data.begin(), ex.data.end(), dst + c0 + c1);
            }
        }
    }
    return t;
}

const char* branch_name(Branch b) {
    switch (b) {
        case Branch::kAlbedo: return "albedo";
        case Branch::kRoughness: return "roughness";
        case Branch::kMetallic: return "metallic";
    }
    throw std::invalid_argument("bad branch");
}

LatentStack inject_geometry(const LatentStack& x, const LatentStack& n,
                            const DitParams& params) {
    check_stack(x, "inject_geometry");
    check_same_stack(x, n, "inject_geometry");
    LatentStack out(x.data.shape[0], x.data.shape[1], x.data.shape[2], x.data.shape[3],
                    x.data.shape[4]);
    Tape tape;
    GraphBuilder gb(tape, params);
    Var w = gb.param("geo.conv.w");
    Var b = gb.param("geo.conv.b");
    for (int64_t bi = 0; bi < x.batch(); ++bi) {
        for (int64_t f = 0; f < x.views(); ++f) {
            Var nv = tape.leaf(n.view(bi, f));
            Var xv = tape.leaf(x.view(bi, f));
            Var g = tape.conv3x3(nv, w, b);
            out.set_view(bi, f, tape.value(tape.add(g, xv)));
        }
    }
    return out;
}

namespace {

/// Shared wrapper for the two standalone attention ops: converts latent views
/// to token matrices, runs `site`, converts back.
template <typename SiteFn>
LatentStack run_token_op(const LatentStack& x, const DitParams& params, SiteFn site) {
    check_stack(x, "attention op");
    if (x.channels() != params.dims.dim) {
        throw std::invalid_argument("attention op: channel width " +
                                    std::to_string(x.channels()) + " != model dim " +
                                    std::to_string(params.dims.dim));
    }
    LatentStack out(x.data.shape[0], x.data.shape[1], x.data.shape[2], x.data.shape[3],
                    x.data.shape[4]);
    for (int64_t bi = 0; bi < x.batch(); ++bi) {
        Tape tape;
        GraphBuilder gb(tape, params);
        std::vector<Var> views;
        for (int64_t f = 0; f < x.views(); ++f) {
            views.push_back(tape.leaf(chw_to_tokens(x.view(bi, f))));
        }
        std::vector<Var> result = site(tape, gb, views);
        for (int64_t f = 0; f < x.views(); ++f) {
            out.set_view(bi, f,
                         tokens_to_chw(tape.value(result[f]), x.channels(), x.height(),
                                       x.width()));
        }
    }
    return out;
}

}  // namespace

LatentStack appearance_attention(const LatentStack& x, const ReferenceTokens& ref,
                                 const DitParams& params, const std::string& prefix) {
    return run_token_op(x, params,
                        [&](Tape& tape, GraphBuilder& gb, std::vector<Var>& views) {
                            auto refs = gb.ref_leaves(ref);
                            std::vector<Var> out;
                            for (Var v : views) {
                                out.push_back(
                                    tape.add(v, gb.appearance_site(v, refs, prefix)));
                            }
                            return out;
                        });
}

LatentStack global_3d_attention(const LatentStack& x, const ReferenceTokens& ref,
                                const DitParams& params, const std::string& prefix,
                                bool use_positions) {
    return run_token_op(
        x, params, [&](Tape& tape, GraphBuilder& gb, std::vector<Var>& views) {
            auto refs = gb.ref_leaves(ref);
            Var pos;
            if (use_positions) {
                pos = tape.leaf(position_table(int(x.views()), int(x.height()),
                                               int(x.width()), int(x.channels())));
            }
            std::vector<Var> att =
                gb.global_site(views, refs, prefix, pos, use_positions);
            std::vector<Var> out;
            for (size_t f = 0; f < views.size(); ++f) {
                out.push_back(tape.add(views[f], att[f]));
            }
            return out;
        });
}

LatentStack branch_forward(const LatentStack& x, Branch branch,
                           const DitParams& params) {
    return run_token_op(x, params,
                        [&](Tape&, GraphBuilder& gb, std::vector<Var>& views) {
                            std::vector<Var> out;
                            for (Var v : views) {
                                out.push_back(gb.branch_side(v, "in", branch_name(branch)));
                            }
                            return out;
                        });
}

LatentStack fuse_branches(const LatentStack& a, const LatentStack& r,
                          const LatentStack& m) {
    check_stack(a, "fuse_branches");
    check_same_stack(a, r, "fuse_branches");
    check_same_stack(a, m, "fuse_branches");
    LatentStack out = a;
    for (size_t i = 0; i < out.data.data.size(); ++i) {
        out.data.data[i] += r.data.data[i] + m.data.data[i];
    }
    return out;
}

MgDitGraph build_mgdit_graph(ad::Tape& tape, const LatentStack& x_albedo,
                             const LatentStack& x_roughness,
                             const LatentStack& x_metallic, const LatentStack& normals,
                             const ReferenceTokens& ref, int t, const DitParams& params,
                             int batch_index, bool use_positions) {
    if (params.variant != ModelVariant::kMgDit) {
        throw std::invalid_argument("build_mgdit_graph: params are not an MG-DiT set");
    }
    check_stack(x_albedo, "mgdit_forward");
    check_same_stack(x_albedo, x_roughness, "mgdit_forward");
    check_same_stack(x_albedo, x_metallic, "mgdit_forward");
    check_same_stack(x_albedo, normals, "mgdit_forward");
    const ModelDims& dims = params.dims;
    if (x_albedo.channels() != dims.latent_channels ||
        x_albedo.height() != dims.latent_res || x_albedo.width() != dims.latent_res) {
        throw std::invalid_argument("mgdit_forward: latent shape " +
                                    shape_string(x_albedo.data.shape) +
                                    " does not match model dims");
    }

    GraphBuilder gb(tape, params);
    MgDitGraph graph;
    int64_t f_count = x_albedo.views();
    int c = dims.latent_channels, hw = dims.latent_res;
    int side = hw / dims.patch;

    Var gw = gb.param("geo.conv.w");
    Var gcb = gb.param("geo.conv.b");
    Var temb = gb.timestep_hidden(t);
    auto refs = gb.ref_leaves(ref);
    Var pos;
    if (use_positions) {
        pos = tape.leaf(position_table(int(f_count), side, side, dims.dim));
    }

    const std::array<const LatentStack*, 3> stacks{&x_albedo, &x_roughness, &x_metallic};
    std::array<std::vector<Var>, 3> branch_tokens;
    for (int bi = 0; bi < 3; ++bi) {
        const char* name = branch_name(Branch(bi));
        for (int64_t f = 0; f < f_count; ++f) {
            Var x = tape.leaf(stacks[bi]->view(batch_index, f));
            graph.inputs[bi].push_back(x);
            Var n = tape.leaf(normals.view(batch_index, f));
            Var xg = tape.add(tape.conv3x3(n, gw, gcb), x);
            Var tok = tape.patchify(xg, dims.patch);
            Var emb = tape.linear(tok, gb.param("embed.w"), gb.param("embed.b"));
            branch_tokens[bi].push_back(gb.branch_side(emb, "in", name));
        }
    }

    std::vector<Var> trunk;
    for (int64_t f = 0; f < f_count; ++f) {
        trunk.push_back(tape.add(tape.add(branch_tokens[0][f], branch_tokens[1][f]),
                                 branch_tokens[2][f]));
    }
    for (int i = 0; i < dims.trunk_blocks; ++i) {
        trunk = gb.trunk_block(trunk, refs, "trunk" + std::to_string(i), temb, pos,
                               use_positions, /*with_appearance=*/true);
    }

    for (int bi = 0; bi < 3; ++bi) {
        const char* name = branch_name(Branch(bi));
        for (int64_t f = 0; f < f_count; ++f) {
            Var o = gb.branch_side(trunk[f], "out", name);
            Var flat = tape.linear(o, gb.param("unembed.w"), gb.param("unembed.b"));
            graph.outputs[bi].push_back(tape.unpatchify(flat, c, hw, hw, dims.patch));
        }
    }
    graph.param_vars = gb.take_leaves();
    return graph;
}

MgDitOutput mgdit_forward(const LatentStack& x_albedo, const LatentStack& x_roughness,
                          const LatentStack& x_metallic, const LatentStack& normals,
                          const ReferenceTokens& ref, int t, const DitParams& params,
                          bool use_positions) {
    MgDitOutput out{LatentStack(x_albedo.data.shape[0], x_albedo.data.shape[1],
                                x_albedo.data.shape[2], x_albedo.data.shape[3],
                                x_albedo.data.shape[4]),
                    LatentStack(x_albedo.data.shape[0], x_albedo.data.shape[1],
                                x_albedo.data.shape[2], x_albedo.data.shape[3],
                                x_albedo.data.shape[4]),
                    LatentStack(x_albedo.data.shape[0], x_albedo.data.shape[1],
                                x_albedo.data.shape[2], x_albedo.data.shape[3],
                                x_albedo.data.shape[4])};
    for (int64_t b = 0; b < x_albedo.batch(); ++b) {
        Tape tape;
        MgDitGraph g = build_mgdit_graph(tape, x_albedo, x_roughness, x_metallic,
                                         normals, ref, t, params, int(b), use_positions);
        std::array<LatentStack*, 3> dests{&out.v_albedo, &out.v_roughness,
                                          &out.v_metallic};
        for (int bi = 0; bi < 3; ++bi) {
            for (int64_t f = 0; f < x_albedo.views(); ++f) {
                dests[bi]->set_view(b, f, tape.value(g.outputs[bi][f]));
            }
        }
    }
    return out;
}

MrDitGraph build_mrdit_graph(ad::Tape& tape, const LatentStack& z,
                             const LatentStack& coarse, const LatentStack& uv_normal,
                             const ReferenceTokens& text, int t, const DitParams& params,
                             int batch_index, bool use_positions) {
    if (params.variant != ModelVariant::kMrDit) {
        throw std::invalid_argument("build_mrdit_graph: params are not an MR-DiT set");
    }
    check_stack(z, "mrdit_forward");
    check_same_stack(z, coarse, "mrdit_forward");
    check_same_stack(z, uv_normal, "mrdit_forward");
    if (z.views() != 1) {
        throw std::invalid_argument("mrdit_forward: z must have a single view");
    }
    const ModelDims& dims = params.dims;
    if (z.channels() != dims.latent_channels || z.height() != dims.latent_res ||
        z.width() != dims.latent_res) {
        throw std::invalid_argument("mrdit_forward: latent shape " +
                                    shape_string(z.data.shape) +
                                    " does not match model dims");
    }
    if (nonzero_rows(text.image_tokens)) {
        throw std::invalid_argument("mrdit_forward: image tokens are not accepted");
    }

    GraphBuilder gb(tape, params);
    MrDitGraph graph;
    int c = dims.latent_channels, hw = dims.latent_res;
    int side = hw / dims.patch;

    Var zl = tape.leaf(z.view(batch_index, 0));
    graph.input = zl;
    Var tc = tape.leaf(coarse.view(batch_index, 0));
    Var tn = tape.leaf(uv_normal.view(batch_index, 0));
    Var g = tape.conv3x3(tn, gb.param("geo.conv.w"), gb.param("geo.conv.b"));
    Var lat = tape.add(zl, tape.add(tc, g));

    Var temb = gb.timestep_hidden(t);
    auto refs = gb.ref_leaves(text);
    Var pos;
    if (use_positions) {
        pos = tape.leaf(position_table(1, side, side, dims.dim));
    }

    Var tok = tape.patchify(lat, dims.patch);
    Var emb = tape.linear(tok, gb.param("embed.w"), gb.param("embed.b"));
    emb = tape.linear(emb, gb.param("in.main.proj.w"), gb.param("in.main.proj.b"));
    std::vector<Var> trunk{emb};
    for (int i = 0; i < dims.trunk_blocks; ++i) {
        trunk = gb.trunk_block(trunk, refs, "trunk" + std::to_string(i), temb, pos,
                               use_positions, /*with_appearance=*/false);
    }
    Var o = tape.linear(trunk[0], gb.param("out.main.proj.w"),
                        gb.param("out.main.proj.b"));
    Var flat = tape.linear(o, gb.param("unembed.w"), gb.param("unembed.b"));
    graph.output = tape.unpatchify(flat, c, hw, hw, dims.patch);
    graph.param_vars = gb.take_leaves();
    return graph;
}

LatentStack mrdit_forward(const LatentStack& z, const LatentStack& coarse,
                          const LatentStack& uv_normal, const ReferenceTokens& text,
                          int t, const DitParams& params, bool use_positions) {
    LatentStack out(z.data.shape[0], z.data.shape[1], z.data.shape[2], z.data.shape[3],
                    z.data.shape[4]);
    for (int64_t b = 0; b < z.batch(); ++b) {
        Tape tape;
        MrDitGraph g = build_mrdit_graph(tape, z, coarse, uv_normal, text, t, params,
                                         int(b), use_positions);
        out.set_view(b, 0, tape.value(g.output));
    }
    return out;
}

}  // namespace matforge::dit
