// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "matforge/core/tensor.h"

namespace matforge::ad {

class Tape;

/// Handle into a Tape's node list.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape. Operations append nodes holding the forward value and a
/// backward closure; backward() replays the closures newest-first. Closures
/// address parents through the tape by id, never by reference, so the node
/// vector may grow freely.
class Tape {
public:
    /// Registers an input. Leaves get gradients like any other node; callers
    /// read out the ones they care about after backward().
    Var leaf(Tensor value);

    const Tensor& value(Var v) const { return nodes_[v.id].value; }

    /// Gradient of the last backward() root w.r.t. v; zeros when v does not
    /// influence the root.
    Tensor grad(Var v) const;

    /// Adds g into v's gradient accumulator (allocating on first touch).
    /// Backward closures use this; so can custom nodes.
    void accumulate(Var v, const Tensor& g);

    /// Appends an explicit node; `back` receives the tape and the node's own
    /// output gradient and must accumulate() into its parents.
    Var make_node(Tensor value,
                  std::function<void(Tape&, const Tensor& out_grad)> back);

    // Elementwise.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var lincomb(Var a, double ca, Var b, double cb);
    Var scale(Var a, double s);
    Var gelu(Var a);

    // Matrix ops on rank-2 (rows, cols) tensors.
    Var matmul(Var a, Var b);     // (m,k) x (k,n)
    Var matmul_nt(Var a, Var b);  // (m,k) x (n,k)^T
    Var linear(Var x, Var w, Var b);  // (n,din) x (din,dout) + row bias
    Var softmax_rows(Var a);
    Var layernorm_rows(Var a, double eps = 1e-6);  // per-row, no affine
    /// x * (1 + s) + b with s and b broadcast over rows; shapes (n,d), (d), (d).
    Var scale_shift_rows(Var x, Var s, Var b);

    Var concat_rows(const std::vector<Var>& parts);
    Var slice_rows(Var a, int64_t row0, int64_t row1);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_cols(Var a, int64_t col0, int64_t col1);

    // Image ops.
    Var conv3x3(Var x, Var w, Var b);  // (cin,h,w), (cout,cin,3,3), (cout)
    Var patchify(Var x, int patch);    // (c,h,w) -> (hp*wp, c*patch*patch)
    Var unpatchify(Var tokens, int c, int h, int w, int patch);

    // Scalar-valued reductions; outputs have shape (1).
    Var mean_norm(Var pred, const Tensor& target, bool l1);
    Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights);

    /// Seeds d(root)/d(root) = 1 and runs every backward closure in reverse
    /// creation order. root must hold a single element.
    void backward(Var root);

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // empty until touched
        std::function<void(Tape&, const Tensor& out_grad)> back;
    };

    std::vector<Node> nodes_;
};

}  // namespace matforge::ad
