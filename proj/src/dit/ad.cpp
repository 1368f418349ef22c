// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "matforge/dit/ad.h"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace matforge::ad {

namespace {

void check_rank2(const Tensor& t, const char* what) {
    if (t.rank() != 2) {
        throw std::invalid_argument(std::string(what) + ": need rank-2, got " +
                                    shape_string(t.shape));
    }
}

// c(m,n) += a(m,k) * b(k,n)
void matmul_nn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a.data.data() + i * k;
        double* crow = c.data.data() + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = b.data.data() + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c(m,n) += a(m,k) * b(n,k)^T
void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    int64_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a.data.data() + i * k;
        double* crow = c.data.data() + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* brow = b.data.data() + j * k;
            double sum = 0.0;
            for (int64_t kk = 0; kk < k; ++kk) sum += arow[kk] * brow[kk];
            crow[j] += sum;
        }
    }
}

// c(k,n) += a(m,k)^T * b(m,n)
void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a.data.data() + i * k;
        const double* brow = b.data.data() + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            double av = arow[kk];
            if (av == 0.0) continue;
            double* crow = c.data.data() + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

Var Tape::leaf(Tensor value) {
    nodes_.push_back({std::move(value), {}, nullptr});
    return {int(nodes_.size()) - 1};
}

Tensor Tape::grad(Var v) const {
    const Node& node = nodes_[v.id];
    if (!node.grad.data.empty()) return node.grad;
    Tensor zero;
    zero.shape = node.value.shape;
    zero.data.assign(node.value.data.size(), 0.0);
    return zero;
}

void Tape::accumulate(Var v, const Tensor& g) {
    Node& node = nodes_[v.id];
    if (g.shape != node.value.shape) {
        throw std::logic_error("gradient shape mismatch: " + shape_string(g.shape) +
                               " into " + shape_string(node.value.shape));
    }
    if (node.grad.data.empty()) {
        node.grad = g;
        return;
    }
    for (size_t i = 0; i < g.data.size(); ++i) node.grad.data[i] += g.data[i];
}

Var Tape::make_node(Tensor value,
                    std::function<void(Tape&, const Tensor& out_grad)> back) {
    nodes_.push_back({std::move(value), {}, std::move(back)});
    return {int(nodes_.size()) - 1};
}

Var Tape::add(Var a, Var b) { return lincomb(a, 1.0, b, 1.0); }

Var Tape::sub(Var a, Var b) { return lincomb(a, 1.0, b, -1.0); }

Var Tape::lincomb(Var a, double ca, Var b, double cb) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    check_same_shape(av, bv, "lincomb");
    Tensor out;
    out.shape = av.shape;
    out.data.resize(av.data.size());
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = ca * av.data[i] + cb * bv.data[i];
    }
    return make_node(std::move(out), [a, b, ca, cb](Tape& t, const Tensor& g) {
        Tensor ga = g;
        for (double& v : ga.data) v *= ca;
        t.accumulate(a, ga);
        Tensor gb = g;
        for (double& v : gb.data) v *= cb;
        t.accumulate(b, gb);
    });
}

Var Tape::scale(Var a, double s) {
    Tensor out = value(a);
    for (double& v : out.data) v *= s;
    return make_node(std::move(out), [a, s](Tape& t, const Tensor& g) {
        Tensor ga = g;
        for (double& v : ga.data) v *= s;
        t.accumulate(a, ga);
    });
}

Var Tape::gelu(Var a) {
    const Tensor& av = value(a);
    Tensor out;
    out.shape = av.shape;
    out.data.resize(av.data.size());
    for (size_t i = 0; i < out.data.size(); ++i) {
        double x = av.data[i];
        out.data[i] = 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
    }
    return make_node(std::move(out), [a](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        Tensor ga;
        ga.shape = x.shape;
        ga.data.resize(x.data.size());
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (size_t i = 0; i < x.data.size(); ++i) {
            double xv = x.data[i];
            double cdf = 0.5 * (1.0 + std::erf(xv / std::numbers::sqrt2));
            double pdf = inv_sqrt_2pi * std::exp(-0.5 * xv * xv);
            ga.data[i] = g.data[i] * (cdf + xv * pdf);
        }
        t.accumulate(a, ga);
    });
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    check_rank2(av, "matmul lhs");
    check_rank2(bv, "matmul rhs");
    if (av.shape[1] != bv.shape[0]) {
        throw std::invalid_argument("matmul: inner dims " + shape_string(av.shape) +
                                    " x " + shape_string(bv.shape));
    }
    Tensor out({av.shape[0], bv.shape[1]});
    matmul_nn_acc(av, bv, out);
    return make_node(std::move(out), [a, b](Tape& t, const Tensor& g) {
        const Tensor& av2 = t.value(a);
        const Tensor& bv2 = t.value(b);
        Tensor ga(av2.shape);
        matmul_nt_acc(g, bv2, ga);  // dA = g * B^T
        t.accumulate(a, ga);
        Tensor gb(bv2.shape);
        matmul_tn_acc(av2, g, gb);  // dB = A^T * g
        t.accumulate(b, gb);
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    check_rank2(av, "matmul_nt lhs");
    check_rank2(bv, "matmul_nt rhs");
    if (av.shape[1] != bv.shape[1]) {
        throw std::invalid_argument("matmul_nt: inner dims " + shape_string(av.shape) +
                                    " x " + shape_string(bv.shape) + "^T");
    }
    Tensor out({av.shape[0], bv.shape[0]});
    matmul_nt_acc(av, bv, out);
    return make_node(std::move(out), [a, b](Tape& t, const Tensor& g) {
        const Tensor& av2 = t.value(a);
        const Tensor& bv2 = t.value(b);
        Tensor ga(av2.shape);
        matmul_nn_acc(g, bv2, ga);  // dA = g * B
        t.accumulate(a, ga);
        Tensor gb(bv2.shape);
        matmul_tn_acc(g, av2, gb);  // dB = g^T * A
        t.accumulate(b, gb);
    });
}

Var Tape::linear(Var x, Var w, Var b) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor& bv = value(b);
    check_rank2(xv, "linear input");
    check_rank2(wv, "linear weight");
    if (xv.shape[1] != wv.shape[0] || bv.shape != std::vector<int64_t>{wv.shape[1]}) {
        throw std::invalid_argument("linear: incompatible shapes " +
                                    shape_string(xv.shape) + ", " + shape_string(wv.shape) +
                                    ", " + shape_string(bv.shape));
    }
    int64_t n = xv.shape[0], dout = wv.shape[1];
    Tensor out({n, dout});
    for (int64_t i = 0; i < n; ++i) {
        double* row = out.data.data() + i * dout;
        for (int64_t j = 0; j < dout; ++j) row[j] = bv.data[j];
    }
    matmul_nn_acc(xv, wv, out);
    return make_node(std::move(out), [x, w, b](Tape& t, const Tensor& g) {
        const Tensor& xv2 = t.value(x);
        const Tensor& wv2 = t.value(w);
        Tensor gx(xv2.shape);
        matmul_nt_acc(g, wv2, gx);
        t.accumulate(x, gx);
        Tensor gw(wv2.shape);
        matmul_tn_acc(xv2, g, gw);
        t.accumulate(w, gw);
        Tensor gb({wv2.shape[1]});
        int64_t n2 = g.shape[0], dout2 = g.shape[1];
        for (int64_t i = 0; i < n2; ++i) {
            for (int64_t j = 0; j < dout2; ++j) gb.data[j] += g.data[i * dout2 + j];
        }
        t.accumulate(b, gb);
    });
}

Var Tape::softmax_rows(Var a) {
    const Tensor& av = value(a);
    check_rank2(av, "softmax");
    int64_t n = av.shape[0], d = av.shape[1];
    Tensor out({n, d});
    for (int64_t i = 0; i < n; ++i) {
        const double* row = av.data.data() + i * d;
        double* orow = out.data.data() + i * d;
        double m = row[0];
        for (int64_t j = 1; j < d; ++j) m = std::max(m, row[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            orow[j] = std::exp(row[j] - m);
            sum += orow[j];
        }
        for (int64_t j = 0; j < d; ++j) orow[j] /= sum;
    }
    Var self = make_node(std::move(out), nullptr);
    nodes_[self.id].back = [a, self](Tape& t, const Tensor& g) {
        const Tensor& p = t.value(self);
        int64_t n2 = p.shape[0], d2 = p.shape[1];
        Tensor ga(p.shape);
        for (int64_t i = 0; i < n2; ++i) {
            const double* prow = p.data.data() + i * d2;
            const double* grow = g.data.data() + i * d2;
            double dotgp = 0.0;
            for (int64_t j = 0; j < d2; ++j) dotgp += grow[j] * prow[j];
            double* garow = ga.data.data() + i * d2;
            for (int64_t j = 0; j < d2; ++j) garow[j] = prow[j] * (grow[j] - dotgp);
        }
        t.accumulate(a, ga);
    };
    return self;
}

Var Tape::layernorm_rows(Var a, double eps) {
    const Tensor& av = value(a);
    check_rank2(av, "layernorm");
    int64_t n = av.shape[0], d = av.shape[1];
    Tensor out({n, d});
    for (int64_t i = 0; i < n; ++i) {
        const double* row = av.data.data() + i * d;
        double* orow = out.data.data() + i * d;
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += row[j];
        mean /= double(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= double(d);
        double inv_std = 1.0 / std::sqrt(var + eps);
        for (int64_t j = 0; j < d; ++j) orow[j] = (row[j] - mean) * inv_std;
    }
    return make_node(std::move(out), [a, eps](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        int64_t n2 = x.shape[0], d2 = x.shape[1];
        Tensor ga(x.shape);
        for (int64_t i = 0; i < n2; ++i) {
            const double* row = x.data.data() + i * d2;
            const double* grow = g.data.data() + i * d2;
            double mean = 0.0;
            for (int64_t j = 0; j < d2; ++j) mean += row[j];
            mean /= double(d2);
            double var = 0.0;
            for (int64_t j = 0; j < d2; ++j) var += (row[j] - mean) * (row[j] - mean);
            var /= double(d2);
            double inv_std = 1.0 / std::sqrt(var + eps);
            double gmean = 0.0, gxhat = 0.0;
            for (int64_t j = 0; j < d2; ++j) {
                double xhat = (row[j] - mean) * inv_std;
                gmean += grow[j];
                gxhat += grow[j] * xhat;
            }
            gmean /= double(d2);
            gxhat /= double(d2);
            double* garow = ga.data.data() + i * d2;
            for (int64_t j = 0; j < d2; ++j) {
                double xhat = (row[j] - mean) * inv_std;
                garow[j] = inv_std * (grow[j] - gmean - xhat * gxhat);
            }
        }
        t.accumulate(a, ga);
    });
}

Var Tape::scale_shift_rows(Var x, Var s, Var b) {
    const Tensor& xv = value(x);
    const Tensor& sv = value(s);
    const Tensor& bv = value(b);
    check_rank2(xv, "scale_shift input");
    int64_t n = xv.shape[0], d = xv.shape[1];
    if (sv.shape != std::vector<int64_t>{d} || bv.shape != std::vector<int64_t>{d}) {
        throw std::invalid_argument("scale_shift_rows: modulation must have shape (d)");
    }
    Tensor out({n, d});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < d; ++j) {
            out.data[i * d + j] = xv.data[i * d + j] * (1.0 + sv.data[j]) + bv.data[j];
        }
    }
    return make_node(std::move(out), [x, s, b](Tape& t, const Tensor& g) {
        const Tensor& xv2 = t.value(x);
        const Tensor& sv2 = t.value(s);
        int64_t n2 = xv2.shape[0], d2 = xv2.shape[1];
        Tensor gx(xv2.shape);
        Tensor gs({d2});
        Tensor gb({d2});
        for (int64_t i = 0; i < n2; ++i) {
            for (int64_t j = 0; j < d2; ++j) {
                double gv = g.data[i * d2 + j];
                gx.data[i * d2 + j] = gv * (1.0 + sv2.data[j]);
                gs.data[j] += gv * xv2.data[i * d2 + j];
                gb.data[j] += gv;
            }
        }
        t.accumulate(x, gx);
        t.accumulate(s, gs);
        t.accumulate(b, gb);
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    int64_t cols = value(parts[0]).shape[1];
    int64_t rows = 0;
    for (Var p : parts) {
        check_rank2(value(p), "concat_rows part");
        if (value(p).shape[1] != cols) {
            throw std::invalid_argument("concat_rows: column mismatch");
        }
        rows += value(p).shape[0];
    }
    Tensor out({rows, cols});
    int64_t r = 0;
    for (Var p : parts) {
        const Tensor& pv = value(p);
        std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + r * cols);
        r += pv.shape[0];
    }
    std::vector<Var> saved = parts;
    return make_node(std::move(out), [saved, cols](Tape& t, const Tensor& g) {
        int64_t r2 = 0;
        for (Var p : saved) {
            const Tensor& pv = t.value(p);
            Tensor gp(pv.shape);
            std::copy(g.data.begin() + r2 * cols,
                      g.data.begin() + (r2 + pv.shape[0]) * cols, gp.data.begin());
            t.accumulate(p, gp);
            r2 += pv.shape[0];
        }
    });
}

Var Tape::slice_rows(Var a, int64_t row0, int64_t row1) {
    const Tensor& av = value(a);
    check_rank2(av, "slice_rows");
    if (row0 < 0 || row1 > av.shape[0] || row0 >= row1) {
        throw std::invalid_argument("slice_rows: bad range");
    }
    int64_t cols = av.shape[1];
    Tensor out({row1 - row0, cols});
    std::copy(av.data.begin() + row0 * cols, av.data.begin() + row1 * cols,
              out.data.begin());
    return make_node(std::move(out), [a, row0, cols](Tape& t, const Tensor& g) {
        const Tensor& av2 = t.value(a);
        Tensor ga(av2.shape);
        std::copy(g.data.begin(), g.data.end(), ga.data.begin() + row0 * cols);
        t.accumulate(a, ga);
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    int64_t rows = value(parts[0]).shape[0];
    int64_t cols = 0;
    for (Var p : parts) {
        check_rank2(value(p), "concat_cols part");
        if (value(p).shape[0] != rows) {
            throw std::invalid_argument("concat_cols: row mismatch");
        }
        cols += value(p).shape[1];
    }
    Tensor out({rows, cols});
    int64_t c = 0;
    for (Var p : parts) {
        const Tensor& pv = value(p);
        int64_t pc = pv.shape[1];
        for (int64_t i = 0; i < rows; ++i) {
            std::copy(pv.data.begin() + i * pc, pv.data.begin() + (i + 1) * pc,
                      out.data.begin() + i * cols + c);
        }
        c += pc;
    }
    std::vector<Var> saved = parts;
    return make_node(std::move(out), [saved, rows, cols](Tape& t, const Tensor& g) {
        int64_t c2 = 0;
        for (Var p : saved) {
            const Tensor& pv = t.value(p);
            int64_t pc = pv.shape[1];
            Tensor gp(pv.shape);
            for (int64_t i = 0; i < rows; ++i) {
                std::copy(g.data.begin() + i * cols + c2,
                          g.data.begin() + i * cols + c2 + pc, gp.data.begin() + i * pc);
            }
            t.accumulate(p, gp);
            c2 += pc;
        }
    });
}

Var Tape::slice_cols(Var a, int64_t col0, int64_t col1) {
    const Tensor& av = value(a);
    check_rank2(av, "slice_cols");
    if (col0 < 0 || col1 > av.shape[1] || col0 >= col1) {
        throw std::invalid_argument("slice_cols: bad range");
    }
    int64_t rows = av.shape[0], cols = av.shape[1], w = col1 - col0;
    Tensor out({rows, w});
    for (int64_t i = 0; i < rows; ++i) {
        std::copy(av.data.begin() + i * cols + col0, av.data.begin() + i * cols + col1,
                  out.data.begin() + i * w);
    }
    return make_node(std::move(out), [a, col0, w](Tape& t, const Tensor& g) {
        const Tensor& av2 = t.value(a);
        int64_t rows2 = av2.shape[0], cols2 = av2.shape[1];
        Tensor ga(av2.shape);
        for (int64_t i = 0; i < rows2; ++i) {
            std::copy(g.data.begin() + i * w, g.data.begin() + (i + 1) * w,
                      ga.data.begin() + i * cols2 + col0);
        }
        t.accumulate(a, ga);
    });
}

Var Tape::conv3x3(Var x, Var w, Var b) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor& bv = value(b);
    if (xv.rank() != 3 || wv.rank() != 4 || wv.shape[2] != 3 || wv.shape[3] != 3 ||
        wv.shape[1] != xv.shape[0] || bv.shape != std::vector<int64_t>{wv.shape[0]}) {
        throw std::invalid_argument("conv3x3: incompatible shapes " +
                                    shape_string(xv.shape) + ", " + shape_string(wv.shape));
    }
    int64_t cin = xv.shape[0], h = xv.shape[1], ww = xv.shape[2], cout = wv.shape[0];
    Tensor out({cout, h, ww});
    for (int64_t co = 0; co < cout; ++co) {
        for (int64_t i = 0; i < h; ++i) {
            for (int64_t j = 0; j < ww; ++j) {
                double sum = bv.data[co];
                for (int64_t ci = 0; ci < cin; ++ci) {
                    for (int64_t di = -1; di <= 1; ++di) {
                        int64_t ii = i + di;
                        if (ii < 0 || ii >= h) continue;
                        for (int64_t dj = -1; dj <= 1; ++dj) {
                            int64_t jj = j + dj;
                            if (jj < 0 || jj >= ww) continue;
                            sum += xv.data[(ci * h + ii) * ww + jj] *
                                   wv.data[((co * cin + ci) * 3 + di + 1) * 3 + dj + 1];
                        }
                    }
                }
                out.data[(co * h + i) * ww + j] = sum;
            }
        }
    }
    return make_node(std::move(out), [x, w, b](Tape& t, const Tensor& g) {
        const Tensor& xv2 = t.value(x);
        const Tensor& wv2 = t.value(w);
        int64_t cin = xv2.shape[0], h = xv2.shape[1], ww = xv2.shape[2];
        int64_t cout = wv2.shape[0];
        Tensor gx(xv2.shape);
        Tensor gw(wv2.shape);
        Tensor gb({cout});
        for (int64_t co = 0; co < cout; ++co) {
            for (int64_t i = 0; i < h; ++i) {
                for (int64_t j = 0; j < ww; ++j) {
                    double gv = g.data[(co * h + i) * ww + j];
                    if (gv == 0.0) continue;
                    gb.data[co] += gv;
                    for (int64_t ci = 0; ci < cin; ++ci) {
                        for (int64_t di = -1; di <= 1; ++di) {
                            int64_t ii = i + di;
                            if (ii < 0 || ii >= h) continue;
                            for (int64_t dj = -1; dj <= 1; ++dj) {
                                int64_t jj = j + dj;
                                if (jj < 0 || jj >= ww) continue;
                                double xval = xv2.data[(ci * h + ii) * ww + jj];
                                int64_t widx = ((co * cin + ci) * 3 + di + 1) * 3 + dj + 1;
                                gx.data[(ci * h + ii) * ww + jj] += gv * wv2.data[widx];
                                gw.data[widx] += gv * xval;
                            }
                        }
                    }
                }
            }
        }
        t.accumulate(x, gx);
        t.accumulate(w, gw);
        t.accumulate(b, gb);
    });
}

namespace {

// token (pi*wp + pj), feature ((c*p + oy)*p + ox) <-> pixel (c, pi*p+oy, pj*p+ox)
void patch_copy(const Tensor& src, Tensor& dst, int c, int h, int w, int p,
                bool to_tokens) {
    int wp = w / p;
    for (int cc = 0; cc < c; ++cc) {
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                int64_t pixel = (int64_t(cc) * h + i) * w + j;
                int64_t token = int64_t(i / p) * wp + (j / p);
                int64_t feature = (int64_t(cc) * p + (i % p)) * p + (j % p);
                int64_t tok_idx = token * (int64_t(c) * p * p) + feature;
                if (to_tokens) {
                    dst.data[tok_idx] = src.data[pixel];
                } else {
                    dst.data[pixel] = src.data[tok_idx];
                }
            }
        }
    }
}

}  // namespace

Var Tape::patchify(Var x, int patch) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3 || xv.shape[1] % patch != 0 || xv.shape[2] % patch != 0) {
        throw std::invalid_argument("patchify: image " + shape_string(xv.shape) +
                                    " not divisible by patch " + std::to_string(patch));
    }
    int c = int(xv.shape[0]), h = int(xv.shape[1]), w = int(xv.shape[2]);
    int hp = h / patch, wp = w / patch;
    Tensor out({int64_t(hp) * wp, int64_t(c) * patch * patch});
    patch_copy(xv, out, c, h, w, patch, true);
    return make_node(std::move(out), [x, c, h, w, patch](Tape& t, const Tensor& g) {
        Tensor gx({c, h, w});
        patch_copy(g, gx, c, h, w, patch, false);
        t.accumulate(x, gx);
    });
}

Var Tape::unpatchify(Var tokens, int c, int h, int w, int patch) {
    const Tensor& tv = value(tokens);
    int hp = h / patch, wp = w / patch;
    if (tv.rank() != 2 || tv.shape[0] != int64_t(hp) * wp ||
        tv.shape[1] != int64_t(c) * patch * patch || h % patch != 0 || w % patch != 0) {
        throw std::invalid_argument("unpatchify: tokens " + shape_string(tv.shape) +
                                    " do not form a (" + std::to_string(c) + "," +
                                    std::to_string(h) + "," + std::to_string(w) + ") image");
    }
    Tensor out({c, h, w});
    patch_copy(tv, out, c, h, w, patch, false);
    return make_node(std::move(out), [tokens, c, h, w, patch](Tape& t, const Tensor& g) {
        Tensor gt({int64_t(h / patch) * (w / patch), int64_t(c) * patch * patch});
        patch_copy(g, gt, c, h, w, patch, true);
        t.accumulate(tokens, gt);
    });
}

Var Tape::mean_norm(Var pred, const Tensor& target, bool l1) {
    const Tensor& pv = value(pred);
    check_same_shape(pv, target, "mean_norm");
    if (pv.data.empty()) throw std::invalid_argument("mean_norm: empty tensors");
    double inv_n = 1.0 / double(pv.data.size());
    double sum = 0.0;
    for (size_t i = 0; i < pv.data.size(); ++i) {
        double d = pv.data[i] - target.data[i];
        sum += l1 ? std::abs(d) : d * d;
    }
    Tensor out({1});
    out.data[0] = sum * inv_n;
    Tensor saved_target = target;
    return make_node(std::move(out),
                     [pred, saved_target, l1, inv_n](Tape& t, const Tensor& g) {
                         const Tensor& pv2 = t.value(pred);
                         Tensor gp(pv2.shape);
                         double g0 = g.data[0];
                         for (size_t i = 0; i < pv2.data.size(); ++i) {
                             double d = pv2.data[i] - saved_target.data[i];
                             double local = l1 ? (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0))
                                              : 2.0 * d;
                             gp.data[i] = g0 * local * inv_n;
                         }
                         t.accumulate(pred, gp);
                     });
}

Var Tape::weighted_sum(const std::vector<Var>& scalars,
                       const std::vector<double>& weights) {
    if (scalars.size() != weights.size() || scalars.empty()) {
        throw std::invalid_argument("weighted_sum: need matching nonempty lists");
    }
    Tensor out({1});
    for (size_t i = 0; i < scalars.size(); ++i) {
        if (value(scalars[i]).numel() != 1) {
            throw std::invalid_argument("weighted_sum: inputs must be scalars");
        }
        out.data[0] += weights[i] * value(scalars[i]).data[0];
    }
    std::vector<Var> saved = scalars;
    std::vector<double> ws = weights;
    return make_node(std::move(out), [saved, ws](Tape& t, const Tensor& g) {
        for (size_t i = 0; i < saved.size(); ++i) {
            Tensor gi({1});
            gi.data[0] = g.data[0] * ws[i];
            t.accumulate(saved[i], gi);
        }
    });
}

void Tape::backward(Var root) {
    if (root.id < 0 || size_t(root.id) >= nodes_.size()) {
        throw std::invalid_argument("backward: invalid root");
    }
    if (nodes_[root.id].value.numel() != 1) {
        throw std::invalid_argument("backward: root must be scalar");
    }
    Tensor seed({1});
    seed.data[0] = 1.0;
    accumulate(root, seed);
    for (int i = root.id; i >= 0; --i) {
        Node& node = nodes_[i];
        if (node.grad.data.empty() || !node.back) continue;
        node.back(*this, node.grad);
    }
}

}  // namespace matforge::ad
