#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fsdm/tensor.hpp"

namespace fsdm {

/// Reverse-mode tape over a fixed operator set. Nodes are appended in
/// evaluation order, so walking the tape backwards is a valid topological
/// order for gradient propagation. Composite computations must be built from
/// the exported ops; there is no escape hatch, which makes "unrecorded op"
/// a construction-time impossibility.
class Tape {
  public:
    using BackFn = std::function<void(Tape&, int)>;

    struct Node {
        Tensor value;
        Tensor grad;  // allocated on first accumulation
        bool requires_grad = false;
        bool grad_live = false;
        BackFn back;
    };

    int leaf(Tensor value, bool requires_grad) {
        nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, false, nullptr});
        return static_cast<int>(nodes_.size()) - 1;
    }

    int op(Tensor value, bool requires_grad, BackFn back) {
        nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, false, std::move(back)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    const Tensor& val(int id) const { return nodes_.at(id).value; }
    bool needs_grad(int id) const { return nodes_.at(id).requires_grad; }

    /// Gradient of the last backward() target w.r.t. node id (zeros if unused).
    const Tensor& grad(int id) {
        Node& n = nodes_.at(id);
        if (!n.grad_live) n.grad = Tensor::zeros(n.value.shape);
        return n.grad;
    }

    /// Add g into the gradient slot of node id (no-op for non-grad nodes).
    void acc(int id, const Tensor& g) {
        Node& n = nodes_.at(id);
        if (!n.requires_grad) return;
        require_same_shape(n.value, g, "Tape::acc");
        if (!n.grad_live) {
            n.grad = g;
            n.grad_live = true;
        } else {
            for (std::int64_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
        }
    }

    /// Reverse sweep from a scalar loss node.
    void backward(int loss_id) {
        Node& loss = nodes_.at(loss_id);
        if (loss.value.numel() != 1) throw std::invalid_argument("Tape::backward: loss must be scalar");
        if (!loss.requires_grad) throw std::invalid_argument("Tape::backward: loss does not require gradients");
        for (Node& n : nodes_) {
            n.grad_live = false;
            n.grad = Tensor{};
        }
        loss.grad = Tensor::full({1}, 1.0);
        loss.grad_live = true;
        for (int id = loss_id; id >= 0; --id) {
            Node& n = nodes_[id];
            if (n.grad_live && n.back) n.back(*this, id);
        }
    }

    std::size_t size() const { return nodes_.size(); }

  private:
    std::vector<Node> nodes_;
};

namespace ops {

inline void check_rank(const Tensor& t, int rank, const char* who) {
    if (t.rank() != rank) throw std::invalid_argument(std::string(who) + ": unexpected tensor rank");
}

/// y[co,ho,wo] = b[co] + sum_{ci,i,j} x[ci, ho*s-p+i, wo*s-p+j] * w[co,ci,i,j]
inline int conv2d(Tape& t, int x_id, int w_id, int b_id, int stride, int pad) {
    const Tensor& x = t.val(x_id);
    const Tensor& w = t.val(w_id);
    const Tensor& b = t.val(b_id);
    check_rank(x, 3, "conv2d input");
    if (w.rank() != 4) throw std::invalid_argument("conv2d: weight must be [C_out, C_in, kh, kw]");
    const int ci = x.shape[0], h = x.shape[1], wd = x.shape[2];
    const int co = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    if (w.shape[1] != ci) throw std::invalid_argument("conv2d: channel mismatch");
    if (b.rank() != 1 || b.shape[0] != co) throw std::invalid_argument("conv2d: bias mismatch");
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (wd + 2 * pad - kw) / stride + 1;
    if (ho < 1 || wo < 1) throw std::invalid_argument("conv2d: output would be empty");

    Tensor y = Tensor::zeros({co, ho, wo});
    for (int oc = 0; oc < co; ++oc)
        for (int oh = 0; oh < ho; ++oh)
            for (int ow = 0; ow < wo; ++ow) {
                double acc = b[oc];
                for (int ic = 0; ic < ci; ++ic)
                    for (int i = 0; i < kh; ++i) {
                        const int ih = oh * stride - pad + i;
                        if (ih < 0 || ih >= h) continue;
                        for (int j = 0; j < kw; ++j) {
                            const int iw = ow * stride - pad + j;
                            if (iw < 0 || iw >= wd) continue;
                            acc += x.at(ic, ih, iw) * w.data[((static_cast<std::size_t>(oc) * ci + ic) * kh + i) * kw + j];
                        }
                    }
                y.at(oc, oh, ow) = acc;
            }

    bool rg = t.needs_grad(x_id) || t.needs_grad(w_id) || t.needs_grad(b_id);
    return t.op(std::move(y), rg, [=](Tape& tp, int self) {
        const Tensor& dy = tp.grad(self);
        const Tensor& xv = tp.val(x_id);
        const Tensor& wv = tp.val(w_id);
        Tensor dx = Tensor::zeros(xv.shape);
        Tensor dw = Tensor::zeros(wv.shape);
        Tensor db = Tensor::zeros(tp.val(b_id).shape);
        for (int oc = 0; oc < co; ++oc)
            for (int oh = 0; oh < ho; ++oh)
                for (int ow = 0; ow < wo; ++ow) {
                    const double g = dy.data[(static_cast<std::size_t>(oc) * ho + oh) * wo + ow];
                    db[oc] += g;
                    for (int ic = 0; ic < ci; ++ic)
                        for (int i = 0; i < kh; ++i) {
                            const int ih = oh * stride - pad + i;
                            if (ih < 0 || ih >= h) continue;
                            for (int j = 0; j < kw; ++j) {
                                const int iw = ow * stride - pad + j;
                                if (iw < 0 || iw >= wd) continue;
                                const std::size_t widx = ((static_cast<std::size_t>(oc) * ci + ic) * kh + i) * kw + j;
                                dx.at(ic, ih, iw) += g * wv.data[widx];
                                dw.data[widx] += g * xv.at(ic, ih, iw);
                            }
                        }
                }
        tp.acc(x_id, dx);
        tp.acc(w_id, dw);
        tp.acc(b_id, db);
    });
}

/// Transposed convolution: y[co, hi*s-p+i, wi*s-p+j] += x[ci,hi,wi] * w[ci,co,i,j]
inline int conv2d_transpose(Tape& t, int x_id, int w_id, int b_id, int stride, int pad) {
    const Tensor& x = t.val(x_id);
    const Tensor& w = t.val(w_id);
    const Tensor& b = t.val(b_id);
    check_rank(x, 3, "conv2d_transpose input");
    if (w.rank() != 4) throw std::invalid_argument("conv2d_transpose: weight must be [C_in, C_out, kh, kw]");
    const int ci = x.shape[0], h = x.shape[1], wd = x.shape[2];
    const int co = w.shape[1], kh = w.shape[2], kw = w.shape[3];
    if (w.shape[0] != ci) throw std::invalid_argument("conv2d_transpose: channel mismatch");
    if (b.rank() != 1 || b.shape[0] != co) throw std::invalid_argument("conv2d_transpose: bias mismatch");
    const int ho = (h - 1) * stride - 2 * pad + kh;
    const int wo = (wd - 1) * stride - 2 * pad + kw;
    if (ho < 1 || wo < 1) throw std::invalid_argument("conv2d_transpose: output would be empty");

    Tensor y = Tensor::zeros({co, ho, wo});
    for (int oc = 0; oc < co; ++oc)
        for (int oh = 0; oh < ho; ++oh)
            for (int ow = 0; ow < wo; ++ow) y.at(oc, oh, ow) = b[oc];
    for (int ic = 0; ic < ci; ++ic)
        for (int hi = 0; hi < h; ++hi)
            for (int wi = 0; wi < wd; ++wi) {
                const double xv = x.at(ic, hi, wi);
                for (int oc = 0; oc < co; ++oc)
                    for (int i = 0; i < kh; ++i) {
                        const int oh = hi * stride - pad + i;
                        if (oh < 0 || oh >= ho) continue;
                        for (int j = 0; j < kw; ++j) {
                            const int ow = wi * stride - pad + j;
                            if (ow < 0 || ow >= wo) continue;
                            y.at(oc, oh, ow) += xv * w.data[((static_cast<std::size_t>(ic) * co + oc) * kh + i) * kw + j];
                        }
                    }
            }

    bool rg = t.needs_grad(x_id) || t.needs_grad(w_id) || t.needs_grad(b_id);
    return t.op(std::move(y), rg, [=](Tape& tp, int self) {
        const Tensor& dy = tp.grad(self);
        const Tensor& xv = tp.val(x_id);
        const Tensor& wv = tp.val(w_id);
        Tensor dx = Tensor::zeros(xv.shape);
        Tensor dw = Tensor::zeros(wv.shape);
        Tensor db = Tensor::zeros(tp.val(b_id).shape);
        for (int oc = 0; oc < co; ++oc)
            for (int oh = 0; oh < ho; ++oh)
                for (int ow = 0; ow < wo; ++ow) db[oc] += dy.at(oc, oh, ow);
        for (int ic = 0; ic < ci; ++ic)
            for (int hi = 0; hi < h; ++hi)
                for (int wi = 0; wi < wd; ++wi) {
                    double acc = 0.0;
                    for (int oc = 0; oc < co; ++oc)
                        for (int i = 0; i < kh; ++i) {
                            const int oh = hi * stride - pad + i;
                            if (oh < 0 || oh >= ho) continue;
                            for (int j = 0; j < kw; ++j) {
                                const int ow = wi * stride - pad + j;
                                if (ow < 0 || ow >= wo) continue;
                                const std::size_t widx = ((static_cast<std::size_t>(ic) * co + oc) * kh + i) * kw + j;
                                const double g = dy.at(oc, oh, ow);
                                acc += g * wv.data[widx];
                                dw.data[widx] += g * xv.at(ic, hi, wi);
                            }
                        }
                    dx.at(ic, hi, wi) = acc;
                }
        tp.acc(x_id, dx);
        tp.acc(w_id, dw);
        tp.acc(b_id, db);
    });
}

/// y = W x + b on a rank-1 input.
inline int linear(Tape& t, int x_id, int w_id, int b_id) {
    const Tensor& x = t.val(x_id);
    const Tensor& w = t.val(w_id);
    const Tensor& b = t.val(b_id);
    check_rank(x, 1, "linear input");
    if (w.rank() != 2 || w.shape[1] != x.shape[0]) throw std::invalid_argument("linear: weight shape mismatch");
    const int dout = w.shape[0], din = w.shape[1];
    if (b.rank() != 1 || b.shape[0] != dout) throw std::invalid_argument("linear: bias mismatch");

    Tensor y = Tensor::zeros({dout});
    for (int o = 0; o < dout; ++o) {
        double acc = b[o];
        for (int i = 0; i < din; ++i) acc += w.data[static_cast<std::size_t>(o) * din + i] * x[i];
        y[o] = acc;
    }
    bool rg = t.needs_grad(x_id) || t.needs_grad(w_id) || t.needs_grad(b_id);
    return t.op(std::move(y), rg, [=](Tape& tp, int self) {
        const Tensor& dy = tp.grad(self);
        const Tensor& xv = tp.val(x_id);
        const Tensor& wv = tp.val(w_id);
        Tensor dx = Tensor::zeros(xv.shape);
        Tensor dw = Tensor::zeros(wv.shape);
        Tensor db = Tensor::zeros({dout});
        for (int o = 0; o < dout; ++o) {
            const double g = dy[o];
            db[o] = g;
            for (int i = 0; i < din; ++i) {
                dx[i] += g * wv.data[static_cast<std::size_t>(o) * din + i];
                dw.data[static_cast<std::size_t>(o) * din + i] = g * xv[i];
            }
        }
        tp.acc(x_id, dx);
        tp.acc(w_id, dw);
        tp.acc(b_id, db);
    });
}

/// y = x * sigmoid(x), elementwise.
inline int silu(Tape& t, int x_id) {
    const Tensor& x = t.val(x_id);
    Tensor y = x;
    for (std::int64_t i = 0; i < y.numel(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-x[i]));
        y[i] = x[i] * s;
    }
    return t.op(std::move(y), t.needs_grad(x_id), [=](Tape& tp, int self) {
        const Tensor& dy = tp.grad(self);
        const Tensor& xv = tp.val(x_id);
        Tensor dx = Tensor::zeros(xv.shape);
        for (std::int64_t i = 0; i < dx.numel(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-xv[i]));
            dx[i] = dy[i] * s * (1.0 + xv[i] * (1.0 - s));
        }
        tp.acc(x_id, dx);
    });
}

/// Per-channel normalization over the spatial extent (no learned affine).
inline int instance_norm(Tape& t, int x_id, double eps = 1e-5) {
    const Tensor& x = t.val(x_id);
    check_rank(x, 3, "instance_norm input");
    const int c = x.shape[0], hw = x.shape[1] * x.shape[2];
    Tensor y = x;
    std::vector<double> inv_sd(c), mu(c);
    for (int ch = 0; ch < c; ++ch) {
        const double* src = x.data.data() + static_cast<std::size_t>(ch) * hw;
        double m = 0.0;
        for (int i = 0; i < hw; ++i) m += src[i];
        m /= hw;
        double v = 0.0;
        for (int i = 0; i < hw; ++i) v += (src[i] - m) * (src[i] - m);
        v /= hw;
        mu[ch] = m;
        inv_sd[ch] = 1.0 / std::sqrt(v + eps);
        double* dst = y.data.data() + static_cast<std::size_t>(ch) * hw;
        for (int i = 0; i < hw; ++i) dst[i] = (src[i] - m) * inv_sd[ch];
    }
    return t.op(std::move(y), t.needs_grad(x_id), [=](Tape& tp, int self) {
        const Tensor& dy = tp.grad(self);
        const Tensor& yv = tp.val(self);  // normalized values
        Tensor dx = Tensor::zeros(tp.val(x_id).shape);
        for (int ch = 0; ch < c; ++ch) {
            const double* g = dy.data.data() + static_cast<std::size_t>(ch) * hw;
            const double* xh = yv.data.data() + static_cast<std::size_t>(ch) * hw;
            double gm = 0.0, gxm = 0.0;
            for (int i = 0; i < hw; ++i) {
                gm += g[i];
                gxm += g[i] * xh[i];
            }
            gm /= hw;
            gxm /= hw;
            double* d = dx.data.data() + static_cast<std::size_t>(ch) * hw;
            for (int i = 0; i < hw; ++i) d[i] = inv_sd[ch] * (g[i] - gm - xh[i] * gxm);
        }
        tp.acc(x_id, dx);
    });
}

/// Per-channel affine modulation: y[c,:,:] = x[c,:,:] * (1 + scale[c]) + shift[c].
inline int film(Tape& t, int x_id, int scale_id, int shift_id) {
    const Tensor& x = t.val(x_id);
    const Tensor& sc = t.val(scale_id);
    const Tensor& sh = t.val(shift_id);
    check_rank(x, 3, "film input");
    const int c = x.shape[0], hw = x.shape[1] * x.shape[2];
    if (sc.rank() != 1 || sc.shape[0] != c || sh.rank() != 1 || sh.shape[0] != c)
        throw std::invalid_argument("film: modulation vectors must have one entry per channel");
    Tensor y = x;
    for (int ch = 0; ch < c; ++ch) {
        double* dst = y.data.data() + static_cast<std::size_t>(ch) * hw;
        for (int i = 0; i < hw; ++i) dst[i] = dst[i] * (1.0 + sc[ch]) + sh[ch];
    }
    bool rg = t.needs_grad(x_id) || t.needs_grad(scale_id) || t.needs_grad(shift_id);
    return t.op(std::move(y), rg, [=](Tape& tp, int self) {
        const Tensor& dy = tp.grad(self);
        const Tensor& xv = tp.val(x_id);
        const Tensor& scv = tp.val(scale_id);
        Tensor dx = Tensor::zeros(xv.shape);
        Tensor dsc = Tensor::zeros({c});
        Tensor dsh = Tensor::zeros({c});
        for (int ch = 0; ch < c; ++ch) {
            const double* g = dy.data.data() + static_cast<std::size_t>(ch) * hw;
            const double* xs = xv.data.data() + static_cast<std::size_t>(ch) * hw;
            double* d = dx.data.data() + static_cast<std::size_t>(ch) * hw;
            for (int i = 0; i < hw; ++i) {
                d[i] = g[i] * (1.0 + scv[ch]);
                dsc[ch] += g[i] * xs[i];
                dsh[ch] += g[i];
            }
        }
        tp.acc(x_id, dx);
        tp.acc(scale_id, dsc);
        tp.acc(shift_id, dsh);
    });
}

/// y = wa * a + wb * b with constant scalar weights.
inline int blend(Tape& t, int a_id, int b_id, double wa, double wb) {
    const Tensor& a = t.val(a_id);
    const Tensor& b = t.val(b_id);
    require_same_shape(a, b, "blend");
    Tensor y = a;
    for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = wa * a[i] + wb * b[i];
    bool rg = t.needs_grad(a_id) || t.needs_grad(b_id);
    return t.op(std::move(y), rg, [=](Tape& tp, int self) {
        const Tensor& dy = tp.grad(self);
        tp.acc(a_id, scale(dy, wa));
        tp.acc(b_id, scale(dy, wb));
    });
}

inline int add(Tape& t, int a_id, int b_id) { return blend(t, a_id, b_id, 1.0, 1.0); }

/// Concatenate along the leading extent (channels for rank 3, entries for rank 1).
inline int concat(Tape& t, int a_id, int b_id) {
    const Tensor& a = t.val(a_id);
    const Tensor& b = t.val(b_id);
    if (a.rank() != b.rank()) throw std::invalid_argument("concat: rank mismatch");
    for (int k = 1; k < a.rank(); ++k)
        if (a.shape[k] != b.shape[k]) throw std::invalid_argument("concat: trailing extents differ");
    Shape shape = a.shape;
    shape[0] += b.shape[0];
    Tensor y = Tensor::zeros(shape);
    std::copy(a.data.begin(), a.data.end(), y.data.begin());
    std::copy(b.data.begin(), b.data.end(), y.data.begin() + a.numel());
    bool rg = t.needs_grad(a_id) || t.needs_grad(b_id);
    const std::int64_t na = a.numel(), nb = b.numel();
    return t.op(std::move(y), rg, [=](Tape& tp, int self) {
        const Tensor& dy = tp.grad(self);
        Tensor da = Tensor::zeros(tp.val(a_id).shape);
        Tensor db = Tensor::zeros(tp.val(b_id).shape);
        std::copy(dy.data.begin(), dy.data.begin() + na, da.data.begin());
        std::copy(dy.data.begin() + na, dy.data.begin() + na + nb, db.data.begin());
        tp.acc(a_id, da);
        tp.acc(b_id, db);
    });
}

/// Change shape without touching data order.
inline int reshape(Tape& t, int x_id, Shape shape) {
    const Tensor& x = t.val(x_id);
    if (shape_numel(shape) != x.numel()) throw std::invalid_argument("reshape: element count mismatch");
    Tensor y{shape, x.data};
    return t.op(std::move(y), t.needs_grad(x_id), [=](Tape& tp, int self) {
        const Tensor& dy = tp.grad(self);
        Tensor dx{tp.val(x_id).shape, dy.data};
        tp.acc(x_id, dx);
    });
}

/// Reshape to a flat vector (data order unchanged).
inline int flatten(Tape& t, int x_id) {
    return reshape(t, x_id, {static_cast<int>(t.val(x_id).numel())});
}

/// Gram matrix of a C x H x W feature map: G = F F^T / (H*W).
inline int gram(Tape& t, int x_id) {
    const Tensor& x = t.val(x_id);
    check_rank(x, 3, "gram input");
    const int c = x.shape[0], hw = x.shape[1] * x.shape[2];
    Tensor g = Tensor::zeros({c, c});
    for (int i = 0; i < c; ++i) {
        const double* fi = x.data.data() + static_cast<std::size_t>(i) * hw;
        for (int j = i; j < c; ++j) {
            const double* fj = x.data.data() + static_cast<std::size_t>(j) * hw;
            double acc = 0.0;
            for (int k = 0; k < hw; ++k) acc += fi[k] * fj[k];
            acc /= hw;
            g.data[static_cast<std::size_t>(i) * c + j] = acc;
            g.data[static_cast<std::size_t>(j) * c + i] = acc;
        }
    }
    return t.op(std::move(g), t.needs_grad(x_id), [=](Tape& tp, int self) {
        const Tensor& dg = tp.grad(self);
        const Tensor& xv = tp.val(x_id);
        Tensor dx = Tensor::zeros(xv.shape);
        // dF = (dG + dG^T) F / (H*W)
        for (int i = 0; i < c; ++i) {
            double* di = dx.data.data() + static_cast<std::size_t>(i) * hw;
            for (int j = 0; j < c; ++j) {
                const double coef =
                    (dg.data[static_cast<std::size_t>(i) * c + j] + dg.data[static_cast<std::size_t>(j) * c + i]) / hw;
                if (coef == 0.0) continue;
                const double* fj = xv.data.data() + static_cast<std::size_t>(j) * hw;
                for (int k = 0; k < hw; ++k) di[k] += coef * fj[k];
            }
        }
        tp.acc(x_id, dx);
    });
}

/// Scalar mean of squared differences against a constant target.
inline int mse_vs(Tape& t, int x_id, Tensor target) {
    const Tensor& x = t.val(x_id);
    require_same_shape(x, target, "mse_vs");
    const std::int64_t n = x.numel();
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = x[i] - target[i];
        acc += d * d;
    }
    Tensor y = Tensor::full({1}, acc / n);
    return t.op(std::move(y), t.needs_grad(x_id), [=, tv = std::move(target)](Tape& tp, int self) {
        const double g = tp.grad(self)[0];
        const Tensor& xv = tp.val(x_id);
        Tensor dx = Tensor::zeros(xv.shape);
        for (std::int64_t i = 0; i < n; ++i) dx[i] = g * 2.0 * (xv[i] - tv[i]) / n;
        tp.acc(x_id, dx);
    });
}

/// Scalar sum of squared differences against a constant target.
inline int sumsq_vs(Tape& t, int x_id, Tensor target) {
    const Tensor& x = t.val(x_id);
    require_same_shape(x, target, "sumsq_vs");
    const std::int64_t n = x.numel();
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = x[i] - target[i];
        acc += d * d;
    }
    Tensor y = Tensor::full({1}, acc);
    return t.op(std::move(y), t.needs_grad(x_id), [=, tv = std::move(target)](Tape& tp, int self) {
        const double g = tp.grad(self)[0];
        const Tensor& xv = tp.val(x_id);
        Tensor dx = Tensor::zeros(xv.shape);
        for (std::int64_t i = 0; i < n; ++i) dx[i] = g * 2.0 * (xv[i] - tv[i]);
        tp.acc(x_id, dx);
    });
}

/// y = sum_i weights[i] * xs[i], all the same shape.
inline int combine(Tape& t, const std::vector<int>& ids, const std::vector<double>& weights) {
    if (ids.empty() || ids.size() != weights.size()) throw std::invalid_argument("combine: ids/weights mismatch");
    Tensor y = Tensor::zeros(t.val(ids[0]).shape);
    bool rg = false;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const Tensor& x = t.val(ids[k]);
        require_same_shape(y, x, "combine");
        for (std::int64_t i = 0; i < y.numel(); ++i) y[i] += weights[k] * x[i];
        rg = rg || t.needs_grad(ids[k]);
    }
    return t.op(std::move(y), rg, [ids, weights](Tape& tp, int self) {
        const Tensor& dy = tp.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) tp.acc(ids[k], scale(dy, weights[k]));
    });
}

}  // namespace ops
}  // namespace fsdm
