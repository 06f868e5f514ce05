#pragma once

#include <algorithm>
#include <cmath>

#include "salgrid/tensor.hpp"

namespace salgrid {

// Differentiable ops. Each forward has an explicit backward that computes the
// exact vector-Jacobian product; backward signatures take whatever forward
// state they need instead of a tape.

// ---------------------------------------------------------------------------
// conv2d: cross-correlation over [C,H,W] with odd kernels.

inline void conv2d_check(const Tensor& input, const Tensor& w, const Tensor& b,
                         int stride, int pad) {
    require(input.rank() == 3, "conv2d: input must be [C,H,W], got " + shape_str(input.shape));
    require(w.rank() == 4, "conv2d: weights must be [Cout,Cin,kh,kw], got " + shape_str(w.shape));
    require(b.rank() == 1, "conv2d: bias must be [Cout], got " + shape_str(b.shape));
    require(w.dim(2) % 2 == 1 && w.dim(3) % 2 == 1,
            "conv2d: kernel extents must be odd, got " + shape_str(w.shape));
    require(stride >= 1, "conv2d: stride must be >= 1");
    require(pad >= 0, "conv2d: pad must be >= 0");
    require(w.dim(1) == input.dim(0),
            "conv2d: weight input-channel dim " + std::to_string(w.dim(1)) +
                " does not match input channel dim " + std::to_string(input.dim(0)));
    require(b.dim(0) == w.dim(0),
            "conv2d: bias dim " + std::to_string(b.dim(0)) +
                " does not match output-channel dim " + std::to_string(w.dim(0)));
    int h = input.dim(1), wd = input.dim(2);
    require((h + 2 * pad - w.dim(2)) % stride == 0,
            "conv2d: height " + std::to_string(h) + " incompatible with kernel/stride/pad");
    require((wd + 2 * pad - w.dim(3)) % stride == 0,
            "conv2d: width " + std::to_string(wd) + " incompatible with kernel/stride/pad");
    require(h + 2 * pad >= w.dim(2) && wd + 2 * pad >= w.dim(3),
            "conv2d: kernel larger than padded input");
}

inline Tensor conv2d(const Tensor& input, const Tensor& w, const Tensor& b,
                     int stride = 1, int pad = 0) {
    conv2d_check(input, w, b, stride, pad);
    const int cin = input.dim(0), h = input.dim(1), wd = input.dim(2);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    Tensor out({cout, oh, ow});
    for (int co = 0; co < cout; ++co) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = b.at(co);
                const int y0 = oy * stride - pad;
                const int x0 = ox * stride - pad;
                for (int ci = 0; ci < cin; ++ci) {
                    for (int ky = 0; ky < kh; ++ky) {
                        const int y = y0 + ky;
                        if (y < 0 || y >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int x = x0 + kx;
                            if (x < 0 || x >= wd) continue;
                            acc += input.at(ci, y, x) * w.at(co, ci, ky, kx);
                        }
                    }
                }
                out.at(co, oy, ox) = acc;
            }
        }
    }
    return out;
}

struct Conv2dGrads {
    Tensor input, weights, bias;
};

inline Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& w,
                                   int stride, int pad, const Tensor& grad_out) {
    const int cin = input.dim(0), h = input.dim(1), wd = input.dim(2);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    require_shape(grad_out, {cout, oh, ow}, "conv2d_backward: grad_out");

    Conv2dGrads g{Tensor(input.shape), Tensor(w.shape), Tensor({cout})};
    for (int co = 0; co < cout; ++co) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const double go = grad_out.at(co, oy, ox);
                g.bias.at(co) += go;
                const int y0 = oy * stride - pad;
                const int x0 = ox * stride - pad;
                for (int ci = 0; ci < cin; ++ci) {
                    for (int ky = 0; ky < kh; ++ky) {
                        const int y = y0 + ky;
                        if (y < 0 || y >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int x = x0 + kx;
                            if (x < 0 || x >= wd) continue;
                            g.input.at(ci, y, x) += go * w.at(co, ci, ky, kx);
                            g.weights.at(co, ci, ky, kx) += go * input.at(ci, y, x);
                        }
                    }
                }
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// relu: elementwise max(0,x); subgradient at 0 is 0.

inline Tensor relu(const Tensor& x) {
    Tensor out(x.shape);
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return out;
}

inline Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
    require(x.same_shape(grad_out), "relu_backward: shape mismatch");
    Tensor g(x.shape);
    for (size_t i = 0; i < x.size(); ++i) g[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
    return g;
}

// ---------------------------------------------------------------------------
// spatial_softmax: softmax over all cells of a [H,W] map, with max
// subtraction. temperature scales the logits (default 1 matches plain softmax).

inline Tensor spatial_softmax(const Tensor& logits, double temperature = 1.0) {
    require(logits.rank() == 2, "spatial_softmax: logits must be [H,W], got " + shape_str(logits.shape));
    require(temperature > 0.0, "spatial_softmax: temperature must be > 0");
    Tensor out(logits.shape);
    const double m = logits.max();
    double z = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - m) / temperature);
        z += out[i];
    }
    for (double& v : out.data) v /= z;
    return out;
}

inline Tensor spatial_softmax_backward(const Tensor& S, const Tensor& grad_out,
                                       double temperature = 1.0) {
    require(S.same_shape(grad_out), "spatial_softmax_backward: shape mismatch");
    double dot = 0.0;
    for (size_t i = 0; i < S.size(); ++i) dot += grad_out[i] * S[i];
    Tensor g(S.shape);
    for (size_t i = 0; i < S.size(); ++i) g[i] = S[i] * (grad_out[i] - dot) / temperature;
    return g;
}

// ---------------------------------------------------------------------------
// avg_pool: non-overlapping k x k mean over [C,H,W].

inline Tensor avg_pool(const Tensor& x, int k) {
    require(x.rank() == 3, "avg_pool: input must be [C,H,W]");
    require(k >= 1, "avg_pool: window must be >= 1");
    require(x.dim(1) % k == 0, "avg_pool: height " + std::to_string(x.dim(1)) +
                                   " not divisible by window " + std::to_string(k));
    require(x.dim(2) % k == 0, "avg_pool: width " + std::to_string(x.dim(2)) +
                                   " not divisible by window " + std::to_string(k));
    const int c = x.dim(0), oh = x.dim(1) / k, ow = x.dim(2) / k;
    const double inv = 1.0 / (k * k);
    Tensor out({c, oh, ow});
    for (int ci = 0; ci < c; ++ci)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx)
                        acc += x.at(ci, oy * k + dy, ox * k + dx);
                out.at(ci, oy, ox) = acc * inv;
            }
    return out;
}

inline Tensor avg_pool_backward(const std::vector<int>& in_shape, int k,
                                const Tensor& grad_out) {
    Tensor g(in_shape);
    const int c = in_shape[0], oh = in_shape[1] / k, ow = in_shape[2] / k;
    require_shape(grad_out, {c, oh, ow}, "avg_pool_backward: grad_out");
    const double inv = 1.0 / (k * k);
    for (int ci = 0; ci < c; ++ci)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const double go = grad_out.at(ci, oy, ox) * inv;
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx)
                        g.at(ci, oy * k + dy, ox * k + dx) = go;
            }
    return g;
}

// ---------------------------------------------------------------------------
// linear: fully connected layer over a flat input vector.

inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require(x.rank() == 1, "linear: input must be rank-1");
    require(w.rank() == 2, "linear: weights must be [out,in]");
    require(w.dim(1) == x.dim(0), "linear: weight in-dim " + std::to_string(w.dim(1)) +
                                      " does not match input dim " + std::to_string(x.dim(0)));
    require(b.rank() == 1 && b.dim(0) == w.dim(0), "linear: bias dim mismatch");
    const int out = w.dim(0), in = w.dim(1);
    Tensor y({out});
    for (int o = 0; o < out; ++o) {
        double acc = b.at(o);
        for (int i = 0; i < in; ++i) acc += w.at(o, i) * x.at(i);
        y.at(o) = acc;
    }
    return y;
}

struct LinearGrads {
    Tensor input, weights, bias;
};

inline LinearGrads linear_backward(const Tensor& x, const Tensor& w,
                                   const Tensor& grad_out) {
    const int out = w.dim(0), in = w.dim(1);
    require_shape(grad_out, {out}, "linear_backward: grad_out");
    LinearGrads g{Tensor({in}), Tensor({out, in}), Tensor({out})};
    for (int o = 0; o < out; ++o) {
        const double go = grad_out.at(o);
        g.bias.at(o) = go;
        for (int i = 0; i < in; ++i) {
            g.input.at(i) += go * w.at(o, i);
            g.weights.at(o, i) = go * x.at(i);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// cross_entropy: softmax + negative log likelihood over class logits.

inline Tensor class_softmax(const Tensor& logits) {
    require(logits.rank() == 1, "cross_entropy: logits must be rank-1");
    Tensor p(logits.shape);
    const double m = logits.max();
    double z = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (double& v : p.data) v /= z;
    return p;
}

inline double cross_entropy_loss(const Tensor& logits, int label) {
    require(label >= 0 && label < logits.dim(0),
            "cross_entropy: label " + std::to_string(label) + " out of range for " +
                std::to_string(logits.dim(0)) + " classes");
    Tensor p = class_softmax(logits);
    return -std::log(std::max(p.at(label), 1e-300));
}

inline Tensor cross_entropy_backward(const Tensor& logits, int label) {
    require(label >= 0 && label < logits.dim(0),
            "cross_entropy_backward: label out of range");
    Tensor g = class_softmax(logits);
    g.at(label) -= 1.0;
    return g;
}

// ---------------------------------------------------------------------------
// sgd_step: v <- momentum*v + g; p <- p - lr*v. Mutates params/velocity.

inline void sgd_step(Tensor& param, const Tensor& grad, double lr, double momentum,
                     Tensor& velocity) {
    require(param.same_shape(grad), "sgd_step: param/grad shape mismatch: " +
                                        shape_str(param.shape) + " vs " + shape_str(grad.shape));
    require(param.same_shape(velocity), "sgd_step: param/velocity shape mismatch");
    require(lr > 0.0, "sgd_step: lr must be > 0");
    require(momentum >= 0.0 && momentum < 1.0, "sgd_step: momentum must be in [0,1)");
    for (size_t i = 0; i < param.size(); ++i) {
        velocity[i] = momentum * velocity[i] + grad[i];
        param[i] -= lr * velocity[i];
    }
}

}  // namespace salgrid
