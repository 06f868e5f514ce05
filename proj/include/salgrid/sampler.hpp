#pragma once

#include <algorithm>
#include <cmath>

#include "salgrid/tensor.hpp"

namespace salgrid {

// Saliency-driven sampling grid generation and differentiable resampling.
//
// Coordinate convention (align-corners): cell j of an n-cell axis sits at
// j/(n-1) in [0,1]. A saliency map is a non-negative [h,w] tensor, normally
// softmax-normalized. The grid (u,v) gives, per output cell, normalized
// source coordinates; uniform saliency yields the identity grid u=x, v=y.

/// Gaussian attraction kernel parameters, all in saliency-map cells.
/// pad >= radius keeps the kernel window inside the replicate-padded map,
/// which is what makes the uniform-map identity exact.
struct KernelSpec {
    double sigma = 1.0;  // bandwidth in cells
    int radius = 1;      // truncation radius in cells
    int pad = 1;         // replicate padding width in cells

    void validate() const {
        require(sigma > 0.0, "KernelSpec: sigma must be > 0");
        require(radius >= 1, "KernelSpec: radius must be >= 1");
        require(pad >= radius, "KernelSpec: pad must be >= radius");
    }
};

/// Default kernel for a map of the given width: sigma is one third of the
/// map width, truncated at 2*sigma (which keeps >95% of the kernel mass).
inline KernelSpec default_kernel_for(int map_w) {
    require(map_w >= 1, "default_kernel_for: map width must be >= 1");
    KernelSpec k;
    k.sigma = map_w / 3.0;
    k.radius = static_cast<int>(std::ceil(2.0 * k.sigma));
    k.pad = k.radius;
    return k;
}

/// Unnormalized Gaussian stencil k(d) = exp(-|d|^2 / (2 sigma^2)) sampled at
/// integer offsets in [-radius, radius]^2. Eq. of the grid generator divides
/// by the weighted sum itself, so no normalization here.
inline Tensor gaussian_kernel(const KernelSpec& spec) {
    spec.validate();
    const int r = spec.radius;
    const double inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
    Tensor k({2 * r + 1, 2 * r + 1});
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            k.at(dy + r, dx + r) = std::exp(-(dy * dy + dx * dx) * inv);
    return k;
}

/// Replicate-pad a saliency map by `pad` cells on every side.
inline Tensor pad_saliency(const Tensor& S, int pad) {
    require(S.rank() == 2, "pad_saliency: map must be [h,w]");
    require(pad >= 0, "pad_saliency: pad must be >= 0");
    const int h = S.dim(0), w = S.dim(1);
    Tensor P({h + 2 * pad, w + 2 * pad});
    for (int a = 0; a < h + 2 * pad; ++a) {
        const int r = std::clamp(a - pad, 0, h - 1);
        for (int b = 0; b < w + 2 * pad; ++b) {
            const int c = std::clamp(b - pad, 0, w - 1);
            P.at(a, b) = S.at(r, c);
        }
    }
    return P;
}

struct SamplingGrid {
    Tensor u, v;  // each [h,w], normalized source coordinates

    int height() const { return u.dim(0); }
    int width() const { return u.dim(1); }
};

namespace detail {

constexpr double kGridEps = 1e-12;  // zero-denominator guard for raw maps

// Coordinate of padded cell index b on an n-cell axis, extended beyond [0,1]
// on the same lattice.
inline double padded_coord(int b, int pad, int n) {
    return static_cast<double>(b - pad) / std::max(n - 1, 1);
}

inline void check_saliency(const Tensor& S) {
    require(S.rank() == 2, "saliency map must be [h,w], got " + shape_str(S.shape));
    double total = 0.0;
    for (double v : S.data) {
        require(v >= 0.0, "saliency map must be non-negative");
        total += v;
    }
    require(total > 0.0, "saliency map must have positive total mass");
}

// Unclamped grid plus per-cell denominators (with the epsilon guard already
// added); shared by the convolutional forward and the backward pass.
struct GridParts {
    Tensor u_raw, v_raw, den;
};

// Separable evaluation: horizontal then vertical 1-D passes of the Gaussian
// over the padded fields S, S*x', S*y'.
inline GridParts grid_parts_conv(const Tensor& S, const KernelSpec& spec) {
    check_saliency(S);
    spec.validate();
    const int h = S.dim(0), w = S.dim(1);
    const int p = spec.pad, r = spec.radius;
    const int hp = h + 2 * p, wp = w + 2 * p;

    std::vector<double> k1(2 * r + 1);
    const double inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
    for (int d = -r; d <= r; ++d) k1[d + r] = std::exp(-d * d * inv);

    const Tensor P = pad_saliency(S, p);

    // Horizontal pass over the three fields; output is w columns wide.
    Tensor tP({hp, w}), tPX({hp, w}), tPY({hp, w});
    for (int a = 0; a < hp; ++a) {
        const double y = padded_coord(a, p, h);
        for (int j = 0; j < w; ++j) {
            double sp = 0.0, spx = 0.0;
            for (int db = -r; db <= r; ++db) {
                const int b = j + p + db;
                const double pv = P.at(a, b) * k1[db + r];
                sp += pv;
                spx += pv * padded_coord(b, p, w);
            }
            tP.at(a, j) = sp;
            tPX.at(a, j) = spx;
            tPY.at(a, j) = sp * y;
        }
    }

    GridParts parts{Tensor({h, w}), Tensor({h, w}), Tensor({h, w})};
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            double den = 0.0, nx = 0.0, ny = 0.0;
            for (int da = -r; da <= r; ++da) {
                const int a = i + p + da;
                const double kv = k1[da + r];
                den += kv * tP.at(a, j);
                nx += kv * tPX.at(a, j);
                ny += kv * tPY.at(a, j);
            }
            require(den > 100.0 * kGridEps,
                    "grid generation: zero attraction mass near cell (" +
                        std::to_string(i) + "," + std::to_string(j) + ")");
            den += kGridEps;
            parts.den.at(i, j) = den;
            parts.u_raw.at(i, j) = nx / den;
            parts.v_raw.at(i, j) = ny / den;
        }
    }
    return parts;
}

inline SamplingGrid clamp_grid(const GridParts& parts) {
    SamplingGrid g{parts.u_raw, parts.v_raw};
    for (double& x : g.u.data) x = std::clamp(x, 0.0, 1.0);
    for (double& y : g.v.data) y = std::clamp(y, 0.0, 1.0);
    return g;
}

}  // namespace detail

/// Reference grid generator: direct double sum of the attraction equations
/// u = sum(S k x')/sum(S k), v = sum(S k y')/sum(S k) over the truncated
/// kernel window in the replicate-padded map. Kept deliberately naive; the
/// convolutional path is tested against it.
inline SamplingGrid compute_grid_bruteforce(const Tensor& S, const KernelSpec& spec) {
    detail::check_saliency(S);
    spec.validate();
    const int h = S.dim(0), w = S.dim(1);
    const int p = spec.pad, r = spec.radius;
    const Tensor P = pad_saliency(S, p);
    const double inv = 1.0 / (2.0 * spec.sigma * spec.sigma);

    SamplingGrid g{Tensor({h, w}), Tensor({h, w})};
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            double den = 0.0, nx = 0.0, ny = 0.0;
            for (int da = -r; da <= r; ++da) {
                for (int db = -r; db <= r; ++db) {
                    const int a = i + p + da;
                    const int b = j + p + db;
                    const double k = std::exp(-(da * da + db * db) * inv);
                    const double sk = P.at(a, b) * k;
                    den += sk;
                    nx += sk * detail::padded_coord(b, p, w);
                    ny += sk * detail::padded_coord(a, p, h);
                }
            }
            require(den > 100.0 * detail::kGridEps,
                    "grid generation: zero attraction mass near cell (" +
                        std::to_string(i) + "," + std::to_string(j) + ")");
            den += detail::kGridEps;
            g.u.at(i, j) = std::clamp(nx / den, 0.0, 1.0);
            g.v.at(i, j) = std::clamp(ny / den, 0.0, 1.0);
        }
    }
    return g;
}

/// Convolutional grid generator; numerically identical to the brute-force
/// reference but computed with separable 1-D Gaussian passes.
inline SamplingGrid compute_grid_conv(const Tensor& S, const KernelSpec& spec) {
    return detail::clamp_grid(detail::grid_parts_conv(S, spec));
}

/// Vector-Jacobian product of compute_grid: maps upstream gradients on (u,v)
/// to a gradient on S. Quotient rule through the three convolutions; the
/// replicate-pad adjoint folds padded-cell gradients back onto border cells.
/// Cells whose unclamped coordinate fell outside [0,1] pass no gradient.
inline Tensor grid_backward(const Tensor& S, const KernelSpec& spec,
                            const SamplingGrid& dgrid) {
    const int h = S.dim(0), w = S.dim(1);
    require_shape(dgrid.u, {h, w}, "grid_backward: dgrid.u");
    require_shape(dgrid.v, {h, w}, "grid_backward: dgrid.v");
    const detail::GridParts parts = detail::grid_parts_conv(S, spec);
    const int p = spec.pad, r = spec.radius;
    const int hp = h + 2 * p, wp = w + 2 * p;

    std::vector<double> k1(2 * r + 1);
    const double inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
    for (int d = -r; d <= r; ++d) k1[d + r] = std::exp(-d * d * inv);

    // Per-cell factors of d u_raw / dP = k (x' - u_raw)/den (and likewise v):
    // A = gu/den, B = gu*u_raw/den, C = gv/den, E = gv*v_raw/den.
    Tensor A({h, w}), B({h, w}), C({h, w}), E({h, w});
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const double den = parts.den.at(i, j);
            const double ur = parts.u_raw.at(i, j);
            const double vr = parts.v_raw.at(i, j);
            const double gu = (ur >= 0.0 && ur <= 1.0) ? dgrid.u.at(i, j) : 0.0;
            const double gv = (vr >= 0.0 && vr <= 1.0) ? dgrid.v.at(i, j) : 0.0;
            A.at(i, j) = gu / den;
            B.at(i, j) = gu * ur / den;
            C.at(i, j) = gv / den;
            E.at(i, j) = gv * vr / den;
        }
    }

    // Correlate each factor field with the kernel onto the padded extent:
    // KF(a,b) = sum_{da,db} k(da) k(db) F(a-p-da, b-p-db), F zero off-grid.
    auto spread = [&](const Tensor& F) {
        Tensor V({hp, w});
        for (int a = 0; a < hp; ++a)
            for (int j = 0; j < w; ++j) {
                double acc = 0.0;
                for (int da = -r; da <= r; ++da) {
                    const int i = a - p - da;
                    if (i < 0 || i >= h) continue;
                    acc += k1[da + r] * F.at(i, j);
                }
                V.at(a, j) = acc;
            }
        Tensor K({hp, wp});
        for (int a = 0; a < hp; ++a)
            for (int b = 0; b < wp; ++b) {
                double acc = 0.0;
                for (int db = -r; db <= r; ++db) {
                    const int j = b - p - db;
                    if (j < 0 || j >= w) continue;
                    acc += k1[db + r] * V.at(a, j);
                }
                K.at(a, b) = acc;
            }
        return K;
    };
    const Tensor KA = spread(A), KB = spread(B), KC = spread(C), KE = spread(E);

    Tensor dS({h, w});
    for (int a = 0; a < hp; ++a) {
        const int sr = std::clamp(a - p, 0, h - 1);
        const double y = detail::padded_coord(a, p, h);
        for (int b = 0; b < wp; ++b) {
            const int sc = std::clamp(b - p, 0, w - 1);
            const double x = detail::padded_coord(b, p, w);
            dS.at(sr, sc) += x * KA.at(a, b) - KB.at(a, b) + y * KC.at(a, b) - KE.at(a, b);
        }
    }
    return dS;
}

// ---------------------------------------------------------------------------
// Bilinear field resize (align-corners), used to upsample the grid to task
// resolution and shared by the networks for saliency-logit resizing.

inline Tensor bilinear_resize(const Tensor& f, int out_h, int out_w) {
    require(f.rank() == 2, "bilinear_resize: field must be [h,w]");
    require(out_h >= 1 && out_w >= 1, "bilinear_resize: output extents must be >= 1");
    const int h = f.dim(0), w = f.dim(1);
    const double sy = out_h > 1 ? static_cast<double>(h - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(w - 1) / (out_w - 1) : 0.0;
    Tensor out({out_h, out_w});
    for (int i = 0; i < out_h; ++i) {
        const double py = i * sy;
        int y0 = std::min(static_cast<int>(py), h - 2);
        if (y0 < 0) y0 = 0;
        const double fy = h > 1 ? py - y0 : 0.0;
        for (int j = 0; j < out_w; ++j) {
            const double px = j * sx;
            int x0 = std::min(static_cast<int>(px), w - 2);
            if (x0 < 0) x0 = 0;
            const double fx = w > 1 ? px - x0 : 0.0;
            const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
            out.at(i, j) = (1 - fy) * ((1 - fx) * f.at(y0, x0) + fx * f.at(y0, x1)) +
                           fy * ((1 - fx) * f.at(y1, x0) + fx * f.at(y1, x1));
        }
    }
    return out;
}

inline Tensor bilinear_resize_backward(int in_h, int in_w, const Tensor& grad_out) {
    require(grad_out.rank() == 2, "bilinear_resize_backward: grad must be [h,w]");
    const int out_h = grad_out.dim(0), out_w = grad_out.dim(1);
    const double sy = out_h > 1 ? static_cast<double>(in_h - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(in_w - 1) / (out_w - 1) : 0.0;
    Tensor g({in_h, in_w});
    for (int i = 0; i < out_h; ++i) {
        const double py = i * sy;
        int y0 = std::min(static_cast<int>(py), in_h - 2);
        if (y0 < 0) y0 = 0;
        const double fy = in_h > 1 ? py - y0 : 0.0;
        for (int j = 0; j < out_w; ++j) {
            const double px = j * sx;
            int x0 = std::min(static_cast<int>(px), in_w - 2);
            if (x0 < 0) x0 = 0;
            const double fx = in_w > 1 ? px - x0 : 0.0;
            const int y1 = std::min(y0 + 1, in_h - 1), x1 = std::min(x0 + 1, in_w - 1);
            const double go = grad_out.at(i, j);
            g.at(y0, x0) += (1 - fy) * (1 - fx) * go;
            g.at(y0, x1) += (1 - fy) * fx * go;
            g.at(y1, x0) += fy * (1 - fx) * go;
            g.at(y1, x1) += fy * fx * go;
        }
    }
    return g;
}

/// Bilinearly upsample a sampling grid to task resolution M x N.
inline SamplingGrid upsample_grid(const SamplingGrid& grid, int M, int N) {
    require(M >= grid.height(), "upsample_grid: target height smaller than grid");
    require(N >= grid.width(), "upsample_grid: target width smaller than grid");
    return SamplingGrid{bilinear_resize(grid.u, M, N), bilinear_resize(grid.v, M, N)};
}

inline SamplingGrid upsample_grid_backward(int grid_h, int grid_w,
                                           const SamplingGrid& dgrid_up) {
    return SamplingGrid{bilinear_resize_backward(grid_h, grid_w, dgrid_up.u),
                        bilinear_resize_backward(grid_h, grid_w, dgrid_up.v)};
}

// ---------------------------------------------------------------------------
// grid_sample: bilinear resampling of [C,H,W] at normalized grid coordinates.

namespace detail {

struct Corner {
    int x0, x1, y0, y1;
    double fx, fy;
};

inline Corner locate(double u, double v, int H, int W) {
    Corner c;
    const double px = u * (W - 1), py = v * (H - 1);
    c.x0 = std::min(static_cast<int>(px), W - 2);
    if (c.x0 < 0) c.x0 = 0;
    c.y0 = std::min(static_cast<int>(py), H - 2);
    if (c.y0 < 0) c.y0 = 0;
    c.x1 = std::min(c.x0 + 1, W - 1);
    c.y1 = std::min(c.y0 + 1, H - 1);
    c.fx = W > 1 ? px - c.x0 : 0.0;
    c.fy = H > 1 ? py - c.y0 : 0.0;
    return c;
}

inline void check_grid_range(const SamplingGrid& grid) {
    for (double x : grid.u.data)
        require(x >= 0.0 && x <= 1.0, "grid_sample: u coordinate out of [0,1]");
    for (double y : grid.v.data)
        require(y >= 0.0 && y <= 1.0, "grid_sample: v coordinate out of [0,1]");
}

}  // namespace detail

inline Tensor grid_sample(const Tensor& I, const SamplingGrid& grid) {
    require(I.rank() == 3, "grid_sample: image must be [C,H,W]");
    require(grid.u.same_shape(grid.v), "grid_sample: u/v shape mismatch");
    detail::check_grid_range(grid);
    const int C = I.dim(0), H = I.dim(1), W = I.dim(2);
    const int gh = grid.height(), gw = grid.width();
    Tensor J({C, gh, gw});
    for (int i = 0; i < gh; ++i) {
        for (int j = 0; j < gw; ++j) {
            const auto c = detail::locate(grid.u.at(i, j), grid.v.at(i, j), H, W);
            for (int ch = 0; ch < C; ++ch) {
                J.at(ch, i, j) =
                    (1 - c.fy) * ((1 - c.fx) * I.at(ch, c.y0, c.x0) + c.fx * I.at(ch, c.y0, c.x1)) +
                    c.fy * ((1 - c.fx) * I.at(ch, c.y1, c.x0) + c.fx * I.at(ch, c.y1, c.x1));
            }
        }
    }
    return J;
}

struct GridSampleGrads {
    Tensor image;
    SamplingGrid grid;
};

inline GridSampleGrads grid_sample_backward(const Tensor& I, const SamplingGrid& grid,
                                            const Tensor& grad_out) {
    const int C = I.dim(0), H = I.dim(1), W = I.dim(2);
    const int gh = grid.height(), gw = grid.width();
    require_shape(grad_out, {C, gh, gw}, "grid_sample_backward: grad_out");
    GridSampleGrads g{Tensor(I.shape), SamplingGrid{Tensor({gh, gw}), Tensor({gh, gw})}};
    for (int i = 0; i < gh; ++i) {
        for (int j = 0; j < gw; ++j) {
            const auto c = detail::locate(grid.u.at(i, j), grid.v.at(i, j), H, W);
            double du = 0.0, dv = 0.0;
            for (int ch = 0; ch < C; ++ch) {
                const double go = grad_out.at(ch, i, j);
                g.image.at(ch, c.y0, c.x0) += (1 - c.fy) * (1 - c.fx) * go;
                g.image.at(ch, c.y0, c.x1) += (1 - c.fy) * c.fx * go;
                g.image.at(ch, c.y1, c.x0) += c.fy * (1 - c.fx) * go;
                g.image.at(ch, c.y1, c.x1) += c.fy * c.fx * go;
                // d/dpx then chain px = u (W-1); same for py.
                du += go * ((1 - c.fy) * (I.at(ch, c.y0, c.x1) - I.at(ch, c.y0, c.x0)) +
                            c.fy * (I.at(ch, c.y1, c.x1) - I.at(ch, c.y1, c.x0)));
                dv += go * ((1 - c.fx) * (I.at(ch, c.y1, c.x0) - I.at(ch, c.y0, c.x0)) +
                            c.fx * (I.at(ch, c.y1, c.x1) - I.at(ch, c.y0, c.x1)));
            }
            g.grid.u.at(i, j) = du * (W - 1);
            g.grid.v.at(i, j) = dv * (H - 1);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// gaussian_blur: separable normalized Gaussian with replicate boundary.

namespace detail {

inline std::vector<double> blur_kernel(double sigma_px) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_px)));
    std::vector<double> k(2 * r + 1);
    double total = 0.0;
    for (int d = -r; d <= r; ++d) {
        k[d + r] = std::exp(-d * d / (2.0 * sigma_px * sigma_px));
        total += k[d + r];
    }
    for (double& v : k) v /= total;
    return k;
}

}  // namespace detail

inline Tensor gaussian_blur(const Tensor& img, double sigma_px) {
    require(img.rank() == 3, "gaussian_blur: image must be [C,H,W]");
    require(sigma_px >= 0.0, "gaussian_blur: sigma must be >= 0");
    if (sigma_px == 0.0) return img;
    const auto k = detail::blur_kernel(sigma_px);
    const int r = (static_cast<int>(k.size()) - 1) / 2;
    const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor tmp(img.shape), out(img.shape);
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double acc = 0.0;
                for (int d = -r; d <= r; ++d)
                    acc += k[d + r] * img.at(c, y, std::clamp(x + d, 0, W - 1));
                tmp.at(c, y, x) = acc;
            }
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double acc = 0.0;
                for (int d = -r; d <= r; ++d)
                    acc += k[d + r] * tmp.at(c, std::clamp(y + d, 0, H - 1), x);
                out.at(c, y, x) = acc;
            }
    }
    return out;
}

/// Adjoint of gaussian_blur (the op is linear in the image, so only shape and
/// sigma are needed): scatter passes in reverse order with the same clamped
/// indexing.
inline Tensor gaussian_blur_backward(const std::vector<int>& img_shape, double sigma_px,
                                     const Tensor& grad_out) {
    require(grad_out.rank() == 3, "gaussian_blur_backward: grad must be [C,H,W]");
    require(sigma_px >= 0.0, "gaussian_blur_backward: sigma must be >= 0");
    if (sigma_px == 0.0) return grad_out;
    const auto k = detail::blur_kernel(sigma_px);
    const int r = (static_cast<int>(k.size()) - 1) / 2;
    const int C = img_shape[0], H = img_shape[1], W = img_shape[2];
    Tensor gtmp({C, H, W}), g({C, H, W});
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double go = grad_out.at(c, y, x);
                for (int d = -r; d <= r; ++d)
                    gtmp.at(c, std::clamp(y + d, 0, H - 1), x) += k[d + r] * go;
            }
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double gt = gtmp.at(c, y, x);
                for (int d = -r; d <= r; ++d)
                    g.at(c, y, std::clamp(x + d, 0, W - 1)) += k[d + r] * gt;
            }
    }
    return g;
}

// ---------------------------------------------------------------------------
// transport_residual: diagnostic mismatch against the exact mass-transport
// constraint (cumulative saliency mass inside [0,u] x [0,v] should equal x*y).
// The map is read as a bilinear density over [0,1]^2, normalized by its
// trapezoid integral, so a uniform map with the identity grid is exact.

inline double transport_residual(const Tensor& S, const SamplingGrid& grid) {
    require(S.rank() == 2, "transport_residual: map must be [h,w]");
    const int h = S.dim(0), w = S.dim(1);
    require(h >= 2 && w >= 2, "transport_residual: map must be at least 2x2");
    require(grid.u.same_shape(grid.v), "transport_residual: grid u/v mismatch");

    const double dx = 1.0 / (w - 1), dy = 1.0 / (h - 1);
    double T = 0.0;
    for (int rr = 0; rr < h; ++rr) {
        const double ty = (rr == 0 || rr == h - 1) ? dy / 2 : dy;
        for (int cc = 0; cc < w; ++cc) {
            const double tx = (cc == 0 || cc == w - 1) ? dx / 2 : dx;
            T += S.at(rr, cc) * ty * tx;
        }
    }
    require(T > 0.0, "transport_residual: map has zero mass");

    auto cumulative = [&](double u, double v) {
        double mass = 0.0;
        for (int rr = 0; rr + 1 < h; ++rr) {
            const double y0 = rr * dy;
            const double eta = std::clamp((v - y0) / dy, 0.0, 1.0);
            if (eta <= 0.0) break;
            const double iy0 = eta - eta * eta / 2, iy1 = eta * eta / 2;
            for (int cc = 0; cc + 1 < w; ++cc) {
                const double x0 = cc * dx;
                const double xi = std::clamp((u - x0) / dx, 0.0, 1.0);
                if (xi <= 0.0) break;
                const double ix0 = xi - xi * xi / 2, ix1 = xi * xi / 2;
                mass += dx * dy *
                        (S.at(rr, cc) * ix0 * iy0 + S.at(rr, cc + 1) * ix1 * iy0 +
                         S.at(rr + 1, cc) * ix0 * iy1 + S.at(rr + 1, cc + 1) * ix1 * iy1);
            }
        }
        return mass / T;
    };

    const int gh = grid.height(), gw = grid.width();
    double total = 0.0;
    for (int i = 0; i < gh; ++i) {
        const double y = gh > 1 ? static_cast<double>(i) / (gh - 1) : 0.0;
        for (int j = 0; j < gw; ++j) {
            const double x = gw > 1 ? static_cast<double>(j) / (gw - 1) : 0.0;
            total += std::abs(cumulative(grid.u.at(i, j), grid.v.at(i, j)) - x * y);
        }
    }
    return total / (gh * gw);
}

/// Fraction of adjacent grid pairs whose coordinates invert order (u
/// non-monotone along a row, or v along a column). Monitoring only; the
/// attraction formulation discourages fold-overs but does not forbid them.
inline double foldover_fraction(const SamplingGrid& grid) {
    const int h = grid.height(), w = grid.width();
    long long bad = 0, total = 0;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j + 1 < w; ++j) {
            bad += grid.u.at(i, j + 1) < grid.u.at(i, j);
            ++total;
        }
    for (int i = 0; i + 1 < h; ++i)
        for (int j = 0; j < w; ++j) {
            bad += grid.v.at(i + 1, j) < grid.v.at(i, j);
            ++total;
        }
    return total ? static_cast<double>(bad) / static_cast<double>(total) : 0.0;
}

/// Mean Euclidean displacement of the grid from the identity grid.
inline double mean_grid_displacement(const SamplingGrid& grid) {
    const int h = grid.height(), w = grid.width();
    double total = 0.0;
    for (int i = 0; i < h; ++i) {
        const double y = h > 1 ? static_cast<double>(i) / (h - 1) : 0.0;
        for (int j = 0; j < w; ++j) {
            const double x = w > 1 ? static_cast<double>(j) / (w - 1) : 0.0;
            const double du = grid.u.at(i, j) - x, dv = grid.v.at(i, j) - y;
            total += std::sqrt(du * du + dv * dv);
        }
    }
    return total / (h * w);
}

}  // namespace salgrid
