#pragma once

#include <string>
#include <vector>

#include "salgrid/ops.hpp"
#include "salgrid/rng.hpp"
#include "salgrid/sampler.hpp"

namespace salgrid {

// Small saliency and task networks plus the composed four-step pipeline:
// (1) downsample, (2) saliency map, (3) saliency-guided resampling,
// (4) task classification. Deliberately tiny so end-to-end training runs in
// minutes on a CPU; the claim under test is the sampler, not the backbone.

struct Conv2dLayer {
    Tensor w, b;
    int stride = 1, pad = 1;
};

struct LinearLayer {
    Tensor w, b;
};

/// Three conv-relu blocks, a 1x1 reduction to one channel, bilinear resize to
/// the saliency resolution, and a spatial softmax.
struct SaliencyNet {
    Conv2dLayer c1, c2, c3, head;
    int out_h = 31, out_w = 31;
    double temperature = 1.0;
};

/// Three conv-relu-pool blocks and a linear classifier head.
struct TaskNet {
    Conv2dLayer c1, c2, c3;
    LinearLayer fc;
};

struct Model {
    SaliencyNet saliency;
    TaskNet task;
};

struct PipelineConfig {
    int channels = 1;
    int high_h = 96, high_w = 96;  // I
    int low_h = 32, low_w = 32;    // I_l and J
    int sal_h = 31, sal_w = 31;    // S and the grid
    int classes = 4;
    double temperature = 1.0;
    KernelSpec kernel = default_kernel_for(31);
    // Test hook: substitute a uniform saliency map for f_s output; the
    // saliency branch then receives no gradient.
    bool force_uniform_saliency = false;

    void validate() const {
        require(channels >= 1 && classes >= 2, "PipelineConfig: bad channels/classes");
        require(high_h >= low_h && high_w >= low_w,
                "PipelineConfig: high resolution must be >= low resolution");
        require(low_h % 8 == 0 && low_w % 8 == 0,
                "PipelineConfig: low resolution must be divisible by 8 (three 2x pools)");
        require(sal_h >= 2 && sal_w >= 2, "PipelineConfig: saliency map must be >= 2x2");
        require(temperature > 0.0, "PipelineConfig: temperature must be > 0");
        kernel.validate();
    }
};

inline PipelineConfig make_pipeline_config(int high, int low, int sal, int classes,
                                           int channels = 1) {
    PipelineConfig cfg;
    cfg.high_h = cfg.high_w = high;
    cfg.low_h = cfg.low_w = low;
    cfg.sal_h = cfg.sal_w = sal;
    cfg.classes = classes;
    cfg.channels = channels;
    cfg.kernel = default_kernel_for(sal);
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Construction

inline Conv2dLayer make_conv(Rng& rng, int cout, int cin, int k, int stride, int pad) {
    Conv2dLayer l;
    l.w = rng.normal_tensor({cout, cin, k, k}, std::sqrt(2.0 / (cin * k * k)));
    l.b = Tensor({cout});
    l.stride = stride;
    l.pad = pad;
    return l;
}

/// He-style initialization from the seeded generator; same seed gives
/// bit-identical parameters.
inline Model build_default_nets(const PipelineConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(mix_seed(seed));
    Model m;

    m.saliency.c1 = make_conv(rng, 8, cfg.channels, 3, 2, 1);
    m.saliency.c2 = make_conv(rng, 16, 8, 3, 1, 1);
    m.saliency.c3 = make_conv(rng, 16, 16, 3, 1, 1);
    m.saliency.head = make_conv(rng, 1, 16, 1, 1, 0);
    m.saliency.out_h = cfg.sal_h;
    m.saliency.out_w = cfg.sal_w;
    m.saliency.temperature = cfg.temperature;

    m.task.c1 = make_conv(rng, 8, cfg.channels, 3, 1, 1);
    m.task.c2 = make_conv(rng, 16, 8, 3, 1, 1);
    m.task.c3 = make_conv(rng, 32, 16, 3, 1, 1);
    const int feat = 32 * (cfg.low_h / 8) * (cfg.low_w / 8);
    LinearLayer fc;
    fc.w = rng.normal_tensor({cfg.classes, feat}, std::sqrt(2.0 / feat));
    fc.b = Tensor({cfg.classes});
    m.task.fc = fc;
    return m;
}

struct ParamRef {
    std::string name;
    Tensor* tensor;
};

/// Canonical parameter order shared by training, gradients and checkpoints.
inline std::vector<ParamRef> model_params(Model& m) {
    return {
        {"saliency.c1.w", &m.saliency.c1.w}, {"saliency.c1.b", &m.saliency.c1.b},
        {"saliency.c2.w", &m.saliency.c2.w}, {"saliency.c2.b", &m.saliency.c2.b},
        {"saliency.c3.w", &m.saliency.c3.w}, {"saliency.c3.b", &m.saliency.c3.b},
        {"saliency.head.w", &m.saliency.head.w}, {"saliency.head.b", &m.saliency.head.b},
        {"task.c1.w", &m.task.c1.w}, {"task.c1.b", &m.task.c1.b},
        {"task.c2.w", &m.task.c2.w}, {"task.c2.b", &m.task.c2.b},
        {"task.c3.w", &m.task.c3.w}, {"task.c3.b", &m.task.c3.b},
        {"task.fc.w", &m.task.fc.w}, {"task.fc.b", &m.task.fc.b},
    };
}

inline long long param_count(const Model& m) {
    Model& mm = const_cast<Model&>(m);
    long long n = 0;
    for (const auto& p : model_params(mm)) n += static_cast<long long>(p.tensor->size());
    return n;
}

// ---------------------------------------------------------------------------
// downsample: exact area-average (box) reduction; fractional source cells are
// weighted by overlap so any M <= H works.

inline void box_axis_weights(int in, int out, std::vector<std::vector<std::pair<int, double>>>& w) {
    const double step = static_cast<double>(in) / out;
    w.assign(out, {});
    for (int i = 0; i < out; ++i) {
        const double lo = i * step, hi = (i + 1) * step;
        for (int s = static_cast<int>(lo); s < in && s < hi; ++s) {
            const double overlap = std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s));
            if (overlap > 0) w[i].push_back({s, overlap / step});
        }
    }
}

inline Tensor downsample(const Tensor& I, int M, int N) {
    require(I.rank() == 3, "downsample: image must be [C,H,W]");
    const int C = I.dim(0), H = I.dim(1), W = I.dim(2);
    require(M >= 1 && N >= 1, "downsample: target extents must be >= 1");
    require(M <= H && N <= W, "downsample: target " + std::to_string(M) + "x" +
                                  std::to_string(N) + " exceeds source " + std::to_string(H) +
                                  "x" + std::to_string(W) + " (upsampling rejected)");
    std::vector<std::vector<std::pair<int, double>>> wy, wx;
    box_axis_weights(H, M, wy);
    box_axis_weights(W, N, wx);
    Tensor out({C, M, N});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < N; ++j) {
                double acc = 0.0;
                for (const auto& [y, fy] : wy[i])
                    for (const auto& [x, fx] : wx[j]) acc += fy * fx * I.at(c, y, x);
                out.at(c, i, j) = acc;
            }
    return out;
}

// ---------------------------------------------------------------------------
// Forward traces: every activation needed by the explicit backward pass.

struct SaliencyTrace {
    Tensor in, z1, a1, z2, a2, z3, a3, zhead;  // zhead: [1,mh,mw]
    Tensor logits2d;                           // resized to out_h x out_w
    Tensor S;
};

inline SaliencyTrace saliency_forward(const SaliencyNet& net, const Tensor& I_l) {
    SaliencyTrace t;
    t.in = I_l;
    t.z1 = conv2d(I_l, net.c1.w, net.c1.b, net.c1.stride, net.c1.pad);
    t.a1 = relu(t.z1);
    t.z2 = conv2d(t.a1, net.c2.w, net.c2.b, net.c2.stride, net.c2.pad);
    t.a2 = relu(t.z2);
    t.z3 = conv2d(t.a2, net.c3.w, net.c3.b, net.c3.stride, net.c3.pad);
    t.a3 = relu(t.z3);
    t.zhead = conv2d(t.a3, net.head.w, net.head.b, net.head.stride, net.head.pad);
    Tensor map2d({t.zhead.dim(1), t.zhead.dim(2)}, t.zhead.data);
    t.logits2d = bilinear_resize(map2d, net.out_h, net.out_w);
    t.S = spatial_softmax(t.logits2d, net.temperature);
    return t;
}

struct LayerGrads {
    Tensor w, b;
};

inline std::vector<Tensor> saliency_backward(const SaliencyNet& net, const SaliencyTrace& t,
                                             const Tensor& dS) {
    const Tensor dlogits = spatial_softmax_backward(t.S, dS, net.temperature);
    Tensor dmap2d = bilinear_resize_backward(t.zhead.dim(1), t.zhead.dim(2), dlogits);
    Tensor dzhead({1, t.zhead.dim(1), t.zhead.dim(2)}, std::move(dmap2d.data));

    const Conv2dGrads gh = conv2d_backward(t.a3, net.head.w, net.head.stride, net.head.pad, dzhead);
    const Tensor dz3 = relu_backward(t.z3, gh.input);
    const Conv2dGrads g3 = conv2d_backward(t.a2, net.c3.w, net.c3.stride, net.c3.pad, dz3);
    const Tensor dz2 = relu_backward(t.z2, g3.input);
    const Conv2dGrads g2 = conv2d_backward(t.a1, net.c2.w, net.c2.stride, net.c2.pad, dz2);
    const Tensor dz1 = relu_backward(t.z1, g2.input);
    const Conv2dGrads g1 = conv2d_backward(t.in, net.c1.w, net.c1.stride, net.c1.pad, dz1);

    return {g1.weights, g1.bias, g2.weights, g2.bias, g3.weights, g3.bias, gh.weights, gh.bias};
}

struct TaskTrace {
    Tensor in, z1, a1, p1, z2, a2, p2, z3, a3, p3, flat, logits;
};

inline TaskTrace task_forward(const TaskNet& net, const Tensor& J) {
    TaskTrace t;
    t.in = J;
    t.z1 = conv2d(J, net.c1.w, net.c1.b, net.c1.stride, net.c1.pad);
    t.a1 = relu(t.z1);
    t.p1 = avg_pool(t.a1, 2);
    t.z2 = conv2d(t.p1, net.c2.w, net.c2.b, net.c2.stride, net.c2.pad);
    t.a2 = relu(t.z2);
    t.p2 = avg_pool(t.a2, 2);
    t.z3 = conv2d(t.p2, net.c3.w, net.c3.b, net.c3.stride, net.c3.pad);
    t.a3 = relu(t.z3);
    t.p3 = avg_pool(t.a3, 2);
    t.flat = Tensor({static_cast<int>(t.p3.size())}, t.p3.data);
    t.logits = linear(t.flat, net.fc.w, net.fc.b);
    return t;
}

struct TaskBackward {
    std::vector<Tensor> grads;  // c1.w, c1.b, c2.w, c2.b, c3.w, c3.b, fc.w, fc.b
    Tensor dinput;
};

inline TaskBackward task_backward(const TaskNet& net, const TaskTrace& t, const Tensor& dlogits) {
    const LinearGrads gfc = linear_backward(t.flat, net.fc.w, dlogits);
    Tensor dp3(t.p3.shape, gfc.input.data);
    const Tensor da3 = avg_pool_backward(t.a3.shape, 2, dp3);
    const Tensor dz3 = relu_backward(t.z3, da3);
    const Conv2dGrads g3 = conv2d_backward(t.p2, net.c3.w, net.c3.stride, net.c3.pad, dz3);
    const Tensor da2 = avg_pool_backward(t.a2.shape, 2, g3.input);
    const Tensor dz2 = relu_backward(t.z2, da2);
    const Conv2dGrads g2 = conv2d_backward(t.p1, net.c2.w, net.c2.stride, net.c2.pad, dz2);
    const Tensor da1 = avg_pool_backward(t.a1.shape, 2, g2.input);
    const Tensor dz1 = relu_backward(t.z1, da1);
    const Conv2dGrads g1 = conv2d_backward(t.in, net.c1.w, net.c1.stride, net.c1.pad, dz1);
    return {{g1.weights, g1.bias, g2.weights, g2.bias, g3.weights, g3.bias,
             gfc.weights, gfc.bias},
            g1.input};
}

// ---------------------------------------------------------------------------
// The four-step pipeline.

enum class Mode { train, eval };

struct PipelineTrace {
    Tensor I_l;
    SaliencyTrace sal;
    SamplingGrid grid;     // saliency resolution, clamped
    SamplingGrid grid_up;  // task resolution
    Tensor J;
    Tensor J_task;  // J after warm-up blur (equals J when sigma is 0)
    double blur_sigma = 0.0;
    TaskTrace task;
    Tensor logits;
};

/// Runs: (1) I_l = downsample(I); (2) S = f_s(I_l); (3) J = g(I,S) through
/// grid generation, upsampling and bilinear sampling, with the warm-up blur
/// in train mode; (4) logits = f_t(J). Eval mode never applies blur.
inline PipelineTrace forward_pipeline(const Model& m, const Tensor& I,
                                      const PipelineConfig& cfg, Mode mode,
                                      double blur_sigma = 0.0) {
    cfg.validate();
    require_shape(I, {cfg.channels, cfg.high_h, cfg.high_w}, "forward_pipeline: input");
    require(I.all_finite(), "forward_pipeline: input must be finite");

    PipelineTrace t;
    t.I_l = downsample(I, cfg.low_h, cfg.low_w);
    t.sal = saliency_forward(m.saliency, t.I_l);
    const Tensor& S = cfg.force_uniform_saliency
                          ? (t.sal.S = Tensor::full({cfg.sal_h, cfg.sal_w},
                                                    1.0 / (cfg.sal_h * cfg.sal_w)))
                          : t.sal.S;
    t.grid = compute_grid_conv(S, cfg.kernel);
    t.grid_up = upsample_grid(t.grid, cfg.low_h, cfg.low_w);
    t.J = grid_sample(I, t.grid_up);
    t.blur_sigma = mode == Mode::train ? blur_sigma : 0.0;
    t.J_task = t.blur_sigma > 0.0 ? gaussian_blur(t.J, t.blur_sigma) : t.J;
    t.task = task_forward(m.task, t.J_task);
    t.logits = t.task.logits;
    return t;
}

/// Exact reverse pass through f_t, the sampler chain and f_s. Returns
/// gradients in the canonical model_params order.
inline std::vector<Tensor> backward_pipeline(const Model& m, const Tensor& I,
                                             const PipelineConfig& cfg,
                                             const PipelineTrace& t, const Tensor& dlogits) {
    TaskBackward tb = task_backward(m.task, t.task, dlogits);

    const Tensor dJ = t.blur_sigma > 0.0
                          ? gaussian_blur_backward(t.J.shape, t.blur_sigma, tb.dinput)
                          : tb.dinput;
    const GridSampleGrads gs = grid_sample_backward(I, t.grid_up, dJ);
    const SamplingGrid dgrid = upsample_grid_backward(cfg.sal_h, cfg.sal_w, gs.grid);

    std::vector<Tensor> sal_grads;
    if (cfg.force_uniform_saliency) {
        Model& mm = const_cast<Model&>(m);
        auto refs = model_params(mm);
        for (int i = 0; i < 8; ++i) sal_grads.push_back(Tensor(refs[i].tensor->shape));
    } else {
        const Tensor dS = grid_backward(t.sal.S, cfg.kernel, dgrid);
        sal_grads = saliency_backward(m.saliency, t.sal, dS);
    }

    std::vector<Tensor> all = std::move(sal_grads);
    for (auto& g : tb.grads) all.push_back(std::move(g));
    return all;
}

/// Baseline arm: the task network alone on the uniformly downsampled image.
inline TaskTrace forward_baseline(const Model& m, const Tensor& I, const PipelineConfig& cfg) {
    return task_forward(m.task, downsample(I, cfg.low_h, cfg.low_w));
}

inline std::vector<Tensor> backward_baseline(const Model& m, const TaskTrace& t,
                                             const Tensor& dlogits) {
    return task_backward(m.task, t, dlogits).grads;
}

}  // namespace salgrid
