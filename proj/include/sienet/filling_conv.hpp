#ifndef SIENET_FILLING_CONV_HPP
#define SIENET_FILLING_CONV_HPP

// Adaptive filling convolution: a boundary-sensitive operator that blends a learned padding
// convolution with an unweighted pass-through of the same receptive field,
//
//     y(p0) = sum_k [ w_k * m(p0) * x(p0 + p_k) + (1 - m(p0)) * x(p0 + p_k) ],
//
// where m = sigmoid(conv(x, mask_weight) + mask_bias) is one scalar per output location,
// shared by every tap and output channel. Out-of-bounds taps read zero. The padding bias is
// added inside the modulated branch, so m == 1 reduces exactly to conv2d(x, w, b).

#include "sienet/ops.hpp"

#include <random>
#include <string_view>

namespace sienet {

/// Form of the (1 - m) branch: the full K-tap box sum, or the centre tap only.
enum class SkipBranch { box, center };

SkipBranch parse_skip_branch(std::string_view name);
std::string_view to_string(SkipBranch s);

template <typename Scalar>
struct FillingConvParams {
    Tensor<Scalar> padding_weight;  // (C, C, K, K)
    Tensor<Scalar> padding_bias;    // (1, C, 1, 1)
    Tensor<Scalar> mask_weight;     // (1, C, K, K)
    Tensor<Scalar> mask_bias;       // (1, 1, 1, 1)

    /// Initial mask logit; sigmoid(6) ~ 0.9975 so the operator starts as a plain convolution.
    static constexpr double kInitialMaskBias = 6.0;

    static FillingConvParams init(int channels, int kernel, std::mt19937_64& rng, Scalar init_std = Scalar(0.02))
    {
        FillingConvParams p;
        p.padding_weight = Tensor<Scalar>(Shape{channels, channels, kernel, kernel});
        p.padding_weight.fill_normal(rng, Scalar(0), init_std);
        p.padding_bias = Tensor<Scalar>(Shape{1, channels, 1, 1});
        p.mask_weight = Tensor<Scalar>(Shape{1, channels, kernel, kernel});
        p.mask_bias = Tensor<Scalar>(scalar_shape(), Scalar(kInitialMaskBias));
        p.validate();
        return p;
    }

    int channels() const { return padding_weight.shape().n; }
    int kernel() const { return padding_weight.shape().h; }

    void validate() const
    {
        const Shape w = padding_weight.shape();
        if (w.h != w.w) throw Error("filling conv: kernel must be square, got " + to_string(w));
        if (w.h % 2 == 0) throw Error("filling conv: kernel size must be odd, got " + std::to_string(w.h));
        if (w.n != w.c)
            throw Error("filling conv: pass-through branch needs in_ch == out_ch, got kernel " + to_string(w));
        if (padding_bias.size() != w.n) throw Error("filling conv: padding bias length mismatch");
        if (mask_weight.shape() != Shape{1, w.c, w.h, w.w})
            throw Error("filling conv: mask kernel must be " + to_string(Shape{1, w.c, w.h, w.w}) + ", got " +
                        to_string(mask_weight.shape()));
        if (mask_bias.size() != 1) throw Error("filling conv: mask bias must be a scalar");
    }
};

template <typename Scalar>
Tensor<Scalar> mask_logits(const Tensor<Scalar>& x, const FillingConvParams<Scalar>& p)
{
    p.validate();
    return kernels::conv2d(x, p.mask_weight, &p.mask_bias, 1, p.kernel() / 2);
}

/// m = sigmoid(conv(x, mask_weight) + mask_bias), shape (N, 1, H, W).
template <typename Scalar>
Tensor<Scalar> mask_branch(const Tensor<Scalar>& x, const FillingConvParams<Scalar>& p)
{
    Tensor<Scalar> m = mask_logits(x, p);
    for (std::int64_t i = 0; i < m.size(); ++i) m[i] = sigmoid(m[i]);
    return m;
}

/// Everything the backward pass needs. References the input and parameters, which must outlive it.
template <typename Scalar>
struct FillingConvContext {
    const Tensor<Scalar>* input = nullptr;
    const FillingConvParams<Scalar>* params = nullptr;
    SkipBranch skip = SkipBranch::box;
    bool mask_forced = false;
    Tensor<Scalar> mask;     // (N,1,H,W)
    Tensor<Scalar> modulated;  // conv(x, w) + b
    Tensor<Scalar> skipped;    // box sum or centre tap

    bool valid() const { return input != nullptr && params != nullptr && !mask.empty(); }
};

template <typename Scalar>
struct FillingConvResult {
    Tensor<Scalar> output;
    FillingConvContext<Scalar> context;
};

template <typename Scalar>
struct FillingConvGrads {
    Tensor<Scalar> input;
    Tensor<Scalar> padding_weight;
    Tensor<Scalar> padding_bias;
    Tensor<Scalar> mask_weight;
    Tensor<Scalar> mask_bias;
};

namespace detail {

template <typename Scalar>
FillingConvResult<Scalar> filling_conv_blend(const Tensor<Scalar>& x, const FillingConvParams<Scalar>& p,
                                             Tensor<Scalar> m, bool forced, SkipBranch skip)
{
    const Shape s = x.shape();
    if (m.shape() != Shape{s.n, 1, s.h, s.w})
        throw Error("filling conv: mask must have shape " + to_string(Shape{s.n, 1, s.h, s.w}) + ", got " +
                    to_string(m.shape()));
    FillingConvResult<Scalar> r;
    r.context.input = &x;
    r.context.params = &p;
    r.context.skip = skip;
    r.context.mask_forced = forced;
    r.context.modulated = kernels::conv2d(x, p.padding_weight, &p.padding_bias, 1, p.kernel() / 2);
    r.context.skipped = skip == SkipBranch::box ? kernels::box_sum(x, p.kernel()) : x;
    r.output = Tensor<Scalar>(s);
    const std::int64_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        const Scalar* mv = m.data() + std::int64_t(n) * plane;
        for (int c = 0; c < s.c; ++c) {
            const std::int64_t base = (std::int64_t(n) * s.c + c) * plane;
            for (std::int64_t q = 0; q < plane; ++q) {
                r.output[base + q] =
                    mv[q] * r.context.modulated[base + q] + (Scalar(1) - mv[q]) * r.context.skipped[base + q];
            }
        }
    }
    r.context.mask = std::move(m);
    return r;
}

}  // namespace detail

/// Forward pass with the learned mask.
template <typename Scalar>
FillingConvResult<Scalar> filling_conv_forward(const Tensor<Scalar>& x, const FillingConvParams<Scalar>& p,
                                               SkipBranch skip = SkipBranch::box)
{
    p.validate();
    require_finite(x, "filling conv input");
    return detail::filling_conv_blend(x, p, mask_branch(x, p), false, skip);
}

/// Forward pass with an externally imposed mask (N,1,H,W); the mask branch is bypassed.
template <typename Scalar>
FillingConvResult<Scalar> filling_conv_forward(const Tensor<Scalar>& x, const FillingConvParams<Scalar>& p,
                                               const Tensor<Scalar>& forced_mask, SkipBranch skip = SkipBranch::box)
{
    p.validate();
    require_finite(x, "filling conv input");
    return detail::filling_conv_blend(x, p, forced_mask, true, skip);
}

template <typename Scalar>
FillingConvGrads<Scalar> filling_conv_backward(const FillingConvContext<Scalar>& ctx, const Tensor<Scalar>& dy)
{
    if (!ctx.valid()) throw Error("filling conv backward: no recorded forward context");
    const Tensor<Scalar>& x = *ctx.input;
    const FillingConvParams<Scalar>& p = *ctx.params;
    const Shape s = x.shape();
    require_same_shape(dy, x, "filling conv backward upstream gradient");

    FillingConvGrads<Scalar> g;
    g.input = Tensor<Scalar>(s);
    g.padding_weight = Tensor<Scalar>(p.padding_weight.shape());
    g.padding_bias = Tensor<Scalar>(p.padding_bias.shape());
    g.mask_weight = Tensor<Scalar>(p.mask_weight.shape());
    g.mask_bias = Tensor<Scalar>(p.mask_bias.shape());

    const std::int64_t plane = s.plane();
    Tensor<Scalar> d_modulated(s);
    Tensor<Scalar> d_skipped(s);
    Tensor<Scalar> d_logit(ctx.mask.shape());
    for (int n = 0; n < s.n; ++n) {
        const Scalar* mv = ctx.mask.data() + std::int64_t(n) * plane;
        Scalar* dl = d_logit.data() + std::int64_t(n) * plane;
        for (int c = 0; c < s.c; ++c) {
            const std::int64_t base = (std::int64_t(n) * s.c + c) * plane;
            for (std::int64_t q = 0; q < plane; ++q) {
                const Scalar gy = dy[base + q];
                d_modulated[base + q] = gy * mv[q];
                d_skipped[base + q] = gy * (Scalar(1) - mv[q]);
                dl[q] += gy * (ctx.modulated[base + q] - ctx.skipped[base + q]);
            }
        }
        for (std::int64_t q = 0; q < plane; ++q) dl[q] *= mv[q] * (Scalar(1) - mv[q]);
    }

    const int pad = p.kernel() / 2;
    kernels::conv2d_backward(x, p.padding_weight, d_modulated, 1, pad, &g.input, &g.padding_weight, &g.padding_bias);
    if (ctx.skip == SkipBranch::box) {
        g.input.array() += kernels::box_sum(d_skipped, p.kernel()).array();
    } else {
        g.input.array() += d_skipped.array();
    }
    if (!ctx.mask_forced) {
        kernels::conv2d_backward(x, p.mask_weight, d_logit, 1, pad, &g.input, &g.mask_weight, &g.mask_bias);
    }
    return g;
}

/// Differentiable filling convolution over graph variables (learned mask).
template <typename Scalar>
Var<Scalar> filling_conv(const Var<Scalar>& x, const Var<Scalar>& padding_weight, const Var<Scalar>& padding_bias,
                         const Var<Scalar>& mask_weight, const Var<Scalar>& mask_bias, SkipBranch skip = SkipBranch::box)
{
    Graph<Scalar>& g = graph_of(x, padding_weight);
    graph_of(x, padding_bias);
    graph_of(x, mask_weight);
    graph_of(x, mask_bias);

    // The context points at a params bundle owned by the closure; copies here are cheap relative
    // to the convolutions and keep the context self-contained.
    auto params = std::make_shared<FillingConvParams<Scalar>>();
    params->padding_weight = padding_weight.value();
    params->padding_bias = padding_bias.value();
    params->mask_weight = mask_weight.value();
    params->mask_bias = mask_bias.value();

    auto result = std::make_shared<FillingConvResult<Scalar>>(filling_conv_forward(x.value(), *params, skip));
    Tensor<Scalar> y = result->output;
    result->output = Tensor<Scalar>();

    Node<Scalar>* xn = x.node();
    Node<Scalar>* nodes[4] = {padding_weight.node(), padding_bias.node(), mask_weight.node(), mask_bias.node()};
    const bool rg = xn->requires_grad || nodes[0]->requires_grad || nodes[1]->requires_grad ||
                    nodes[2]->requires_grad || nodes[3]->requires_grad;
    return g.record("filling_conv", std::move(y), rg,
                    [xn, nodes, params, result](Node<Scalar>& self) {
                        FillingConvGrads<Scalar> gr = filling_conv_backward(result->context, self.grad);
                        accumulate(xn, gr.input);
                        accumulate(nodes[0], gr.padding_weight);
                        accumulate(nodes[1], gr.padding_bias);
                        accumulate(nodes[2], gr.mask_weight);
                        accumulate(nodes[3], gr.mask_bias);
                    });
}

}  // namespace sienet

#endif  // SIENET_FILLING_CONV_HPP
