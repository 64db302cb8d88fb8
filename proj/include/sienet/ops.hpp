#ifndef SIENET_OPS_HPP
#define SIENET_OPS_HPP

// Differentiable operations over Var. Each records its forward value and a closure that
// pushes the output gradient to its inputs.

#include "sienet/autodiff.hpp"
#include "sienet/kernels.hpp"

#include <cmath>
#include <string_view>
#include <vector>

namespace sienet {

// ---------------------------------------------------------------------------
// Convolution, resampling, padding
// ---------------------------------------------------------------------------

/// Cross-correlation. `bias` may be an unbound Var (no bias).
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, int stride, int pad)
{
    Graph<Scalar>& g = graph_of(x, weight);
    const bool has_bias = bias.valid();
    if (has_bias && bias.graph() != &g) throw Error("conv2d: bias belongs to a different graph");
    Tensor<Scalar> y = kernels::conv2d(x.value(), weight.value(), has_bias ? &bias.value() : nullptr, stride, pad);
    const bool rg = x.requires_grad() || weight.requires_grad() || (has_bias && bias.requires_grad());
    Node<Scalar>* xn = x.node();
    Node<Scalar>* wn = weight.node();
    Node<Scalar>* bn = has_bias ? bias.node() : nullptr;
    return g.record("conv2d", std::move(y), rg, [xn, wn, bn, stride, pad](Node<Scalar>& self) {
        kernels::conv2d_backward(xn->value(), wn->value(), self.grad, stride, pad,
                                 xn->requires_grad ? &xn->grad_buffer() : nullptr,
                                 wn->requires_grad ? &wn->grad_buffer() : nullptr,
                                 (bn && bn->requires_grad) ? &bn->grad_buffer() : nullptr);
    });
}

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, int stride, int pad)
{
    return conv2d(x, weight, Var<Scalar>(), stride, pad);
}

template <typename Scalar>
Tensor<Scalar> nearest_upsample(const Tensor<Scalar>& x, int factor)
{
    if (factor < 1) throw Error("nearest_upsample: factor must be >= 1, got " + std::to_string(factor));
    const Shape s = x.shape();
    Tensor<Scalar> y(Shape{s.n, s.c, s.h * factor, s.w * factor});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int oy = 0; oy < s.h * factor; ++oy)
                for (int ox = 0; ox < s.w * factor; ++ox) y(n, c, oy, ox) = x(n, c, oy / factor, ox / factor);
    return y;
}

template <typename Scalar>
Var<Scalar> nearest_upsample(const Var<Scalar>& x, int factor)
{
    Graph<Scalar>& g = graph_of(x);
    Node<Scalar>* xn = x.node();
    return g.record("nearest_upsample", nearest_upsample(x.value(), factor), x.requires_grad(),
                    [xn, factor](Node<Scalar>& self) {
                        Tensor<Scalar>& dx = xn->grad_buffer();
                        const Shape s = self.grad.shape();
                        for (int n = 0; n < s.n; ++n)
                            for (int c = 0; c < s.c; ++c)
                                for (int oy = 0; oy < s.h; ++oy)
                                    for (int ox = 0; ox < s.w; ++ox)
                                        dx(n, c, oy / factor, ox / factor) += self.grad(n, c, oy, ox);
                    });
}

/// Mirror padding without repeating the edge sample (requires pad < H and pad < W).
template <typename Scalar>
Var<Scalar> reflect_pad(const Var<Scalar>& x, int pad)
{
    const Shape s = x.shape();
    if (pad < 0 || pad >= s.h || pad >= s.w) throw Error("reflect_pad: pad must be in [0, min(H, W))");
    auto reflect = [](int i, int n) { return i < 0 ? -i : (i >= n ? 2 * n - 2 - i : i); };
    Tensor<Scalar> y(Shape{s.n, s.c, s.h + 2 * pad, s.w + 2 * pad});
    const Tensor<Scalar>& xv = x.value();
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int oy = 0; oy < y.shape().h; ++oy)
                for (int ox = 0; ox < y.shape().w; ++ox)
                    y(n, c, oy, ox) = xv(n, c, reflect(oy - pad, s.h), reflect(ox - pad, s.w));
    Node<Scalar>* xn = x.node();
    return graph_of(x).record("reflect_pad", std::move(y), x.requires_grad(), [xn, pad, s, reflect](Node<Scalar>& self) {
        Tensor<Scalar>& dx = xn->grad_buffer();
        const Shape o = self.grad.shape();
        for (int n = 0; n < o.n; ++n)
            for (int c = 0; c < o.c; ++c)
                for (int oy = 0; oy < o.h; ++oy)
                    for (int ox = 0; ox < o.w; ++ox)
                        dx(n, c, reflect(oy - pad, s.h), reflect(ox - pad, s.w)) += self.grad(n, c, oy, ox);
    });
}

/// 2x2 average pooling with stride 2 (H and W must be even).
template <typename Scalar>
Var<Scalar> avg_pool2(const Var<Scalar>& x)
{
    const Shape s = x.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) throw Error("avg_pool2: spatial size must be even, got " + to_string(s));
    Tensor<Scalar> y(Shape{s.n, s.c, s.h / 2, s.w / 2});
    const Tensor<Scalar>& xv = x.value();
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int oy = 0; oy < s.h / 2; ++oy)
                for (int ox = 0; ox < s.w / 2; ++ox)
                    y(n, c, oy, ox) = Scalar(0.25) * (xv(n, c, 2 * oy, 2 * ox) + xv(n, c, 2 * oy, 2 * ox + 1) +
                                                      xv(n, c, 2 * oy + 1, 2 * ox) + xv(n, c, 2 * oy + 1, 2 * ox + 1));
    Node<Scalar>* xn = x.node();
    return graph_of(x).record("avg_pool2", std::move(y), x.requires_grad(), [xn](Node<Scalar>& self) {
        Tensor<Scalar>& dx = xn->grad_buffer();
        const Shape o = self.grad.shape();
        for (int n = 0; n < o.n; ++n)
            for (int c = 0; c < o.c; ++c)
                for (int oy = 0; oy < o.h; ++oy)
                    for (int ox = 0; ox < o.w; ++ox) {
                        const Scalar gq = Scalar(0.25) * self.grad(n, c, oy, ox);
                        dx(n, c, 2 * oy, 2 * ox) += gq;
                        dx(n, c, 2 * oy, 2 * ox + 1) += gq;
                        dx(n, c, 2 * oy + 1, 2 * ox) += gq;
                        dx(n, c, 2 * oy + 1, 2 * ox + 1) += gq;
                    }
    });
}

/// Concatenates along channels; all inputs share batch and spatial size.
template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts)
{
    if (parts.empty()) throw Error("concat_channels: no inputs");
    Graph<Scalar>& g = graph_of(parts.front());
    Shape out = parts.front().shape();
    out.c = 0;
    bool rg = false;
    for (const auto& p : parts) {
        graph_of(parts.front(), p);
        const Shape s = p.shape();
        if (s.n != out.n || s.h != out.h || s.w != out.w)
            throw Error("concat_channels: incompatible shapes " + to_string(parts.front().shape()) + " and " +
                        to_string(s));
        out.c += s.c;
        rg = rg || p.requires_grad();
    }
    Tensor<Scalar> y(out);
    std::vector<Node<Scalar>*> nodes;
    for (int n = 0; n < out.n; ++n) {
        int offset = 0;
        for (const auto& p : parts) {
            y.sample(n).middleRows(offset, p.shape().c) = p.value().sample(n);
            offset += p.shape().c;
        }
    }
    for (const auto& p : parts) nodes.push_back(p.node());
    return g.record("concat_channels", std::move(y), rg, [nodes](Node<Scalar>& self) {
        for (int n = 0; n < self.grad.shape().n; ++n) {
            int offset = 0;
            for (Node<Scalar>* p : nodes) {
                const int c = p->value().shape().c;
                if (p->requires_grad) p->grad_buffer().sample(n) += self.grad.sample(n).middleRows(offset, c);
                offset += c;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Activations and normalization
// ---------------------------------------------------------------------------

enum class Activation { relu, leaky_relu, tanh, sigmoid, instance_norm };

/// Parses "relu", "leaky_relu", "tanh", "sigmoid", "instance_norm".
Activation parse_activation(std::string_view name);

namespace detail {

template <typename Scalar, typename F, typename DF>
Var<Scalar> elementwise(const char* op, const Var<Scalar>& x, F f, DF df_from_in_out)
{
    const Tensor<Scalar>& xv = x.value();
    Tensor<Scalar> y(xv.shape());
    for (std::int64_t i = 0; i < xv.size(); ++i) y[i] = f(xv[i]);
    Node<Scalar>* xn = x.node();
    return graph_of(x).record(op, std::move(y), x.requires_grad(), [xn, df_from_in_out](Node<Scalar>& self) {
        Tensor<Scalar>& dx = xn->grad_buffer();
        const Tensor<Scalar>& xin = xn->value();
        const Tensor<Scalar>& yout = self.value();
        for (std::int64_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * df_from_in_out(xin[i], yout[i]);
    });
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x)
{
    return detail::elementwise(
        "relu", x, [](Scalar v) { return v > Scalar(0) ? v : Scalar(0); },
        [](Scalar in, Scalar) { return in > Scalar(0) ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope = Scalar(0.2))
{
    return detail::elementwise(
        "leaky_relu", x, [slope](Scalar v) { return v > Scalar(0) ? v : slope * v; },
        [slope](Scalar in, Scalar) { return in > Scalar(0) ? Scalar(1) : slope; });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x)
{
    return detail::elementwise(
        "tanh", x, [](Scalar v) { return std::tanh(v); }, [](Scalar, Scalar out) { return Scalar(1) - out * out; });
}

template <typename Scalar>
Scalar sigmoid(Scalar v)
{
    return v >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-v)) : std::exp(v) / (Scalar(1) + std::exp(v));
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x)
{
    return detail::elementwise(
        "sigmoid", x, [](Scalar v) { return sigmoid(v); }, [](Scalar, Scalar out) { return out * (Scalar(1) - out); });
}

/// Per-(sample, channel) standardization, biased variance, no affine parameters.
template <typename Scalar>
Var<Scalar> instance_norm(const Var<Scalar>& x, Scalar eps = Scalar(1e-5))
{
    const Tensor<Scalar>& xv = x.value();
    const Shape s = xv.shape();
    Tensor<Scalar> y(s);
    Eigen::Array<Scalar, Eigen::Dynamic, 1> inv_std(std::int64_t(s.n) * s.c);
    for (int n = 0; n < s.n; ++n) {
        auto in = xv.sample(n);
        auto out = y.sample(n);
        for (int c = 0; c < s.c; ++c) {
            const Scalar mean = in.row(c).mean();
            const Scalar var = (in.row(c).array() - mean).square().mean();
            const Scalar is = Scalar(1) / std::sqrt(var + eps);
            inv_std[std::int64_t(n) * s.c + c] = is;
            out.row(c) = (in.row(c).array() - mean) * is;
        }
    }
    Node<Scalar>* xn = x.node();
    return graph_of(x).record("instance_norm", std::move(y), x.requires_grad(),
                              [xn, inv_std = std::move(inv_std)](Node<Scalar>& self) {
                                  const Shape s = self.grad.shape();
                                  Tensor<Scalar>& dx = xn->grad_buffer();
                                  for (int n = 0; n < s.n; ++n) {
                                      auto gy = self.grad.sample(n);
                                      auto yv = self.value().sample(n);
                                      auto gx = dx.sample(n);
                                      for (int c = 0; c < s.c; ++c) {
                                          const Scalar mg = gy.row(c).mean();
                                          const Scalar mgy = gy.row(c).cwiseProduct(yv.row(c)).mean();
                                          gx.row(c).array() += inv_std[std::int64_t(n) * s.c + c] *
                                                               (gy.row(c).array() - mg - yv.row(c).array() * mgy);
                                      }
                                  }
                              });
}

template <typename Scalar>
Var<Scalar> activation_and_norm(const Var<Scalar>& x, Activation kind)
{
    switch (kind) {
        case Activation::relu: return relu(x);
        case Activation::leaky_relu: return leaky_relu(x, Scalar(0.2));
        case Activation::tanh: return tanh(x);
        case Activation::sigmoid: return sigmoid(x);
        case Activation::instance_norm: return instance_norm(x);
    }
    throw Error("activation_and_norm: unknown kind");
}

template <typename Scalar>
Var<Scalar> activation_and_norm(const Var<Scalar>& x, std::string_view kind)
{
    return activation_and_norm(x, parse_activation(kind));
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic (identical shapes; no broadcasting)
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b)
{
    Graph<Scalar>& g = graph_of(a, b);
    require_same_shape(a.value(), b.value(), "add");
    Tensor<Scalar> y(a.shape(), a.value().array() + b.value().array());
    Node<Scalar>* an = a.node();
    Node<Scalar>* bn = b.node();
    return g.record("add", std::move(y), a.requires_grad() || b.requires_grad(), [an, bn](Node<Scalar>& self) {
        accumulate(an, self.grad);
        accumulate(bn, self.grad);
    });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b)
{
    Graph<Scalar>& g = graph_of(a, b);
    require_same_shape(a.value(), b.value(), "sub");
    Tensor<Scalar> y(a.shape(), a.value().array() - b.value().array());
    Node<Scalar>* an = a.node();
    Node<Scalar>* bn = b.node();
    return g.record("sub", std::move(y), a.requires_grad() || b.requires_grad(), [an, bn](Node<Scalar>& self) {
        accumulate(an, self.grad);
        if (bn->requires_grad) bn->grad_buffer().array() -= self.grad.array();
    });
}

/// Hadamard product.
template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b)
{
    Graph<Scalar>& g = graph_of(a, b);
    require_same_shape(a.value(), b.value(), "mul");
    Tensor<Scalar> y(a.shape(), a.value().array() * b.value().array());
    Node<Scalar>* an = a.node();
    Node<Scalar>* bn = b.node();
    return g.record("mul", std::move(y), a.requires_grad() || b.requires_grad(), [an, bn](Node<Scalar>& self) {
        if (an->requires_grad) an->grad_buffer().array() += self.grad.array() * bn->value().array();
        if (bn->requires_grad) bn->grad_buffer().array() += self.grad.array() * an->value().array();
    });
}

template <typename Scalar>
Var<Scalar> operator*(Scalar s, const Var<Scalar>& a)
{
    Tensor<Scalar> y(a.shape(), a.value().array() * s);
    Node<Scalar>* an = a.node();
    return graph_of(a).record("scale", std::move(y), a.requires_grad(), [an, s](Node<Scalar>& self) {
        an->grad_buffer().array() += self.grad.array() * s;
    });
}

// ---------------------------------------------------------------------------
// Reductions (all return shape (1,1,1,1))
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x)
{
    Tensor<Scalar> y(scalar_shape(), x.value().array().sum());
    Node<Scalar>* xn = x.node();
    return graph_of(x).record("sum", std::move(y), x.requires_grad(), [xn](Node<Scalar>& self) {
        xn->grad_buffer().array() += self.grad[0];
    });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x)
{
    const Scalar inv = Scalar(1) / Scalar(x.value().size());
    Tensor<Scalar> y(scalar_shape(), x.value().array().sum() * inv);
    Node<Scalar>* xn = x.node();
    return graph_of(x).record("mean", std::move(y), x.requires_grad(), [xn, inv](Node<Scalar>& self) {
        xn->grad_buffer().array() += self.grad[0] * inv;
    });
}

/// mean |a - b|. Subgradient 0 where a == b.
template <typename Scalar>
Var<Scalar> mean_abs_diff(const Var<Scalar>& a, const Var<Scalar>& b)
{
    Graph<Scalar>& g = graph_of(a, b);
    require_same_shape(a.value(), b.value(), "mean_abs_diff");
    const Scalar inv = Scalar(1) / Scalar(a.value().size());
    Tensor<Scalar> y(scalar_shape(), (a.value().array() - b.value().array()).abs().sum() * inv);
    Node<Scalar>* an = a.node();
    Node<Scalar>* bn = b.node();
    return g.record("mean_abs_diff", std::move(y), a.requires_grad() || b.requires_grad(),
                    [an, bn, inv](Node<Scalar>& self) {
                        const auto sign = (an->value().array() - bn->value().array()).sign() * (self.grad[0] * inv);
                        if (an->requires_grad) an->grad_buffer().array() += sign;
                        if (bn->requires_grad) bn->grad_buffer().array() -= sign;
                    });
}

/// mean (a - b)^2.
template <typename Scalar>
Var<Scalar> mean_squared_diff(const Var<Scalar>& a, const Var<Scalar>& b)
{
    Graph<Scalar>& g = graph_of(a, b);
    require_same_shape(a.value(), b.value(), "mean_squared_diff");
    const Scalar inv = Scalar(1) / Scalar(a.value().size());
    Tensor<Scalar> y(scalar_shape(), (a.value().array() - b.value().array()).square().sum() * inv);
    Node<Scalar>* an = a.node();
    Node<Scalar>* bn = b.node();
    return g.record("mean_squared_diff", std::move(y), a.requires_grad() || b.requires_grad(),
                    [an, bn, inv](Node<Scalar>& self) {
                        const auto d = (an->value().array() - bn->value().array()) * (Scalar(2) * inv * self.grad[0]);
                        if (an->requires_grad) an->grad_buffer().array() += d;
                        if (bn->requires_grad) bn->grad_buffer().array() -= d;
                    });
}

/// Square root of a positive scalar.
template <typename Scalar>
Var<Scalar> sqrt(const Var<Scalar>& x)
{
    if (x.shape() != scalar_shape()) throw Error("sqrt: expects a scalar");
    const Scalar v = x.value()[0];
    if (v < Scalar(0)) throw Error("sqrt: negative argument");
    const Scalar r = std::sqrt(v);
    Node<Scalar>* xn = x.node();
    return graph_of(x).record("sqrt", Tensor<Scalar>(scalar_shape(), r), x.requires_grad(), [xn, r](Node<Scalar>& self) {
        // d sqrt(v) / dv is unbounded at 0; use 0 there (the minimizer).
        if (r > Scalar(0)) xn->grad_buffer()[0] += self.grad[0] / (Scalar(2) * r);
    });
}

/// log(1 + exp(z)) without overflow.
template <typename Scalar>
Scalar softplus(Scalar z)
{
    return std::max(z, Scalar(0)) + std::log1p(std::exp(-std::abs(z)));
}

/// mean softplus(sign * x) for sign = +1 or -1.
template <typename Scalar>
Var<Scalar> mean_softplus(const Var<Scalar>& x, Scalar sign)
{
    const Tensor<Scalar>& xv = x.value();
    const Scalar inv = Scalar(1) / Scalar(xv.size());
    Scalar acc(0);
    for (std::int64_t i = 0; i < xv.size(); ++i) acc += softplus(sign * xv[i]);
    Node<Scalar>* xn = x.node();
    return graph_of(x).record("mean_softplus", Tensor<Scalar>(scalar_shape(), acc * inv), x.requires_grad(),
                              [xn, inv, sign](Node<Scalar>& self) {
                                  Tensor<Scalar>& dx = xn->grad_buffer();
                                  const Tensor<Scalar>& v = xn->value();
                                  for (std::int64_t i = 0; i < dx.size(); ++i)
                                      dx[i] += self.grad[0] * inv * sign * sigmoid(sign * v[i]);
                              });
}

/// Per-sample Gram matrix (Phi Phi^T) / (C*H*W) with Phi the C x HW unfolding; shape (N,1,C,C).
template <typename Scalar>
Var<Scalar> gram(const Var<Scalar>& x)
{
    const Shape s = x.shape();
    const Scalar norm = Scalar(1) / Scalar(std::int64_t(s.c) * s.plane());
    Tensor<Scalar> y(Shape{s.n, 1, s.c, s.c});
    for (int n = 0; n < s.n; ++n) {
        auto phi = x.value().sample(n);
        Eigen::Map<kernels::RowMatrix<Scalar>> out(y.data() + std::int64_t(n) * s.c * s.c, s.c, s.c);
        out.noalias() = phi * phi.transpose();
        out *= norm;
    }
    Node<Scalar>* xn = x.node();
    return graph_of(x).record("gram", std::move(y), x.requires_grad(), [xn, norm](Node<Scalar>& self) {
        const Shape s = xn->value().shape();
        Tensor<Scalar>& dx = xn->grad_buffer();
        for (int n = 0; n < s.n; ++n) {
            Eigen::Map<const kernels::RowMatrix<Scalar>> gg(self.grad.data() + std::int64_t(n) * s.c * s.c, s.c, s.c);
            dx.sample(n).noalias() += norm * (gg + gg.transpose()) * xn->value().sample(n);
        }
    });
}

}  // namespace sienet

#endif  // SIENET_OPS_HPP
