#ifndef SIENET_KERNELS_HPP
#define SIENET_KERNELS_HPP

// Graph-free numeric kernels. Convolution is cross-correlation (no kernel flip) everywhere.

#include "sienet/tensor.hpp"

#include <Eigen/Core>

namespace sienet::kernels {

struct ConvGeometry {
    int in_c = 0;
    int out_c = 0;
    int kh = 0;
    int kw = 0;
    int stride = 1;
    int pad = 0;
    int h = 0;
    int w = 0;
    int out_h = 0;
    int out_w = 0;

    std::int64_t patch() const { return std::int64_t(in_c) * kh * kw; }
    std::int64_t out_plane() const { return std::int64_t(out_h) * out_w; }
    bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

/// Validates a convolution and derives its output size. Weight shape is (out_c, in_c, kh, kw).
ConvGeometry conv_geometry(const Shape& input, const Shape& weight, int stride, int pad);

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Unfolds one sample (C,H,W) into a (C*kh*kw) x (out_h*out_w) matrix; out-of-bounds taps read 0.
template <typename Scalar>
void im2col(const Scalar* image, const ConvGeometry& g, Scalar* cols)
{
    const std::int64_t plane = g.out_plane();
    for (int c = 0; c < g.in_c; ++c) {
        const Scalar* src = image + std::int64_t(c) * g.h * g.w;
        for (int i = 0; i < g.kh; ++i) {
            for (int j = 0; j < g.kw; ++j) {
                Scalar* row = cols + ((std::int64_t(c) * g.kh + i) * g.kw + j) * plane;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride - g.pad + i;
                    Scalar* dst = row + std::int64_t(oy) * g.out_w;
                    if (iy < 0 || iy >= g.h) {
                        std::fill(dst, dst + g.out_w, Scalar(0));
                        continue;
                    }
                    const Scalar* line = src + std::int64_t(iy) * g.w;
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        const int ix = ox * g.stride - g.pad + j;
                        dst[ox] = (ix >= 0 && ix < g.w) ? line[ix] : Scalar(0);
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatters-and-adds columns back onto the image.
template <typename Scalar>
void col2im(const Scalar* cols, const ConvGeometry& g, Scalar* image)
{
    const std::int64_t plane = g.out_plane();
    for (int c = 0; c < g.in_c; ++c) {
        Scalar* dst = image + std::int64_t(c) * g.h * g.w;
        for (int i = 0; i < g.kh; ++i) {
            for (int j = 0; j < g.kw; ++j) {
                const Scalar* row = cols + ((std::int64_t(c) * g.kh + i) * g.kw + j) * plane;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride - g.pad + i;
                    if (iy < 0 || iy >= g.h) continue;
                    Scalar* line = dst + std::int64_t(iy) * g.w;
                    const Scalar* src = row + std::int64_t(oy) * g.out_w;
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        const int ix = ox * g.stride - g.pad + j;
                        if (ix >= 0 && ix < g.w) line[ix] += src[ox];
                    }
                }
            }
        }
    }
}

/// y = W * im2col(x) + b, per sample. `bias` may be null; otherwise shape (1, out_c, 1, 1).
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>* bias, int stride,
                      int pad)
{
    const ConvGeometry g = conv_geometry(x.shape(), weight.shape(), stride, pad);
    if (bias && bias->size() != g.out_c) throw Error("conv2d: bias length does not match output channels");
    require_finite(x, "conv2d input");
    Tensor<Scalar> y(Shape{x.shape().n, g.out_c, g.out_h, g.out_w});
    Eigen::Map<const RowMatrix<Scalar>> w(weight.data(), g.out_c, g.patch());
    RowMatrix<Scalar> cols;
    if (!g.pointwise()) cols.resize(g.patch(), g.out_plane());
    for (int n = 0; n < x.shape().n; ++n) {
        auto out = y.sample(n);
        if (g.pointwise()) {
            out.noalias() = w * x.sample(n);
        } else {
            im2col(x.data() + std::int64_t(n) * x.shape().c * x.shape().plane(), g, cols.data());
            out.noalias() = w * cols;
        }
        if (bias) {
            Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> b(bias->data(), g.out_c);
            out.colwise() += b;
        }
    }
    return y;
}

/// Accumulates conv2d gradients into whichever of dx, dweight, dbias are non-null.
template <typename Scalar>
void conv2d_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& dy, int stride,
                     int pad, Tensor<Scalar>* dx, Tensor<Scalar>* dweight, Tensor<Scalar>* dbias)
{
    const ConvGeometry g = conv_geometry(x.shape(), weight.shape(), stride, pad);
    Eigen::Map<const RowMatrix<Scalar>> w(weight.data(), g.out_c, g.patch());
    RowMatrix<Scalar> cols;
    RowMatrix<Scalar> dcols;
    if (!g.pointwise()) cols.resize(g.patch(), g.out_plane());
    for (int n = 0; n < x.shape().n; ++n) {
        auto grad_out = dy.sample(n);
        if (dweight) {
            Eigen::Map<RowMatrix<Scalar>> dw(dweight->data(), g.out_c, g.patch());
            if (g.pointwise()) {
                dw.noalias() += grad_out * x.sample(n).transpose();
            } else {
                im2col(x.data() + std::int64_t(n) * x.shape().c * x.shape().plane(), g, cols.data());
                dw.noalias() += grad_out * cols.transpose();
            }
        }
        if (dbias) {
            Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> db(dbias->data(), g.out_c);
            db += grad_out.rowwise().sum();
        }
        if (dx) {
            if (g.pointwise()) {
                dx->sample(n).noalias() += w.transpose() * grad_out;
            } else {
                dcols.noalias() = w.transpose() * grad_out;
                col2im(dcols.data(), g, dx->data() + std::int64_t(n) * x.shape().c * x.shape().plane());
            }
        }
    }
}

/// Per-channel sum over a k x k zero-padded neighbourhood (stride 1, same size). Self-adjoint.
template <typename Scalar>
Tensor<Scalar> box_sum(const Tensor<Scalar>& x, int k)
{
    const Shape s = x.shape();
    const int r = k / 2;
    Tensor<Scalar> rows(s);
    Tensor<Scalar> out(s);
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            for (int y = 0; y < s.h; ++y) {
                for (int xx = 0; xx < s.w; ++xx) {
                    Scalar acc(0);
                    for (int d = -r; d <= r; ++d) {
                        const int ix = xx + d;
                        if (ix >= 0 && ix < s.w) acc += x(n, c, y, ix);
                    }
                    rows(n, c, y, xx) = acc;
                }
            }
            for (int y = 0; y < s.h; ++y) {
                for (int xx = 0; xx < s.w; ++xx) {
                    Scalar acc(0);
                    for (int d = -r; d <= r; ++d) {
                        const int iy = y + d;
                        if (iy >= 0 && iy < s.h) acc += rows(n, c, iy, xx);
                    }
                    out(n, c, y, xx) = acc;
                }
            }
        }
    }
    return out;
}

}  // namespace sienet::kernels

#endif  // SIENET_KERNELS_HPP
