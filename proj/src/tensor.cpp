#include "sienet/kernels.hpp"
#include "sienet/ops.hpp"
#include "sienet/tensor.hpp"

namespace sienet {

std::string to_string(const Shape& s)
{
    return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
           std::to_string(s.w) + ")";
}

Activation parse_activation(std::string_view name)
{
    if (name == "relu") return Activation::relu;
    if (name == "leaky_relu") return Activation::leaky_relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "instance_norm") return Activation::instance_norm;
    throw Error("unknown activation/normalization kind '" + std::string(name) + "'");
}

namespace kernels {

ConvGeometry conv_geometry(const Shape& input, const Shape& weight, int stride, int pad)
{
    if (stride < 1) throw Error("conv2d: stride must be >= 1");
    if (pad < 0) throw Error("conv2d: padding must be >= 0");
    if (input.c != weight.c) {
        throw Error("conv2d: input has " + std::to_string(input.c) + " channels but kernel expects " +
                    std::to_string(weight.c) + " (input " + to_string(input) + ", kernel " + to_string(weight) + ")");
    }
    if (weight.h < 1 || weight.w < 1 || weight.n < 1) throw Error("conv2d: empty kernel " + to_string(weight));
    ConvGeometry g;
    g.in_c = input.c;
    g.out_c = weight.n;
    g.kh = weight.h;
    g.kw = weight.w;
    g.stride = stride;
    g.pad = pad;
    g.h = input.h;
    g.w = input.w;
    if (input.h + 2 * pad < weight.h || input.w + 2 * pad < weight.w) {
        throw Error("conv2d: kernel " + to_string(weight) + " larger than padded input " + to_string(input));
    }
    g.out_h = (input.h + 2 * pad - weight.h) / stride + 1;
    g.out_w = (input.w + 2 * pad - weight.w) / stride + 1;
    return g;
}

}  // namespace kernels
}  // namespace sienet
