#ifndef SIENET_DISCRIMINATOR_HPP
#define SIENET_DISCRIMINATOR_HPP

#include "sienet/layers.hpp"

#include <array>
#include <random>

namespace sienet {

/// Single-scale patch critic: four k4/s2/p1 convs (w, 2w, 4w, 8w) with leaky-relu(0.2), then a
/// k3/s1/p1 conv to one logit channel. A 256x256 image yields a 16x16 logit map, each logit
/// seeing a 78-pixel receptive field.
template <typename Scalar>
struct Discriminator {
    std::array<Conv2d<Scalar>, 4> down;
    Conv2d<Scalar> head;

    static constexpr int kTotalStride = 16;

    static Discriminator init(int width, std::mt19937_64& rng, int in_channels = 3)
    {
        Discriminator d;
        int in = in_channels;
        for (std::size_t i = 0; i < d.down.size(); ++i) {
            const int out = width << i;
            d.down[i] = Conv2d<Scalar>::init(in, out, 4, 2, 1, rng);
            in = out;
        }
        d.head = Conv2d<Scalar>::init(in, 1, 3, 1, 1, rng);
        return d;
    }

    Var<Scalar> operator()(const Binder<Scalar>& bind, const Var<Scalar>& image) const
    {
        const Shape s = image.shape();
        const int in_channels = down.front().weight.shape().c;
        if (s.c != in_channels || s.h % kTotalStride != 0 || s.w % kTotalStride != 0 || s.h == 0 || s.w == 0)
            throw Error("discriminator expects (N," + std::to_string(in_channels) +
                        ",H,W) with H, W multiples of 16, got " + to_string(s));
        Var<Scalar> h = image;
        for (const auto& conv : down) h = leaky_relu(conv(bind, h));
        return head(bind, h);
    }

    ParameterList<Scalar> parameters(const std::string& prefix)
    {
        ParameterList<Scalar> out;
        for (std::size_t i = 0; i < down.size(); ++i) down[i].collect(prefix + ".down" + std::to_string(i), out);
        head.collect(prefix + ".head", out);
        return out;
    }
};

/// Logit map (N, 1, H/16, W/16) on a throwaway graph.
template <typename Scalar>
Tensor<Scalar> discriminate(const Discriminator<Scalar>& d, const Tensor<Scalar>& image)
{
    Graph<Scalar> g;
    return d(Binder<Scalar>{g, false}, g.frozen(image)).value();
}

}  // namespace sienet

#endif  // SIENET_DISCRIMINATOR_HPP
