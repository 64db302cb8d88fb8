#ifndef SIENET_GENERATORS_HPP
#define SIENET_GENERATORS_HPP

// Two-stage coarse-to-fine generator. Both stages share one encoder topology:
//
//   reflect-pad 3 -> conv7 s2 (w) -> conv3 s2 (2w) -> conv3 s2 (4w) -> 7x7 filling conv (4w)
//
// each followed by instance norm and leaky-relu(0.2), for a total downsampling of 8. The
// structure decoder is 2 residual blocks then 3 x (nearest x2 -> conv3), ending in tanh. The
// content decoder inserts one extra residual block before each of the last two upsamplings.

#include "sienet/filling_conv.hpp"
#include "sienet/layers.hpp"

#include <array>
#include <random>

namespace sienet {

struct GeneratorConfig {
    int width = 64;
    int bottleneck_kernel = 7;
    bool use_filling_conv = true;
    SkipBranch skip = SkipBranch::box;
};

/// Channels of I = [X, M, S].
inline constexpr int kNetworkInputChannels = 7;
inline constexpr int kDownsampleFactor = 8;

template <typename Scalar>
struct EncoderOutput {
    Var<Scalar> feature;  // bottleneck, (N, 4w, H/8, W/8)
};

template <typename Scalar>
struct Encoder {
    Conv2d<Scalar> stem;
    Conv2d<Scalar> down1;
    Conv2d<Scalar> down2;
    FillingConvParams<Scalar> bottleneck;
    GeneratorConfig config;

    static Encoder init(const GeneratorConfig& cfg, std::mt19937_64& rng)
    {
        Encoder e;
        e.config = cfg;
        const int w = cfg.width;
        e.stem = Conv2d<Scalar>::init(kNetworkInputChannels, w, 7, 2, 0, rng);
        e.down1 = Conv2d<Scalar>::init(w, 2 * w, 3, 2, 1, rng);
        e.down2 = Conv2d<Scalar>::init(2 * w, 4 * w, 3, 2, 1, rng);
        e.bottleneck = FillingConvParams<Scalar>::init(4 * w, cfg.bottleneck_kernel, rng);
        return e;
    }

    Var<Scalar> operator()(const Binder<Scalar>& bind, const Var<Scalar>& input) const
    {
        const Shape s = input.shape();
        if (s.c != kNetworkInputChannels)
            throw Error("generator input must have " + std::to_string(kNetworkInputChannels) + " channels, got " +
                        to_string(s));
        if (s.h % kDownsampleFactor != 0 || s.w % kDownsampleFactor != 0 || s.h < 16 || s.w < 16)
            throw Error("generator input spatial size must be a multiple of 8 and at least 16, got " + to_string(s));
        Var<Scalar> h = leaky_relu(instance_norm(stem(bind, reflect_pad(input, 3))));
        h = leaky_relu(instance_norm(down1(bind, h)));
        h = leaky_relu(instance_norm(down2(bind, h)));
        const auto& b = bottleneck;
        if (config.use_filling_conv) {
            h = filling_conv(h, bind(b.padding_weight), bind(b.padding_bias), bind(b.mask_weight), bind(b.mask_bias),
                             config.skip);
        } else {
            h = conv2d(h, bind(b.padding_weight), bind(b.padding_bias), 1, b.kernel() / 2);
        }
        return leaky_relu(instance_norm(h));
    }

    void collect(const std::string& prefix, ParameterList<Scalar>& out)
    {
        stem.collect(prefix + ".stem", out);
        down1.collect(prefix + ".down1", out);
        down2.collect(prefix + ".down2", out);
        out.emplace_back(prefix + ".fill.padding_weight", &bottleneck.padding_weight);
        out.emplace_back(prefix + ".fill.padding_bias", &bottleneck.padding_bias);
        if (!config.use_filling_conv) return;
        out.emplace_back(prefix + ".fill.mask_weight", &bottleneck.mask_weight);
        out.emplace_back(prefix + ".fill.mask_bias", &bottleneck.mask_bias);
    }
};

/// Upsample x2, conv3, and (except for the head) instance norm + relu.
template <typename Scalar>
Var<Scalar> up_stage(const Binder<Scalar>& bind, const Conv2d<Scalar>& conv, const Var<Scalar>& x)
{
    return relu(instance_norm(conv(bind, nearest_upsample(x, 2))));
}

template <typename Scalar>
struct GeneratorOutput {
    Var<Scalar> image;       // (N, 3, H, W), tanh range
    Var<Scalar> bottleneck;  // (N, 4w, H/8, W/8)
};

template <typename Scalar>
struct StructureGenerator {
    Encoder<Scalar> encoder;
    std::array<ResidualBlock<Scalar>, 2> residual;
    Conv2d<Scalar> up1;
    Conv2d<Scalar> up2;
    Conv2d<Scalar> head;

    static StructureGenerator init(const GeneratorConfig& cfg, std::mt19937_64& rng)
    {
        StructureGenerator g;
        const int w = cfg.width;
        g.encoder = Encoder<Scalar>::init(cfg, rng);
        for (auto& r : g.residual) r = ResidualBlock<Scalar>::init(4 * w, rng);
        g.up1 = Conv2d<Scalar>::init(4 * w, 2 * w, 3, 1, 1, rng);
        g.up2 = Conv2d<Scalar>::init(2 * w, w, 3, 1, 1, rng);
        g.head = Conv2d<Scalar>::init(w, 3, 3, 1, 1, rng);
        return g;
    }

    /// I = concat(X, M, S) -> S_gen.
    GeneratorOutput<Scalar> operator()(const Binder<Scalar>& bind, const Var<Scalar>& input) const
    {
        GeneratorOutput<Scalar> out;
        out.bottleneck = encoder(bind, input);
        Var<Scalar> h = out.bottleneck;
        for (const auto& r : residual) h = r(bind, h);
        h = up_stage(bind, up1, h);
        h = up_stage(bind, up2, h);
        out.image = tanh(head(bind, nearest_upsample(h, 2)));
        return out;
    }

    ParameterList<Scalar> parameters(const std::string& prefix = "structure")
    {
        ParameterList<Scalar> out;
        encoder.collect(prefix + ".encoder", out);
        for (std::size_t i = 0; i < residual.size(); ++i) residual[i].collect(prefix + ".res" + std::to_string(i), out);
        up1.collect(prefix + ".up1", out);
        up2.collect(prefix + ".up2", out);
        head.collect(prefix + ".head", out);
        return out;
    }
};

template <typename Scalar>
struct ContentGenerator {
    Encoder<Scalar> encoder;
    std::array<ResidualBlock<Scalar>, 2> residual;
    Conv2d<Scalar> up1;
    ResidualBlock<Scalar> extra1;  // before the second upsampling
    Conv2d<Scalar> up2;
    ResidualBlock<Scalar> extra2;  // before the third upsampling
    Conv2d<Scalar> head;

    static ContentGenerator init(const GeneratorConfig& cfg, std::mt19937_64& rng)
    {
        ContentGenerator g;
        const int w = cfg.width;
        g.encoder = Encoder<Scalar>::init(cfg, rng);
        for (auto& r : g.residual) r = ResidualBlock<Scalar>::init(4 * w, rng);
        g.up1 = Conv2d<Scalar>::init(4 * w, 2 * w, 3, 1, 1, rng);
        g.extra1 = ResidualBlock<Scalar>::init(2 * w, rng);
        g.up2 = Conv2d<Scalar>::init(2 * w, w, 3, 1, 1, rng);
        g.extra2 = ResidualBlock<Scalar>::init(w, rng);
        g.head = Conv2d<Scalar>::init(w, 3, 3, 1, 1, rng);
        return g;
    }

    /// F = E_cont(concat(X, M, S_gen)).
    Var<Scalar> encode(const Binder<Scalar>& bind, const Var<Scalar>& canvas, const Var<Scalar>& mask,
                       const Var<Scalar>& structure) const
    {
        if (structure.shape() != canvas.shape())
            throw Error("content stage: structure " + to_string(structure.shape()) + " does not match canvas " +
                        to_string(canvas.shape()));
        if (mask.shape() != Shape{canvas.shape().n, 1, canvas.shape().h, canvas.shape().w})
            throw Error("content stage: filling map must be single-channel with canvas size, got " +
                        to_string(mask.shape()));
        return encoder(bind, concat_channels<Scalar>({canvas, mask, structure}));
    }

    Var<Scalar> decode(const Binder<Scalar>& bind, const Var<Scalar>& feature) const
    {
        Var<Scalar> h = feature;
        for (const auto& r : residual) h = r(bind, h);
        h = up_stage(bind, up1, h);
        h = extra1(bind, h);
        h = up_stage(bind, up2, h);
        h = extra2(bind, h);
        return tanh(head(bind, nearest_upsample(h, 2)));
    }

    GeneratorOutput<Scalar> operator()(const Binder<Scalar>& bind, const Var<Scalar>& canvas, const Var<Scalar>& mask,
                                       const Var<Scalar>& structure) const
    {
        GeneratorOutput<Scalar> out;
        out.bottleneck = encode(bind, canvas, mask, structure);
        out.image = decode(bind, out.bottleneck);
        return out;
    }

    ParameterList<Scalar> parameters(const std::string& prefix = "content")
    {
        ParameterList<Scalar> out;
        encoder.collect(prefix + ".encoder", out);
        for (std::size_t i = 0; i < residual.size(); ++i) residual[i].collect(prefix + ".res" + std::to_string(i), out);
        up1.collect(prefix + ".up1", out);
        extra1.collect(prefix + ".extra1", out);
        up2.collect(prefix + ".up2", out);
        extra2.collect(prefix + ".extra2", out);
        head.collect(prefix + ".head", out);
        return out;
    }
};

/// Canvas X, filling map M (1 = predict) and smooth structure S for one batch.
template <typename Scalar>
struct NetworkInput {
    Tensor<Scalar> canvas;
    Tensor<Scalar> mask;
    Tensor<Scalar> structure;

    void validate() const
    {
        const Shape s = canvas.shape();
        if (s.c != 3) throw Error("network input canvas must have 3 channels, got " + to_string(s));
        if (structure.shape() != s) throw Error("network input structure shape mismatch");
        if (mask.shape() != Shape{s.n, 1, s.h, s.w}) throw Error("network input filling map shape mismatch");
    }
};

template <typename Scalar>
Var<Scalar> network_input(Graph<Scalar>& g, const NetworkInput<Scalar>& in)
{
    in.validate();
    return concat_channels<Scalar>({g.frozen(in.canvas), g.frozen(in.mask), g.frozen(in.structure)});
}

/// M * Y_hat + (1 - M) * X, with the single-channel M broadcast over colour channels.
template <typename Scalar>
Tensor<Scalar> compose_output(const Tensor<Scalar>& generated, const Tensor<Scalar>& canvas, const Tensor<Scalar>& mask)
{
    require_same_shape(generated, canvas, "compose_output");
    const Shape s = canvas.shape();
    if (mask.shape() != Shape{s.n, 1, s.h, s.w})
        throw Error("compose_output: filling map must be " + to_string(Shape{s.n, 1, s.h, s.w}) + ", got " +
                    to_string(mask.shape()));
    Tensor<Scalar> out(s);
    for (int n = 0; n < s.n; ++n) {
        auto m = mask.sample(n).row(0).array();
        out.sample(n).array() =
            generated.sample(n).array().rowwise() * m + canvas.sample(n).array().rowwise() * (Scalar(1) - m);
    }
    return out;
}

/// Tensor-level conveniences: run a stage on a fresh, non-differentiated graph.
template <typename Scalar>
Tensor<Scalar> structure_forward(const StructureGenerator<Scalar>& g, const NetworkInput<Scalar>& in)
{
    Graph<Scalar> graph;
    return g(Binder<Scalar>{graph, false}, network_input(graph, in)).image.value();
}

template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> content_forward(const ContentGenerator<Scalar>& g,
                                                          const Tensor<Scalar>& canvas, const Tensor<Scalar>& mask,
                                                          const Tensor<Scalar>& structure)
{
    Graph<Scalar> graph;
    auto out = g(Binder<Scalar>{graph, false}, graph.frozen(canvas), graph.frozen(mask), graph.frozen(structure));
    return {out.image.value(), out.bottleneck.value()};
}

}  // namespace sienet

#endif  // SIENET_GENERATORS_HPP
