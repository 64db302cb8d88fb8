#ifndef SIENET_LOSSES_HPP
#define SIENET_LOSSES_HPP

#include "sienet/layers.hpp"

#include <Eigen/QR>

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <string>

namespace sienet {

/// Weights of the total objective: distance, adversarial, perceptual, style, siamese.
struct LossWeights {
    double distance = 5.0;
    double adversarial = 1.0;
    double perceptual = 0.1;
    double style = 250.0;
    double siamese = 1.0;

    void validate() const;
};

struct LossComponents {
    double distance = 0.0;
    double adversarial = 0.0;
    double perceptual = 0.0;
    double style = 0.0;
    double siamese = 0.0;
};

/// Exact weighted sum; throws on negative or non-finite weights and non-finite components.
double total_loss(const LossWeights& weights, const LossComponents& components);

// ---------------------------------------------------------------------------
// Fixed feature pyramid
// ---------------------------------------------------------------------------

inline constexpr std::array<int, 5> kFeatureChannels = {64, 128, 256, 512, 512};
inline constexpr std::array<const char*, 5> kFeatureTaps = {"relu1-1", "relu2-1", "relu3-1", "relu4-1", "relu5-1"};
inline constexpr std::uint64_t kDefaultFeatureSeed = 0x5eed'f00d;

/// Five conv3x3+relu stages separated by 2x2 average pooling; stage i runs at 1/2^(i-1) of
/// the input resolution. Never trained: always bound frozen, so gradients only flow through it.
template <typename Scalar>
struct FeatureExtractor {
    std::array<Conv2d<Scalar>, 5> stages;
    std::uint64_t seed = kDefaultFeatureSeed;
    std::string source = "seeded";

    /// Orthogonal rows (or columns, when the fan-in is smaller) with ReLU gain, from a fixed seed.
    static FeatureExtractor seeded(std::uint64_t seed = kDefaultFeatureSeed)
    {
        FeatureExtractor fe;
        fe.seed = seed;
        std::mt19937_64 rng(seed);
        int in = 3;
        for (std::size_t i = 0; i < fe.stages.size(); ++i) {
            const int out = kFeatureChannels[i];
            const int fan_in = in * 9;
            Eigen::MatrixXd gaussian(std::max(out, fan_in), std::min(out, fan_in));
            std::normal_distribution<double> dist(0.0, 1.0);
            for (Eigen::Index c = 0; c < gaussian.cols(); ++c)
                for (Eigen::Index r = 0; r < gaussian.rows(); ++r) gaussian(r, c) = dist(rng);
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
            Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(gaussian.rows(), gaussian.cols());
            const Eigen::MatrixXd r = qr.matrixQR().topRows(gaussian.cols()).template triangularView<Eigen::Upper>();
            for (Eigen::Index c = 0; c < q.cols(); ++c)
                if (r(c, c) < 0) q.col(c) = -q.col(c);
            const Eigen::MatrixXd w = out >= fan_in ? q : Eigen::MatrixXd(q.transpose());  // (out, fan_in)
            Conv2d<Scalar>& conv = fe.stages[i];
            conv.weight = Tensor<Scalar>(Shape{out, in, 3, 3});
            conv.bias = Tensor<Scalar>(Shape{1, out, 1, 1});
            conv.stride = 1;
            conv.pad = 1;
            const double gain = std::sqrt(2.0);
            for (int o = 0; o < out; ++o)
                for (int k = 0; k < fan_in; ++k) conv.weight[std::int64_t(o) * fan_in + k] = Scalar(gain * w(o, k));
            in = out;
        }
        return fe;
    }

    static std::string weight_name(std::size_t stage, const char* what)
    {
        return "features.stage" + std::to_string(stage + 1) + "." + what;
    }

    /// Replaces weights with named tensors "features.stageK.weight|bias" (K = 1..5).
    template <typename Source>
    static FeatureExtractor from_named(const std::map<std::string, Tensor<Source>>& named, std::string source_id)
    {
        FeatureExtractor fe;
        fe.seed = 0;
        fe.source = std::move(source_id);
        int in = 3;
        for (std::size_t i = 0; i < fe.stages.size(); ++i) {
            const Shape ws{kFeatureChannels[i], in, 3, 3};
            const Shape bs{1, kFeatureChannels[i], 1, 1};
            auto fetch = [&](const std::string& name, const Shape& expected) {
                auto it = named.find(name);
                if (it == named.end()) throw Error("feature weights: missing tensor '" + name + "'");
                if (it->second.shape() != expected)
                    throw Error("feature weights: '" + name + "' has shape " + to_string(it->second.shape()) +
                                ", expected " + to_string(expected));
                return it->second.template cast<Scalar>();
            };
            fe.stages[i].weight = fetch(weight_name(i, "weight"), ws);
            fe.stages[i].bias = fetch(weight_name(i, "bias"), bs);
            fe.stages[i].stride = 1;
            fe.stages[i].pad = 1;
            in = kFeatureChannels[i];
        }
        return fe;
    }

    ParameterList<Scalar> parameters()
    {
        ParameterList<Scalar> out;
        for (std::size_t i = 0; i < stages.size(); ++i) stages[i].collect("features.stage" + std::to_string(i + 1), out);
        return out;
    }
};

template <typename Scalar>
using FeatureMaps = std::array<Var<Scalar>, 5>;

template <typename Scalar>
FeatureMaps<Scalar> extract_features(const FeatureExtractor<Scalar>& fe, const Var<Scalar>& image)
{
    const Shape s = image.shape();
    if (s.c != 3 || s.h % 16 != 0 || s.w % 16 != 0 || s.h == 0 || s.w == 0)
        throw Error("feature extractor expects (N,3,H,W) with H, W multiples of 16, got " + to_string(s));
    Graph<Scalar>& g = graph_of(image);
    const Binder<Scalar> frozen{g, false};
    FeatureMaps<Scalar> taps;
    Var<Scalar> h = image;
    for (std::size_t i = 0; i < fe.stages.size(); ++i) {
        if (i > 0) h = avg_pool2(h);
        h = relu(fe.stages[i](frozen, h));
        taps[i] = h;
    }
    return taps;
}

template <typename Scalar>
std::array<Tensor<Scalar>, 5> extract_features(const FeatureExtractor<Scalar>& fe, const Tensor<Scalar>& image)
{
    Graph<Scalar> g;
    auto taps = extract_features(fe, g.frozen(image));
    std::array<Tensor<Scalar>, 5> out;
    for (std::size_t i = 0; i < taps.size(); ++i) out[i] = taps[i].value();
    return out;
}

// ---------------------------------------------------------------------------
// Individual objectives (graph level)
// ---------------------------------------------------------------------------

/// Mean squared feature gap; `rooted` takes the square root of that mean instead.
template <typename Scalar>
Var<Scalar> siamese_loss(const Var<Scalar>& covered, const Var<Scalar>& ground_truth, bool rooted = false)
{
    require_same_shape(covered.value(), ground_truth.value(), "siamese_loss");
    Var<Scalar> mse = mean_squared_diff(covered, ground_truth);
    return rooted ? sqrt(mse) : mse;
}

/// Mean absolute difference between generated and target structure over the full image.
template <typename Scalar>
Var<Scalar> distance_loss(const Var<Scalar>& generated, const Var<Scalar>& target)
{
    require_same_shape(generated.value(), target.value(), "distance_loss");
    return mean_abs_diff(generated, target);
}

/// -mean log sigmoid(real) - mean log(1 - sigmoid(fake)), in softplus form.
template <typename Scalar>
Var<Scalar> discriminator_loss(const Var<Scalar>& real_logits, const Var<Scalar>& fake_logits)
{
    return mean_softplus(real_logits, Scalar(-1)) + mean_softplus(fake_logits, Scalar(1));
}

/// Non-saturating generator side: -mean log sigmoid(fake).
template <typename Scalar>
Var<Scalar> generator_adversarial_loss(const Var<Scalar>& fake_logits)
{
    return mean_softplus(fake_logits, Scalar(-1));
}

template <typename Scalar>
Var<Scalar> perceptual_loss(const FeatureMaps<Scalar>& target, const FeatureMaps<Scalar>& generated)
{
    Var<Scalar> total = mean_abs_diff(target[0], generated[0]);
    for (std::size_t i = 1; i < target.size(); ++i) total = total + mean_abs_diff(target[i], generated[i]);
    return total;
}

template <typename Scalar>
Var<Scalar> style_loss(const FeatureMaps<Scalar>& target, const FeatureMaps<Scalar>& generated)
{
    Var<Scalar> total = mean_abs_diff(gram(generated[0]), gram(target[0]));
    for (std::size_t i = 1; i < target.size(); ++i) total = total + mean_abs_diff(gram(generated[i]), gram(target[i]));
    return total;
}

template <typename Scalar>
Var<Scalar> perceptual_loss(const FeatureExtractor<Scalar>& fe, const Var<Scalar>& target, const Var<Scalar>& generated)
{
    require_same_shape(target.value(), generated.value(), "perceptual_loss");
    return perceptual_loss(extract_features(fe, target), extract_features(fe, generated));
}

template <typename Scalar>
Var<Scalar> style_loss(const FeatureExtractor<Scalar>& fe, const Var<Scalar>& target, const Var<Scalar>& generated)
{
    require_same_shape(target.value(), generated.value(), "style_loss");
    return style_loss(extract_features(fe, target), extract_features(fe, generated));
}

/// Discriminator and generator adversarial values evaluated directly from logit maps.
struct AdversarialValues {
    double d_loss = 0.0;
    double g_loss = 0.0;
};

template <typename Scalar>
AdversarialValues adversarial_losses(const Tensor<Scalar>& real_logits, const Tensor<Scalar>& fake_logits)
{
    require_same_shape(real_logits, fake_logits, "adversarial_losses");
    Graph<Scalar> g;
    Var<Scalar> real = g.constant(real_logits);
    Var<Scalar> fake = g.constant(fake_logits);
    return {double(discriminator_loss(real, fake).value().item()),
            double(generator_adversarial_loss(fake).value().item())};
}

/// Graph-level weighted total: sum_i weight_i * component_i over the supplied components.
template <typename Scalar>
Var<Scalar> weighted_total(const std::vector<std::pair<double, Var<Scalar>>>& terms)
{
    if (terms.empty()) throw Error("weighted_total: no terms");
    Var<Scalar> total;
    for (const auto& [w, v] : terms) {
        if (!(w >= 0.0)) throw Error("weighted_total: negative or NaN weight");
        if (v.shape() != scalar_shape()) throw Error("weighted_total: components must be scalars");
        Var<Scalar> term = Scalar(w) * v;
        total = total.valid() ? total + term : term;
    }
    return total;
}

}  // namespace sienet

#endif  // SIENET_LOSSES_HPP
