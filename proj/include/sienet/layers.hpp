#ifndef SIENET_LAYERS_HPP
#define SIENET_LAYERS_HPP

#include "sienet/ops.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace sienet {

/// Binds parameter tensors into a graph either as trainable or as frozen constants.
template <typename Scalar>
struct Binder {
    Graph<Scalar>& graph;
    bool trainable = true;

    Var<Scalar> operator()(const Tensor<Scalar>& p) const { return trainable ? graph.param(p) : graph.frozen(p); }
};

/// Ordered (name, tensor) view over a module's parameters.
template <typename Scalar>
using ParameterList = std::vector<std::pair<std::string, Tensor<Scalar>*>>;

template <typename Scalar>
std::int64_t parameter_count(const ParameterList<Scalar>& params)
{
    std::int64_t total = 0;
    for (const auto& [name, t] : params) total += t->size();
    return total;
}

template <typename Scalar>
struct Conv2d {
    Tensor<Scalar> weight;  // (out, in, k, k)
    Tensor<Scalar> bias;    // (1, out, 1, 1)
    int stride = 1;
    int pad = 0;

    static Conv2d init(int in, int out, int kernel, int stride, int pad, std::mt19937_64& rng,
                       Scalar init_std = Scalar(0.02))
    {
        Conv2d c;
        c.weight = Tensor<Scalar>(Shape{out, in, kernel, kernel});
        c.weight.fill_normal(rng, Scalar(0), init_std);
        c.bias = Tensor<Scalar>(Shape{1, out, 1, 1});
        c.stride = stride;
        c.pad = pad;
        return c;
    }

    Var<Scalar> operator()(const Binder<Scalar>& bind, const Var<Scalar>& x) const
    {
        return conv2d(x, bind(weight), bind(bias), stride, pad);
    }

    void collect(const std::string& prefix, ParameterList<Scalar>& out)
    {
        out.emplace_back(prefix + ".weight", &weight);
        out.emplace_back(prefix + ".bias", &bias);
    }
};

/// conv-norm-relu-conv-norm plus identity.
template <typename Scalar>
struct ResidualBlock {
    Conv2d<Scalar> first;
    Conv2d<Scalar> second;

    static ResidualBlock init(int channels, std::mt19937_64& rng)
    {
        ResidualBlock b;
        b.first = Conv2d<Scalar>::init(channels, channels, 3, 1, 1, rng);
        b.second = Conv2d<Scalar>::init(channels, channels, 3, 1, 1, rng);
        return b;
    }

    Var<Scalar> operator()(const Binder<Scalar>& bind, const Var<Scalar>& x) const
    {
        Var<Scalar> h = relu(instance_norm(first(bind, x)));
        h = instance_norm(second(bind, h));
        return x + h;
    }

    void collect(const std::string& prefix, ParameterList<Scalar>& out)
    {
        first.collect(prefix + ".conv1", out);
        second.collect(prefix + ".conv2", out);
    }
};

}  // namespace sienet

#endif  // SIENET_LAYERS_HPP
