#include "sienet/generators.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace sienet;
using namespace sienet::testing;

namespace {

GeneratorConfig small_config(bool filling = true)
{
    GeneratorConfig cfg;
    cfg.width = 4;
    cfg.use_filling_conv = filling;
    return cfg;
}

NetworkInput<float> random_input(int n, int size, std::mt19937_64& rng)
{
    NetworkInput<float> in;
    in.canvas = random_tensor<float>(Shape{n, 3, size, size}, rng);
    in.mask = Tensorf(Shape{n, 1, size, size});
    for (int b = 0; b < n; ++b)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size / 4; ++x) in.mask(b, 0, y, x) = in.mask(b, 0, y, size - 1 - x) = 1.0f;
    in.structure = random_tensor<float>(Shape{n, 3, size, size}, rng);
    return in;
}

}  // namespace

TEST(Generators, FullWidthShapesAt256)
{
    std::mt19937_64 rng(31);
    GeneratorConfig cfg;
    const auto structure = StructureGenerator<float>::init(cfg, rng);
    const auto content = ContentGenerator<float>::init(cfg, rng);
    const NetworkInput<float> in = random_input(1, 256, rng);

    Graph<float> g;
    const Binder<float> frozen{g, false};
    auto s = structure(frozen, network_input(g, in));
    EXPECT_EQ(s.bottleneck.shape(), (Shape{1, 256, 32, 32}));
    EXPECT_EQ(s.image.shape(), (Shape{1, 3, 256, 256}));
    auto c = content(frozen, g.frozen(in.canvas), g.frozen(in.mask), s.image);
    EXPECT_EQ(c.bottleneck.shape(), (Shape{1, 256, 32, 32}));
    EXPECT_EQ(c.image.shape(), (Shape{1, 3, 256, 256}));
    EXPECT_TRUE(s.image.value().all_finite());
    EXPECT_TRUE(c.image.value().all_finite());
    EXPECT_LE(c.image.value().array().abs().maxCoeff(), 1.0f);
}

TEST(Generators, BottleneckIsOneEighth)
{
    std::mt19937_64 rng(32);
    const auto g = StructureGenerator<float>::init(small_config(), rng);
    for (int size : {16, 32, 48}) {
        const NetworkInput<float> in = random_input(2, size, rng);
        Graph<float> graph;
        auto out = g(Binder<float>{graph, false}, network_input(graph, in));
        EXPECT_EQ(out.bottleneck.shape(), (Shape{2, 16, size / 8, size / 8}));
        EXPECT_EQ(out.image.shape(), (Shape{2, 3, size, size}));
    }
}

TEST(Generators, RejectsBadInputs)
{
    std::mt19937_64 rng(33);
    const auto g = StructureGenerator<float>::init(small_config(), rng);
    NetworkInput<float> in = random_input(1, 36, rng);
    EXPECT_THROW(structure_forward(g, in), Error);
    in = random_input(1, 32, rng);
    in.mask = Tensorf(Shape{1, 2, 32, 32});
    EXPECT_THROW(structure_forward(g, in), Error);
    in = random_input(1, 8, rng);
    EXPECT_THROW(structure_forward(g, in), Error);
}

TEST(Generators, ZeroHeadGivesTanhOfBias)
{
    std::mt19937_64 rng(34);
    auto g = StructureGenerator<float>::init(small_config(), rng);
    g.head.weight.array() = 0.0f;
    g.head.bias = Tensorf(Shape{1, 3, 1, 1}, Eigen::ArrayXf::LinSpaced(3, -0.5f, 0.5f));
    const Tensorf out = structure_forward(g, random_input(1, 32, rng));
    for (int c = 0; c < 3; ++c)
        EXPECT_FLOAT_EQ(out.sample(0).row(c).maxCoeff(), std::tanh(g.head.bias[c]));
}

TEST(Generators, FillingConvAddsOnlyMaskParameters)
{
    std::mt19937_64 a(35), b(35);
    auto with = StructureGenerator<float>::init(small_config(true), a);
    auto without = StructureGenerator<float>::init(small_config(false), b);
    const int c = 16, k = 7;
    EXPECT_EQ(parameter_count(with.parameters()) - parameter_count(without.parameters()), std::int64_t(c * k * k + 1));
}

TEST(Generators, ContentHasTwoExtraResidualBlocks)
{
    std::mt19937_64 a(36), b(36);
    auto structure = StructureGenerator<float>::init(small_config(), a);
    auto content = ContentGenerator<float>::init(small_config(), b);
    const std::int64_t w = 4;
    auto block = [](std::int64_t ch) { return 2 * (ch * ch * 9 + ch); };
    EXPECT_EQ(parameter_count(content.parameters()) - parameter_count(structure.parameters()), block(2 * w) + block(w));
}

TEST(Generators, ParameterNamesAreUnique)
{
    std::mt19937_64 rng(37);
    auto content = ContentGenerator<float>::init(small_config(), rng);
    std::set<std::string> names;
    for (const auto& [name, t] : content.parameters()) EXPECT_TRUE(names.insert(name).second) << name;
}

TEST(Generators, DeterministicForwardPass)
{
    std::mt19937_64 a(38), b(38), r1(39), r2(39);
    const auto g1 = ContentGenerator<float>::init(small_config(), a);
    const auto g2 = ContentGenerator<float>::init(small_config(), b);
    const NetworkInput<float> in1 = random_input(2, 32, r1);
    const NetworkInput<float> in2 = random_input(2, 32, r2);
    const Tensorf y1 = content_forward(g1, in1.canvas, in1.mask, in1.structure).first;
    const Tensorf y2 = content_forward(g2, in2.canvas, in2.mask, in2.structure).first;
    for (std::int64_t i = 0; i < y1.size(); ++i) ASSERT_EQ(y1[i], y2[i]);
}

TEST(Generators, ComposeMatchesPerPixelBlend)
{
    std::mt19937_64 rng(40);
    const Tensorf gen = random_tensor<float>(Shape{2, 3, 8, 8}, rng);
    const Tensorf canvas = random_tensor<float>(Shape{2, 3, 8, 8}, rng);
    const Tensorf mask = random_input(2, 8, rng).mask;
    const Tensorf out = compose_output(gen, canvas, mask);
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x)
                    EXPECT_EQ(out(n, c, y, x), mask(n, 0, y, x) != 0.0f ? gen(n, c, y, x) : canvas(n, c, y, x));
    EXPECT_THROW(compose_output(gen, canvas, Tensorf(Shape{2, 3, 8, 8})), Error);
}

TEST(Generators, GradientsReachEveryParameter)
{
    std::mt19937_64 rng(41);
    auto s = StructureGenerator<float>::init(small_config(), rng);
    auto c = ContentGenerator<float>::init(small_config(), rng);
    const NetworkInput<float> in = random_input(1, 16, rng);
    Graph<float> g;
    const Binder<float> bind{g, true};
    auto coarse = s(bind, network_input(g, in));
    auto fine = c(bind, g.frozen(in.canvas), g.frozen(in.mask), coarse.image);
    g.backward(mean(fine.image * fine.image) + mean(coarse.image));
    for (const auto& list : {s.parameters(), c.parameters()})
        for (const auto& [name, t] : list) {
            // Biases feeding instance norm have exactly zero gradient by construction.
            if (name.find(".bias") != std::string::npos && g.grad_of(*t).array().abs().maxCoeff() == 0.0f) continue;
            EXPECT_GT(g.grad_of(*t).array().abs().maxCoeff(), 0.0f) << name;
        }
}
