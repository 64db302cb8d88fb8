#include "sienet/discriminator.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace sienet;
using namespace sienet::testing;

TEST(Discriminator, LogitGridAt256)
{
    std::mt19937_64 rng(51);
    const auto d = Discriminator<float>::init(64, rng);
    const Tensorf logits = discriminate(d, random_tensor<float>(Shape{1, 3, 256, 256}, rng));
    EXPECT_EQ(logits.shape(), (Shape{1, 1, 16, 16}));
    EXPECT_TRUE(logits.all_finite());
}

TEST(Discriminator, GridScalesWithInput)
{
    std::mt19937_64 rng(52);
    const auto d = Discriminator<float>::init(4, rng);
    EXPECT_EQ(discriminate(d, random_tensor<float>(Shape{2, 3, 64, 32}, rng)).shape(), (Shape{2, 1, 4, 2}));
    EXPECT_THROW(discriminate(d, random_tensor<float>(Shape{1, 3, 40, 40}, rng)), Error);
    EXPECT_THROW(discriminate(d, random_tensor<float>(Shape{1, 4, 32, 32}, rng)), Error);
}

TEST(Discriminator, ZeroHeadGivesBias)
{
    std::mt19937_64 rng(53);
    auto d = Discriminator<float>::init(4, rng);
    d.head.weight.array() = 0.0f;
    d.head.bias[0] = 0.75f;
    const Tensorf logits = discriminate(d, random_tensor<float>(Shape{1, 3, 32, 32}, rng));
    for (std::int64_t i = 0; i < logits.size(); ++i) EXPECT_EQ(logits[i], 0.75f);
}

TEST(Discriminator, ShiftByTotalStrideShiftsInteriorLogits)
{
    // Cells whose receptive field lies inside both images see identical pixels.
    std::mt19937_64 rng(54);
    const auto d = Discriminator<double>::init(4, rng);
    const Tensord big = random_tensor(Shape{1, 3, 160, 160}, rng);
    Tensord shifted(big.shape());
    const int s = Discriminator<double>::kTotalStride;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 160; ++y)
            for (int x = 0; x + s < 160; ++x) shifted(0, c, y, x) = big(0, c, y, x + s);
    const Tensord a = discriminate(d, big);
    const Tensord b = discriminate(d, shifted);
    // Receptive field 78 px: cells 3..5 of a 10-wide grid stay clear of both borders.
    for (int y = 3; y <= 5; ++y)
        for (int x = 3; x <= 5; ++x) EXPECT_NEAR(b(0, 0, y, x), a(0, 0, y, x + 1), 1e-12);
}

TEST(Discriminator, ReceptiveFieldIsLocal)
{
    std::mt19937_64 rng(55);
    const auto d = Discriminator<double>::init(4, rng);
    Tensord img = random_tensor(Shape{1, 3, 160, 160}, rng);
    const Tensord before = discriminate(d, img);
    img(0, 0, 159, 159) += 5.0;
    const Tensord after = discriminate(d, img);
    EXPECT_EQ(before(0, 0, 0, 0), after(0, 0, 0, 0));
    EXPECT_NE(before(0, 0, 9, 9), after(0, 0, 9, 9));
}

TEST(Discriminator, GradientFlowsToImage)
{
    std::mt19937_64 rng(56);
    auto d = Discriminator<double>::init(2, rng);
    Tensord img = random_tensor(Shape{1, 3, 16, 16}, rng);
    auto r = check_gradients(
        [&](Graph<double>&, const std::vector<Var<double>>& v) { return mean(d(Binder<double>{*v[0].graph(), false}, v[0])); },
        {&img}, 1e-3, 40);
    EXPECT_LT(r.max_rel_error, 1e-4);
}
