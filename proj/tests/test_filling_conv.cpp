#include "sienet/filling_conv.hpp"
#include "sienet/kernels.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace sienet;
using namespace sienet::testing;

namespace {

double max_rel(const Tensord& a, const Tensord& b)
{
    double worst = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i], 1e-12));
    return worst;
}

Var<double> fc(const std::vector<Var<double>>& v, SkipBranch skip = SkipBranch::box)
{
    return filling_conv(v[0], v[1], v[2], v[3], v[4], skip);
}

}  // namespace

TEST(FillingConv, MatchesPerPixelOracle)
{
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> n(1, 2), c(1, 4), side(3, 8), kern(0, 2);
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 1 + 2 * kern(rng);
        const Tensord x = random_tensor(Shape{n(rng), c(rng), side(rng), side(rng)}, rng);
        const auto p = random_filling_params(x.shape().c, k, rng);
        const SkipBranch skip = trial % 4 == 3 ? SkipBranch::center : SkipBranch::box;
        const Tensord fast = filling_conv_forward(x, p, skip).output;
        const Tensord slow = filling_conv_oracle(x, p, skip);
        ASSERT_EQ(fast.shape(), x.shape());
        EXPECT_LT(max_rel(fast, slow), 1e-6) << "trial " << trial;
    }
}

TEST(FillingConv, UnitMaskReducesToConvolution)
{
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensorf x = random_tensor<float>(Shape{2, 3, 7, 6}, rng);
        FillingConvParams<float> p = FillingConvParams<float>::init(3, 3, rng, 0.3f);
        p.padding_bias.fill_uniform(rng, -1.0f, 1.0f);
        const Tensorf ones(Shape{2, 1, 7, 6}, 1.0f);
        const Tensorf a = filling_conv_forward(x, p, ones).output;
        const Tensorf b = kernels::conv2d(x, p.padding_weight, &p.padding_bias, 1, 1);
        ASSERT_EQ(a.shape(), b.shape());
        for (std::int64_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]);
    }
}

TEST(FillingConv, ZeroMaskIsBoxSumOrCentreTap)
{
    std::mt19937_64 rng(23);
    const Tensord x = random_tensor(Shape{1, 2, 5, 5}, rng);
    const auto p = random_filling_params(2, 3, rng);
    const Tensord zeros(Shape{1, 1, 5, 5});
    EXPECT_LT(max_rel(filling_conv_forward(x, p, zeros).output, kernels::box_sum(x, 3)), 1e-15);
    const Tensord centre = filling_conv_forward(x, p, zeros, SkipBranch::center).output;
    for (std::int64_t i = 0; i < x.size(); ++i) EXPECT_EQ(centre[i], x[i]);
}

TEST(FillingConv, ForcedMaskMatchesOracle)
{
    std::mt19937_64 rng(24);
    const Tensord x = random_tensor(Shape{2, 3, 6, 5}, rng);
    const auto p = random_filling_params(3, 5, rng);
    const Tensord m = random_tensor(Shape{2, 1, 6, 5}, rng, 0.0, 1.0);
    EXPECT_LT(max_rel(filling_conv_forward(x, p, m).output, filling_conv_oracle(x, p, SkipBranch::box, &m)), 1e-10);
}

TEST(FillingConv, OutputIsAffineInMask)
{
    // y(m) = y(0) + m * (y(1) - y(0)) per location.
    std::mt19937_64 rng(25);
    const Tensord x = random_tensor(Shape{1, 2, 4, 4}, rng);
    const auto p = random_filling_params(2, 3, rng);
    const Tensord y0 = filling_conv_forward(x, p, Tensord(Shape{1, 1, 4, 4}, 0.0)).output;
    const Tensord y1 = filling_conv_forward(x, p, Tensord(Shape{1, 1, 4, 4}, 1.0)).output;
    const Tensord yh = filling_conv_forward(x, p, Tensord(Shape{1, 1, 4, 4}, 0.3)).output;
    for (std::int64_t i = 0; i < x.size(); ++i) EXPECT_NEAR(yh[i], y0[i] + 0.3 * (y1[i] - y0[i]), 1e-12);
}

TEST(FillingConv, InitialisationStartsNearConvolution)
{
    std::mt19937_64 rng(26);
    const auto p = FillingConvParams<double>::init(4, 7, rng);
    EXPECT_EQ(p.mask_bias.item(), 6.0);
    EXPECT_EQ(p.mask_weight.array().abs().maxCoeff(), 0.0);
    const Tensord m = mask_branch(random_tensor(Shape{1, 4, 8, 8}, rng), p);
    EXPECT_NEAR(m[0], 1.0 / (1.0 + std::exp(-6.0)), 1e-15);
    EXPECT_GT(m.array().minCoeff(), 0.997);
}

TEST(FillingConv, BorderOutputsReactToTheBoundary)
{
    // The pass-through sum sees fewer in-bounds taps at the border, so a constant input does not
    // give a constant output there; in the interior it does.
    std::mt19937_64 rng(27);
    const Tensord x(Shape{1, 1, 7, 7}, 1.0);
    const auto p = random_filling_params(1, 3, rng);
    const Tensord zeros(Shape{1, 1, 7, 7});
    const Tensord y = filling_conv_forward(x, p, zeros).output;
    EXPECT_DOUBLE_EQ(y(0, 0, 3, 3), 9.0);
    EXPECT_DOUBLE_EQ(y(0, 0, 0, 3), 6.0);
    EXPECT_DOUBLE_EQ(y(0, 0, 0, 0), 4.0);
}

TEST(FillingConv, RejectsBadShapes)
{
    std::mt19937_64 rng(28);
    auto p = random_filling_params(2, 3, rng);
    p.padding_weight = Tensord(Shape{3, 2, 3, 3});
    EXPECT_THROW(p.validate(), Error);
    p = random_filling_params(2, 3, rng);
    p.padding_weight = Tensord(Shape{2, 2, 4, 4});
    EXPECT_THROW(p.validate(), Error);
    p = random_filling_params(2, 3, rng);
    EXPECT_THROW(filling_conv_forward(Tensord(Shape{1, 3, 4, 4}), p), Error);
    EXPECT_THROW(filling_conv_forward(Tensord(Shape{1, 2, 4, 4}), p, Tensord(Shape{1, 1, 4, 5})), Error);
}

TEST(FillingConv, BackwardWithoutForwardFails)
{
    FillingConvContext<double> ctx;
    EXPECT_THROW(filling_conv_backward(ctx, Tensord(Shape{1, 1, 2, 2})), Error);
}

TEST(FillingConv, SkipBranchNames)
{
    EXPECT_EQ(parse_skip_branch("box"), SkipBranch::box);
    EXPECT_EQ(parse_skip_branch("center"), SkipBranch::center);
    EXPECT_EQ(to_string(SkipBranch::center), "center");
    EXPECT_THROW(parse_skip_branch("edge"), Error);
}

class FillingConvGradient : public ::testing::TestWithParam<SkipBranch> {};

TEST_P(FillingConvGradient, AllInputsAgreeWithFiniteDifferences)
{
    std::mt19937_64 rng(29);
    for (int k : {1, 3, 5}) {
        Tensord x = random_tensor(Shape{2, 2, 5, 4}, rng);
        auto p = random_filling_params(2, k, rng);
        Tensord probe = random_tensor(x.shape(), rng);
        auto r = check_gradients(
            [&](Graph<double>& g, const std::vector<Var<double>>& v) {
                return sum(fc(v, GetParam()) * g.constant(probe));
            },
            {&x, &p.padding_weight, &p.padding_bias, &p.mask_weight, &p.mask_bias});
        EXPECT_LT(r.max_rel_error, 1e-4) << "k=" << k;
    }
}

INSTANTIATE_TEST_SUITE_P(Skip, FillingConvGradient, ::testing::Values(SkipBranch::box, SkipBranch::center));

TEST(FillingConv, BackwardAccumulatesThroughGraph)
{
    // Two uses of the same operator in one graph sum their contributions.
    std::mt19937_64 rng(30);
    Tensord x = random_tensor(Shape{1, 2, 4, 4}, rng);
    auto p = random_filling_params(2, 3, rng);
    auto r = check_gradients(
        [&](Graph<double>&, const std::vector<Var<double>>& v) {
            Var<double> once = fc(v);
            return mean_squared_diff(fc({once, v[1], v[2], v[3], v[4]}), v[0]);
        },
        {&x, &p.padding_weight, &p.padding_bias, &p.mask_weight, &p.mask_bias});
    EXPECT_LT(r.max_rel_error, 1e-4);
}
