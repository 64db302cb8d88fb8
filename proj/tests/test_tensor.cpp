#include "sienet/kernels.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace sienet;
using sienet::testing::naive_conv;
using sienet::testing::random_tensor;

TEST(Tensor, IndexingIsNchwRowMajor)
{
    Tensorf t(Shape{2, 3, 4, 5});
    t(1, 2, 3, 4) = 7.0f;
    EXPECT_EQ(t[t.size() - 1], 7.0f);
    t(0, 1, 0, 0) = 3.0f;
    EXPECT_EQ(t[20], 3.0f);
    EXPECT_EQ(t.sample(1).rows(), 3);
    EXPECT_EQ(t.sample(1).cols(), 20);
    EXPECT_EQ(t.sample(1)(2, 19), 7.0f);
}

TEST(Tensor, RejectsMismatchedStorage)
{
    EXPECT_THROW(Tensorf(Shape{1, 1, 2, 2}, Eigen::ArrayXf::Zero(3)), Error);
    EXPECT_THROW(Tensorf(Shape{1, -1, 2, 2}), Error);
}

TEST(Tensor, FiniteCheck)
{
    Tensorf t(Shape{1, 1, 2, 2}, 1.0f);
    EXPECT_TRUE(t.all_finite());
    t[2] = std::nanf("");
    EXPECT_FALSE(t.all_finite());
    EXPECT_THROW(require_finite(t, "t"), Error);
}

TEST(Conv2d, MatchesNaiveLoops)
{
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> dim(1, 4), side(3, 9), kern(0, 2), str(1, 2);
    for (int trial = 0; trial < 60; ++trial) {
        const int k = 1 + 2 * kern(rng);
        const int pad = std::uniform_int_distribution<int>(0, k / 2)(rng);
        const int stride = str(rng);
        const int h = std::max(side(rng), k);
        const int w = std::max(side(rng), k);
        const Tensord x = random_tensor(Shape{dim(rng), dim(rng), h, w}, rng);
        const Tensord wt = random_tensor(Shape{dim(rng), x.shape().c, k, k}, rng);
        const Tensord b = random_tensor(Shape{1, wt.shape().n, 1, 1}, rng);
        const Tensord fast = kernels::conv2d(x, wt, &b, stride, pad);
        const Tensord slow = naive_conv(x, wt, &b, stride, pad);
        ASSERT_EQ(fast.shape(), slow.shape());
        EXPECT_LT((fast.array() - slow.array()).abs().maxCoeff(), 1e-12) << "trial " << trial;
    }
}

TEST(Conv2d, EvenKernelWithStride)
{
    std::mt19937_64 rng(2);
    const Tensord x = random_tensor(Shape{1, 2, 8, 8}, rng);
    const Tensord w = random_tensor(Shape{3, 2, 4, 4}, rng);
    const Tensord fast = kernels::conv2d(x, w, (const Tensord*)nullptr, 2, 1);
    EXPECT_EQ(fast.shape(), (Shape{1, 3, 4, 4}));
    EXPECT_LT((fast.array() - naive_conv(x, w, (const Tensord*)nullptr, 2, 1).array()).abs().maxCoeff(), 1e-12);
}

TEST(Conv2d, IdentityKernelReproducesInput)
{
    std::mt19937_64 rng(3);
    const Tensord x = random_tensor(Shape{2, 3, 5, 6}, rng);
    Tensord w(Shape{3, 3, 3, 3});
    for (int c = 0; c < 3; ++c) w(c, c, 1, 1) = 1.0;
    const Tensord y = kernels::conv2d(x, w, (const Tensord*)nullptr, 1, 1);
    EXPECT_EQ((y.array() - x.array()).abs().maxCoeff(), 0.0);
}

TEST(Conv2d, BackwardIsAdjointOfForward)
{
    // <conv(x), dy> == <x, dx> and == <w, dw> by linearity.
    std::mt19937_64 rng(4);
    const Tensord x = random_tensor(Shape{2, 3, 7, 6}, rng);
    const Tensord w = random_tensor(Shape{4, 3, 3, 3}, rng);
    const Tensord y = kernels::conv2d(x, w, (const Tensord*)nullptr, 2, 1);
    const Tensord dy = random_tensor(y.shape(), rng);
    Tensord dx(x.shape()), dw(w.shape()), db(Shape{1, 4, 1, 1});
    kernels::conv2d_backward(x, w, dy, 2, 1, &dx, &dw, &db);
    const double lhs = (y.array() * dy.array()).sum();
    EXPECT_NEAR(lhs, (x.array() * dx.array()).sum(), 1e-10);
    EXPECT_NEAR(lhs, (w.array() * dw.array()).sum(), 1e-10);
    for (int o = 0; o < 4; ++o) {
        double s = 0.0;
        for (int n = 0; n < 2; ++n) s += dy.sample(n).row(o).sum();
        EXPECT_NEAR(db[o], s, 1e-12);
    }
}

TEST(Conv2d, GeometryErrors)
{
    EXPECT_THROW(kernels::conv_geometry(Shape{1, 3, 8, 8}, Shape{4, 2, 3, 3}, 1, 1), Error);
    EXPECT_THROW(kernels::conv_geometry(Shape{1, 3, 2, 2}, Shape{4, 3, 5, 5}, 1, 0), Error);
    EXPECT_THROW(kernels::conv_geometry(Shape{1, 3, 8, 8}, Shape{4, 3, 3, 3}, 0, 1), Error);
    EXPECT_THROW(kernels::conv_geometry(Shape{1, 3, 8, 8}, Shape{4, 3, 3, 3}, 1, -1), Error);
}

TEST(Conv2d, RejectsNonFiniteInput)
{
    Tensorf x(Shape{1, 1, 4, 4});
    x[5] = std::numeric_limits<float>::infinity();
    EXPECT_THROW(kernels::conv2d(x, Tensorf(Shape{1, 1, 3, 3}), (const Tensorf*)nullptr, 1, 1), Error);
}

TEST(BoxSum, MatchesAllOnesConvolution)
{
    std::mt19937_64 rng(5);
    const Tensord x = random_tensor(Shape{2, 3, 6, 9}, rng);
    for (int k : {1, 3, 5, 7}) {
        Tensord ones(Shape{3, 3, k, k});
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j) ones(c, c, i, j) = 1.0;
        const Tensord expect = naive_conv(x, ones, (const Tensord*)nullptr, 1, k / 2);
        EXPECT_LT((kernels::box_sum(x, k).array() - expect.array()).abs().maxCoeff(), 1e-12) << "k=" << k;
    }
}

TEST(BoxSum, IsSelfAdjoint)
{
    std::mt19937_64 rng(6);
    const Tensord a = random_tensor(Shape{1, 2, 7, 5}, rng);
    const Tensord b = random_tensor(Shape{1, 2, 7, 5}, rng);
    const double lhs = (kernels::box_sum(a, 5).array() * b.array()).sum();
    const double rhs = (a.array() * kernels::box_sum(b, 5).array()).sum();
    EXPECT_NEAR(lhs, rhs, 1e-12);
}
